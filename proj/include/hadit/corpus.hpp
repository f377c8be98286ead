#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hadit/image.hpp"

namespace hadit {

enum class PrimitiveKind { Ellipse, Polygon, Capsule };

struct Pose {
    double tx = 0.0, ty = 0.0;  // translation, px
    double rot = 0.0;           // radians
    double scale = 1.0;
};

// One filled shape. Local geometry is centered at the origin; the pose maps
// local to canvas coordinates.
struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Ellipse;
    double rx = 8.0;   // ellipse semi-axis / polygon circumradius / capsule half-length
    double ry = 5.0;   // ellipse semi-axis / capsule radius
    int sides = 5;     // polygon only
    std::array<double, 3> fill{0.5, 0.5, 0.5};
    int stroke_width = 1;
    int z = 0;
    Pose pose;

    bool contains(double x, double y) const;  // canvas coordinates
};

struct Scene {
    int canvas = 64;
    std::array<double, 3> background{1.0, 1.0, 1.0};
    std::vector<Primitive> prims;
};

// Rigid per-primitive perturbation plus an optional global camera shift.
struct PoseDelta {
    std::vector<Pose> per_prim;  // tx/ty/rot added, scale multiplied
    double global_dx = 0.0, global_dy = 0.0;
};

struct TripletSample {
    RgbImage target;
    RgbImage lineart;    // strokes on white
    RgbImage reference;  // perturbed-pose render
    double displacement = 0.0;  // mean primitive center motion, px
    // primitive id -> (center in target, center in reference)
    std::vector<std::pair<std::array<double, 2>, std::array<double, 2>>> correspondence;
};

struct FrameSequence {
    std::vector<Scene> frames;
};

// Deterministic scene with n primitives whose fill colors are pairwise
// separated by deltaE >= 15 (and from the white background), placed without
// overlap.
Scene generate_scene(uint64_t seed, int n_primitives, int canvas = 64);

// target = full render, lineart = stroke-only render, reference = render of
// the pose-perturbed scene.
TripletSample render_triplet(const Scene& scene, const PoseDelta& delta,
                             bool antialias = false);

RgbImage render_scene(const Scene& scene, bool antialias = false);
RgbImage render_lineart(const Scene& scene, bool antialias = false);

// 8 contour sample points per primitive in canvas coordinates, plus their
// visibility (inside the canvas and not occluded by a higher-z primitive).
struct Keypoint {
    int prim = 0;
    int index = 0;
    double x = 0.0, y = 0.0;
    bool visible = false;
};
std::vector<Keypoint> scene_keypoints(const Scene& scene);

// Matched keypoints between two frames: same primitive sample point, visible
// in both, within the distance gate.
int count_keypoint_matches(const Scene& a, const Scene& b, double distance_gate);

// Smooth random motion over n_frames; motion_scale in canvas fractions.
FrameSequence generate_frame_sequence(uint64_t seed, int n_frames, int n_primitives,
                                      int canvas, double motion_scale);

// Pair construction: start at `start_interval`, shrink by 1 while the match
// count is below `min_matches`; interval 1 is the unconditional floor.
// Returns (reference index, target index).
std::pair<int, int> select_pair(const FrameSequence& frames, int start_interval = 18,
                                int min_matches = 25, double distance_gate = 16.0);

struct CorpusConfig {
    std::string out_dir;
    int count = 100;
    uint64_t seed = 1;
    int canvas = 64;
    int n_primitives_min = 4;
    int n_primitives_max = 6;
    std::string motion = "large";  // small | large
    bool sequence_mode = false;    // build pairs via select_pair over frame sequences
    int start_interval = 18;
    int min_matches = 25;
    bool antialias = false;
};

struct ManifestRow {
    int index = 0;
    std::string target, line, ref;  // paths relative to out_dir
    uint64_t seed = 0;
    int n_primitives = 0;
    double displacement = 0.0;
    int regions = 0;   // segmented region count of the target
    int interval = 0;  // frame interval (sequence mode), 0 otherwise
};

// Writes count triplets plus manifest.csv in deterministic order; returns the
// manifest rows.
std::vector<ManifestRow> emit_corpus(const CorpusConfig& config);

std::vector<ManifestRow> load_manifest(const std::string& dir);

// Draws the perturbation for sample i of a corpus run (exposed so tests can
// reproduce manifest displacements).
PoseDelta draw_pose_delta(uint64_t seed, uint64_t index, int n_primitives, int canvas,
                          const std::string& motion);

}  // namespace hadit
