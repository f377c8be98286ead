#include "hadit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hadit/metrics.hpp"
#include "hadit/rng.hpp"

namespace hadit {

namespace {

constexpr double kPi = 3.14159265358979323846;

// canvas -> local coordinates
inline void to_local(const Pose& pose, double x, double y, double& lx, double& ly) {
    const double dx = x - pose.tx;
    const double dy = y - pose.ty;
    const double c = std::cos(-pose.rot), s = std::sin(-pose.rot);
    lx = (c * dx - s * dy) / pose.scale;
    ly = (s * dx + c * dy) / pose.scale;
}

inline void to_canvas(const Pose& pose, double lx, double ly, double& x, double& y) {
    const double c = std::cos(pose.rot), s = std::sin(pose.rot);
    x = pose.tx + pose.scale * (c * lx - s * ly);
    y = pose.ty + pose.scale * (s * lx + c * ly);
}

bool point_in_local(const Primitive& p, double lx, double ly) {
    switch (p.kind) {
        case PrimitiveKind::Ellipse: {
            const double u = lx / p.rx, v = ly / p.ry;
            return u * u + v * v <= 1.0;
        }
        case PrimitiveKind::Polygon: {
            // regular convex polygon, circumradius rx, vertex 0 at angle 0
            for (int i = 0; i < p.sides; ++i) {
                const double a0 = 2.0 * kPi * i / p.sides;
                const double a1 = 2.0 * kPi * (i + 1) / p.sides;
                const double x0 = p.rx * std::cos(a0), y0 = p.rx * std::sin(a0);
                const double x1 = p.rx * std::cos(a1), y1 = p.rx * std::sin(a1);
                // inside = left of every edge (counter-clockwise winding)
                if ((x1 - x0) * (ly - y0) - (y1 - y0) * (lx - x0) < 0.0) return false;
            }
            return true;
        }
        case PrimitiveKind::Capsule: {
            const double cx = std::clamp(lx, -p.rx, p.rx);
            const double dx = lx - cx;
            return dx * dx + ly * ly <= p.ry * p.ry;
        }
    }
    return false;
}

// local boundary sample at parameter u in [0,1)
void boundary_point_local(const Primitive& p, double u, double& lx, double& ly) {
    const double a = 2.0 * kPi * u;
    switch (p.kind) {
        case PrimitiveKind::Ellipse:
            lx = p.rx * std::cos(a);
            ly = p.ry * std::sin(a);
            return;
        case PrimitiveKind::Polygon:
            lx = p.rx * std::cos(a);
            ly = p.rx * std::sin(a);
            return;
        case PrimitiveKind::Capsule:
            // stadium outline approximated by its bounding ellipse; these are
            // synthetic match points, not exact geometry
            lx = (p.rx + p.ry) * std::cos(a);
            ly = p.ry * std::sin(a);
            return;
    }
}

using Mask = std::vector<uint8_t>;

Mask primitive_mask(const Primitive& p, int canvas, int supersample) {
    Mask m(static_cast<size_t>(canvas) * canvas, 0);
    for (int y = 0; y < canvas; ++y) {
        for (int x = 0; x < canvas; ++x) {
            if (supersample <= 1) {
                double lx, ly;
                to_local(p.pose, x + 0.5, y + 0.5, lx, ly);
                m[static_cast<size_t>(y) * canvas + x] = point_in_local(p, lx, ly) ? 255 : 0;
            } else {
                int hits = 0;
                for (int sy = 0; sy < supersample; ++sy)
                    for (int sx = 0; sx < supersample; ++sx) {
                        double lx, ly;
                        to_local(p.pose, x + (sx + 0.5) / supersample,
                                 y + (sy + 0.5) / supersample, lx, ly);
                        if (point_in_local(p, lx, ly)) ++hits;
                    }
                // store coverage in [0,255]
                m[static_cast<size_t>(y) * canvas + x] = static_cast<uint8_t>(
                    255 * hits / (supersample * supersample));
            }
        }
    }
    return m;
}

// stroke band: pixels whose (2w+1)^2 neighborhood contains both covered and
// uncovered pixels (dilation minus erosion of the binary mask)
Mask stroke_band(const Mask& mask, int canvas, int w) {
    Mask band(mask.size(), 0);
    for (int y = 0; y < canvas; ++y) {
        for (int x = 0; x < canvas; ++x) {
            bool any_in = false, any_out = false;
            for (int dy = -w; dy <= w && !(any_in && any_out); ++dy) {
                for (int dx = -w; dx <= w; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= canvas || ny >= canvas) continue;
                    if (mask[static_cast<size_t>(ny) * canvas + nx] > 127)
                        any_in = true;
                    else
                        any_out = true;
                    if (any_in && any_out) break;
                }
            }
            if (any_in && any_out) band[static_cast<size_t>(y) * canvas + x] = 1;
        }
    }
    return band;
}

uint8_t to_byte(double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void sort_by_z(std::vector<const Primitive*>& order) {
    std::stable_sort(order.begin(), order.end(),
                     [](const Primitive* a, const Primitive* b) { return a->z < b->z; });
}

RgbImage render_impl(const Scene& scene, bool fills, bool antialias) {
    const int cv = scene.canvas;
    const int ss = antialias ? 2 : 1;
    RgbImage img(cv, cv);
    const std::array<double, 3> bg =
        fills ? scene.background : std::array<double, 3>{1.0, 1.0, 1.0};
    for (int y = 0; y < cv; ++y)
        for (int x = 0; x < cv; ++x) img.set(x, y, to_byte(bg[0]), to_byte(bg[1]), to_byte(bg[2]));

    std::vector<const Primitive*> order;
    for (const auto& p : scene.prims) order.push_back(&p);
    sort_by_z(order);

    for (const Primitive* p : order) {
        if (p->pose.scale <= 0.05)
            throw std::invalid_argument("render: degenerate primitive after transform");
        const Mask mask = primitive_mask(*p, cv, ss);
        const Mask band = stroke_band(mask, cv, p->stroke_width);
        for (int y = 0; y < cv; ++y) {
            for (int x = 0; x < cv; ++x) {
                const size_t i = static_cast<size_t>(y) * cv + x;
                if (mask[i] > 127) {
                    // fill pass paints the shape color; line-art pass erases
                    // (occluded strokes must hide identically in both renders)
                    const std::array<double, 3> c =
                        fills ? p->fill : std::array<double, 3>{1.0, 1.0, 1.0};
                    if (antialias && mask[i] < 255) {
                        const double a = mask[i] / 255.0;
                        uint8_t* q = img.px(x, y);
                        img.set(x, y, to_byte(c[0] * a + q[0] / 255.0 * (1 - a)),
                                to_byte(c[1] * a + q[1] / 255.0 * (1 - a)),
                                to_byte(c[2] * a + q[2] / 255.0 * (1 - a)));
                    } else {
                        img.set(x, y, to_byte(c[0]), to_byte(c[1]), to_byte(c[2]));
                    }
                }
                if (band[i]) img.set(x, y, 0, 0, 0);
            }
        }
    }
    return img;
}

}  // namespace

bool Primitive::contains(double x, double y) const {
    double lx, ly;
    to_local(pose, x, y, lx, ly);
    return point_in_local(*this, lx, ly);
}

RgbImage render_scene(const Scene& scene, bool antialias) {
    return render_impl(scene, /*fills=*/true, antialias);
}

RgbImage render_lineart(const Scene& scene, bool antialias) {
    return render_impl(scene, /*fills=*/false, antialias);
}

Scene generate_scene(uint64_t seed, int n_primitives, int canvas) {
    if (n_primitives < 1) throw std::invalid_argument("generate_scene: n_primitives >= 1");
    Rng rng(derive_seed(seed, /*tag=*/0x7363656eull /* "scen" */));
    Scene scene;
    scene.canvas = canvas;

    // Fill palette with pairwise deltaE >= 15 (also vs the white background).
    const Lab bg_lab = rgb_to_lab(1.0, 1.0, 1.0);
    std::vector<std::array<double, 3>> palette;
    std::vector<Lab> labs{bg_lab};
    double min_de = 15.0;
    while (static_cast<int>(palette.size()) < n_primitives) {
        int attempts = 0;
        while (true) {
            // moderately saturated HSV draw, converted to RGB
            const double hdeg = rng.uniform() * 360.0;
            const double s = rng.uniform(0.45, 0.95);
            const double v = rng.uniform(0.35, 0.9);
            const double c = v * s;
            const double hp = hdeg / 60.0;
            const double xx = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
            double r = 0, g = 0, b = 0;
            if (hp < 1) { r = c; g = xx; }
            else if (hp < 2) { r = xx; g = c; }
            else if (hp < 3) { g = c; b = xx; }
            else if (hp < 4) { g = xx; b = c; }
            else if (hp < 5) { r = xx; b = c; }
            else { r = c; b = xx; }
            const double m = v - c;
            const std::array<double, 3> rgb{r + m, g + m, b + m};
            const Lab cand = rgb_to_lab(rgb[0], rgb[1], rgb[2]);
            bool ok = true;
            for (const Lab& l : labs)
                if (delta_e76(cand, l) < min_de) {
                    ok = false;
                    break;
                }
            if (ok) {
                palette.push_back(rgb);
                labs.push_back(cand);
                break;
            }
            if (++attempts > 400) {
                min_de *= 0.9;  // crowded palette; relax separation slightly
                attempts = 0;
            }
        }
    }

    // Non-overlapping placement by rejection on bounding circles. Shapes keep
    // pixel-scale minima so strokes never swallow the fill interior; crowded
    // canvases relax the separation gap instead of shrinking below that.
    const double rmin = std::max(2.8, 0.09 * canvas);
    const double rmax = std::max(rmin + 1.5, 0.17 * canvas);
    std::vector<std::array<double, 3>> placed;  // (x, y, bound)
    for (int i = 0; i < n_primitives; ++i) {
        Primitive p;
        const double kind_draw = rng.uniform();
        p.kind = kind_draw < 0.4 ? PrimitiveKind::Ellipse
                 : kind_draw < 0.75 ? PrimitiveKind::Polygon
                                    : PrimitiveKind::Capsule;
        p.rx = rng.uniform(rmin, rmax);
        p.ry = std::max(2.0, rng.uniform(0.55, 0.95) * p.rx);
        p.sides = 3 + static_cast<int>(rng.below(4));
        p.fill = palette[i];
        p.z = i;
        p.pose.rot = rng.uniform(0.0, 2.0 * kPi);
        p.pose.scale = 1.0;
        auto bound_of = [&p]() {
            if (p.kind == PrimitiveKind::Capsule) return p.rx + p.ry + p.stroke_width + 1.0;
            return p.rx + p.stroke_width + 1.0;
        };
        const double size_floor = 2.8;
        double gap = 2.0;
        auto fits = [&](double x, double y, double bound) {
            for (const auto& q : placed) {
                const double dx = x - q[0], dy = y - q[1];
                if (std::sqrt(dx * dx + dy * dy) < bound + q[2] + gap) return false;
            }
            return true;
        };
        bool done = false;
        while (!done) {
            const double bound = bound_of();
            const double margin = bound + 1.0;
            if (canvas - margin > margin) {
                for (int attempt = 0; attempt < 400 && !done; ++attempt) {
                    const double x = rng.uniform(margin, canvas - margin);
                    const double y = rng.uniform(margin, canvas - margin);
                    if (fits(x, y, bound)) {
                        p.pose.tx = x;
                        p.pose.ty = y;
                        done = true;
                    }
                }
                // deterministic lattice sweep before giving anything up
                for (int y = static_cast<int>(margin); y <= canvas - margin && !done; ++y)
                    for (int x = static_cast<int>(margin); x <= canvas - margin && !done; ++x)
                        if (fits(x + 0.5, y + 0.5, bound)) {
                            p.pose.tx = x + 0.5;
                            p.pose.ty = y + 0.5;
                            done = true;
                        }
            }
            if (done) break;
            if (p.rx > size_floor + 0.3) {
                p.rx = std::max(size_floor, p.rx * 0.88);
                p.ry = std::max(std::min(2.6, p.rx), p.ry * 0.88);
            } else if (gap > 0.11) {
                gap *= 0.5;
            } else {
                // pathological crowding: take the lattice point farthest from
                // everything (the non-overlap guarantee lapses here)
                double best = -1.0, bx = canvas / 2.0, by = canvas / 2.0;
                for (int y = 2; y < canvas - 2; ++y)
                    for (int x = 2; x < canvas - 2; ++x) {
                        double nearest = 1e9;
                        for (const auto& q : placed) {
                            const double dx = x + 0.5 - q[0], dy = y + 0.5 - q[1];
                            nearest = std::min(nearest, std::sqrt(dx * dx + dy * dy) - q[2]);
                        }
                        if (nearest > best) {
                            best = nearest;
                            bx = x + 0.5;
                            by = y + 0.5;
                        }
                    }
                p.pose.tx = bx;
                p.pose.ty = by;
                done = true;
            }
        }
        placed.push_back({p.pose.tx, p.pose.ty, bound_of()});
        scene.prims.push_back(p);
    }
    return scene;
}

TripletSample render_triplet(const Scene& scene, const PoseDelta& delta, bool antialias) {
    if (!delta.per_prim.empty() && delta.per_prim.size() != scene.prims.size())
        throw std::invalid_argument("render_triplet: pose delta count mismatch");
    Scene perturbed = scene;
    double total_motion = 0.0;
    TripletSample t;
    for (size_t i = 0; i < scene.prims.size(); ++i) {
        Pose& pose = perturbed.prims[i].pose;
        double dx = delta.global_dx, dy = delta.global_dy;
        if (!delta.per_prim.empty()) {
            const Pose& d = delta.per_prim[i];
            dx += d.tx;
            dy += d.ty;
            pose.rot += d.rot;
            pose.scale *= d.scale;
        }
        pose.tx += dx;
        pose.ty += dy;
        if (pose.scale <= 0.05)
            throw std::invalid_argument("render_triplet: degenerate primitive after transform");
        total_motion += std::sqrt(dx * dx + dy * dy);
        t.correspondence.push_back(
            {{scene.prims[i].pose.tx, scene.prims[i].pose.ty}, {pose.tx, pose.ty}});
    }
    t.displacement = scene.prims.empty() ? 0.0 : total_motion / scene.prims.size();
    t.target = render_scene(scene, antialias);
    t.lineart = render_lineart(scene, antialias);
    t.reference = render_scene(perturbed, antialias);
    return t;
}

std::vector<Keypoint> scene_keypoints(const Scene& scene) {
    std::vector<Keypoint> kps;
    for (size_t i = 0; i < scene.prims.size(); ++i) {
        const Primitive& p = scene.prims[i];
        for (int j = 0; j < 8; ++j) {
            double lx, ly;
            boundary_point_local(p, j / 8.0, lx, ly);
            Keypoint kp;
            kp.prim = static_cast<int>(i);
            kp.index = j;
            to_canvas(p.pose, lx, ly, kp.x, kp.y);
            kp.visible = kp.x >= 0.0 && kp.y >= 0.0 && kp.x < scene.canvas && kp.y < scene.canvas;
            if (kp.visible) {
                for (size_t k = 0; k < scene.prims.size(); ++k) {
                    if (scene.prims[k].z > p.z && scene.prims[k].contains(kp.x, kp.y)) {
                        kp.visible = false;
                        break;
                    }
                }
            }
            kps.push_back(kp);
        }
    }
    return kps;
}

int count_keypoint_matches(const Scene& a, const Scene& b, double distance_gate) {
    const auto ka = scene_keypoints(a);
    const auto kb = scene_keypoints(b);
    if (ka.size() != kb.size())
        throw std::invalid_argument("count_keypoint_matches: frames differ in primitives");
    int matches = 0;
    for (size_t i = 0; i < ka.size(); ++i) {
        if (!ka[i].visible || !kb[i].visible) continue;
        const double dx = ka[i].x - kb[i].x, dy = ka[i].y - kb[i].y;
        if (std::sqrt(dx * dx + dy * dy) <= distance_gate) ++matches;
    }
    return matches;
}

FrameSequence generate_frame_sequence(uint64_t seed, int n_frames, int n_primitives,
                                      int canvas, double motion_scale) {
    if (n_frames < 2) throw std::invalid_argument("generate_frame_sequence: need > 1 frame");
    const Scene base = generate_scene(seed, n_primitives, canvas);
    Rng rng(derive_seed(seed, /*tag=*/0x6d6f7665ull /* "move" */));
    struct Motion {
        double ax, ay, wx, wy, phx, phy, wr, ar;
    };
    std::vector<Motion> motions;
    for (size_t i = 0; i < base.prims.size(); ++i) {
        Motion m;
        m.ax = rng.uniform(0.3, 1.0) * motion_scale * canvas;
        m.ay = rng.uniform(0.3, 1.0) * motion_scale * canvas;
        m.wx = rng.uniform(0.05, 0.25);
        m.wy = rng.uniform(0.05, 0.25);
        m.phx = rng.uniform(0.0, 2.0 * kPi);
        m.phy = rng.uniform(0.0, 2.0 * kPi);
        m.wr = rng.uniform(0.02, 0.1);
        m.ar = rng.uniform(0.0, 0.4);
        motions.push_back(m);
    }
    FrameSequence seq;
    for (int f = 0; f < n_frames; ++f) {
        Scene frame = base;
        for (size_t i = 0; i < frame.prims.size(); ++i) {
            const Motion& m = motions[i];
            Pose& pose = frame.prims[i].pose;
            pose.tx += m.ax * (std::sin(m.wx * f + m.phx) - std::sin(m.phx));
            pose.ty += m.ay * (std::sin(m.wy * f + m.phy) - std::sin(m.phy));
            pose.rot += m.ar * std::sin(m.wr * f);
        }
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

std::pair<int, int> select_pair(const FrameSequence& frames, int start_interval,
                                int min_matches, double distance_gate) {
    const int n = static_cast<int>(frames.frames.size());
    if (n < 2) throw std::invalid_argument("select_pair: sequence too short");
    int interval = std::min(start_interval, n - 1);
    while (interval > 1) {
        if (count_keypoint_matches(frames.frames[0], frames.frames[interval], distance_gate) >=
            min_matches)
            break;
        --interval;
    }
    return {0, interval};
}

PoseDelta draw_pose_delta(uint64_t seed, uint64_t index, int n_primitives, int canvas,
                          const std::string& motion) {
    Rng rng(derive_seed(seed, /*tag=*/0x64656c74ull /* "delt" */, index));
    PoseDelta d;
    const bool large = motion == "large";
    for (int i = 0; i < n_primitives; ++i) {
        Pose p;
        if (large) {
            const double mag = rng.uniform(0.12, 0.28) * canvas;
            const double ang = rng.uniform(0.0, 2.0 * kPi);
            p.tx = mag * std::cos(ang);
            p.ty = mag * std::sin(ang);
            p.rot = rng.uniform(-0.35, 0.35);
            p.scale = rng.uniform(0.9, 1.1);
        } else {
            p.tx = rng.gaussian() * 0.02 * canvas;
            p.ty = rng.gaussian() * 0.02 * canvas;
            p.rot = rng.gaussian() * 0.04;
            p.scale = 1.0 + rng.gaussian() * 0.02;
        }
        d.per_prim.push_back(p);
    }
    if (large) {
        d.global_dx = rng.gaussian() * 0.02 * canvas;
        d.global_dy = rng.gaussian() * 0.02 * canvas;
    }
    return d;
}

namespace {

std::string row_filename(int index, const char* kind) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%06d_%s.ppm", index, kind);
    return buf;
}

}  // namespace

std::vector<ManifestRow> emit_corpus(const CorpusConfig& config) {
    namespace fs = std::filesystem;
    if (config.out_dir.empty()) throw std::invalid_argument("emit_corpus: out_dir required");
    fs::create_directories(config.out_dir);

    std::vector<ManifestRow> rows;
    for (int i = 0; i < config.count; ++i) {
        Rng rng(derive_seed(config.seed, /*tag=*/0x636f7270ull /* "corp" */, i));
        const int nprims =
            config.n_primitives_min +
            static_cast<int>(rng.below(config.n_primitives_max - config.n_primitives_min + 1));
        const uint64_t sample_seed = derive_seed(config.seed, 0x73616d70ull /* "samp" */, i);

        TripletSample t;
        int interval = 0;
        if (config.sequence_mode) {
            const double scale = config.motion == "large" ? 0.18 : 0.05;
            FrameSequence seq = generate_frame_sequence(sample_seed, config.start_interval + 2,
                                                        nprims, config.canvas, scale);
            auto [ref_idx, tgt_idx] =
                select_pair(seq, config.start_interval, config.min_matches,
                            0.25 * config.canvas);
            interval = tgt_idx - ref_idx;
            const Scene& tgt = seq.frames[tgt_idx];
            const Scene& ref = seq.frames[ref_idx];
            t.target = render_scene(tgt, config.antialias);
            t.lineart = render_lineart(tgt, config.antialias);
            t.reference = render_scene(ref, config.antialias);
            double motion = 0.0;
            for (size_t k = 0; k < tgt.prims.size(); ++k) {
                const double dx = tgt.prims[k].pose.tx - ref.prims[k].pose.tx;
                const double dy = tgt.prims[k].pose.ty - ref.prims[k].pose.ty;
                motion += std::sqrt(dx * dx + dy * dy);
                t.correspondence.push_back({{tgt.prims[k].pose.tx, tgt.prims[k].pose.ty},
                                            {ref.prims[k].pose.tx, ref.prims[k].pose.ty}});
            }
            t.displacement = tgt.prims.empty() ? 0.0 : motion / tgt.prims.size();
        } else {
            const Scene scene = generate_scene(sample_seed, nprims, config.canvas);
            const PoseDelta delta =
                draw_pose_delta(config.seed, i, nprims, config.canvas, config.motion);
            t = render_triplet(scene, delta, config.antialias);
        }

        ManifestRow row;
        row.index = i;
        row.target = row_filename(i, "target");
        row.line = row_filename(i, "line");
        row.ref = row_filename(i, "ref");
        row.seed = sample_seed;
        row.n_primitives = nprims;
        row.displacement = t.displacement;
        row.interval = interval;
        row.regions = segment_color_regions(t.target, t.lineart).region_count();

        write_ppm(t.target, (fs::path(config.out_dir) / row.target).string());
        write_ppm(t.lineart, (fs::path(config.out_dir) / row.line).string());
        write_ppm(t.reference, (fs::path(config.out_dir) / row.ref).string());
        rows.push_back(std::move(row));
    }

    std::ofstream mf(fs::path(config.out_dir) / "manifest.csv");
    if (!mf) throw std::runtime_error("emit_corpus: cannot write manifest");
    mf << "index,target,line,ref,seed,n_primitives,displacement,regions,interval\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%s,%s,%llu,%d,%.9f,%d,%d\n", r.index,
                      r.target.c_str(), r.line.c_str(), r.ref.c_str(),
                      static_cast<unsigned long long>(r.seed), r.n_primitives, r.displacement,
                      r.regions, r.interval);
        mf << buf;
    }
    return rows;
}

std::vector<ManifestRow> load_manifest(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.csv");
    if (!mf) throw std::runtime_error("no manifest.csv under " + dir);
    std::string line;
    std::getline(mf, line);  // header
    std::vector<ManifestRow> rows;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        ManifestRow r;
        auto next = [&]() {
            if (!std::getline(ss, field, ',')) throw std::runtime_error("bad manifest row");
            return field;
        };
        r.index = std::stoi(next());
        r.target = next();
        r.line = next();
        r.ref = next();
        r.seed = std::stoull(next());
        r.n_primitives = std::stoi(next());
        r.displacement = std::stod(next());
        r.regions = std::stoi(next());
        r.interval = std::stoi(next());
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace hadit
