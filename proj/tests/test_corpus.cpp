#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "hadit/corpus.hpp"
#include "hadit/metrics.hpp"
#include "hadit/rng.hpp"

using namespace hadit;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), {});
}

// brute force over every interval, mirroring the documented contract
int expected_interval(const FrameSequence& seq, int start, int min_matches, double gate) {
    const int n = static_cast<int>(seq.frames.size());
    for (int interval = std::min(start, n - 1); interval > 1; --interval)
        if (count_keypoint_matches(seq.frames[0], seq.frames[interval], gate) >= min_matches)
            return interval;
    return 1;
}

}  // namespace

TEST_CASE("generate_scene is deterministic and seed-sensitive") {
    const Scene a = generate_scene(1, 3);
    const Scene b = generate_scene(1, 3);
    REQUIRE(a.prims.size() == 3);
    for (size_t i = 0; i < a.prims.size(); ++i) {
        CHECK(a.prims[i].pose.tx == b.prims[i].pose.tx);
        CHECK(a.prims[i].pose.rot == b.prims[i].pose.rot);
        CHECK(a.prims[i].fill == b.prims[i].fill);
    }
    const Scene c = generate_scene(2, 3);
    bool any_diff = false;
    for (size_t i = 0; i < a.prims.size(); ++i)
        if (a.prims[i].pose.tx != c.prims[i].pose.tx) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("palette separation: pairwise deltaE >= 15 including background") {
    for (uint64_t seed : {3ull, 4ull, 5ull}) {
        const Scene s = generate_scene(seed, 6);
        std::vector<Lab> labs{rgb_to_lab(1, 1, 1)};
        for (const auto& p : s.prims) labs.push_back(rgb_to_lab(p.fill[0], p.fill[1], p.fill[2]));
        for (size_t i = 0; i < labs.size(); ++i)
            for (size_t j = i + 1; j < labs.size(); ++j)
                CHECK(delta_e76(labs[i], labs[j]) >= 15.0 - 1e-9);
    }
}

TEST_CASE("region ground truth: n primitives + background") {
    for (uint64_t seed : {10ull, 11ull, 12ull, 13ull}) {
        for (int n : {1, 4, 6}) {
            const Scene s = generate_scene(seed, n);
            const RgbImage target = render_scene(s);
            const RgbImage line = render_lineart(s);
            const ColorRegionMap map = segment_color_regions(target, line);
            INFO("seed ", seed, " n ", n);
            CHECK(map.region_count() == n + 1);
        }
    }
}

TEST_CASE("render_triplet: zero delta gives a pixel-identical reference") {
    const Scene s = generate_scene(20, 4);
    PoseDelta zero;
    zero.per_prim.assign(4, Pose{});
    const TripletSample t = render_triplet(s, zero);
    CHECK(t.reference.pixels == t.target.pixels);
    CHECK(t.displacement == 0.0);
}

TEST_CASE("render_triplet: uniform (8,0) translation has displacement 8") {
    const Scene s = generate_scene(21, 3);
    PoseDelta d;
    for (int i = 0; i < 3; ++i) d.per_prim.push_back(Pose{8.0, 0.0, 0.0, 1.0});
    const TripletSample t = render_triplet(s, d);
    CHECK(t.displacement == doctest::Approx(8.0).epsilon(1e-12));
    // correspondence records both centers
    for (int i = 0; i < 3; ++i) {
        CHECK(t.correspondence[i].second[0] ==
              doctest::Approx(t.correspondence[i].first[0] + 8.0));
        CHECK(t.correspondence[i].second[1] == doctest::Approx(t.correspondence[i].first[1]));
    }
}

TEST_CASE("render_triplet rejects degenerate scale") {
    const Scene s = generate_scene(22, 2);
    PoseDelta d;
    d.per_prim.assign(2, Pose{0, 0, 0, 0.01});
    CHECK_THROWS(render_triplet(s, d));
}

TEST_CASE("reference preserves per-primitive fill colors at corresponding centers") {
    const Scene s = generate_scene(23, 4);
    const PoseDelta d = draw_pose_delta(99, 0, 4, 64, "small");
    const TripletSample t = render_triplet(s, d);
    for (size_t i = 0; i < s.prims.size(); ++i) {
        const auto [tc, rc] = t.correspondence[i];
        const uint8_t* tp = t.target.px(static_cast<int>(tc[0]), static_cast<int>(tc[1]));
        const uint8_t* rp = t.reference.px(static_cast<int>(rc[0]), static_cast<int>(rc[1]));
        CHECK(tp[0] == rp[0]);
        CHECK(tp[1] == rp[1]);
        CHECK(tp[2] == rp[2]);
    }
}

TEST_CASE("lineart is white-and-black strokes aligned with target boundaries") {
    const Scene s = generate_scene(24, 3);
    const RgbImage line = render_lineart(s);
    int black = 0, white = 0;
    for (size_t i = 0; i < line.pixels.size(); i += 3) {
        if (line.pixels[i] == 0 && line.pixels[i + 1] == 0 && line.pixels[i + 2] == 0) ++black;
        else if (line.pixels[i] == 255 && line.pixels[i + 1] == 255 && line.pixels[i + 2] == 255)
            ++white;
    }
    CHECK(black > 0);
    CHECK(black + white == static_cast<int>(line.pixels.size() / 3));
    // every black line pixel is black in the target too (strokes drawn there)
    const RgbImage target = render_scene(s);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (line.px(x, y)[0] == 0)
                CHECK((target.px(x, y)[0] == 0 && target.px(x, y)[1] == 0 &&
                       target.px(x, y)[2] == 0));
}

TEST_CASE("scene keypoints: 8 per primitive") {
    const Scene s = generate_scene(25, 5);
    const auto kps = scene_keypoints(s);
    CHECK(kps.size() == 40);
    std::set<std::pair<int, int>> ids;
    for (const auto& kp : kps) ids.insert({kp.prim, kp.index});
    CHECK(ids.size() == 40);
}

TEST_CASE("select_pair: static scene keeps interval 18") {
    FrameSequence seq;
    const Scene base = generate_scene(26, 4);
    for (int i = 0; i < 20; ++i) seq.frames.push_back(base);
    CHECK(select_pair(seq, 18, 25, 16.0) == std::pair<int, int>{0, 18});
}

TEST_CASE("select_pair: min_matches 0 always returns the start interval") {
    FrameSequence seq = generate_frame_sequence(27, 20, 4, 64, 0.3);
    CHECK(select_pair(seq, 18, 0, 16.0) == std::pair<int, int>{0, 18});
}

TEST_CASE("select_pair: primitive exiting the canvas forces a short interval") {
    // one static primitive (8 matches) plus one that slides off canvas by
    // frame 6; min_matches 10 needs at least 2 matches from the mover
    const Scene base = generate_scene(28, 2);
    FrameSequence seq;
    for (int f = 0; f < 20; ++f) {
        Scene frame = base;
        frame.prims[1].pose.tx += f * 24.0;  // exits quickly
        seq.frames.push_back(frame);
    }
    const auto [ref_idx, tgt_idx] = select_pair(seq, 18, 10, 1e9);
    CHECK(ref_idx == 0);
    CHECK(tgt_idx <= 5);
    CHECK(tgt_idx == expected_interval(seq, 18, 10, 1e9));
}

TEST_CASE("select_pair equals the brute-force maximal qualifying interval") {
    for (uint64_t seed : {30ull, 31ull, 32ull, 33ull}) {
        const FrameSequence seq = generate_frame_sequence(seed, 24, 4, 64, 0.15);
        const double gate = 16.0;
        for (int min_matches : {0, 10, 25, 32}) {
            const auto [r, t] = select_pair(seq, 18, min_matches, gate);
            CHECK(r == 0);
            CHECK(t == expected_interval(seq, 18, min_matches, gate));
        }
    }
}

TEST_CASE("frame sequences are deterministic with bounded motion") {
    const FrameSequence a = generate_frame_sequence(40, 12, 3, 64, 0.2);
    const FrameSequence b = generate_frame_sequence(40, 12, 3, 64, 0.2);
    REQUIRE(a.frames.size() == 12);
    for (size_t f = 0; f < a.frames.size(); ++f)
        for (size_t i = 0; i < a.frames[f].prims.size(); ++i)
            CHECK(a.frames[f].prims[i].pose.tx == b.frames[f].prims[i].pose.tx);
    for (size_t f = 1; f < a.frames.size(); ++f)
        for (size_t i = 0; i < a.frames[f].prims.size(); ++i) {
            const double dx = a.frames[f].prims[i].pose.tx - a.frames[f - 1].prims[i].pose.tx;
            const double dy = a.frames[f].prims[i].pose.ty - a.frames[f - 1].prims[i].pose.ty;
            CHECK(std::sqrt(dx * dx + dy * dy) < 24.0);
        }
}

TEST_CASE("emit_corpus: deterministic manifest, correct rows, recomputable displacement") {
    const fs::path base = fs::temp_directory_path() / "hadit_test_corpus";
    fs::remove_all(base);
    CorpusConfig cfg;
    cfg.count = 10;
    cfg.seed = 7;
    cfg.canvas = 32;
    cfg.n_primitives_min = 2;
    cfg.n_primitives_max = 3;
    cfg.motion = "large";

    cfg.out_dir = (base / "a").string();
    const auto rows_a = emit_corpus(cfg);
    cfg.out_dir = (base / "b").string();
    const auto rows_b = emit_corpus(cfg);

    REQUIRE(rows_a.size() == 10);
    CHECK(read_file(base / "a" / "manifest.csv") == read_file(base / "b" / "manifest.csv"));

    const auto loaded = load_manifest((base / "a").string());
    REQUIRE(loaded.size() == 10);
    for (const auto& row : loaded) {
        CHECK(fs::exists(base / "a" / row.target));
        CHECK(fs::exists(base / "a" / row.line));
        CHECK(fs::exists(base / "a" / row.ref));
        CHECK(row.regions == row.n_primitives + 1);

        // displacement re-derives from (seed, index) exactly
        const Scene scene = generate_scene(row.seed, row.n_primitives, cfg.canvas);
        const PoseDelta delta =
            draw_pose_delta(cfg.seed, row.index, row.n_primitives, cfg.canvas, cfg.motion);
        const TripletSample t = render_triplet(scene, delta);
        CHECK(std::abs(t.displacement - row.displacement) < 1e-6);

        // images round-trip through the ppm codec
        const RgbImage target = read_ppm((base / "a" / row.target).string());
        CHECK(target.pixels == t.target.pixels);
    }
    fs::remove_all(base);
}

TEST_CASE("emit_corpus sequence mode records intervals") {
    const fs::path dir = fs::temp_directory_path() / "hadit_test_corpus_seq";
    fs::remove_all(dir);
    CorpusConfig cfg;
    cfg.out_dir = dir.string();
    cfg.count = 4;
    cfg.seed = 9;
    cfg.canvas = 32;
    cfg.n_primitives_min = 4;
    cfg.n_primitives_max = 4;
    cfg.sequence_mode = true;
    cfg.motion = "large";
    const auto rows = emit_corpus(cfg);
    REQUIRE(rows.size() == 4);
    for (const auto& row : rows) {
        CHECK(row.interval >= 1);
        CHECK(row.interval <= 18);
        CHECK(row.regions >= 1);
    }
    fs::remove_all(dir);
}
