#include "hadit/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>

#include "hadit/checkpoint.hpp"
#include "hadit/corpus.hpp"
#include "hadit/metrics.hpp"
#include "hadit/rng.hpp"
#include "hadit/trainer.hpp"

namespace fs = std::filesystem;

namespace hadit {

namespace {

ModelConfig to_model_config(const ModelFlags& f) {
    ModelConfig cfg;
    cfg.d_model = f.d_model;
    cfg.heads = f.heads;
    cfg.depth = f.depth;
    cfg.grid = f.grid;
    cfg.patch = f.patch;
    cfg.lora_rank = f.rank;
    cfg.lora_scale = f.lora_scale;
    cfg.schedule = parse_schedule_kind(f.schedule);
    cfg.lambda_base = f.lambda_base;
    cfg.pool_kernel = f.pool_kernel;
    cfg.use_hier = !f.no_hier;
    cfg.seed = f.seed;
    cfg.validate();
    return cfg;
}

void require_exists(const std::string& path, const char* what) {
    if (path.empty()) throw std::invalid_argument(std::string(what) + " path required");
    if (!fs::exists(path)) throw std::runtime_error(std::string(what) + " not found: " + path);
}

std::string gen_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d_gen.ppm", index);
    return buf;
}

}  // namespace

int cmd_gen(const GenOptions& opts) {
    if (opts.out.empty()) throw std::invalid_argument("gen: --out required");
    CorpusConfig cfg;
    cfg.out_dir = opts.out;
    cfg.count = opts.count;
    cfg.seed = opts.seed;
    cfg.canvas = opts.canvas;
    cfg.n_primitives_min = opts.prims_min;
    cfg.n_primitives_max = opts.prims_max;
    cfg.motion = opts.motion;
    cfg.sequence_mode = opts.sequence;
    cfg.start_interval = opts.interval;
    cfg.min_matches = opts.min_matches;
    cfg.antialias = opts.antialias;
    const auto rows = emit_corpus(cfg);
    std::cout << "wrote " << rows.size() << " triplets to " << opts.out << "\n";
    return 0;
}

int cmd_train(const TrainOptions& opts) {
    require_exists(opts.corpus, "corpus");
    if (opts.out.empty()) throw std::invalid_argument("train: --out required");

    TrainConfig cfg;
    cfg.pretrain_steps = opts.pretrain_steps;
    cfg.train_steps = opts.train_steps;
    cfg.batch_size = opts.batch_size;
    cfg.grad_accum = opts.grad_accum;
    cfg.lr = opts.lr;
    cfg.holdout = opts.holdout;
    cfg.checkpoint_every = opts.checkpoint_every;
    cfg.out_dir = opts.out;

    TrainResult result;
    if (!opts.resume.empty()) {
        require_exists(opts.resume, "resume checkpoint");
        const CheckpointData ckpt = read_checkpoint(opts.resume);
        cfg.model = ckpt.config;
        const LoadedCorpus corpus = load_corpus(opts.corpus, cfg.model);
        result = resume_training(cfg, corpus, ckpt);
    } else {
        cfg.model = to_model_config(opts.model);
        const LoadedCorpus corpus = load_corpus(opts.corpus, cfg.model);
        result = run_training(cfg, corpus);
    }
    const double final_loss = result.losses.empty() ? 0.0 : result.losses.back().loss;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "trained %d steps, final loss %.12g\n",
                  static_cast<int>(result.final_step), final_loss);
    std::cout << buf << "checkpoint: " << (fs::path(opts.out) / "checkpoint.hckpt").string()
              << "\n";
    return 0;
}

int cmd_sample(const SampleOptions& opts) {
    require_exists(opts.checkpoint, "checkpoint");
    if (opts.out.empty()) throw std::invalid_argument("sample: --out required");
    DitModel model = model_from_checkpoint(read_checkpoint(opts.checkpoint));
    if (opts.no_hier) model.set_use_hier(false);
    if (opts.pool_kernel) model.set_pool_kernel(*opts.pool_kernel);
    if (opts.schedule || opts.lambda_base) {
        model.set_schedule(
            opts.schedule ? parse_schedule_kind(*opts.schedule) : model.config().schedule,
            opts.lambda_base.value_or(model.config().lambda_base));
    }

    SampleOpts so;
    so.steps = opts.steps;

    if (!opts.corpus.empty()) {
        require_exists(opts.corpus, "corpus");
        fs::create_directories(opts.out);
        const auto rows = load_manifest(opts.corpus);
        const int n = opts.limit > 0 ? std::min<int>(opts.limit, rows.size())
                                     : static_cast<int>(rows.size());
        for (int i = 0; i < n; ++i) {
            const RgbImage line = read_ppm((fs::path(opts.corpus) / rows[i].line).string());
            const RgbImage ref = read_ppm((fs::path(opts.corpus) / rows[i].ref).string());
            so.seed = derive_seed(opts.seed, 0x67656e31ull, rows[i].index);
            const RgbImage out = sample_image(model, line, ref, so);
            write_ppm(out, (fs::path(opts.out) / gen_name(rows[i].index)).string());
        }
        std::cout << "sampled " << n << " images to " << opts.out << "\n";
        return 0;
    }

    require_exists(opts.line, "line art");
    require_exists(opts.ref, "reference");
    so.seed = opts.seed;
    const RgbImage line = read_ppm(opts.line);
    const RgbImage ref = read_ppm(opts.ref);
    const RgbImage out = sample_image(model, line, ref, so);
    write_ppm(out, opts.out);
    std::cout << "wrote " << opts.out << "\n";
    return 0;
}

int cmd_eval(const EvalOptions& opts) {
    require_exists(opts.gen, "gen dir");
    require_exists(opts.gt, "gt dir");
    if (opts.out.empty()) throw std::invalid_argument("eval: --out required");
    const std::string line_dir = opts.line.empty() ? opts.gt : opts.line;

    struct Pair {
        std::string name, gen, gt, line;
    };
    std::vector<Pair> pairs;

    if (fs::exists(fs::path(opts.gt) / "manifest.csv")) {
        // corpus mode: pair generated images with manifest rows by index
        for (const auto& row : load_manifest(opts.gt)) {
            Pair p;
            p.name = gen_name(row.index);
            p.gen = (fs::path(opts.gen) / p.name).string();
            p.gt = (fs::path(opts.gt) / row.target).string();
            p.line = (fs::path(opts.gt) / row.line).string();
            if (!fs::exists(p.gen))
                throw std::runtime_error("eval: unpaired manifest row, missing " + p.gen);
            pairs.push_back(std::move(p));
        }
    } else {
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(opts.gen))
            if (e.path().extension() == ".ppm") names.push_back(e.path().filename().string());
        std::sort(names.begin(), names.end());
        for (const auto& name : names) {
            Pair p;
            p.name = name;
            p.gen = (fs::path(opts.gen) / name).string();
            p.gt = (fs::path(opts.gt) / name).string();
            p.line = (fs::path(line_dir) / name).string();
            if (!fs::exists(p.gt) || !fs::exists(p.line))
                throw std::runtime_error("eval: unpaired file " + name);
            pairs.push_back(std::move(p));
        }
    }
    if (pairs.empty()) throw std::runtime_error("eval: nothing to evaluate");

    SegmentParams seg;
    seg.delta_e_threshold = opts.threshold;
    seg.line_luminance_threshold = opts.line_threshold;

    struct Row {
        double psnr, ssim, mse_cr;
    };
    std::vector<Row> rows(pairs.size());
    parallel_for(static_cast<int>(pairs.size()), opts.jobs, [&](int i) {
        const RgbImage gen = read_ppm(pairs[i].gen);
        const RgbImage gt = read_ppm(pairs[i].gt);
        const RgbImage line = read_ppm(pairs[i].line);
        const ColorRegionMap regions = segment_color_regions(gt, line, seg);
        rows[i] = {psnr(gen, gt), ssim(gen, gt), mse_cr(gen, gt, regions)};
    });

    std::ofstream f(opts.out);
    if (!f) throw std::runtime_error("eval: cannot write " + opts.out);
    f << "file,psnr,ssim,mse_cr\n";
    char buf[256];
    double mp = 0, ms = 0, mm = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g\n", pairs[i].name.c_str(),
                      rows[i].psnr, rows[i].ssim, rows[i].mse_cr);
        f << buf;
        mp += rows[i].psnr;
        ms += rows[i].ssim;
        mm += rows[i].mse_cr;
    }
    const double n = static_cast<double>(pairs.size());
    std::snprintf(buf, sizeof(buf), "mean,%.9g,%.9g,%.9g\n", mp / n, ms / n, mm / n);
    f << buf;
    std::cout << "evaluated " << pairs.size() << " pairs -> " << opts.out << "\n";
    return 0;
}

int cmd_segment(const SegmentOptions& opts) {
    require_exists(opts.image, "image");
    require_exists(opts.line, "line art");
    const RgbImage gt = read_ppm(opts.image);
    const RgbImage line = read_ppm(opts.line);
    SegmentParams seg;
    seg.delta_e_threshold = opts.threshold;
    seg.line_luminance_threshold = opts.line_threshold;
    const ColorRegionMap map = segment_color_regions(gt, line, seg);

    if (!opts.out_viz.empty()) {
        RgbImage viz(map.width, map.height);
        Rng rng(derive_seed(opts.seed, 0x76697aull /* "viz" */));
        const double hue0 = rng.uniform();
        for (int y = 0; y < map.height; ++y) {
            for (int x = 0; x < map.width; ++x) {
                const int l = map.label(x, y);
                if (l == kLineLabel) {
                    viz.set(x, y, 0, 0, 0);
                    continue;
                }
                // golden-angle hue walk gives visually distinct region colors
                const double h = std::fmod(hue0 + 0.61803398875 * (l + 1), 1.0) * 6.0;
                const double s = 0.6, v = 0.95;
                const double c = v * s;
                const double xx = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
                double r = 0, g = 0, b = 0;
                if (h < 1) { r = c; g = xx; }
                else if (h < 2) { r = xx; g = c; }
                else if (h < 3) { g = c; b = xx; }
                else if (h < 4) { g = xx; b = c; }
                else if (h < 5) { r = xx; b = c; }
                else { r = c; b = xx; }
                const double m = v - c;
                viz.set(x, y, static_cast<uint8_t>((r + m) * 255),
                        static_cast<uint8_t>((g + m) * 255),
                        static_cast<uint8_t>((b + m) * 255));
            }
        }
        for (const auto& [rx, ry] : map.representatives) viz.set(rx, ry, 255, 0, 0);
        write_ppm(viz, opts.out_viz);
    }

    if (!opts.out_table.empty()) {
        std::vector<int> sizes(map.region_count(), 0);
        for (int l : map.labels)
            if (l != kLineLabel) ++sizes[l];
        std::ofstream f(opts.out_table);
        if (!f) throw std::runtime_error("segment: cannot write " + opts.out_table);
        f << "region,pixels,rep_x,rep_y,gt_r,gt_g,gt_b\n";
        char buf[160];
        for (int l = 0; l < map.region_count(); ++l) {
            const auto [rx, ry] = map.representatives[l];
            const uint8_t* p = gt.px(rx, ry);
            std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%d,%d,%d\n", l, sizes[l], rx, ry, p[0],
                          p[1], p[2]);
            f << buf;
        }
    }
    std::cout << map.region_count() << " regions\n";
    return 0;
}

namespace {

struct ArmSpec {
    const char* id;
    bool use_hier;
    ScheduleKind schedule;
    bool in_strategy_table;  // Table of training strategies
    bool in_schedule_table;  // Table of weight schedules
};

constexpr ArmSpec kArms[] = {
    {"no_hier", false, ScheduleKind::Constant, true, false},
    {"hier_const", true, ScheduleKind::Constant, true, false},
    {"hier_cos", true, ScheduleKind::Cos, true, true},
    {"hier_sin", true, ScheduleKind::Sin, false, true},
    {"hier_cosinv", true, ScheduleKind::CosInv, false, true},
};

struct ArmResult {
    std::string arm;
    uint64_t seed = 0;
    double psnr = 0, ssim = 0, mse_cr = 0;
    uint64_t order_hash = 0;
};

}  // namespace

int cmd_ablate(const AblateOptions& opts) {
    require_exists(opts.corpus, "corpus");
    if (opts.out.empty()) throw std::invalid_argument("ablate: --out required");
    if (opts.seeds.empty()) throw std::invalid_argument("ablate: need at least one seed");
    fs::create_directories(opts.out);

    ModelConfig base_cfg = to_model_config(opts.model);
    const LoadedCorpus corpus = load_corpus(opts.corpus, base_cfg);
    const int n = static_cast<int>(corpus.rows.size());
    const int holdout = std::min(opts.holdout, n / 2);
    std::vector<int> holdout_idx;
    for (int i = n - holdout; i < n; ++i) holdout_idx.push_back(i);
    if (holdout_idx.empty()) throw std::invalid_argument("ablate: empty holdout split");

    auto make_train_cfg = [&](uint64_t seed) {
        TrainConfig cfg;
        cfg.model = base_cfg;
        cfg.model.seed = seed;
        cfg.pretrain_steps = opts.pretrain_steps;
        cfg.train_steps = opts.train_steps;
        cfg.batch_size = opts.batch_size;
        cfg.grad_accum = opts.grad_accum;
        cfg.lr = opts.lr;
        cfg.holdout = holdout;
        return cfg;
    };

    // One unconditional pretrain per seed; every arm of that seed branches
    // from the same frozen base.
    const int n_seeds = static_cast<int>(opts.seeds.size());
    std::vector<DitModel> bases(n_seeds);
    parallel_for(n_seeds, opts.jobs, [&](int si) {
        bases[si] = pretrain_base(make_train_cfg(opts.seeds[si]), corpus);
    });

    constexpr int n_arms = static_cast<int>(std::size(kArms));
    std::vector<ArmResult> results(static_cast<size_t>(n_seeds) * n_arms);
    parallel_for(n_seeds * n_arms, opts.jobs, [&](int i) {
        const int si = i / n_arms;
        const int ai = i % n_arms;
        const ArmSpec& arm = kArms[ai];
        const uint64_t seed = opts.seeds[si];

        TrainConfig cfg = make_train_cfg(seed);
        cfg.model.use_hier = arm.use_hier;
        cfg.model.schedule = arm.schedule;
        cfg.out_dir =
            (fs::path(opts.out) / "arms" / (std::string(arm.id) + "-s" + std::to_string(seed)))
                .string();

        DitModel model = bases[si];
        model.set_use_hier(arm.use_hier);
        model.set_schedule(arm.schedule, cfg.model.lambda_base);
        TrainResult tr = finetune(cfg, corpus, std::move(model));

        const EvalSummary ev =
            evaluate_on_corpus(tr.model, corpus, holdout_idx, opts.eval_steps,
                               derive_seed(seed, 0x61626576ull /* "abev" */), {}, 1);
        ArmResult& r = results[i];
        r.arm = arm.id;
        r.seed = seed;
        r.psnr = ev.mean_psnr;
        r.ssim = ev.mean_ssim;
        r.mse_cr = ev.mean_mse_cr;
        r.order_hash = finetune_order_hash(seed, opts.train_steps, opts.batch_size, n - holdout);
    });

    auto result_of = [&](const std::string& arm, uint64_t seed) -> const ArmResult& {
        for (const auto& r : results)
            if (r.arm == arm && r.seed == seed) return r;
        throw std::logic_error("missing arm result");
    };
    auto mean_of = [&](const std::string& arm, double ArmResult::* field) {
        double s = 0.0;
        for (uint64_t seed : opts.seeds) s += result_of(arm, seed).*field;
        return s / n_seeds;
    };

    // machine-readable report
    {
        std::ofstream f(fs::path(opts.out) / "report.csv");
        f << "table,arm,seed,psnr,ssim,mse_cr,order_hash\n";
        char buf[256];
        for (const ArmSpec& arm : kArms) {
            const char* table = arm.in_strategy_table ? "strategy" : "schedule";
            for (uint64_t seed : opts.seeds) {
                const ArmResult& r = result_of(arm.id, seed);
                std::snprintf(buf, sizeof(buf), "%s,%s,%llu,%.9g,%.9g,%.9g,%016llx\n", table,
                              arm.id, static_cast<unsigned long long>(seed), r.psnr, r.ssim,
                              r.mse_cr, static_cast<unsigned long long>(r.order_hash));
                f << buf;
            }
            std::snprintf(buf, sizeof(buf), "%s,%s,mean,%.9g,%.9g,%.9g,\n", table, arm.id,
                          mean_of(arm.id, &ArmResult::psnr), mean_of(arm.id, &ArmResult::ssim),
                          mean_of(arm.id, &ArmResult::mse_cr));
            f << buf;
        }
    }

    // human-readable report, mirroring the two ablation tables
    {
        std::ofstream f(fs::path(opts.out) / "report.txt");
        char buf[256];
        f << "Ablation of training strategies (held-out means over " << holdout_idx.size()
          << " samples x " << n_seeds << " seeds)\n";
        f << "HierAtt  DyW      PSNR      SSIM    MSE_CR\n";
        auto strategy_row = [&](const char* arm, const char* hier, const char* dyw) {
            std::snprintf(buf, sizeof(buf), "%-8s %-5s %9.4f %9.4f %9.5f   (%s)\n", hier, dyw,
                          mean_of(arm, &ArmResult::psnr), mean_of(arm, &ArmResult::ssim),
                          mean_of(arm, &ArmResult::mse_cr), arm);
            f << buf;
        };
        strategy_row("no_hier", "no", "no");
        strategy_row("hier_const", "yes", "no");
        strategy_row("hier_cos", "yes", "yes");
        f << "\nAblation of weight schedules\n";
        f << "Schedule      PSNR      SSIM    MSE_CR\n";
        auto schedule_row = [&](const char* arm, const char* name) {
            std::snprintf(buf, sizeof(buf), "%-10s %9.4f %9.4f %9.5f\n", name,
                          mean_of(arm, &ArmResult::psnr), mean_of(arm, &ArmResult::ssim),
                          mean_of(arm, &ArmResult::mse_cr));
            f << buf;
        };
        schedule_row("hier_sin", "sin");
        schedule_row("hier_cosinv", "cosinv");
        schedule_row("hier_cos", "cos");

        f << "\nPer-seed held-out MSE_CR\n";
        f << "seed";
        for (const ArmSpec& arm : kArms) {
            std::snprintf(buf, sizeof(buf), " %12s", arm.id);
            f << buf;
        }
        f << "\n";
        int wins = 0;
        for (uint64_t seed : opts.seeds) {
            std::snprintf(buf, sizeof(buf), "%4llu", static_cast<unsigned long long>(seed));
            f << buf;
            for (const ArmSpec& arm : kArms) {
                std::snprintf(buf, sizeof(buf), " %12.6f", result_of(arm.id, seed).mse_cr);
                f << buf;
            }
            f << "\n";
            if (result_of("hier_cos", seed).mse_cr <= result_of("no_hier", seed).mse_cr) ++wins;
        }
        std::snprintf(buf, sizeof(buf),
                      "\nhier_cos <= no_hier on held-out MSE_CR in %d of %d seeds\n", wins,
                      n_seeds);
        f << buf;
        std::snprintf(buf, sizeof(buf), "finetune data-order hash: %016llx (all arms equal: %s)\n",
                      static_cast<unsigned long long>(results[0].order_hash),
                      std::all_of(results.begin(), results.end(),
                                  [&](const ArmResult& r) {
                                      return r.order_hash == results[0].order_hash ||
                                             r.seed != results[0].seed;
                                  })
                          ? "per seed"
                          : "NO");
        f << buf;
    }

    std::cout << "ablation report written to " << opts.out << "\n";
    return 0;
}

}  // namespace hadit
