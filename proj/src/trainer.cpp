#include "hadit/trainer.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "hadit/rng.hpp"

namespace hadit {

namespace {
constexpr uint64_t kTagOrder = 0x6f726472ull;  // "ordr"
constexpr uint64_t kTagEval = 0x6576616cull;   // "eval"
}  // namespace

LoadedCorpus load_corpus(const std::string& dir, const ModelConfig& cfg) {
    namespace fs = std::filesystem;
    LoadedCorpus corpus;
    corpus.rows = load_manifest(dir);
    if (corpus.rows.empty()) throw std::runtime_error("empty corpus at " + dir);
    for (const auto& row : corpus.rows) {
        RgbImage target = read_ppm((fs::path(dir) / row.target).string());
        RgbImage line = read_ppm((fs::path(dir) / row.line).string());
        RgbImage ref = read_ppm((fs::path(dir) / row.ref).string());
        if (target.width != cfg.image_side() || target.height != cfg.image_side())
            throw std::runtime_error("corpus image size " + std::to_string(target.width) +
                                     " does not match model image side " +
                                     std::to_string(cfg.image_side()));
        TrainItem item;
        item.x0 =
            flatten_grid(encode_from_image(target, cfg.patch, cfg.d_model, Branch::Noisy)).tokens;
        item.line =
            flatten_grid(encode_from_image(line, cfg.patch, cfg.d_model, Branch::LineArt)).tokens;
        item.ref = flatten_grid(encode_from_image(ref, cfg.patch, cfg.d_model, Branch::Reference))
                       .tokens;
        corpus.latents.push_back(std::move(item));
        corpus.targets.push_back(std::move(target));
        corpus.lines.push_back(std::move(line));
        corpus.refs.push_back(std::move(ref));
    }
    return corpus;
}

std::vector<int> batch_indices(int n_train, int batch_size, uint64_t seed, uint64_t phase_tag,
                               uint64_t step) {
    Rng rng(derive_seed(seed ^ phase_tag, kTagOrder, step));
    std::vector<int> idx(batch_size);
    for (int i = 0; i < batch_size; ++i)
        idx[i] = static_cast<int>(rng.below(static_cast<uint64_t>(n_train)));
    return idx;
}

uint64_t finetune_order_hash(uint64_t seed, int steps, int batch_size, int n_train) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (int k = 0; k < steps; ++k)
        for (int i : batch_indices(n_train, batch_size, seed, kPhaseFinetune, k)) {
            h ^= static_cast<uint64_t>(i);
            h *= 0x100000001b3ull;
        }
    return h;
}

namespace {

void write_loss_log(const std::string& out_dir, const std::vector<LossEntry>& losses) {
    if (out_dir.empty()) return;
    std::ofstream f(std::filesystem::path(out_dir) / "loss.csv");
    f << "phase,step,loss\n";
    char buf[96];
    for (const auto& e : losses) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.12g\n", e.phase == 'p' ? "pretrain" : "finetune",
                      e.step, e.loss);
        f << buf;
    }
}

int training_pool(const LoadedCorpus& corpus, int holdout) {
    const int n = static_cast<int>(corpus.latents.size()) - std::max(0, holdout);
    if (n < 1) throw std::invalid_argument("trainer: holdout leaves no training samples");
    return n;
}

void run_phase(const TrainConfig& cfg, const LoadedCorpus& corpus, DitModel& model,
               AdamOpt& opt, bool pretrain, int steps, uint64_t from,
               std::vector<LossEntry>& losses) {
    const int n_train = training_pool(corpus, cfg.holdout);
    const uint64_t seed = cfg.model.seed;
    const uint64_t phase_tag = pretrain ? kPhasePretrain : kPhaseFinetune;
    const auto names = model.trainable_names();
    namespace fs = std::filesystem;
    model.zero_grads();
    for (uint64_t k = from; k < static_cast<uint64_t>(steps); ++k) {
        std::vector<const TrainItem*> batch;
        for (int i : batch_indices(n_train, cfg.batch_size, seed, phase_tag, k))
            batch.push_back(&corpus.latents[i]);
        const double loss = training_step(model, batch, seed ^ phase_tag, k, pretrain);
        losses.push_back({pretrain ? 'p' : 'f', static_cast<int>(k), loss});
        if ((k + 1) % static_cast<uint64_t>(cfg.grad_accum) == 0) {
            opt.step(model, names, 1.0 / cfg.grad_accum);
            model.zero_grads();
        }
        if (!pretrain && cfg.checkpoint_every > 0 && !cfg.out_dir.empty() &&
            (k + 1) % static_cast<uint64_t>(cfg.checkpoint_every) == 0) {
            save_checkpoint((fs::path(cfg.out_dir) / "checkpoint.hckpt").string(), model, k + 1,
                            &opt);
        }
    }
}

TrainResult finetune_impl(const TrainConfig& cfg, const LoadedCorpus& corpus, DitModel model,
                          AdamOpt opt, uint64_t start_step, std::vector<LossEntry> losses) {
    namespace fs = std::filesystem;
    if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);
    if (!model.adapted()) model.attach_lora();
    run_phase(cfg, corpus, model, opt, /*pretrain=*/false, cfg.train_steps, start_step, losses);

    TrainResult res;
    res.final_step = static_cast<uint64_t>(cfg.train_steps);
    if (!cfg.out_dir.empty()) {
        save_checkpoint((fs::path(cfg.out_dir) / "checkpoint.hckpt").string(), model,
                        res.final_step, &opt);
        write_loss_log(cfg.out_dir, losses);
    }
    res.model = std::move(model);
    res.losses = std::move(losses);
    return res;
}

}  // namespace

DitModel pretrain_base(const TrainConfig& cfg, const LoadedCorpus& corpus) {
    cfg.model.validate();
    DitModel model(cfg.model);
    AdamOpt opt(cfg.lr);
    std::vector<LossEntry> losses;
    run_phase(cfg, corpus, model, opt, /*pretrain=*/true, cfg.pretrain_steps, 0, losses);
    return model;
}

TrainResult finetune(const TrainConfig& cfg, const LoadedCorpus& corpus, DitModel base) {
    return finetune_impl(cfg, corpus, std::move(base), AdamOpt(cfg.lr), 0, {});
}

TrainResult run_training(const TrainConfig& cfg, const LoadedCorpus& corpus) {
    cfg.model.validate();
    if (cfg.batch_size < 1 || cfg.grad_accum < 1)
        throw std::invalid_argument("trainer: batch_size and grad_accum must be >= 1");
    DitModel model(cfg.model);
    AdamOpt opt(cfg.lr);
    std::vector<LossEntry> losses;
    run_phase(cfg, corpus, model, opt, /*pretrain=*/true, cfg.pretrain_steps, 0, losses);
    // fresh optimizer for the adapter phase; the base is frozen from here on
    return finetune_impl(cfg, corpus, std::move(model), AdamOpt(cfg.lr), 0, std::move(losses));
}

TrainResult resume_training(const TrainConfig& cfg, const LoadedCorpus& corpus,
                            const CheckpointData& ckpt) {
    if (!ckpt.adapted)
        throw std::invalid_argument("resume: checkpoint holds a base model; retrain instead");
    DitModel model = model_from_checkpoint(ckpt);
    AdamOpt opt(cfg.lr);
    if (ckpt.has_optimizer) opt.restore(ckpt.opt_t, ckpt.opt_m, ckpt.opt_v);
    return finetune_impl(cfg, corpus, std::move(model), std::move(opt), ckpt.step, {});
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    std::exception_ptr error;
    std::mutex error_mu;
    const int k = std::min(jobs, n);
    for (int w = 0; w < k; ++w) {
        workers.emplace_back([&] {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
}

EvalSummary evaluate_on_corpus(const DitModel& model, const LoadedCorpus& corpus,
                               const std::vector<int>& indices, int sample_steps,
                               uint64_t eval_seed, const SegmentParams& seg, int jobs) {
    EvalSummary summary;
    summary.rows.resize(indices.size());
    parallel_for(static_cast<int>(indices.size()), jobs, [&](int i) {
        const int idx = indices[i];
        SampleOpts opts;
        opts.steps = sample_steps;
        opts.seed = derive_seed(eval_seed, kTagEval, static_cast<uint64_t>(idx));
        const RgbImage gen = sample_image(model, corpus.lines[idx], corpus.refs[idx], opts);
        const ColorRegionMap regions =
            segment_color_regions(corpus.targets[idx], corpus.lines[idx], seg);
        EvalRow row;
        row.index = idx;
        row.psnr = psnr(gen, corpus.targets[idx]);
        row.ssim = ssim(gen, corpus.targets[idx]);
        row.mse_cr = mse_cr(gen, corpus.targets[idx], regions);
        summary.rows[i] = row;
    });
    for (const auto& r : summary.rows) {
        summary.mean_psnr += r.psnr;
        summary.mean_ssim += r.ssim;
        summary.mean_mse_cr += r.mse_cr;
    }
    if (!summary.rows.empty()) {
        summary.mean_psnr /= static_cast<double>(summary.rows.size());
        summary.mean_ssim /= static_cast<double>(summary.rows.size());
        summary.mean_mse_cr /= static_cast<double>(summary.rows.size());
    }
    return summary;
}

}  // namespace hadit
