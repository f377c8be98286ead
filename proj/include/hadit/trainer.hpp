#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hadit/checkpoint.hpp"
#include "hadit/corpus.hpp"
#include "hadit/metrics.hpp"
#include "hadit/model.hpp"

namespace hadit {

// Corpus triplets loaded as both images (for sampling/metrics) and latents
// (for training).
struct LoadedCorpus {
    std::vector<ManifestRow> rows;
    std::vector<RgbImage> targets, lines, refs;
    std::vector<TrainItem> latents;
};

LoadedCorpus load_corpus(const std::string& dir, const ModelConfig& cfg);

struct TrainConfig {
    ModelConfig model;
    int pretrain_steps = 300;
    int train_steps = 600;
    int batch_size = 1;
    int grad_accum = 1;     // optimizer step every grad_accum training steps
    double lr = 1e-3;
    int holdout = 0;        // last k corpus entries excluded from training
    int checkpoint_every = 0;  // 0: final checkpoint only
    std::string out_dir;       // checkpoint + loss log destination ("" = none)
};

struct LossEntry {
    char phase;  // 'p' = base pretrain, 'f' = adapter fine-tune
    int step;
    double loss;
};

struct TrainResult {
    DitModel model;
    std::vector<LossEntry> losses;
    uint64_t final_step = 0;
};

// Phase tags folded into the seed derivation of data order and noise draws.
constexpr uint64_t kPhasePretrain = 0x70726530ull;  // "pre0"
constexpr uint64_t kPhaseFinetune = 0x66697430ull;  // "fit0"

// Training-sample indices for one step; depends only on (seed, phase, step),
// so runs are resumable and arms sharing a seed share their data order.
std::vector<int> batch_indices(int n_train, int batch_size, uint64_t seed, uint64_t phase_tag,
                               uint64_t step);

// FNV-1a hash of the fine-tune data order, for the ablation report.
uint64_t finetune_order_hash(uint64_t seed, int steps, int batch_size, int n_train);

// Unconditional base pretrain: conditioning branches zeroed, vanilla
// attention only, all base weights trainable.
DitModel pretrain_base(const TrainConfig& cfg, const LoadedCorpus& corpus);

// LoRA attach (context projections copied from the trained W_Q/W_K) plus
// conditional adapter fine-tuning with the configured schedule; the base
// stays frozen.
TrainResult finetune(const TrainConfig& cfg, const LoadedCorpus& corpus, DitModel base);

// pretrain_base + finetune. Deterministic given the model seed; data order
// and noise draws depend only on (seed, step index), so resuming from a
// checkpoint reproduces the original run exactly.
TrainResult run_training(const TrainConfig& cfg, const LoadedCorpus& corpus);

// Continue adapter fine-tuning from a checkpoint for additional steps.
TrainResult resume_training(const TrainConfig& cfg, const LoadedCorpus& corpus,
                            const CheckpointData& ckpt);

struct EvalRow {
    int index = 0;
    double psnr = 0.0, ssim = 0.0, mse_cr = 0.0;
};

struct EvalSummary {
    std::vector<EvalRow> rows;
    double mean_psnr = 0.0, mean_ssim = 0.0, mean_mse_cr = 0.0;
};

// Samples each listed corpus entry (deterministic per-index seeds) and scores
// it against the ground-truth target.
EvalSummary evaluate_on_corpus(const DitModel& model, const LoadedCorpus& corpus,
                               const std::vector<int>& indices, int sample_steps,
                               uint64_t eval_seed, const SegmentParams& seg = {},
                               int jobs = 1);

// Index-parallel helper; results must be written by index so output order is
// independent of scheduling.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace hadit
