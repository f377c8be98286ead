#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hadit/attention.hpp"
#include "hadit/graph.hpp"
#include "hadit/image.hpp"
#include "hadit/schedule.hpp"
#include "hadit/token_space.hpp"

namespace hadit {

struct ModelConfig {
    int d_model = 64;
    int heads = 4;
    int depth = 4;
    int grid = 16;   // latent grid side N; image side = grid * patch
    int patch = 4;
    int lora_rank = 4;
    double lora_scale = 1.0;
    ScheduleKind schedule = ScheduleKind::Cos;
    double lambda_base = 0.1;
    int schedule_steps = 1000;  // T for integer-step lambda queries
    int pool_kernel = 4;        // inference-time Fixed kernel
    bool use_hier = true;
    uint64_t seed = 1;

    int image_side() const { return grid * patch; }
    ScheduleSpec schedule_spec() const { return {schedule, lambda_base, schedule_steps}; }
    void validate() const;
};

// Fixed, untrained, exactly invertible patchify: p x p RGB patches flattened
// into the first 3p^2 latent channels, zero-padded to d_model.
FeatureGrid encode_from_image(const RgbImage& img, int patch, int d_model,
                              Branch branch = Branch::Noisy);
RgbImage decode_to_image(const FeatureGrid& grid, int patch);

// x_t = (1 - sigma) * x0 + sigma * eps
FeatureGrid forward_noising(const FeatureGrid& x0, const FeatureGrid& eps, double sigma);

struct ForwardOpts {
    double sigma = 0.0;   // noise level in [0,1]; drives the timestep embedding
    double lambda = 0.0;  // context blend weight
    int kernel = 4;       // pool kernel for the context path
    bool use_context = true;
};

// DiT-style denoiser: per-branch input embeddings + 2-D sinusoidal positions,
// `depth` blocks of (adaLN-modulated hierarchical attention + feed-forward),
// and a linear velocity head over the noisy-branch tokens.
class DitModel {
public:
    DitModel() = default;
    explicit DitModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    bool adapted() const { return adapted_; }

    // Inference/training-policy knobs; tensor state is untouched.
    void set_use_hier(bool v) { cfg_.use_hier = v; }
    void set_pool_kernel(int k) { cfg_.pool_kernel = k; }
    void set_schedule(ScheduleKind kind, double lambda_base) {
        cfg_.schedule = kind;
        cfg_.lambda_base = lambda_base;
    }

    // Copies the trained W_Q/W_K into the context-path W_Q'/W_K', creates
    // rank-r adapters (B zero-initialized) on all six attention projections
    // of every block, and freezes the base.
    void attach_lora();

    std::vector<std::string> tensor_names() const;
    // Base tensors before attach_lora (minus the dormant context copies);
    // adapter tensors only afterwards.
    std::vector<std::string> trainable_names() const;
    std::vector<std::string> adapter_names() const;

    bool has_tensor(const std::string& name) const { return tensors_.count(name) > 0; }
    Mat& tensor(const std::string& name);
    const Mat& tensor(const std::string& name) const;
    Mat& grad(const std::string& name) const;
    void zero_grads() const;

    // scale * B A for the adapter on `base` ("block0.attn.wq", ...)
    Mat lora_update(const std::string& base) const;

    // Builds the forward graph and returns the velocity prediction node
    // (grid*grid x d_model). Latent mats are row-major grids.
    Graph::Id build_velocity(Graph& g, const Mat& xt, const Mat& line, const Mat& ref,
                             const ForwardOpts& opts) const;

    // Integer-timestep entry point: lambda = lambda_at(schedule, t) with the
    // model's schedule (T overridable), sigma = t / T.
    FeatureGrid predict_velocity(const FeatureGrid& xt, const FeatureGrid& line,
                                 const FeatureGrid& ref, int t,
                                 std::optional<int> total_steps = std::nullopt) const;

    const SeqLayout& layout() const { return layout_; }
    const Mat& positional_encoding() const { return pe_; }

    // Checkpoint support: overwrite full state.
    void restore(const ModelConfig& cfg, bool adapted, std::map<std::string, Mat> tensors);
    const std::map<std::string, Mat>& tensors() const { return tensors_; }

private:
    void init_params();
    Graph::Id effective_attn_weight(Graph& g, const std::string& base) const;

    ModelConfig cfg_;
    bool adapted_ = false;
    std::map<std::string, Mat> tensors_;
    mutable std::map<std::string, Mat> grads_;
    Mat pe_;
    SeqLayout layout_;
};

// Adaptive moment estimation over the model's named gradients.
class AdamOpt {
public:
    explicit AdamOpt(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                     double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Applies one update from the accumulated grads (times grad_scale).
    void step(DitModel& model, const std::vector<std::string>& names, double grad_scale = 1.0);

    uint64_t t() const { return t_; }
    double lr() const { return lr_; }
    const std::map<std::string, Mat>& m_state() const { return m_; }
    const std::map<std::string, Mat>& v_state() const { return v_; }
    void restore(uint64_t t, std::map<std::string, Mat> m, std::map<std::string, Mat> v);

private:
    double lr_, beta1_, beta2_, eps_;
    uint64_t t_ = 0;
    std::map<std::string, Mat> m_, v_;
};

struct TrainItem {
    Mat x0;    // target latents
    Mat line;  // line-art latents
    Mat ref;   // reference latents
};

// One velocity-regression step: draws (sigma, eps) per item and the shared
// pool kernel for the step, accumulates gradients into the model, returns the
// batch loss. pretrain zeroes the conditioning branches and disables the
// context path.
double training_step(const DitModel& model, const std::vector<const TrainItem*>& batch,
                     uint64_t seed, uint64_t step_index, bool pretrain);

struct SampleOpts {
    int steps = 28;
    uint64_t seed = 1;
    std::optional<int> pool_kernel;             // default: model config's Fixed kernel
    std::optional<ScheduleKind> schedule;       // default: model config's kind
    std::optional<double> lambda_base;          // default: model config's value
};

// Euler integration of the velocity field from sigma=1 to 0; lambda evaluated
// at integer step t = steps - i with T = steps. Deterministic given seed.
Mat sample_latent(const DitModel& model, const Mat& line_lat, const Mat& ref_lat,
                  const SampleOpts& opts);
RgbImage sample_image(const DitModel& model, const RgbImage& line, const RgbImage& ref,
                      const SampleOpts& opts);

// Sinusoidal embedding of the noise level, 1 x d_model.
Mat timestep_embedding(double sigma, int d_model);

}  // namespace hadit
