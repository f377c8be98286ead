#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "hadit/graph.hpp"
#include "hadit/token_space.hpp"

namespace hadit {

// Projection weights for one attention layer. wq/wk/wv/wo drive the vanilla
// path; wqc/wkc project the pooled-and-upsampled features of the context
// path. V is shared between the two paths.
struct AttentionParams {
    Mat wq, wk, wv, wo;
    Mat wqc, wkc;
    int heads = 1;

    int d_model() const { return wq.rows; }
    int d_k() const { return d_model() / heads; }
    void validate() const;
};

enum class PoolPolicy { RandomPerStep, Fixed };

// Kernel selection for the context path's max pooling.
struct PoolSpec {
    PoolPolicy policy = PoolPolicy::Fixed;
    int kernel = 4;        // Fixed policy
    uint64_t seed = 0;     // RandomPerStep policy

    static PoolSpec fixed(int k) { return PoolSpec{PoolPolicy::Fixed, k, 0}; }
    static PoolSpec random_per_step(uint64_t seed) {
        return PoolSpec{PoolPolicy::RandomPerStep, 0, seed};
    }
};

// One kernel per training step, shared by all layers. RandomPerStep draws
// uniformly from {2, 4, 8} restricted to kernels that fit the grid side.
int resolve_kernel(const PoolSpec& spec, uint64_t step_index, int max_side);

struct AttentionOutput {
    Mat tokens;
    // Per-head softmax matrices, retained on request for inspection/tests.
    std::vector<Mat> head_probs;
    std::vector<Mat> context_head_probs;
};

// Segment boundaries plus per-branch grid shapes; all the attention helper
// needs to know about a unified sequence's structure.
struct SeqLayout {
    std::array<Segment, kNumBranches> bounds;
    std::array<std::optional<GridShape>, kNumBranches> grids;
    int total_length = 0;
    int d_model = 0;
};

SeqLayout layout_of(const UnifiedSequence& u);

// Weight nodes for one attention layer on a graph. The model passes
// LoRA-adapted effective weights here; the standalone ops pass raw params.
struct AttnWeightNodes {
    Graph::Id wq, wk, wv, wo;
    Graph::Id wqc = -1, wkc = -1;
};

struct AttnTraceNodes {
    std::vector<Graph::Id> vanilla_probs;
    std::vector<Graph::Id> context_probs;
};

// Multi-head attention over the full sequence. With use_context, adds
// lambda * context-path output (pooled features -> Q'/K', shared V), each
// path including the output projection.
Graph::Id multihead_attention(Graph& g, Graph::Id x, const SeqLayout& layout, int heads,
                              const AttnWeightNodes& w, bool use_context, int kernel,
                              double lambda, AttnTraceNodes* trace = nullptr);

// softmax(Q K^T / sqrt(d_k)) V over all tokens of all branches jointly.
AttentionOutput vanilla_attention(const UnifiedSequence& u, const AttentionParams& p,
                                  bool keep_probs = false);

// Channel-wise max over kernel x kernel blocks, nearest-neighbor upsampled
// back to the original shape. Total on non-divisible grids via replicate
// padding; kernel larger than the grid side is an error.
FeatureGrid pool_and_upsample(const FeatureGrid& g, int kernel);
FeatureGrid pool_and_upsample(const FeatureGrid& g, const PoolSpec& spec,
                              uint64_t step_index = 0);

// softmax(Q' K'^T / sqrt(d_k)) V with Q', K' projected from pooled features.
AttentionOutput context_attention(const UnifiedSequence& u, const AttentionParams& p,
                                  const PoolSpec& spec, uint64_t step_index = 0,
                                  bool keep_probs = false);

// vanilla + lambda * context, token-wise, no renormalization.
AttentionOutput hierarchical_attention(const UnifiedSequence& u, const AttentionParams& p,
                                       const PoolSpec& spec, double lambda,
                                       uint64_t step_index = 0, bool keep_probs = false);

}  // namespace hadit
