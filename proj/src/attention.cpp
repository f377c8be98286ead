#include "hadit/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "hadit/rng.hpp"

namespace hadit {

void AttentionParams::validate() const {
    const int d = wq.rows;
    if (d <= 0 || heads <= 0) throw std::invalid_argument("attention: empty params");
    if (d % heads != 0) throw std::invalid_argument("attention: d_model not divisible by heads");
    for (const Mat* m : {&wq, &wk, &wv, &wo, &wqc, &wkc}) {
        if (m->rows == 0 && m->cols == 0) continue;  // context mats may be absent
        if (m->rows != d || m->cols != d)
            throw std::invalid_argument("attention: projection matrices must be d_model square");
        if (!m->all_finite()) throw std::invalid_argument("attention: non-finite weights");
    }
}

int resolve_kernel(const PoolSpec& spec, uint64_t step_index, int max_side) {
    if (spec.policy == PoolPolicy::Fixed) {
        if (spec.kernel > max_side)
            throw std::invalid_argument("pool: kernel " + std::to_string(spec.kernel) +
                                        " larger than grid side " + std::to_string(max_side));
        return spec.kernel;
    }
    std::vector<int> candidates;
    for (int k : {2, 4, 8})
        if (k <= max_side) candidates.push_back(k);
    if (candidates.empty())
        throw std::invalid_argument("pool: no kernel from {2,4,8} fits grid side " +
                                    std::to_string(max_side));
    Rng rng(derive_seed(spec.seed, /*tag=*/0x706f6f6cull /* "pool" */, step_index));
    return candidates[rng.below(candidates.size())];
}

SeqLayout layout_of(const UnifiedSequence& u) {
    SeqLayout l;
    l.bounds = u.bounds;
    for (int i = 0; i < kNumBranches; ++i) l.grids[i] = u.segments[i].grid;
    l.total_length = u.total_length;
    l.d_model = u.d_model;
    return l;
}

namespace {

// Per-branch pooled view of the sequence; non-grid branches pass through.
Graph::Id pooled_sequence(Graph& g, Graph::Id x, const SeqLayout& layout, int kernel) {
    std::vector<Graph::Id> parts;
    for (int i = 0; i < kNumBranches; ++i) {
        const Segment seg = layout.bounds[i];
        if (seg.length == 0) continue;
        Graph::Id part = g.slice_rows(x, seg.start, seg.start + seg.length);
        if (layout.grids[i]) {
            const GridShape gs = *layout.grids[i];
            part = g.pool_max_upsample(part, gs.rows, gs.cols, kernel);
        }
        parts.push_back(part);
    }
    return g.concat_rows(parts);
}

// softmax(Q K^T / sqrt(d_k)) V per head, heads concatenated, then W_O.
Graph::Id attention_path(Graph& g, Graph::Id qk_src, Graph::Id v, Graph::Id wq, Graph::Id wk,
                         Graph::Id wo, int heads, std::vector<Graph::Id>* probs_out) {
    const int d = g.val(wq).rows;
    const int dk = d / heads;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    Graph::Id q = g.matmul(qk_src, wq);
    Graph::Id k = g.matmul(qk_src, wk);
    std::vector<Graph::Id> head_outs;
    head_outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        const int c0 = h * dk, c1 = (h + 1) * dk;
        Graph::Id qh = g.slice_cols(q, c0, c1);
        Graph::Id kh = g.slice_cols(k, c0, c1);
        Graph::Id vh = g.slice_cols(v, c0, c1);
        Graph::Id scores = g.scale(g.matmul_nt(qh, kh), inv_sqrt_dk);
        Graph::Id probs = g.softmax_rows(scores);
        if (probs_out) probs_out->push_back(probs);
        head_outs.push_back(g.matmul(probs, vh));
    }
    return g.matmul(g.concat_cols(head_outs), wo);
}

void validate_sequence(const UnifiedSequence& u, const AttentionParams& p) {
    p.validate();
    if (u.total_length == 0) throw std::invalid_argument("attention: empty sequence");
    if (u.d_model != p.d_model())
        throw std::invalid_argument("attention: sequence/params d_model mismatch");
    for (const auto& seg : u.segments)
        if (!seg.tokens.all_finite())
            throw std::invalid_argument("attention: non-finite token values");
}

int max_grid_side(const UnifiedSequence& u) {
    int side = 1;
    for (const auto& seg : u.segments)
        if (seg.grid) side = std::max({side, seg.grid->rows, seg.grid->cols});
    return side;
}

enum class Path { Vanilla, Context, Hierarchical };

AttentionOutput run_attention(const UnifiedSequence& u, const AttentionParams& p, Path path,
                              int kernel, double lambda, bool keep_probs) {
    validate_sequence(u, p);
    Graph g;
    Graph::Id x = g.constant(u.stacked());
    const SeqLayout layout = layout_of(u);
    Graph::Id wv = g.constant(p.wv);
    Graph::Id wo = g.constant(p.wo);
    Graph::Id v = g.matmul(x, wv);

    AttentionOutput res;
    std::vector<Graph::Id> vanilla_probs, context_probs;
    Graph::Id out = -1;
    if (path == Path::Vanilla || path == Path::Hierarchical) {
        out = attention_path(g, x, v, g.constant(p.wq), g.constant(p.wk), wo, p.heads,
                             keep_probs ? &vanilla_probs : nullptr);
    }
    if (path == Path::Context || path == Path::Hierarchical) {
        if (p.wqc.rows == 0 || p.wkc.rows == 0)
            throw std::invalid_argument("attention: context path weights missing");
        Graph::Id pooled = pooled_sequence(g, x, layout, kernel);
        Graph::Id ctx = attention_path(g, pooled, v, g.constant(p.wqc), g.constant(p.wkc), wo,
                                       p.heads, keep_probs ? &context_probs : nullptr);
        out = (path == Path::Context) ? ctx : g.add(out, g.scale(ctx, lambda));
    }
    res.tokens = g.val(out);
    if (keep_probs) {
        for (Graph::Id id : vanilla_probs) res.head_probs.push_back(g.val(id));
        for (Graph::Id id : context_probs) res.context_head_probs.push_back(g.val(id));
    }
    return res;
}

}  // namespace

Graph::Id multihead_attention(Graph& g, Graph::Id x, const SeqLayout& layout, int heads,
                              const AttnWeightNodes& w, bool use_context, int kernel,
                              double lambda, AttnTraceNodes* trace) {
    if (lambda < 0.0) throw std::invalid_argument("attention: negative lambda");
    Graph::Id v = g.matmul(x, w.wv);
    Graph::Id vanilla = attention_path(g, x, v, w.wq, w.wk, w.wo, heads,
                                       trace ? &trace->vanilla_probs : nullptr);
    if (!use_context) return vanilla;
    Graph::Id pooled = pooled_sequence(g, x, layout, kernel);
    Graph::Id context = attention_path(g, pooled, v, w.wqc, w.wkc, w.wo, heads,
                                       trace ? &trace->context_probs : nullptr);
    return g.add(vanilla, g.scale(context, lambda));
}

AttentionOutput vanilla_attention(const UnifiedSequence& u, const AttentionParams& p,
                                  bool keep_probs) {
    return run_attention(u, p, Path::Vanilla, 1, 0.0, keep_probs);
}

FeatureGrid pool_and_upsample(const FeatureGrid& grid, int kernel) {
    for (double v : grid.data)
        if (!std::isfinite(v)) throw std::invalid_argument("pool: non-finite input");
    Graph g;
    Mat tokens(grid.rows * grid.cols, grid.dim);
    std::copy(grid.data.begin(), grid.data.end(), tokens.v.begin());
    Graph::Id out =
        g.pool_max_upsample(g.constant(std::move(tokens)), grid.rows, grid.cols, kernel);
    FeatureGrid res(grid.rows, grid.cols, grid.dim, grid.branch);
    const Mat& v = g.val(out);
    std::copy(v.v.begin(), v.v.end(), res.data.begin());
    return res;
}

FeatureGrid pool_and_upsample(const FeatureGrid& g, const PoolSpec& spec, uint64_t step_index) {
    return pool_and_upsample(g, resolve_kernel(spec, step_index, std::max(g.rows, g.cols)));
}

AttentionOutput context_attention(const UnifiedSequence& u, const AttentionParams& p,
                                  const PoolSpec& spec, uint64_t step_index, bool keep_probs) {
    const int kernel = resolve_kernel(spec, step_index, max_grid_side(u));
    return run_attention(u, p, Path::Context, kernel, 0.0, keep_probs);
}

AttentionOutput hierarchical_attention(const UnifiedSequence& u, const AttentionParams& p,
                                       const PoolSpec& spec, double lambda,
                                       uint64_t step_index, bool keep_probs) {
    if (lambda < 0.0) throw std::invalid_argument("hierarchical attention: negative lambda");
    const int kernel = resolve_kernel(spec, step_index, max_grid_side(u));
    return run_attention(u, p, Path::Hierarchical, kernel, lambda, keep_probs);
}

}  // namespace hadit
