#pragma once

#include <vector>

#include "hadit/attention.hpp"
#include "hadit/rng.hpp"
#include "hadit/token_space.hpp"
#include "oracles.hpp"

namespace testutil {

inline hadit::Mat random_mat(int r, int c, hadit::Rng& rng, double scale = 1.0) {
    hadit::Mat m(r, c);
    for (double& v : m.v) v = rng.gaussian() * scale;
    return m;
}

inline hadit::FeatureGrid random_grid(int rows, int cols, int d, hadit::Rng& rng,
                                      hadit::Branch branch, double scale = 1.0) {
    hadit::FeatureGrid g(rows, cols, d, branch);
    for (double& v : g.data) v = rng.gaussian() * scale;
    return g;
}

inline hadit::AttentionParams random_params(int d, int heads, hadit::Rng& rng) {
    hadit::AttentionParams p;
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    p.wq = random_mat(d, d, rng, s);
    p.wk = random_mat(d, d, rng, s);
    p.wv = random_mat(d, d, rng, s);
    p.wo = random_mat(d, d, rng, s);
    p.wqc = random_mat(d, d, rng, s);
    p.wkc = random_mat(d, d, rng, s);
    p.heads = heads;
    return p;
}

inline oracle::Table to_table(const hadit::Mat& m) {
    oracle::Table t(m.rows, oracle::Vec(m.cols));
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) t[r][c] = m.at(r, c);
    return t;
}

inline oracle::Table grid_table(const hadit::FeatureGrid& g) {
    oracle::Table t(g.rows * g.cols, oracle::Vec(g.dim));
    for (int i = 0; i < g.rows * g.cols; ++i)
        for (int ch = 0; ch < g.dim; ++ch) t[i][ch] = g.data[static_cast<size_t>(i) * g.dim + ch];
    return t;
}

// oracle view of a unified sequence built by assemble()
inline std::vector<oracle::BranchTokens> to_branches(const hadit::UnifiedSequence& u) {
    std::vector<oracle::BranchTokens> branches;
    for (const auto& seg : u.segments) {
        if (seg.length() == 0) continue;
        oracle::BranchTokens b;
        b.tokens = to_table(seg.tokens);
        if (seg.grid) {
            b.rows = seg.grid->rows;
            b.cols = seg.grid->cols;
        }
        branches.push_back(std::move(b));
    }
    return branches;
}

inline oracle::AttnWeights to_oracle_weights(const hadit::AttentionParams& p) {
    oracle::AttnWeights w;
    w.wq = to_table(p.wq);
    w.wk = to_table(p.wk);
    w.wv = to_table(p.wv);
    w.wo = to_table(p.wo);
    w.wqc = to_table(p.wqc);
    w.wkc = to_table(p.wkc);
    w.heads = p.heads;
    return w;
}

inline double max_abs_diff(const hadit::Mat& m, const oracle::Table& t) {
    double worst = 0.0;
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c)
            worst = std::max(worst, std::abs(m.at(r, c) - t[r][c]));
    return worst;
}

inline double max_abs_diff(const hadit::Mat& a, const hadit::Mat& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.v[i] - b.v[i]));
    return worst;
}

}  // namespace testutil
