#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hadit/mat.hpp"

namespace hadit {

// Branches of the unified conditioning sequence, in their fixed order.
// Text carries zero tokens in this project (no prompts are used) but keeps
// its slot so segment boundaries stay uniform.
enum class Branch : int { Noisy = 0, Text = 1, LineArt = 2, Reference = 3 };

constexpr int kNumBranches = 4;
const char* branch_name(Branch b);

struct GridShape {
    int rows = 0;
    int cols = 0;
    bool operator==(const GridShape&) const = default;
};

// Ordered embedding vectors for one branch. tokens is L x d_model, row-major
// over the (rows, cols) grid for image branches.
struct TokenSequence {
    Mat tokens;
    Branch branch = Branch::Noisy;
    std::optional<GridShape> grid;
    // Integer 2-D offset added to this branch's (row, col) positional indices.
    std::pair<int, int> position_offset{0, 0};

    int length() const { return tokens.rows; }
    int dim() const { return tokens.cols; }
};

// rows x cols x dim spatial feature map; the reshaped view of an image-branch
// token sequence. data is row-major (row, col, channel).
struct FeatureGrid {
    int rows = 0;
    int cols = 0;
    int dim = 0;
    std::vector<double> data;
    Branch branch = Branch::Noisy;

    FeatureGrid() = default;
    FeatureGrid(int r, int c, int d, Branch b = Branch::Noisy)
        : rows(r), cols(c), dim(d), data(static_cast<size_t>(r) * c * d, 0.0), branch(b) {}

    double& at(int r, int c, int ch) {
        return data[(static_cast<size_t>(r) * cols + c) * dim + ch];
    }
    double at(int r, int c, int ch) const {
        return data[(static_cast<size_t>(r) * cols + c) * dim + ch];
    }
    bool same_shape(const FeatureGrid& o) const {
        return rows == o.rows && cols == o.cols && dim == o.dim;
    }
};

struct Segment {
    int start = 0;
    int length = 0;
};

// The concatenated sequence [X, C_T, C_L, C_R] with recorded boundaries.
struct UnifiedSequence {
    std::array<TokenSequence, kNumBranches> segments;
    std::array<Segment, kNumBranches> bounds;
    int total_length = 0;
    int d_model = 0;

    const TokenSequence& segment(Branch b) const { return segments[static_cast<int>(b)]; }
    Segment bound(Branch b) const { return bounds[static_cast<int>(b)]; }

    // All tokens stacked into one (total_length x d_model) matrix.
    Mat stacked() const;
};

// Flatten a grid to a token sequence (row-major) and back. The two are exact
// inverses on token order.
TokenSequence flatten_grid(const FeatureGrid& g);
FeatureGrid reshape_to_grid(const TokenSequence& seq);

// Concatenate [X, C_T(empty), C_L, C_R]. Noisy and line grids must share
// (rows, cols); all grids must share d_model. Branch position offsets:
// X at (0,0), C_L at (0, cols), C_R at (rows, 0).
UnifiedSequence assemble(const FeatureGrid& noisy, const FeatureGrid& line,
                         const FeatureGrid& ref);

TokenSequence slice_branch(const UnifiedSequence& u, Branch b);

// Per-token integer 2-D positions (offset applied), one row per token of the
// full sequence.
std::vector<std::pair<int, int>> token_positions(const UnifiedSequence& u);

// 2-D sinusoidal positional encoding for the given positions; one row per
// token, d_model columns (first half encodes y, second half x).
Mat sinusoidal_pe(const std::vector<std::pair<int, int>>& positions, int d_model);

}  // namespace hadit
