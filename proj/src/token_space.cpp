#include "hadit/token_space.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace hadit {

const char* branch_name(Branch b) {
    switch (b) {
        case Branch::Noisy: return "X";
        case Branch::Text: return "C_T";
        case Branch::LineArt: return "C_L";
        case Branch::Reference: return "C_R";
    }
    return "?";
}

Mat UnifiedSequence::stacked() const {
    Mat out(total_length, d_model);
    int r = 0;
    for (const auto& seg : segments) {
        if (seg.length() == 0) continue;
        std::memcpy(out.row(r), seg.tokens.v.data(), seg.tokens.v.size() * sizeof(double));
        r += seg.length();
    }
    return out;
}

TokenSequence flatten_grid(const FeatureGrid& g) {
    TokenSequence s;
    s.branch = g.branch;
    s.grid = GridShape{g.rows, g.cols};
    s.tokens = Mat(g.rows * g.cols, g.dim);
    std::memcpy(s.tokens.v.data(), g.data.data(), g.data.size() * sizeof(double));
    return s;
}

FeatureGrid reshape_to_grid(const TokenSequence& seq) {
    if (!seq.grid)
        throw std::invalid_argument(std::string("reshape_to_grid: branch ") +
                                    branch_name(seq.branch) + " carries no grid shape");
    const GridShape gs = *seq.grid;
    if (seq.length() != gs.rows * gs.cols)
        throw std::invalid_argument("reshape_to_grid: token count does not match grid");
    FeatureGrid g(gs.rows, gs.cols, seq.dim(), seq.branch);
    std::memcpy(g.data.data(), seq.tokens.v.data(), g.data.size() * sizeof(double));
    return g;
}

UnifiedSequence assemble(const FeatureGrid& noisy, const FeatureGrid& line,
                         const FeatureGrid& ref) {
    if (noisy.dim != line.dim || noisy.dim != ref.dim)
        throw std::invalid_argument("assemble: d_model mismatch across branches");
    if (noisy.rows != line.rows || noisy.cols != line.cols)
        throw std::invalid_argument("assemble: grid mismatch between noisy and line branches");

    UnifiedSequence u;
    u.d_model = noisy.dim;

    auto make = [](const FeatureGrid& g, Branch b, std::pair<int, int> off) {
        TokenSequence s = flatten_grid(g);
        s.branch = b;
        s.position_offset = off;
        return s;
    };

    u.segments[0] = make(noisy, Branch::Noisy, {0, 0});
    u.segments[1] = TokenSequence{Mat(0, noisy.dim), Branch::Text, std::nullopt, {0, 0}};
    u.segments[2] = make(line, Branch::LineArt, {0, noisy.cols});
    u.segments[3] = make(ref, Branch::Reference, {noisy.rows, 0});

    int pos = 0;
    for (int i = 0; i < kNumBranches; ++i) {
        u.bounds[i] = Segment{pos, u.segments[i].length()};
        pos += u.segments[i].length();
    }
    u.total_length = pos;
    return u;
}

TokenSequence slice_branch(const UnifiedSequence& u, Branch b) {
    return u.segments[static_cast<int>(b)];
}

std::vector<std::pair<int, int>> token_positions(const UnifiedSequence& u) {
    std::vector<std::pair<int, int>> pos;
    pos.reserve(u.total_length);
    for (const auto& seg : u.segments) {
        if (seg.length() == 0) continue;
        const GridShape gs = seg.grid.value_or(GridShape{1, seg.length()});
        for (int r = 0; r < gs.rows; ++r)
            for (int c = 0; c < gs.cols; ++c)
                pos.emplace_back(r + seg.position_offset.first, c + seg.position_offset.second);
    }
    return pos;
}

Mat sinusoidal_pe(const std::vector<std::pair<int, int>>& positions, int d_model) {
    Mat pe(static_cast<int>(positions.size()), d_model);
    const int dy = d_model / 2;    // dims spent on the row coordinate
    const int dx = d_model - dy;   // dims spent on the column coordinate
    auto fill_axis = [&](int tok, int base, int width, double p) {
        for (int i = 0; i < width; ++i) {
            const double freq = std::pow(10000.0, -2.0 * (i / 2) / static_cast<double>(width));
            const double a = p * freq;
            pe.at(tok, base + i) = (i % 2 == 0) ? std::sin(a) : std::cos(a);
        }
    };
    for (size_t t = 0; t < positions.size(); ++t) {
        fill_axis(static_cast<int>(t), 0, dy, static_cast<double>(positions[t].first));
        fill_axis(static_cast<int>(t), dy, dx, static_cast<double>(positions[t].second));
    }
    return pe;
}

}  // namespace hadit
