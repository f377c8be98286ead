#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hadit {

// Dense row-major matrix of doubles. Everything in this project is small
// enough (sequences of a few hundred tokens, d_model <= 128) that a plain
// ikj matmul under -O3 is all the linear algebra we need.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}
    Mat(int r, int c, double fill) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return v.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

// C = A * B
Mat mm_nn(const Mat& a, const Mat& b);
// C = A * B^T
Mat mm_nt(const Mat& a, const Mat& b);
// C = A^T * B
Mat mm_tn(const Mat& a, const Mat& b);

// C += A * B (and transposed variants), used by backward passes.
void mm_nn_acc(const Mat& a, const Mat& b, Mat& c);
void mm_nt_acc(const Mat& a, const Mat& b, Mat& c);
void mm_tn_acc(const Mat& a, const Mat& b, Mat& c);

inline Mat transpose(const Mat& a) {
    Mat t(a.cols, a.rows);
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) t.at(c, r) = a.at(r, c);
    return t;
}

// Singular values of a (small) matrix, descending, via Jacobi eigenvalue
// iteration on A^T A. Used for the low-rank adapter rank check.
std::vector<double> singular_values(const Mat& a);

}  // namespace hadit
