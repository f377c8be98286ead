#include "hadit/mat.hpp"

#include <algorithm>

namespace hadit {

void mm_nn_acc(const Mat& a, const Mat& b, Mat& c) {
    assert(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
}

void mm_nt_acc(const Mat& a, const Mat& b, Mat& c) {
    assert(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            crow[j] += s;
        }
    }
}

void mm_tn_acc(const Mat& a, const Mat& b, Mat& c) {
    assert(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols);
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = a.row(k);
        const double* brow = b.row(k);
        for (int i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            double* crow = c.row(i);
            for (int j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
}

Mat mm_nn(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.cols);
    mm_nn_acc(a, b, c);
    return c;
}

Mat mm_nt(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.rows);
    mm_nt_acc(a, b, c);
    return c;
}

Mat mm_tn(const Mat& a, const Mat& b) {
    Mat c(a.cols, b.cols);
    mm_tn_acc(a, b, c);
    return c;
}

std::vector<double> singular_values(const Mat& a) {
    // One-sided Jacobi (Hestenes): rotate column pairs of a working copy
    // until all pairs are orthogonal; singular values are the column norms.
    // Working on A directly (not A^T A) keeps tiny singular values at full
    // precision relative to the largest one.
    const int rows = a.rows, n = a.cols;
    Mat u = a;
    auto col_dot = [&](int p, int q) {
        double s = 0.0;
        for (int r = 0; r < rows; ++r) s += u.at(r, p) * u.at(r, q);
        return s;
    };
    for (int sweep = 0; sweep < 64; ++sweep) {
        int rotations = 0;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double app = col_dot(p, p);
                const double aqq = col_dot(q, q);
                const double apq = col_dot(p, q);
                if (std::abs(apq) <= 1e-15 * std::sqrt(app * aqq) || apq == 0.0) continue;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (int r = 0; r < rows; ++r) {
                    const double up = u.at(r, p), uq = u.at(r, q);
                    u.at(r, p) = cs * up - sn * uq;
                    u.at(r, q) = sn * up + cs * uq;
                }
                ++rotations;
            }
        }
        if (rotations == 0) break;
    }
    std::vector<double> sv(n);
    for (int i = 0; i < n; ++i) sv[i] = std::sqrt(col_dot(i, i));
    std::sort(sv.begin(), sv.end(), std::greater<double>());
    return sv;
}

}  // namespace hadit
