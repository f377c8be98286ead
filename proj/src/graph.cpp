#include "hadit/graph.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace hadit {

namespace {
constexpr double kLnEps = 1e-6;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Graph::Id Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
}

bool Graph::any_needs_grad(const std::vector<Id>& in) const {
    for (Id i : in)
        if (nodes_[i].needs_grad) return true;
    return false;
}

const Mat& Graph::val(Id id) const { return value_of(nodes_[id]); }

void Graph::clear() { nodes_.clear(); }

Graph::Id Graph::constant(Mat m) {
    Node n;
    n.op = Op::Const;
    n.val = std::move(m);
    return push(std::move(n));
}

Graph::Id Graph::param(const Mat* value, Mat* grad) {
    Node n;
    n.op = Op::Param;
    n.ext_val = value;
    n.ext_grad = grad;
    n.needs_grad = true;
    return push(std::move(n));
}

Graph::Id Graph::matmul(Id a, Id b) {
    Node n;
    n.op = Op::MatMul;
    n.in = {a, b};
    n.needs_grad = any_needs_grad(n.in);
    n.val = mm_nn(val(a), val(b));
    return push(std::move(n));
}

Graph::Id Graph::matmul_nt(Id a, Id b) {
    Node n;
    n.op = Op::MatMulNT;
    n.in = {a, b};
    n.needs_grad = any_needs_grad(n.in);
    n.val = mm_nt(val(a), val(b));
    return push(std::move(n));
}

Graph::Id Graph::add(Id a, Id b) {
    const Mat& va = val(a);
    const Mat& vb = val(b);
    if (!va.same_shape(vb)) throw std::invalid_argument("graph add: shape mismatch");
    Node n;
    n.op = Op::Add;
    n.in = {a, b};
    n.needs_grad = any_needs_grad(n.in);
    n.val = va;
    for (size_t i = 0; i < n.val.size(); ++i) n.val.v[i] += vb.v[i];
    return push(std::move(n));
}

Graph::Id Graph::scale(Id a, double s) {
    Node n;
    n.op = Op::Scale;
    n.in = {a};
    n.scalar = s;
    n.needs_grad = any_needs_grad(n.in);
    n.val = val(a);
    for (double& x : n.val.v) x *= s;
    return push(std::move(n));
}

Graph::Id Graph::add_row(Id x, Id row) {
    const Mat& vx = val(x);
    const Mat& vr = val(row);
    if (vr.rows != 1 || vr.cols != vx.cols)
        throw std::invalid_argument("graph add_row: row must be 1 x cols(x)");
    Node n;
    n.op = Op::AddRow;
    n.in = {x, row};
    n.needs_grad = any_needs_grad(n.in);
    n.val = vx;
    for (int r = 0; r < vx.rows; ++r) {
        double* out = n.val.row(r);
        for (int c = 0; c < vx.cols; ++c) out[c] += vr.v[c];
    }
    return push(std::move(n));
}

Graph::Id Graph::mul_row(Id x, Id row) {
    const Mat& vx = val(x);
    const Mat& vr = val(row);
    if (vr.rows != 1 || vr.cols != vx.cols)
        throw std::invalid_argument("graph mul_row: row must be 1 x cols(x)");
    Node n;
    n.op = Op::MulRow;
    n.in = {x, row};
    n.needs_grad = any_needs_grad(n.in);
    n.val = vx;
    for (int r = 0; r < vx.rows; ++r) {
        double* out = n.val.row(r);
        for (int c = 0; c < vx.cols; ++c) out[c] *= vr.v[c];
    }
    return push(std::move(n));
}

Graph::Id Graph::scale_shift_rows(Id x, Id s, Id b) {
    const Mat& vx = val(x);
    const Mat& vs = val(s);
    const Mat& vb = val(b);
    if (vs.rows != 1 || vb.rows != 1 || vs.cols != vx.cols || vb.cols != vx.cols)
        throw std::invalid_argument("graph scale_shift_rows: operands must be 1 x cols(x)");
    Node n;
    n.op = Op::ScaleShiftRows;
    n.in = {x, s, b};
    n.needs_grad = any_needs_grad(n.in);
    n.val = Mat(vx.rows, vx.cols);
    for (int r = 0; r < vx.rows; ++r) {
        const double* in = vx.row(r);
        double* out = n.val.row(r);
        for (int c = 0; c < vx.cols; ++c) out[c] = in[c] * (1.0 + vs.v[c]) + vb.v[c];
    }
    return push(std::move(n));
}

Graph::Id Graph::layer_norm(Id x, Id gain, Id bias) {
    const Mat& vx = val(x);
    const Mat& vg = val(gain);
    const Mat& vb = val(bias);
    if (vg.rows != 1 || vb.rows != 1 || vg.cols != vx.cols || vb.cols != vx.cols)
        throw std::invalid_argument("graph layer_norm: gain/bias must be 1 x cols(x)");
    Node n;
    n.op = Op::LayerNorm;
    n.in = {x, gain, bias};
    n.needs_grad = any_needs_grad(n.in);
    n.val = Mat(vx.rows, vx.cols);
    n.cached = Mat(vx.rows, vx.cols);  // normalized rows
    n.cached2.resize(vx.rows);
    const int d = vx.cols;
    for (int r = 0; r < vx.rows; ++r) {
        const double* in = vx.row(r);
        double mean = 0.0;
        for (int c = 0; c < d; ++c) mean += in[c];
        mean /= d;
        double var = 0.0;
        for (int c = 0; c < d; ++c) {
            const double dv = in[c] - mean;
            var += dv * dv;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        n.cached2[r] = inv;
        double* nh = n.cached.row(r);
        double* out = n.val.row(r);
        for (int c = 0; c < d; ++c) {
            nh[c] = (in[c] - mean) * inv;
            out[c] = nh[c] * vg.v[c] + vb.v[c];
        }
    }
    return push(std::move(n));
}

Graph::Id Graph::silu(Id x) {
    const Mat& vx = val(x);
    Node n;
    n.op = Op::Silu;
    n.in = {x};
    n.needs_grad = any_needs_grad(n.in);
    n.cached = vx;
    n.val = Mat(vx.rows, vx.cols);
    for (size_t i = 0; i < vx.size(); ++i) n.val.v[i] = vx.v[i] * sigmoid(vx.v[i]);
    return push(std::move(n));
}

Graph::Id Graph::softmax_rows(Id x) {
    const Mat& vx = val(x);
    Node n;
    n.op = Op::SoftmaxRows;
    n.in = {x};
    n.needs_grad = any_needs_grad(n.in);
    n.val = Mat(vx.rows, vx.cols);
    for (int r = 0; r < vx.rows; ++r) {
        const double* in = vx.row(r);
        double* out = n.val.row(r);
        double mx = in[0];
        for (int c = 1; c < vx.cols; ++c) mx = std::max(mx, in[c]);
        double sum = 0.0;
        for (int c = 0; c < vx.cols; ++c) {
            out[c] = std::exp(in[c] - mx);
            sum += out[c];
        }
        const double inv = 1.0 / sum;
        for (int c = 0; c < vx.cols; ++c) out[c] *= inv;
    }
    return push(std::move(n));
}

Graph::Id Graph::slice_rows(Id x, int r0, int r1) {
    const Mat& vx = val(x);
    if (r0 < 0 || r1 > vx.rows || r0 > r1)
        throw std::invalid_argument("graph slice_rows: bad range");
    Node n;
    n.op = Op::SliceRows;
    n.in = {x};
    n.i0 = r0;
    n.i1 = r1;
    n.needs_grad = any_needs_grad(n.in);
    n.val = Mat(r1 - r0, vx.cols);
    std::memcpy(n.val.v.data(), vx.row(r0), n.val.size() * sizeof(double));
    return push(std::move(n));
}

Graph::Id Graph::slice_cols(Id x, int c0, int c1) {
    const Mat& vx = val(x);
    if (c0 < 0 || c1 > vx.cols || c0 > c1)
        throw std::invalid_argument("graph slice_cols: bad range");
    Node n;
    n.op = Op::SliceCols;
    n.in = {x};
    n.i0 = c0;
    n.i1 = c1;
    n.needs_grad = any_needs_grad(n.in);
    n.val = Mat(vx.rows, c1 - c0);
    for (int r = 0; r < vx.rows; ++r)
        std::memcpy(n.val.row(r), vx.row(r) + c0, (c1 - c0) * sizeof(double));
    return push(std::move(n));
}

Graph::Id Graph::concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("graph concat_rows: empty");
    int rows = 0;
    const int cols = val(parts[0]).cols;
    for (Id p : parts) {
        if (val(p).cols != cols) throw std::invalid_argument("graph concat_rows: col mismatch");
        rows += val(p).rows;
    }
    Node n;
    n.op = Op::ConcatRows;
    n.in = parts;
    n.needs_grad = any_needs_grad(n.in);
    n.val = Mat(rows, cols);
    int r = 0;
    for (Id p : parts) {
        const Mat& vp = val(p);
        if (vp.rows == 0) continue;
        std::memcpy(n.val.row(r), vp.v.data(), vp.size() * sizeof(double));
        r += vp.rows;
    }
    return push(std::move(n));
}

Graph::Id Graph::concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("graph concat_cols: empty");
    const int rows = val(parts[0]).rows;
    int cols = 0;
    for (Id p : parts) {
        if (val(p).rows != rows) throw std::invalid_argument("graph concat_cols: row mismatch");
        cols += val(p).cols;
    }
    Node n;
    n.op = Op::ConcatCols;
    n.in = parts;
    n.needs_grad = any_needs_grad(n.in);
    n.val = Mat(rows, cols);
    int c = 0;
    for (Id p : parts) {
        const Mat& vp = val(p);
        for (int r = 0; r < rows; ++r)
            std::memcpy(n.val.row(r) + c, vp.row(r), vp.cols * sizeof(double));
        c += vp.cols;
    }
    return push(std::move(n));
}

Graph::Id Graph::pool_max_upsample(Id x, int rows, int cols, int kernel) {
    const Mat& vx = val(x);
    if (vx.rows != rows * cols)
        throw std::invalid_argument("graph pool_max_upsample: token count != rows*cols");
    if (kernel < 1) throw std::invalid_argument("pool: kernel must be >= 1");
    if (kernel > std::max(rows, cols))
        throw std::invalid_argument("pool: kernel " + std::to_string(kernel) +
                                    " larger than grid side");
    const int d = vx.cols;
    Node n;
    n.op = Op::PoolMaxUp;
    n.in = {x};
    n.i0 = rows;
    n.i1 = cols;
    n.kernel = kernel;
    n.needs_grad = any_needs_grad(n.in);
    n.val = Mat(vx.rows, d);
    n.aux.assign(static_cast<size_t>(vx.rows) * d, 0);
    const int br = (rows + kernel - 1) / kernel;
    const int bc = (cols + kernel - 1) / kernel;
    // Per block: channel-wise max over the in-bounds part (replicate padding
    // only duplicates edge values, so the clipped max is identical). The max
    // is then written to every cell of the block = nearest upsample.
    for (int byi = 0; byi < br; ++byi) {
        const int r0 = byi * kernel;
        const int r1 = std::min(rows, r0 + kernel);
        for (int bxi = 0; bxi < bc; ++bxi) {
            const int c0 = bxi * kernel;
            const int c1 = std::min(cols, c0 + kernel);
            for (int ch = 0; ch < d; ++ch) {
                double best = -1e300;
                int best_tok = -1;
                for (int r = r0; r < r1; ++r) {
                    for (int c = c0; c < c1; ++c) {
                        const int tok = r * cols + c;
                        const double x0 = vx.at(tok, ch);
                        if (x0 > best) {
                            best = x0;
                            best_tok = tok;
                        }
                    }
                }
                for (int r = r0; r < r1; ++r)
                    for (int c = c0; c < c1; ++c) {
                        const int tok = r * cols + c;
                        n.val.at(tok, ch) = best;
                        n.aux[static_cast<size_t>(tok) * d + ch] = best_tok;
                    }
            }
        }
    }
    return push(std::move(n));
}

Graph::Id Graph::mse(Id pred, Id target) {
    const Mat& vp = val(pred);
    const Mat& vt = val(target);
    if (!vp.same_shape(vt)) throw std::invalid_argument("graph mse: shape mismatch");
    Node n;
    n.op = Op::Mse;
    n.in = {pred, target};
    n.needs_grad = any_needs_grad(n.in);
    n.val = Mat(1, 1);
    double s = 0.0;
    for (size_t i = 0; i < vp.size(); ++i) {
        const double d = vp.v[i] - vt.v[i];
        s += d * d;
    }
    n.val.v[0] = s / static_cast<double>(vp.size());
    return push(std::move(n));
}

void Graph::backward(Id loss) {
    Node& top = nodes_[loss];
    if (value_of(top).size() != 1) throw std::invalid_argument("backward: loss must be 1x1");

    for (Node& n : nodes_) {
        if (n.needs_grad && n.op != Op::Param) {
            n.grad = Mat(value_of(n).rows, value_of(n).cols);
        }
    }
    if (top.op == Op::Param) throw std::invalid_argument("backward: loss is a parameter");
    top.grad.v[0] = 1.0;

    auto grad_into = [&](Id id) -> Mat* {
        Node& n = nodes_[id];
        if (!n.needs_grad) return nullptr;
        return n.op == Op::Param ? n.ext_grad : &n.grad;
    };

    for (Id id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.needs_grad || n.op == Op::Param || n.op == Op::Const) continue;
        const Mat& g = n.grad;
        switch (n.op) {
            case Op::MatMul: {
                if (Mat* da = grad_into(n.in[0])) mm_nt_acc(g, val(n.in[1]), *da);
                if (Mat* db = grad_into(n.in[1])) mm_tn_acc(val(n.in[0]), g, *db);
                break;
            }
            case Op::MatMulNT: {
                if (Mat* da = grad_into(n.in[0])) mm_nn_acc(g, val(n.in[1]), *da);
                if (Mat* db = grad_into(n.in[1])) mm_tn_acc(g, val(n.in[0]), *db);
                break;
            }
            case Op::Add: {
                for (int k = 0; k < 2; ++k)
                    if (Mat* d = grad_into(n.in[k]))
                        for (size_t i = 0; i < g.size(); ++i) d->v[i] += g.v[i];
                break;
            }
            case Op::Scale: {
                if (Mat* d = grad_into(n.in[0]))
                    for (size_t i = 0; i < g.size(); ++i) d->v[i] += n.scalar * g.v[i];
                break;
            }
            case Op::AddRow: {
                if (Mat* dx = grad_into(n.in[0]))
                    for (size_t i = 0; i < g.size(); ++i) dx->v[i] += g.v[i];
                if (Mat* dr = grad_into(n.in[1]))
                    for (int r = 0; r < g.rows; ++r) {
                        const double* gr = g.row(r);
                        for (int c = 0; c < g.cols; ++c) dr->v[c] += gr[c];
                    }
                break;
            }
            case Op::MulRow: {
                const Mat& x = val(n.in[0]);
                const Mat& row = val(n.in[1]);
                Mat* dx = grad_into(n.in[0]);
                Mat* dr = grad_into(n.in[1]);
                for (int r = 0; r < g.rows; ++r) {
                    const double* gr = g.row(r);
                    const double* xr = x.row(r);
                    for (int c = 0; c < g.cols; ++c) {
                        if (dx) dx->at(r, c) += gr[c] * row.v[c];
                        if (dr) dr->v[c] += gr[c] * xr[c];
                    }
                }
                break;
            }
            case Op::ScaleShiftRows: {
                const Mat& x = val(n.in[0]);
                const Mat& s = val(n.in[1]);
                Mat* dx = grad_into(n.in[0]);
                Mat* ds = grad_into(n.in[1]);
                Mat* db = grad_into(n.in[2]);
                for (int r = 0; r < g.rows; ++r) {
                    const double* gr = g.row(r);
                    const double* xr = x.row(r);
                    for (int c = 0; c < g.cols; ++c) {
                        if (dx) dx->at(r, c) += gr[c] * (1.0 + s.v[c]);
                        if (ds) ds->v[c] += gr[c] * xr[c];
                        if (db) db->v[c] += gr[c];
                    }
                }
                break;
            }
            case Op::LayerNorm: {
                const Mat& gain = val(n.in[1]);
                Mat* dx = grad_into(n.in[0]);
                Mat* dg = grad_into(n.in[1]);
                Mat* db = grad_into(n.in[2]);
                const int d = g.cols;
                for (int r = 0; r < g.rows; ++r) {
                    const double* gr = g.row(r);
                    const double* nh = n.cached.row(r);
                    if (dg || db) {
                        for (int c = 0; c < d; ++c) {
                            if (dg) dg->v[c] += gr[c] * nh[c];
                            if (db) db->v[c] += gr[c];
                        }
                    }
                    if (dx) {
                        double m1 = 0.0, m2 = 0.0;
                        for (int c = 0; c < d; ++c) {
                            const double gh = gr[c] * gain.v[c];
                            m1 += gh;
                            m2 += gh * nh[c];
                        }
                        m1 /= d;
                        m2 /= d;
                        const double inv = n.cached2[r];
                        for (int c = 0; c < d; ++c) {
                            const double gh = gr[c] * gain.v[c];
                            dx->at(r, c) += inv * (gh - m1 - nh[c] * m2);
                        }
                    }
                }
                break;
            }
            case Op::Silu: {
                if (Mat* dx = grad_into(n.in[0]))
                    for (size_t i = 0; i < g.size(); ++i) {
                        const double x = n.cached.v[i];
                        const double sg = sigmoid(x);
                        dx->v[i] += g.v[i] * sg * (1.0 + x * (1.0 - sg));
                    }
                break;
            }
            case Op::SoftmaxRows: {
                if (Mat* dx = grad_into(n.in[0])) {
                    const Mat& p = n.val;
                    for (int r = 0; r < g.rows; ++r) {
                        const double* gr = g.row(r);
                        const double* pr = p.row(r);
                        double dot = 0.0;
                        for (int c = 0; c < g.cols; ++c) dot += gr[c] * pr[c];
                        for (int c = 0; c < g.cols; ++c)
                            dx->at(r, c) += pr[c] * (gr[c] - dot);
                    }
                }
                break;
            }
            case Op::SliceRows: {
                if (Mat* dx = grad_into(n.in[0]))
                    for (int r = 0; r < g.rows; ++r) {
                        double* dst = dx->row(n.i0 + r);
                        const double* gr = g.row(r);
                        for (int c = 0; c < g.cols; ++c) dst[c] += gr[c];
                    }
                break;
            }
            case Op::SliceCols: {
                if (Mat* dx = grad_into(n.in[0]))
                    for (int r = 0; r < g.rows; ++r) {
                        double* dst = dx->row(r) + n.i0;
                        const double* gr = g.row(r);
                        for (int c = 0; c < g.cols; ++c) dst[c] += gr[c];
                    }
                break;
            }
            case Op::ConcatRows: {
                int r = 0;
                for (Id p : n.in) {
                    const int pr = val(p).rows;
                    if (Mat* dp = grad_into(p))
                        for (int i = 0; i < pr; ++i) {
                            const double* gr = g.row(r + i);
                            double* dst = dp->row(i);
                            for (int c = 0; c < g.cols; ++c) dst[c] += gr[c];
                        }
                    r += pr;
                }
                break;
            }
            case Op::ConcatCols: {
                int c = 0;
                for (Id p : n.in) {
                    const int pc = val(p).cols;
                    if (Mat* dp = grad_into(p))
                        for (int r = 0; r < g.rows; ++r) {
                            const double* gr = g.row(r) + c;
                            double* dst = dp->row(r);
                            for (int j = 0; j < pc; ++j) dst[j] += gr[j];
                        }
                    c += pc;
                }
                break;
            }
            case Op::PoolMaxUp: {
                if (Mat* dx = grad_into(n.in[0])) {
                    const int d = g.cols;
                    for (int tok = 0; tok < g.rows; ++tok) {
                        const double* gr = g.row(tok);
                        for (int ch = 0; ch < d; ++ch)
                            dx->at(n.aux[static_cast<size_t>(tok) * d + ch], ch) += gr[ch];
                    }
                }
                break;
            }
            case Op::Mse: {
                const Mat& p = val(n.in[0]);
                const Mat& t = val(n.in[1]);
                const double c = 2.0 * g.v[0] / static_cast<double>(p.size());
                if (Mat* dp = grad_into(n.in[0]))
                    for (size_t i = 0; i < p.size(); ++i) dp->v[i] += c * (p.v[i] - t.v[i]);
                if (Mat* dt = grad_into(n.in[1]))
                    for (size_t i = 0; i < p.size(); ++i) dt->v[i] -= c * (p.v[i] - t.v[i]);
                break;
            }
            case Op::Const:
            case Op::Param:
                break;
        }
    }
}

}  // namespace hadit
