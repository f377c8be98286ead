#pragma once

#include <vector>

#include "hadit/mat.hpp"

namespace hadit {

// Reverse-mode autodiff tape over Mat. Values are computed eagerly at node
// creation; backward() sweeps the tape once and accumulates parameter
// gradients into the external grad storage bound by param().
//
// The op set is exactly what the denoiser needs: affine maps, row softmax,
// layer norm, SiLU, row broadcasts, slicing/concatenation for heads and
// branches, and grid max-pool-with-nearest-upsample for the context
// attention path.
class Graph {
public:
    using Id = int;

    Id constant(Mat m);
    // Binds external value/grad storage. backward() adds into *grad.
    Id param(const Mat* value, Mat* grad);

    Id matmul(Id a, Id b);       // A * B
    Id matmul_nt(Id a, Id b);    // A * B^T
    Id add(Id a, Id b);
    Id scale(Id a, double s);
    Id add_row(Id x, Id row);                  // broadcast 1 x d row over rows of x
    Id mul_row(Id x, Id row);                  // x .* row, row is 1 x d
    Id scale_shift_rows(Id x, Id s, Id b);     // x .* (1 + s) + b, s/b are 1 x d
    Id layer_norm(Id x, Id gain, Id bias);     // row-wise, learned affine
    Id silu(Id x);
    Id softmax_rows(Id x);
    Id slice_rows(Id x, int r0, int r1);
    Id slice_cols(Id x, int c0, int c1);
    Id concat_rows(const std::vector<Id>& parts);
    Id concat_cols(const std::vector<Id>& parts);
    // x is (rows*cols) x d, row-major over the grid. Channel-wise max over
    // kernel x kernel blocks (replicate-padded), nearest-neighbor upsampled
    // back to the input shape.
    Id pool_max_upsample(Id x, int rows, int cols, int kernel);
    Id mse(Id pred, Id target);  // mean squared difference, 1x1 output

    const Mat& val(Id id) const;

    // Seeds d(loss)=1 and runs the reverse sweep. loss must be 1x1.
    void backward(Id loss);

    void clear();
    size_t num_nodes() const { return nodes_.size(); }

private:
    enum class Op {
        Const, Param, MatMul, MatMulNT, Add, Scale, AddRow, MulRow, ScaleShiftRows,
        LayerNorm, Silu, SoftmaxRows, SliceRows, SliceCols, ConcatRows,
        ConcatCols, PoolMaxUp, Mse
    };

    struct Node {
        Op op;
        std::vector<Id> in;
        Mat val;
        Mat grad;
        bool needs_grad = false;
        const Mat* ext_val = nullptr;
        Mat* ext_grad = nullptr;
        double scalar = 0.0;     // Scale factor
        int i0 = 0, i1 = 0;      // slice bounds / grid rows, cols
        int kernel = 0;
        std::vector<int> aux;    // pool argmax indices
        Mat cached;              // LayerNorm: normalized rows; Silu: input copy
        std::vector<double> cached2;  // LayerNorm: 1/sqrt(var+eps) per row
    };

    const Mat& value_of(const Node& n) const { return n.ext_val ? *n.ext_val : n.val; }
    Id push(Node n);
    bool any_needs_grad(const std::vector<Id>& in) const;

    std::vector<Node> nodes_;
};

}  // namespace hadit
