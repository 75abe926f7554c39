#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "mdt/common.hpp"

namespace mdt {

using Mat = Eigen::MatrixXd;

// Reverse-mode tape over dense matrices. Ops are coarse (layernorm, softmax,
// the smoothed cross-entropy are single nodes) so the tape stays short.
// Parameter leaves reference external storage and write their gradients
// straight into an external accumulator, so large tensors are never copied
// per sentence.
class Tape {
  public:
    struct Var {
        int idx = -1;
        bool valid() const { return idx >= 0; }
    };

    Var leaf(Mat value, bool requires_grad = false);
    // references external storage; grad_out (same shape) is accumulated into
    Var leaf_ref(const Mat *value, Mat *grad_out = nullptr);

    const Mat &value(Var v) const { return nodes_[check(v)].ext ? *nodes_[check(v)].ext : nodes_[check(v)].value; }
    const Mat &grad(Var v) const;

    Var matmul(Var a, Var b);    // A * B
    Var matmul_nt(Var a, Var b); // A * B^T
    Var add(Var a, Var b);       // same shape
    Var add_rowvec(Var a, Var bias); // bias is 1 x cols, broadcast over rows
    Var add_const(Var a, const Mat &c);
    Var scale(Var a, double s);
    Var relu(Var a);
    Var layernorm(Var x, Var gain, Var bias, double eps = 1e-6); // rowwise
    Var softmax_rows(Var x);                                      // rowwise
    Var softmax_rows_masked(Var x, const Mat &additive_mask);
    Var dropout(Var x, double p, Rng &rng, bool active);
    Var gather_rows(Var table, const std::vector<int> &ids);
    Var slice_cols(Var a, int start, int n);
    Var concat_cols(const std::vector<Var> &parts);

    // Sum over rows of label-smoothed cross-entropy against gold ids; rows
    // whose gold equals pad_id contribute nothing. Gold gets 1-eps, every
    // other non-pad class eps/(V-1). Returns a 1x1 node.
    Var smoothed_ce_sum(Var logits, const std::vector<int> &gold, int pad_id, double eps);

    // Backpropagate from a 1x1 node with seed gradient `seed`.
    void backward(Var loss, double seed = 1.0);

    std::size_t size() const { return nodes_.size(); }

  private:
    using BackwardFn = std::function<void(Tape &, int self)>;

    struct Node {
        Mat value;
        const Mat *ext = nullptr;  // external value storage, if a ref leaf
        Mat *grad_out = nullptr;   // external grad accumulator, if a ref leaf
        Mat grad;
        bool requires_grad = false;
        bool grad_alloc = false;
        BackwardFn backward;
    };

    int check(Var v) const {
        if (!v.valid() || std::size_t(v.idx) >= nodes_.size())
            throw Error("invalid tape variable");
        return v.idx;
    }

    const Mat &val(int i) const {
        return nodes_[std::size_t(i)].ext ? *nodes_[std::size_t(i)].ext
                                          : nodes_[std::size_t(i)].value;
    }
    const Mat &out_grad(int self) const;
    void accumulate(int i, const Mat &g);
    Mat &grad_buf(int i);
    Var push(Mat value, bool requires_grad, BackwardFn backward);
    bool needs(Var v) const { return nodes_[std::size_t(v.idx)].requires_grad; }

    std::vector<Node> nodes_;
};

using Var = Tape::Var;

// Sinusoidal position encoding, rows = positions, cols = d_model.
Mat sinusoidal_positions(int n_positions, int d_model);

} // namespace mdt
