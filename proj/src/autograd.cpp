#include "mdt/autograd.hpp"

#include <cmath>

namespace mdt {

Var Tape::leaf(Mat value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr);
}

Var Tape::leaf_ref(const Mat *value, Mat *grad_out) {
    Node n;
    n.ext = value;
    n.grad_out = grad_out;
    n.requires_grad = grad_out != nullptr;
    nodes_.push_back(std::move(n));
    return Var{int(nodes_.size()) - 1};
}

const Mat &Tape::grad(Var v) const {
    const Node &n = nodes_[check(v)];
    if (n.grad_out) return *n.grad_out;
    if (!n.grad_alloc) throw Error("no gradient recorded for variable");
    return n.grad;
}

Mat &Tape::grad_buf(int i) {
    Node &n = nodes_[std::size_t(i)];
    if (n.grad_out) return *n.grad_out;
    if (!n.grad_alloc) {
        n.grad = Mat::Zero(val(i).rows(), val(i).cols());
        n.grad_alloc = true;
    }
    return n.grad;
}

void Tape::accumulate(int i, const Mat &g) {
    if (nodes_[std::size_t(i)].requires_grad) grad_buf(i) += g;
}

Var Tape::push(Mat value, bool requires_grad, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{int(nodes_.size()) - 1};
}

const Mat &Tape::out_grad(int self) const { return nodes_[std::size_t(self)].grad; }

Var Tape::matmul(Var a, Var b) {
    int ia = check(a), ib = check(b);
    if (val(ia).cols() != val(ib).rows()) throw Error("matmul: inner dimension mismatch");
    return push(val(ia) * val(ib), needs(a) || needs(b), [ia, ib](Tape &t, int self) {
        const Mat &g = t.out_grad(self);
        t.accumulate(ia, g * t.val(ib).transpose());
        t.accumulate(ib, t.val(ia).transpose() * g);
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    int ia = check(a), ib = check(b);
    if (val(ia).cols() != val(ib).cols()) throw Error("matmul_nt: dimension mismatch");
    return push(val(ia) * val(ib).transpose(), needs(a) || needs(b), [ia, ib](Tape &t, int self) {
        const Mat &g = t.out_grad(self);
        t.accumulate(ia, g * t.val(ib));
        t.accumulate(ib, g.transpose() * t.val(ia));
    });
}

Var Tape::add(Var a, Var b) {
    int ia = check(a), ib = check(b);
    if (val(ia).rows() != val(ib).rows() || val(ia).cols() != val(ib).cols())
        throw Error("add: shape mismatch");
    return push(val(ia) + val(ib), needs(a) || needs(b), [ia, ib](Tape &t, int self) {
        const Mat &g = t.out_grad(self);
        t.accumulate(ia, g);
        t.accumulate(ib, g);
    });
}

Var Tape::add_rowvec(Var a, Var bias) {
    int ia = check(a), ib = check(bias);
    if (val(ib).rows() != 1 || val(ib).cols() != val(ia).cols())
        throw Error("add_rowvec: bias must be 1 x cols");
    Mat out = val(ia).rowwise() + val(ib).row(0);
    return push(std::move(out), needs(a) || needs(bias), [ia, ib](Tape &t, int self) {
        const Mat &g = t.out_grad(self);
        t.accumulate(ia, g);
        t.accumulate(ib, g.colwise().sum());
    });
}

Var Tape::add_const(Var a, const Mat &c) {
    int ia = check(a);
    if (val(ia).rows() != c.rows() || val(ia).cols() != c.cols())
        throw Error("add_const: shape mismatch");
    return push(val(ia) + c, needs(a), [ia](Tape &t, int self) {
        t.accumulate(ia, t.out_grad(self));
    });
}

Var Tape::scale(Var a, double s) {
    int ia = check(a);
    return push(val(ia) * s, needs(a), [ia, s](Tape &t, int self) {
        t.accumulate(ia, t.out_grad(self) * s);
    });
}

Var Tape::relu(Var a) {
    int ia = check(a);
    return push(val(ia).cwiseMax(0.0), needs(a), [ia](Tape &t, int self) {
        const Mat &g = t.out_grad(self);
        const Mat &x = t.val(ia);
        t.accumulate(ia, ((x.array() > 0.0).cast<double>() * g.array()).matrix());
    });
}

Var Tape::layernorm(Var x, Var gain, Var bias, double eps) {
    int ix = check(x), ig = check(gain), ib = check(bias);
    const Mat &xv = val(ix);
    int rows = int(xv.rows()), cols = int(xv.cols());
    if (val(ig).rows() != 1 || val(ig).cols() != cols || val(ib).cols() != cols)
        throw Error("layernorm: gain/bias must be 1 x cols");
    Mat normed(rows, cols);
    Eigen::VectorXd inv_std(rows);
    for (int r = 0; r < rows; ++r) {
        double mean = xv.row(r).mean();
        double var = (xv.row(r).array() - mean).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        normed.row(r) = ((xv.row(r).array() - mean) * inv_std(r)).matrix();
    }
    Mat out = ((normed.array().rowwise() * val(ig).row(0).array()).rowwise() +
               val(ib).row(0).array())
                  .matrix();
    bool req = needs(x) || needs(gain) || needs(bias);
    return push(std::move(out), req, [ix, ig, ib, normed, inv_std](Tape &t, int self) {
        const Mat &g = t.out_grad(self);
        t.accumulate(ig, (g.array() * normed.array()).colwise().sum().matrix());
        t.accumulate(ib, g.colwise().sum());
        if (t.nodes_[std::size_t(ix)].requires_grad) {
            Mat dn = (g.array().rowwise() * t.val(ig).row(0).array()).matrix();
            Mat dx(dn.rows(), dn.cols());
            double n = double(dn.cols());
            for (int r = 0; r < dn.rows(); ++r) {
                double sum_dn = dn.row(r).sum();
                double sum_dn_h = (dn.row(r).array() * normed.row(r).array()).sum();
                dx.row(r) = ((dn.row(r).array() - sum_dn / n -
                              normed.row(r).array() * sum_dn_h / n) *
                             inv_std(r))
                                .matrix();
            }
            t.accumulate(ix, dx);
        }
    });
}

namespace {

Mat softmax_of(const Mat &x) {
    Mat out(x.rows(), x.cols());
    for (int r = 0; r < x.rows(); ++r) {
        double mx = x.row(r).maxCoeff();
        Eigen::ArrayXd e = (x.row(r).array() - mx).exp();
        out.row(r) = (e / e.sum()).matrix().transpose();
    }
    return out;
}

} // namespace

Var Tape::softmax_rows(Var x) {
    int ix = check(x);
    return push(softmax_of(val(ix)), needs(x), [ix](Tape &t, int self) {
        const Mat &g = t.out_grad(self);
        const Mat &p = t.nodes_[std::size_t(self)].value;
        Mat dx(p.rows(), p.cols());
        for (int r = 0; r < p.rows(); ++r) {
            double dot = (g.row(r).array() * p.row(r).array()).sum();
            dx.row(r) = (p.row(r).array() * (g.row(r).array() - dot)).matrix();
        }
        t.accumulate(ix, dx);
    });
}

Var Tape::softmax_rows_masked(Var x, const Mat &additive_mask) {
    return softmax_rows(add_const(x, additive_mask));
}

Var Tape::dropout(Var x, double p, Rng &rng, bool active) {
    int ix = check(x);
    if (!active || p <= 0.0) return x;
    if (p >= 1.0) throw Error("dropout probability must be < 1");
    const Mat &xv = val(ix);
    Mat mask(xv.rows(), xv.cols());
    double keep = 1.0 - p;
    for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c)
            mask(r, c) = rng.next_double() < p ? 0.0 : 1.0 / keep;
    return push(xv.cwiseProduct(mask), needs(x), [ix, mask](Tape &t, int self) {
        t.accumulate(ix, t.out_grad(self).cwiseProduct(mask));
    });
}

Var Tape::gather_rows(Var table, const std::vector<int> &ids) {
    int it = check(table);
    const Mat &tv = val(it);
    Mat out(long(ids.size()), tv.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= tv.rows())
            throw Error("embedding index out of range: " + std::to_string(ids[i]));
        out.row(long(i)) = tv.row(ids[i]);
    }
    return push(std::move(out), needs(table), [it, ids](Tape &t, int self) {
        const Mat &g = t.out_grad(self);
        Mat &acc = t.grad_buf(it);
        for (std::size_t i = 0; i < ids.size(); ++i) acc.row(ids[i]) += g.row(long(i));
    });
}

Var Tape::slice_cols(Var a, int start, int n) {
    int ia = check(a);
    const Mat &av = val(ia);
    if (start < 0 || start + n > av.cols()) throw Error("slice_cols out of range");
    return push(av.middleCols(start, n), needs(a), [ia, start, n](Tape &t, int self) {
        const Mat &g = t.out_grad(self);
        t.grad_buf(ia).middleCols(start, n) += g;
    });
}

Var Tape::concat_cols(const std::vector<Var> &parts) {
    if (parts.empty()) throw Error("concat_cols: empty");
    std::vector<int> idx;
    long rows = val(check(parts[0])).rows();
    long cols = 0;
    bool req = false;
    for (Var p : parts) {
        int i = check(p);
        if (val(i).rows() != rows) throw Error("concat_cols: row mismatch");
        cols += val(i).cols();
        req = req || needs(p);
        idx.push_back(i);
    }
    Mat out(rows, cols);
    long at = 0;
    for (int i : idx) {
        out.middleCols(at, val(i).cols()) = val(i);
        at += val(i).cols();
    }
    return push(std::move(out), req, [idx](Tape &t, int self) {
        const Mat &g = t.out_grad(self);
        long at = 0;
        for (int i : idx) {
            long w = t.val(i).cols();
            t.accumulate(i, g.middleCols(at, w));
            at += w;
        }
    });
}

Var Tape::smoothed_ce_sum(Var logits, const std::vector<int> &gold, int pad_id, double eps) {
    int il = check(logits);
    const Mat &z = val(il);
    if (std::size_t(z.rows()) != gold.size())
        throw Error("smoothed_ce_sum: gold size mismatch");
    long V = z.cols();
    if (V < 2) throw Error("smoothed_ce_sum: vocab too small");

    Mat p = softmax_of(z);
    double loss = 0.0;
    double off = eps / double(V - 1); // smoothing mass over non-gold, non-pad classes
    std::size_t contributing = 0;
    for (long r = 0; r < z.rows(); ++r) {
        int g = gold[std::size_t(r)];
        if (g == pad_id) continue;
        if (g < 0 || g >= V) throw Error("smoothed_ce_sum: gold index out of range");
        ++contributing;
        double mx = z.row(r).maxCoeff();
        double lse = std::log((z.row(r).array() - mx).exp().sum()) + mx;
        double acc = 0.0;
        for (long c = 0; c < V; ++c) {
            double q = c == g ? 1.0 - eps : (c == pad_id ? 0.0 : off);
            if (q != 0.0) acc += q * (z(r, c) - lse);
        }
        loss -= acc;
    }
    if (contributing == 0) throw Error("smoothed_ce_sum: batch has no non-pad targets");

    Mat out(1, 1);
    out(0, 0) = loss;
    return push(std::move(out), needs(logits),
                [il, gold, pad_id, eps, p, off](Tape &t, int self) {
                    double seed = t.out_grad(self)(0, 0);
                    long V = p.cols();
                    Mat dz = Mat::Zero(p.rows(), p.cols());
                    for (long r = 0; r < p.rows(); ++r) {
                        int g = gold[std::size_t(r)];
                        if (g == pad_id) continue;
                        bool pad_counts = pad_id >= 0 && pad_id < V && pad_id != g;
                        double qsum = (1.0 - eps) + off * double(V - (pad_counts ? 2 : 1));
                        for (long c = 0; c < V; ++c) {
                            double q = c == g ? 1.0 - eps : (c == pad_id ? 0.0 : off);
                            dz(r, c) = seed * (qsum * p(r, c) - q);
                        }
                    }
                    t.accumulate(il, dz);
                });
}

void Tape::backward(Var loss, double seed) {
    int il = check(loss);
    if (val(il).rows() != 1 || val(il).cols() != 1)
        throw Error("backward: loss must be 1x1");
    grad_buf(il)(0, 0) += seed;
    for (int i = il; i >= 0; --i) {
        Node &n = nodes_[std::size_t(i)];
        if (!n.backward || !n.grad_alloc || !n.requires_grad) continue;
        n.backward(*this, i);
    }
}

Mat sinusoidal_positions(int n_positions, int d_model) {
    Mat pe(n_positions, d_model);
    for (int pos = 0; pos < n_positions; ++pos)
        for (int i = 0; i < d_model; ++i) {
            double angle = double(pos) / std::pow(10000.0, double(2 * (i / 2)) / double(d_model));
            pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

} // namespace mdt
