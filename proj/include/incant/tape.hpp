#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "incant/errors.hpp"
#include "incant/mat.hpp"

namespace incant {

/*==================================== reverse-mode tape ====================================*/
//
// Eager tape: values are computed at op creation, gradients on demand by
// backward(). Nodes built from constants never receive gradient storage,
// which is what the gradient-exclusion contract (stop-gradient image and
// original-text embeddings) is checked against.

enum class Op : uint8_t {
    Constant,
    Param,
    MatMul,
    Add,
    Sub,
    Neg,
    ScaleC,
    Hadamard,
    AddRowVec,
    MulRowVec,
    ConcatRows,
    SliceRows,
    Transpose,
    RowSoftmax,
    Tanh,
    Abs,
    Conv3x3,
    Dot,
    SumSq,
    L2Norm,
    DivScalar,
    Cosine,
};

template <typename S>
class Tape {
public:
    using id = int32_t;

    struct Node {
        Op op = Op::Constant;
        id a = -1;
        id b = -1;
        int i0 = 0;  // slice start / conv height
        int i1 = 0;  // slice end / conv width
        S c = S(0);  // ScaleC factor
        bool requires_grad = false;
        Mat<S> value;
        Mat<S> grad;  // allocated only when requires_grad
    };

    id constant(Mat<S> m) { return push(Op::Constant, -1, -1, std::move(m), false); }

    id param(Mat<S> m) { return push(Op::Param, -1, -1, std::move(m), true); }

    id matmul(id a, id b) { return push(Op::MatMul, a, b, incant::matmul(val(a), val(b))); }

    id add(id a, id b) {
        check_same_shape(a, b, "add");
        Mat<S> r = val(a);
        for (size_t i = 0; i < r.v.size(); ++i) r.v[i] += val(b).v[i];
        return push(Op::Add, a, b, std::move(r));
    }

    id sub(id a, id b) {
        check_same_shape(a, b, "sub");
        Mat<S> r = val(a);
        for (size_t i = 0; i < r.v.size(); ++i) r.v[i] -= val(b).v[i];
        return push(Op::Sub, a, b, std::move(r));
    }

    id neg(id a) {
        Mat<S> r = val(a);
        for (auto& x : r.v) x = -x;
        return push(Op::Neg, a, -1, std::move(r));
    }

    id scale(id a, S c) {
        Mat<S> r = val(a);
        for (auto& x : r.v) x *= c;
        id n = push(Op::ScaleC, a, -1, std::move(r));
        nodes_[n].c = c;
        return n;
    }

    id hadamard(id a, id b) {
        check_same_shape(a, b, "hadamard");
        Mat<S> r = val(a);
        for (size_t i = 0; i < r.v.size(); ++i) r.v[i] *= val(b).v[i];
        return push(Op::Hadamard, a, b, std::move(r));
    }

    // x: m x n, rowv: 1 x n broadcast over rows
    id add_rowvec(id x, id rowv) {
        check_rowvec(x, rowv, "add_rowvec");
        Mat<S> r = val(x);
        const Mat<S>& b = val(rowv);
        for (int i = 0; i < r.rows; ++i)
            for (int j = 0; j < r.cols; ++j) r.at(i, j) += b.v[j];
        return push(Op::AddRowVec, x, rowv, std::move(r));
    }

    id mul_rowvec(id x, id rowv) {
        check_rowvec(x, rowv, "mul_rowvec");
        Mat<S> r = val(x);
        const Mat<S>& b = val(rowv);
        for (int i = 0; i < r.rows; ++i)
            for (int j = 0; j < r.cols; ++j) r.at(i, j) *= b.v[j];
        return push(Op::MulRowVec, x, rowv, std::move(r));
    }

    id concat_rows(id a, id b) {
        if (val(a).cols != val(b).cols) throw input_error("tape: concat_rows column mismatch");
        Mat<S> r(val(a).rows + val(b).rows, val(a).cols);
        std::copy(val(a).v.begin(), val(a).v.end(), r.v.begin());
        std::copy(val(b).v.begin(), val(b).v.end(), r.v.begin() + val(a).v.size());
        return push(Op::ConcatRows, a, b, std::move(r));
    }

    // rows [r0, r1)
    id slice_rows(id a, int r0, int r1) {
        const Mat<S>& x = val(a);
        if (r0 < 0 || r1 > x.rows || r0 >= r1) throw input_error("tape: bad slice bounds");
        Mat<S> r(r1 - r0, x.cols);
        std::copy(x.row_ptr(r0), x.row_ptr(r0) + r.v.size(), r.v.begin());
        id n = push(Op::SliceRows, a, -1, std::move(r));
        nodes_[n].i0 = r0;
        nodes_[n].i1 = r1;
        return n;
    }

    id transpose(id a) { return push(Op::Transpose, a, -1, incant::transpose(val(a))); }

    id row_softmax(id a) {
        Mat<S> r = val(a);
        for (int i = 0; i < r.rows; ++i) {
            S* p = r.row_ptr(i);
            S mx = p[0];
            for (int j = 1; j < r.cols; ++j) mx = std::max(mx, p[j]);
            S sum = 0;
            for (int j = 0; j < r.cols; ++j) {
                p[j] = std::exp(p[j] - mx);
                sum += p[j];
            }
            for (int j = 0; j < r.cols; ++j) p[j] /= sum;
        }
        return push(Op::RowSoftmax, a, -1, std::move(r));
    }

    id tanh_(id a) {
        Mat<S> r = val(a);
        for (auto& x : r.v) x = std::tanh(x);
        return push(Op::Tanh, a, -1, std::move(r));
    }

    id abs_(id a) {
        Mat<S> r = val(a);
        for (auto& x : r.v) x = std::abs(x);
        return push(Op::Abs, a, -1, std::move(r));
    }

    // x: (h*w) x cin grid rows, k: (9*cin) x cout, zero padding
    id conv3x3(id x, id k, int h, int w) {
        const Mat<S>& in = val(x);
        const Mat<S>& ker = val(k);
        const int cin = in.cols;
        if (in.rows != h * w) throw input_error("tape: conv3x3 grid mismatch");
        if (ker.rows != 9 * cin) throw input_error("tape: conv3x3 kernel rows must be 9*cin");
        Mat<S> out(h * w, ker.cols);
        for (int y = 0; y < h; ++y) {
            for (int xq = 0; xq < w; ++xq) {
                S* op = out.row_ptr(y * w + xq);
                for (int ky = -1; ky <= 1; ++ky) {
                    const int yy = y + ky;
                    if (yy < 0 || yy >= h) continue;
                    for (int kx = -1; kx <= 1; ++kx) {
                        const int xx = xq + kx;
                        if (xx < 0 || xx >= w) continue;
                        const S* ip = in.row_ptr(yy * w + xx);
                        const int kbase = ((ky + 1) * 3 + (kx + 1)) * cin;
                        for (int ci = 0; ci < cin; ++ci) {
                            const S xv = ip[ci];
                            const S* kp = ker.row_ptr(kbase + ci);
                            for (int co = 0; co < ker.cols; ++co) op[co] += xv * kp[co];
                        }
                    }
                }
            }
        }
        id n = push(Op::Conv3x3, x, k, std::move(out));
        nodes_[n].i0 = h;
        nodes_[n].i1 = w;
        return n;
    }

    // frobenius dot over same-shape operands -> 1x1
    id dot(id a, id b) {
        check_same_shape(a, b, "dot");
        Mat<S> r(1, 1);
        r.v[0] = dot_all(val(a), val(b));
        return push(Op::Dot, a, b, std::move(r));
    }

    id sumsq(id a) {
        Mat<S> r(1, 1);
        r.v[0] = dot_all(val(a), val(a));
        return push(Op::SumSq, a, -1, std::move(r));
    }

    id l2norm(id a) {
        Mat<S> r(1, 1);
        r.v[0] = std::sqrt(dot_all(val(a), val(a)));
        return push(Op::L2Norm, a, -1, std::move(r));
    }

    // x / s, s a 1x1 node
    id div_scalar(id x, id s) {
        if (val(s).numel() != 1) throw input_error("tape: div_scalar needs 1x1 divisor");
        const S sv = val(s).v[0];
        if (sv == S(0)) throw numeric_error("tape: division by zero scalar");
        Mat<S> r = val(x);
        for (auto& e : r.v) e /= sv;
        return push(Op::DivScalar, x, s, std::move(r));
    }

    // cosine similarity of two same-shape operands -> 1x1, snapped to ±1
    // when the inputs are bit-identical up to sign
    id cosine(id a, id b) {
        check_same_shape(a, b, "cosine");
        const S d = dot_all(val(a), val(b));
        const S da = dot_all(val(a), val(a));
        const S db = dot_all(val(b), val(b));
        if (da == S(0) || db == S(0)) throw numeric_error("tape: cosine of zero-norm input");
        S c;
        if (d == da && da == db)
            c = S(1);
        else if (-d == da && da == db)
            c = S(-1);
        else {
            c = d / std::sqrt(da * db);
            if (c > S(1)) c = S(1);
            if (c < S(-1)) c = S(-1);
        }
        Mat<S> r(1, 1);
        r.v[0] = c;
        return push(Op::Cosine, a, b, std::move(r));
    }

    const Mat<S>& value(id n) const { return nodes_[n].value; }
    const Mat<S>& grad(id n) const { return nodes_[n].grad; }
    bool requires_grad(id n) const { return nodes_[n].requires_grad; }
    bool has_grad(id n) const { return !nodes_[n].grad.v.empty(); }
    size_t size() const { return nodes_.size(); }

    // Overwrite a Param's value in place (same shape). Used by optimizers
    // between iterations when rebuilding only part of a graph is not worth it.
    void set_param_value(id n, const Mat<S>& m) {
        if (nodes_[n].op != Op::Param) throw input_error("tape: set_param_value on non-param");
        if (!nodes_[n].value.same_shape(m)) throw input_error("tape: param shape change");
        nodes_[n].value = m;
    }

    void backward(id root) {
        if (val(root).numel() != 1) throw input_error("tape: backward root must be scalar");
        for (auto& n : nodes_)
            if (n.requires_grad) {
                n.grad = Mat<S>(n.value.rows, n.value.cols);
            }
        if (!nodes_[root].requires_grad) return;  // nothing differentiable upstream
        nodes_[root].grad.v[0] = S(1);
        for (id i = root; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.requires_grad || n.grad.v.empty()) continue;
            propagate(n);
        }
    }

private:
    std::vector<Node> nodes_;

    const Mat<S>& val(id n) const { return nodes_[n].value; }

    id push(Op op, id a, id b, Mat<S> value, bool force_rg = false) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.value = std::move(value);
        n.requires_grad = force_rg || (a >= 0 && nodes_[a].requires_grad) ||
                          (b >= 0 && nodes_[b].requires_grad);
        if (!n.value.all_finite()) throw numeric_error("tape: non-finite value produced");
        nodes_.push_back(std::move(n));
        return static_cast<id>(nodes_.size() - 1);
    }

    void check_same_shape(id a, id b, const char* what) const {
        if (!val(a).same_shape(val(b)))
            throw input_error(std::string("tape: shape mismatch in ") + what);
    }

    void check_rowvec(id x, id rowv, const char* what) const {
        if (val(rowv).rows != 1 || val(rowv).cols != val(x).cols)
            throw input_error(std::string("tape: bad row vector in ") + what);
    }

    Mat<S>* gbuf(id n) {
        if (n < 0) return nullptr;
        if (!nodes_[n].requires_grad) return nullptr;
        return &nodes_[n].grad;
    }

    void propagate(Node& n) {
        const Mat<S>& g = n.grad;
        Mat<S>* ga = gbuf(n.a);
        Mat<S>* gb = gbuf(n.b);
        switch (n.op) {
            case Op::Constant:
            case Op::Param:
                break;
            case Op::MatMul: {
                const Mat<S>& A = val(n.a);
                const Mat<S>& B = val(n.b);
                if (ga) {
                    // gA += g * B^T
                    for (int i = 0; i < A.rows; ++i)
                        for (int k = 0; k < B.rows; ++k) {
                            S s = 0;
                            for (int j = 0; j < B.cols; ++j) s += g.at(i, j) * B.at(k, j);
                            ga->at(i, k) += s;
                        }
                }
                if (gb) {
                    // gB += A^T * g
                    for (int k = 0; k < A.cols; ++k)
                        for (int j = 0; j < B.cols; ++j) {
                            S s = 0;
                            for (int i = 0; i < A.rows; ++i) s += A.at(i, k) * g.at(i, j);
                            gb->at(k, j) += s;
                        }
                }
                break;
            }
            case Op::Add:
                if (ga) axpy(*ga, g, S(1));
                if (gb) axpy(*gb, g, S(1));
                break;
            case Op::Sub:
                if (ga) axpy(*ga, g, S(1));
                if (gb) axpy(*gb, g, S(-1));
                break;
            case Op::Neg:
                if (ga) axpy(*ga, g, S(-1));
                break;
            case Op::ScaleC:
                if (ga) axpy(*ga, g, n.c);
                break;
            case Op::Hadamard:
                if (ga)
                    for (size_t i = 0; i < g.v.size(); ++i) ga->v[i] += g.v[i] * val(n.b).v[i];
                if (gb)
                    for (size_t i = 0; i < g.v.size(); ++i) gb->v[i] += g.v[i] * val(n.a).v[i];
                break;
            case Op::AddRowVec:
                if (ga) axpy(*ga, g, S(1));
                if (gb)
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < g.cols; ++j) gb->v[j] += g.at(i, j);
                break;
            case Op::MulRowVec: {
                const Mat<S>& X = val(n.a);
                const Mat<S>& r = val(n.b);
                if (ga)
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < g.cols; ++j) ga->at(i, j) += g.at(i, j) * r.v[j];
                if (gb)
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < g.cols; ++j) gb->v[j] += g.at(i, j) * X.at(i, j);
                break;
            }
            case Op::ConcatRows: {
                const size_t na = val(n.a).v.size();
                if (ga)
                    for (size_t i = 0; i < na; ++i) ga->v[i] += g.v[i];
                if (gb)
                    for (size_t i = 0; i < gb->v.size(); ++i) gb->v[i] += g.v[na + i];
                break;
            }
            case Op::SliceRows:
                if (ga) {
                    const size_t off = static_cast<size_t>(n.i0) * ga->cols;
                    for (size_t i = 0; i < g.v.size(); ++i) ga->v[off + i] += g.v[i];
                }
                break;
            case Op::Transpose:
                if (ga)
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < g.cols; ++j) ga->at(j, i) += g.at(i, j);
                break;
            case Op::RowSoftmax:
                if (ga) {
                    const Mat<S>& y = n.value;
                    for (int i = 0; i < y.rows; ++i) {
                        S gy_dot_y = 0;
                        for (int j = 0; j < y.cols; ++j) gy_dot_y += g.at(i, j) * y.at(i, j);
                        for (int j = 0; j < y.cols; ++j)
                            ga->at(i, j) += (g.at(i, j) - gy_dot_y) * y.at(i, j);
                    }
                }
                break;
            case Op::Tanh:
                if (ga)
                    for (size_t i = 0; i < g.v.size(); ++i)
                        ga->v[i] += g.v[i] * (S(1) - n.value.v[i] * n.value.v[i]);
                break;
            case Op::Abs:
                if (ga) {
                    const Mat<S>& x = val(n.a);
                    for (size_t i = 0; i < g.v.size(); ++i) {
                        if (x.v[i] > S(0))
                            ga->v[i] += g.v[i];
                        else if (x.v[i] < S(0))
                            ga->v[i] -= g.v[i];
                    }
                }
                break;
            case Op::Conv3x3: {
                const Mat<S>& in = val(n.a);
                const Mat<S>& ker = val(n.b);
                const int h = n.i0, w = n.i1, cin = in.cols, cout = ker.cols;
                for (int y = 0; y < h; ++y)
                    for (int xq = 0; xq < w; ++xq) {
                        const S* gp = g.row_ptr(y * w + xq);
                        for (int ky = -1; ky <= 1; ++ky) {
                            const int yy = y + ky;
                            if (yy < 0 || yy >= h) continue;
                            for (int kx = -1; kx <= 1; ++kx) {
                                const int xx = xq + kx;
                                if (xx < 0 || xx >= w) continue;
                                const int kbase = ((ky + 1) * 3 + (kx + 1)) * cin;
                                for (int ci = 0; ci < cin; ++ci) {
                                    const S xv = in.at(yy * w + xx, ci);
                                    const S* kp = ker.row_ptr(kbase + ci);
                                    S gsum = 0;
                                    for (int co = 0; co < cout; ++co) {
                                        gsum += gp[co] * kp[co];
                                        if (gb) gb->at(kbase + ci, co) += xv * gp[co];
                                    }
                                    if (ga) ga->at(yy * w + xx, ci) += gsum;
                                }
                            }
                        }
                    }
                break;
            }
            case Op::Dot: {
                const S g0 = g.v[0];
                if (ga)
                    for (size_t i = 0; i < ga->v.size(); ++i) ga->v[i] += g0 * val(n.b).v[i];
                if (gb)
                    for (size_t i = 0; i < gb->v.size(); ++i) gb->v[i] += g0 * val(n.a).v[i];
                break;
            }
            case Op::SumSq: {
                const S g0 = g.v[0];
                if (ga)
                    for (size_t i = 0; i < ga->v.size(); ++i)
                        ga->v[i] += S(2) * g0 * val(n.a).v[i];
                break;
            }
            case Op::L2Norm: {
                const S g0 = g.v[0];
                const S nv = n.value.v[0];
                if (ga && nv > S(0))
                    for (size_t i = 0; i < ga->v.size(); ++i)
                        ga->v[i] += g0 * val(n.a).v[i] / nv;
                break;
            }
            case Op::DivScalar: {
                const S sv = val(n.b).v[0];
                if (ga)
                    for (size_t i = 0; i < ga->v.size(); ++i) ga->v[i] += g.v[i] / sv;
                if (gb) {
                    S s = 0;
                    for (size_t i = 0; i < g.v.size(); ++i) s += g.v[i] * n.value.v[i];
                    gb->v[0] -= s / sv;
                }
                break;
            }
            case Op::Cosine: {
                const Mat<S>& a = val(n.a);
                const Mat<S>& b = val(n.b);
                const S g0 = g.v[0];
                const S c = n.value.v[0];
                const S da = dot_all(a, a);
                const S db = dot_all(b, b);
                const S denom = std::sqrt(da * db);
                if (ga)
                    for (size_t i = 0; i < a.v.size(); ++i)
                        ga->v[i] += g0 * (b.v[i] / denom - c * a.v[i] / da);
                if (gb)
                    for (size_t i = 0; i < b.v.size(); ++i)
                        gb->v[i] += g0 * (a.v[i] / denom - c * b.v[i] / db);
                break;
            }
        }
    }

    static void axpy(Mat<S>& dst, const Mat<S>& src, S c) {
        for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += c * src.v[i];
    }
};

}  // namespace incant
