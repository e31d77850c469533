#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "incant/errors.hpp"

namespace incant {

// Dense row-major matrix. Everything in the toy backend is small enough
// that naive loops beat any BLAS dispatch overhead.
template <typename S>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<S> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, S(0)) {}
    Mat(int r, int c, std::vector<S> data) : rows(r), cols(c), v(std::move(data)) {
        if (v.size() != static_cast<size_t>(r) * c)
            throw input_error("Mat: data size does not match shape");
    }

    size_t numel() const { return v.size(); }
    S& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    const S& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    S* row_ptr(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const S* row_ptr(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (S x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }
};

template <typename S>
Mat<S> matmul(const Mat<S>& a, const Mat<S>& b) {
    if (a.cols != b.rows) throw input_error("matmul: inner dimensions differ");
    Mat<S> c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const S* ai = a.row_ptr(i);
        S* ci = c.row_ptr(i);
        for (int k = 0; k < a.cols; ++k) {
            const S aik = ai[k];
            if (aik == S(0)) continue;
            const S* bk = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

template <typename S>
Mat<S> transpose(const Mat<S>& a) {
    Mat<S> t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

template <typename S>
S dot_all(const Mat<S>& a, const Mat<S>& b) {
    S s = 0;
    for (size_t i = 0; i < a.v.size(); ++i) s += a.v[i] * b.v[i];
    return s;
}

template <typename S>
S norm2(const Mat<S>& a) {
    return std::sqrt(dot_all(a, a));
}

// Cosine with an exact snap for bit-identical inputs up to sign: the
// naive D / sqrt(Da*Db) can land one ulp away from ±1, and the extreme
// cases are asserted exactly.
template <typename S>
S cosine(const Mat<S>& a, const Mat<S>& b) {
    S d = dot_all(a, b);
    S da = dot_all(a, a);
    S db = dot_all(b, b);
    if (da == S(0) || db == S(0)) throw numeric_error("cosine: zero-norm input");
    if (d == da && da == db) return S(1);
    if (-d == da && da == db) return S(-1);
    S c = d / std::sqrt(da * db);
    if (c > S(1)) c = S(1);
    if (c < S(-1)) c = S(-1);
    return c;
}

}  // namespace incant
