#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace satseg {

// Dense row-major double matrix. Vectors are 1 x n.
struct Mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(size_t r, size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

    double& operator()(size_t r, size_t c) { return v[r * cols + c]; }
    double operator()(size_t r, size_t c) const { return v[r * cols + c]; }
    double* row(size_t r) { return v.data() + r * cols; }
    const double* row(size_t r) const { return v.data() + r * cols; }
    size_t size() const { return v.size(); }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    bool operator==(const Mat& o) const { return rows == o.rows && cols == o.cols && v == o.v; }
};

// y[t,:] = x[t,:] * W^T + b, W is [out x in], b is [1 x out] (may be empty).
inline void linear_forward(const Mat& x, const Mat& w, const Mat& b, Mat& y) {
    assert(x.cols == w.cols);
    y.rows = x.rows;
    y.cols = w.rows;
    y.v.assign(y.rows * y.cols, 0.0);
    for (size_t t = 0; t < x.rows; ++t) {
        const double* xt = x.row(t);
        double* yt = y.row(t);
        for (size_t o = 0; o < w.rows; ++o) {
            const double* wo = w.row(o);
            double acc = 0.0;
            for (size_t i = 0; i < x.cols; ++i) acc += xt[i] * wo[i];
            yt[o] = acc;
        }
        if (!b.v.empty())
            for (size_t o = 0; o < w.rows; ++o) yt[o] += b.v[o];
    }
}

// dx += dy * W ; dW += dy^T * x ; db += column sums of dy.
inline void linear_backward(const Mat& x, const Mat& w, const Mat& dy, Mat& dx, Mat& dw, Mat& db) {
    for (size_t t = 0; t < x.rows; ++t) {
        const double* dyt = dy.row(t);
        const double* xt = x.row(t);
        double* dxt = dx.row(t);
        for (size_t o = 0; o < w.rows; ++o) {
            const double g = dyt[o];
            if (g == 0.0) continue;
            const double* wo = w.row(o);
            double* dwo = dw.row(o);
            for (size_t i = 0; i < w.cols; ++i) {
                dxt[i] += g * wo[i];
                dwo[i] += g * xt[i];
            }
        }
        if (!db.v.empty())
            for (size_t o = 0; o < w.rows; ++o) db.v[o] += dyt[o];
    }
}

// C += (sa * A) * B where A is [m x r], B is [r x n].
inline void matmul_acc(const Mat& a, const Mat& b, double sa, Mat& c) {
    assert(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (size_t k = 0; k < a.cols; ++k) {
            const double av = sa * ai[k];
            if (av == 0.0) continue;
            const double* bk = b.row(k);
            for (size_t j = 0; j < b.cols; ++j) ci[j] += av * bk[j];
        }
    }
}

}  // namespace satseg
