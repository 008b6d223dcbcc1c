#include "kinseq/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace kinseq {

namespace {

// The model matrices are tiny (tens of rows); spawning a team below this
// much work costs more than it buys.
constexpr index_t kParGrain = 1 << 16;

inline void row_times_matrix(const double* arow, const double* b, double* crow, index_t k,
                             index_t n) {
    std::memset(crow, 0, static_cast<std::size_t>(n) * sizeof(double));
    for (index_t p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b + p * n;
        for (index_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline double dot(const double* x, const double* y, index_t n) {
    double s = 0.0;
    for (index_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

inline void softmax_row(const double* x, double* y, index_t cols) {
    double mx = x[0];
    for (index_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (index_t j = 0; j < cols; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    const double inv = 1.0 / sum;
    for (index_t j = 0; j < cols; ++j) y[j] *= inv;
}

inline void layer_norm_row(const double* x, const double* gain, const double* bias, double* y,
                           double* xhat, double* inv_std, index_t cols, double eps) {
    double mu = 0.0;
    for (index_t j = 0; j < cols; ++j) mu += x[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (index_t j = 0; j < cols; ++j) {
        const double d = x[j] - mu;
        var += d * d;
    }
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    *inv_std = is;
    for (index_t j = 0; j < cols; ++j) {
        xhat[j] = (x[j] - mu) * is;
        y[j] = xhat[j] * gain[j] + bias[j];
    }
}

}  // namespace

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, index_t m, index_t k, index_t n) {
    for (index_t i = 0; i < m; ++i) row_times_matrix(a + i * k, b, c + i * n, k, n);
}

void matmul_nt_acc(const double* a, const double* bt, double* c, index_t m, index_t k, index_t n) {
    for (index_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (index_t j = 0; j < n; ++j) crow[j] += dot(arow, bt + j * k, k);
    }
}

void matmul_tn_acc(const double* a, const double* b, double* c, index_t m, index_t k, index_t n) {
    for (index_t p = 0; p < k; ++p) {
        double* crow = c + p * n;
        for (index_t i = 0; i < m; ++i) {
            const double av = a[i * k + p];
            const double* brow = b + i * n;
            for (index_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void softmax_rows(const double* x, double* y, index_t rows, index_t cols) {
    for (index_t r = 0; r < rows; ++r) softmax_row(x + r * cols, y + r * cols, cols);
}

void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     double* xhat, double* inv_std, index_t rows, index_t cols, double eps) {
    for (index_t r = 0; r < rows; ++r)
        layer_norm_row(x + r * cols, gain, bias, y + r * cols, xhat + r * cols, inv_std + r, cols,
                       eps);
}

}  // namespace serial

namespace kernels {

void matmul_nn(const double* a, const double* b, double* c, index_t m, index_t k, index_t n) {
#pragma omp parallel for schedule(static) if (m * k * n >= kParGrain)
    for (index_t i = 0; i < m; ++i) row_times_matrix(a + i * k, b, c + i * n, k, n);
}

void matmul_nt_acc(const double* a, const double* bt, double* c, index_t m, index_t k, index_t n) {
#pragma omp parallel for schedule(static) if (m * k * n >= kParGrain)
    for (index_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (index_t j = 0; j < n; ++j) crow[j] += dot(arow, bt + j * k, k);
    }
}

void matmul_tn_acc(const double* a, const double* b, double* c, index_t m, index_t k, index_t n) {
    // parallel over output rows p; each c row is owned by one thread
#pragma omp parallel for schedule(static) if (m * k * n >= kParGrain)
    for (index_t p = 0; p < k; ++p) {
        double* crow = c + p * n;
        for (index_t i = 0; i < m; ++i) {
            const double av = a[i * k + p];
            const double* brow = b + i * n;
            for (index_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void softmax_rows(const double* x, double* y, index_t rows, index_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols >= kParGrain)
    for (index_t r = 0; r < rows; ++r) softmax_row(x + r * cols, y + r * cols, cols);
}

void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     double* xhat, double* inv_std, index_t rows, index_t cols, double eps) {
#pragma omp parallel for schedule(static) if (rows * cols >= kParGrain)
    for (index_t r = 0; r < rows; ++r)
        layer_norm_row(x + r * cols, gain, bias, y + r * cols, xhat + r * cols, inv_std + r, cols,
                       eps);
}

}  // namespace kernels

}  // namespace kinseq
