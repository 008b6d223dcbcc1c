#pragma once

#include <cstdint>

// Dense double-precision kernels behind the tensor ops. Each kernel exists
// twice: kinseq::kernels:: carries OpenMP pragmas on its outer loop,
// kinseq::serial:: is the plain reference kept for testing. Both versions
// share the same inner-loop accumulation order, so outputs are bit-identical
// regardless of thread count; tests assert exactly that and tools/bench_kernels
// compares their throughput.

namespace kinseq {

using index_t = std::int64_t;

namespace serial {

// c[m x n] = a[m x k] * b[k x n]
void matmul_nn(const double* a, const double* b, double* c, index_t m, index_t k, index_t n);
// c[m x n] += a[m x k] * b_t[n x k]^T   (b stored row-major as [n x k])
void matmul_nt_acc(const double* a, const double* bt, double* c, index_t m, index_t k, index_t n);
// c[k x n] += a[m x k]^T * b[m x n]     (a stored row-major as [m x k])
void matmul_tn_acc(const double* a, const double* b, double* c, index_t m, index_t k, index_t n);

// y = rowwise softmax(x), x and y are [rows x cols]
void softmax_rows(const double* x, double* y, index_t rows, index_t cols);

// Row-wise layer normalization. xhat[r,c] = (x[r,c]-mu_r)*inv_std_r,
// y = xhat*gain + bias. inv_std has one entry per row.
void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     double* xhat, double* inv_std, index_t rows, index_t cols, double eps);

}  // namespace serial

namespace kernels {

void matmul_nn(const double* a, const double* b, double* c, index_t m, index_t k, index_t n);
void matmul_nt_acc(const double* a, const double* bt, double* c, index_t m, index_t k, index_t n);
void matmul_tn_acc(const double* a, const double* b, double* c, index_t m, index_t k, index_t n);
void softmax_rows(const double* x, double* y, index_t rows, index_t cols);
void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     double* xhat, double* inv_std, index_t rows, index_t cols, double eps);

}  // namespace kernels

}  // namespace kinseq
