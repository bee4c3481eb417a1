#pragma once

#include <cstdint>

namespace mcbert::kernels {

// Every kernel exists in a serial and an OpenMP flavor. The parallel flavor
// only partitions output rows (or batch slices) across threads; the per-row
// arithmetic and accumulation order are identical, so results are bit-equal
// to the serial reference for any thread count.
enum class Exec { serial, parallel };

Exec default_exec();
void set_default_exec(Exec e);

// Cap the OpenMP team size (also settable via MC_PRETRAIN_THREADS).
void set_max_threads(int n);
int max_threads();

// C (m,n) = A (m,k) * B (k,n), row-major. acc=true accumulates into C.
void gemm_nn(const double* a, const double* b, double* c,
             int64_t m, int64_t k, int64_t n, bool acc, Exec exec);

// C (m,n) = A (m,k) * B^T where B is (n,k).
void gemm_nt(const double* a, const double* b, double* c,
             int64_t m, int64_t k, int64_t n, bool acc, Exec exec);

// C (k,n) = A^T * B where A is (m,k), B is (m,n).
void gemm_tn(const double* a, const double* b, double* c,
             int64_t m, int64_t k, int64_t n, bool acc, Exec exec);

// Batched variants over g independent slices.
void bmm_nn(const double* a, const double* b, double* c,
            int64_t g, int64_t m, int64_t k, int64_t n, bool acc, Exec exec);
void bmm_nt(const double* a, const double* b, double* c,
            int64_t g, int64_t m, int64_t k, int64_t n, bool acc, Exec exec);
void bmm_tn(const double* a, const double* b, double* c,
            int64_t g, int64_t m, int64_t k, int64_t n, bool acc, Exec exec);

// Row-wise softmax with max-subtraction, rows of width d.
void softmax_rows(const double* x, double* y, int64_t rows, int64_t d, Exec exec);
void log_softmax_rows(const double* x, double* y, int64_t rows, int64_t d, Exec exec);

// Row-wise layer norm; gain/bias have width d. mean/inv_std (length rows) are
// stashed for the backward pass and may be null in inference-only calls.
void layer_norm_rows(const double* x, const double* gain, const double* bias,
                     double* y, double* mean, double* inv_std,
                     int64_t rows, int64_t d, double eps, Exec exec);

} // namespace mcbert::kernels
