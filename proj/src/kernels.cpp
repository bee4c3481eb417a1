#include "mcbert/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <omp.h>

namespace mcbert::kernels {

namespace {

Exec g_default_exec = Exec::parallel;
int g_max_threads = 0; // 0 = use OpenMP default

int resolve_threads() {
    if (g_max_threads > 0) {
        return std::min(g_max_threads, omp_get_max_threads());
    }
    return omp_get_max_threads();
}

// One output row of C = A*B. Streams rows of B against register-held A
// elements; the C row stays hot in L1. k-unrolled by 8 so each pass over the
// C row amortizes its load/store across eight FMAs per element.
inline void gemm_nn_row(const double* a_row, const double* b, double* c_row,
                        int64_t k, int64_t n, bool acc) {
    if (!acc) {
        std::fill(c_row, c_row + n, 0.0);
    }
    int64_t p = 0;
    for (; p + 8 <= k; p += 8) {
        const double a0 = a_row[p], a1 = a_row[p + 1];
        const double a2 = a_row[p + 2], a3 = a_row[p + 3];
        const double a4 = a_row[p + 4], a5 = a_row[p + 5];
        const double a6 = a_row[p + 6], a7 = a_row[p + 7];
        const double* b0 = b + p * n;
        const double* b1 = b0 + n;
        const double* b2 = b1 + n;
        const double* b3 = b2 + n;
        const double* b4 = b3 + n;
        const double* b5 = b4 + n;
        const double* b6 = b5 + n;
        const double* b7 = b6 + n;
#pragma omp simd
        for (int64_t j = 0; j < n; ++j) {
            const double s0 = a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            const double s1 = a4 * b4[j] + a5 * b5[j] + a6 * b6[j] + a7 * b7[j];
            c_row[j] += s0 + s1;
        }
    }
    for (; p < k; ++p) {
        const double a0 = a_row[p];
        const double* b0 = b + p * n;
#pragma omp simd
        for (int64_t j = 0; j < n; ++j) {
            c_row[j] += a0 * b0[j];
        }
    }
}

// One output row of C = A*B^T: n dot products against rows of B, four at a
// time for instruction-level parallelism.
inline void gemm_nt_row(const double* a_row, const double* b, double* c_row,
                        int64_t k, int64_t n, bool acc) {
    int64_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const double* b0 = b + j * k;
        const double* b1 = b0 + k;
        const double* b2 = b1 + k;
        const double* b3 = b2 + k;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
        for (int64_t p = 0; p < k; ++p) {
            const double av = a_row[p];
            s0 += av * b0[p];
            s1 += av * b1[p];
            s2 += av * b2[p];
            s3 += av * b3[p];
        }
        if (acc) {
            c_row[j] += s0; c_row[j + 1] += s1; c_row[j + 2] += s2; c_row[j + 3] += s3;
        } else {
            c_row[j] = s0; c_row[j + 1] = s1; c_row[j + 2] = s2; c_row[j + 3] = s3;
        }
    }
    for (; j < n; ++j) {
        const double* brow = b + j * k;
        double s = 0.0;
#pragma omp simd reduction(+ : s)
        for (int64_t p = 0; p < k; ++p) {
            s += a_row[p] * brow[p];
        }
        c_row[j] = acc ? c_row[j] + s : s;
    }
}

inline void softmax_row(const double* x, double* y, int64_t d, bool log_form) {
    double mx = x[0];
    for (int64_t j = 1; j < d; ++j) {
        mx = std::max(mx, x[j]);
    }
    double sum = 0.0;
    for (int64_t j = 0; j < d; ++j) {
        const double e = std::exp(x[j] - mx);
        y[j] = e;
        sum += e;
    }
    if (log_form) {
        const double lse = std::log(sum) + mx;
        for (int64_t j = 0; j < d; ++j) {
            y[j] = x[j] - lse;
        }
    } else {
        const double inv = 1.0 / sum;
        for (int64_t j = 0; j < d; ++j) {
            y[j] *= inv;
        }
    }
}

inline void layer_norm_row(const double* x, const double* gain, const double* bias,
                           double* y, double* mean_out, double* inv_std_out,
                           int64_t d, double eps) {
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) {
        mean += x[j];
    }
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
        const double c = x[j] - mean;
        var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < d; ++j) {
        y[j] = (x[j] - mean) * inv_std * gain[j] + bias[j];
    }
    if (mean_out) {
        *mean_out = mean;
    }
    if (inv_std_out) {
        *inv_std_out = inv_std;
    }
}

} // namespace

Exec default_exec() { return g_default_exec; }
void set_default_exec(Exec e) { g_default_exec = e; }

void set_max_threads(int n) { g_max_threads = n; }
int max_threads() { return resolve_threads(); }

void gemm_nn(const double* a, const double* b, double* c,
             int64_t m, int64_t k, int64_t n, bool acc, Exec exec) {
    if (exec == Exec::parallel && m > 1) {
#pragma omp parallel for schedule(static) num_threads(resolve_threads())
        for (int64_t i = 0; i < m; ++i) {
            gemm_nn_row(a + i * k, b, c + i * n, k, n, acc);
        }
    } else {
        for (int64_t i = 0; i < m; ++i) {
            gemm_nn_row(a + i * k, b, c + i * n, k, n, acc);
        }
    }
}

void gemm_nt(const double* a, const double* b, double* c,
             int64_t m, int64_t k, int64_t n, bool acc, Exec exec) {
    if (exec == Exec::parallel && m > 1) {
#pragma omp parallel for schedule(static) num_threads(resolve_threads())
        for (int64_t i = 0; i < m; ++i) {
            gemm_nt_row(a + i * k, b, c + i * n, k, n, acc);
        }
    } else {
        for (int64_t i = 0; i < m; ++i) {
            gemm_nt_row(a + i * k, b, c + i * n, k, n, acc);
        }
    }
}

void gemm_tn(const double* a, const double* b, double* c,
             int64_t m, int64_t k, int64_t n, bool acc, Exec exec) {
    // C (k,n) += sum_i A[i,:]^T outer B[i,:]. Parallelizing over output rows
    // would need a k-major walk of A; instead split the k rows of C across
    // threads and let each thread scan A,B once. Each C row is still written
    // by exactly one thread in the same i order as the serial loop.
    const int threads = (exec == Exec::parallel && k > 1) ? resolve_threads() : 1;
    if (!acc) {
        std::fill(c, c + k * n, 0.0);
    }
    if (threads > 1) {
#pragma omp parallel num_threads(threads)
        {
            const int tid = omp_get_thread_num();
            const int nt = omp_get_num_threads();
            const int64_t chunk = (k + nt - 1) / nt;
            const int64_t r0 = std::min<int64_t>(k, static_cast<int64_t>(tid) * chunk);
            const int64_t r1 = std::min<int64_t>(k, r0 + chunk);
            for (int64_t i = 0; i < m; ++i) {
                const double* a_row = a + i * k;
                const double* b_row = b + i * n;
                for (int64_t r = r0; r < r1; ++r) {
                    const double av = a_row[r];
                    if (av == 0.0) {
                        continue;
                    }
                    double* c_row = c + r * n;
#pragma omp simd
                    for (int64_t j = 0; j < n; ++j) {
                        c_row[j] += av * b_row[j];
                    }
                }
            }
        }
    } else {
        for (int64_t i = 0; i < m; ++i) {
            const double* a_row = a + i * k;
            const double* b_row = b + i * n;
            for (int64_t r = 0; r < k; ++r) {
                const double av = a_row[r];
                if (av == 0.0) {
                    continue;
                }
                double* c_row = c + r * n;
#pragma omp simd
                for (int64_t j = 0; j < n; ++j) {
                    c_row[j] += av * b_row[j];
                }
            }
        }
    }
}

void bmm_nn(const double* a, const double* b, double* c,
            int64_t g, int64_t m, int64_t k, int64_t n, bool acc, Exec exec) {
    if (exec == Exec::parallel && g > 1) {
#pragma omp parallel for schedule(static) num_threads(resolve_threads())
        for (int64_t s = 0; s < g; ++s) {
            gemm_nn(a + s * m * k, b + s * k * n, c + s * m * n, m, k, n, acc, Exec::serial);
        }
    } else {
        for (int64_t s = 0; s < g; ++s) {
            gemm_nn(a + s * m * k, b + s * k * n, c + s * m * n, m, k, n, acc, Exec::serial);
        }
    }
}

void bmm_nt(const double* a, const double* b, double* c,
            int64_t g, int64_t m, int64_t k, int64_t n, bool acc, Exec exec) {
    if (exec == Exec::parallel && g > 1) {
#pragma omp parallel for schedule(static) num_threads(resolve_threads())
        for (int64_t s = 0; s < g; ++s) {
            gemm_nt(a + s * m * k, b + s * n * k, c + s * m * n, m, k, n, acc, Exec::serial);
        }
    } else {
        for (int64_t s = 0; s < g; ++s) {
            gemm_nt(a + s * m * k, b + s * n * k, c + s * m * n, m, k, n, acc, Exec::serial);
        }
    }
}

void bmm_tn(const double* a, const double* b, double* c,
            int64_t g, int64_t m, int64_t k, int64_t n, bool acc, Exec exec) {
    if (exec == Exec::parallel && g > 1) {
#pragma omp parallel for schedule(static) num_threads(resolve_threads())
        for (int64_t s = 0; s < g; ++s) {
            gemm_tn(a + s * m * k, b + s * m * n, c + s * k * n, m, k, n, acc, Exec::serial);
        }
    } else {
        for (int64_t s = 0; s < g; ++s) {
            gemm_tn(a + s * m * k, b + s * m * n, c + s * k * n, m, k, n, acc, Exec::serial);
        }
    }
}

void softmax_rows(const double* x, double* y, int64_t rows, int64_t d, Exec exec) {
    if (exec == Exec::parallel && rows > 1) {
#pragma omp parallel for schedule(static) num_threads(resolve_threads())
        for (int64_t i = 0; i < rows; ++i) {
            softmax_row(x + i * d, y + i * d, d, false);
        }
    } else {
        for (int64_t i = 0; i < rows; ++i) {
            softmax_row(x + i * d, y + i * d, d, false);
        }
    }
}

void log_softmax_rows(const double* x, double* y, int64_t rows, int64_t d, Exec exec) {
    if (exec == Exec::parallel && rows > 1) {
#pragma omp parallel for schedule(static) num_threads(resolve_threads())
        for (int64_t i = 0; i < rows; ++i) {
            softmax_row(x + i * d, y + i * d, d, true);
        }
    } else {
        for (int64_t i = 0; i < rows; ++i) {
            softmax_row(x + i * d, y + i * d, d, true);
        }
    }
}

void layer_norm_rows(const double* x, const double* gain, const double* bias,
                     double* y, double* mean, double* inv_std,
                     int64_t rows, int64_t d, double eps, Exec exec) {
    if (exec == Exec::parallel && rows > 1) {
#pragma omp parallel for schedule(static) num_threads(resolve_threads())
        for (int64_t i = 0; i < rows; ++i) {
            layer_norm_row(x + i * d, gain, bias, y + i * d,
                           mean ? mean + i : nullptr, inv_std ? inv_std + i : nullptr, d, eps);
        }
    } else {
        for (int64_t i = 0; i < rows; ++i) {
            layer_norm_row(x + i * d, gain, bias, y + i * d,
                           mean ? mean + i : nullptr, inv_std ? inv_std + i : nullptr, d, eps);
        }
    }
}

} // namespace mcbert::kernels
