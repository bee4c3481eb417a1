// Micro-benchmark comparing the serial reference kernels against the
// OpenMP-parallel flavor at training-relevant shapes. Reports GFLOP/s and the
// parallel speedup per shape.

#include <array>
#include <chrono>
#include <cstdio>
#include <vector>

#include "mcbert/kernels.hpp"
#include "mcbert/rng.hpp"

using namespace mcbert;
using kernels::Exec;
using clock_type = std::chrono::steady_clock;

namespace {

double time_gemm(int64_t m, int64_t k, int64_t n, Exec exec, int reps) {
    Rng rng(1);
    std::vector<double> a(static_cast<size_t>(m * k)), b(static_cast<size_t>(k * n)),
        c(static_cast<size_t>(m * n));
    for (auto& x : a) x = rng.uniform();
    for (auto& x : b) x = rng.uniform();
    kernels::gemm_nn(a.data(), b.data(), c.data(), m, k, n, false, exec); // warm up
    const auto t0 = clock_type::now();
    for (int r = 0; r < reps; ++r) {
        kernels::gemm_nn(a.data(), b.data(), c.data(), m, k, n, false, exec);
    }
    const auto t1 = clock_type::now();
    return std::chrono::duration<double>(t1 - t0).count() / reps;
}

double time_rows(void (*fn)(const double*, double*, int64_t, int64_t, Exec),
                 int64_t rows, int64_t d, Exec exec, int reps) {
    Rng rng(2);
    std::vector<double> x(static_cast<size_t>(rows * d)), y(x.size());
    for (auto& v : x) v = rng.uniform();
    fn(x.data(), y.data(), rows, d, exec);
    const auto t0 = clock_type::now();
    for (int r = 0; r < reps; ++r) {
        fn(x.data(), y.data(), rows, d, exec);
    }
    const auto t1 = clock_type::now();
    return std::chrono::duration<double>(t1 - t0).count() / reps;
}

} // namespace

int main() {
    std::printf("%-28s %12s %12s %9s\n", "kernel", "serial GF/s", "omp GF/s", "speedup");

    const std::vector<std::array<int64_t, 3>> gemm_shapes = {
        {512, 128, 128}, {512, 128, 512}, {512, 512, 128},
        {1024, 128, 128}, {128, 128, 64}, {2048, 64, 64},
    };
    for (auto [m, k, n] : gemm_shapes) {
        const double flops = 2.0 * static_cast<double>(m) * k * n;
        const int reps = flops > 5e7 ? 20 : 100;
        const double ts = time_gemm(m, k, n, Exec::serial, reps);
        const double tp = time_gemm(m, k, n, Exec::parallel, reps);
        char name[64];
        std::snprintf(name, sizeof(name), "gemm_nn %lldx%lldx%lld",
                      static_cast<long long>(m), static_cast<long long>(k),
                      static_cast<long long>(n));
        std::printf("%-28s %12.2f %12.2f %8.2fx\n", name, flops / ts / 1e9, flops / tp / 1e9,
                    ts / tp);
    }

    for (auto [rows, d] : std::vector<std::array<int64_t, 2>>{{512, 128}, {2048, 512}}) {
        const double ts = time_rows(kernels::softmax_rows, rows, d, Exec::serial, 50);
        const double tp = time_rows(kernels::softmax_rows, rows, d, Exec::parallel, 50);
        char name[64];
        std::snprintf(name, sizeof(name), "softmax_rows %lldx%lld",
                      static_cast<long long>(rows), static_cast<long long>(d));
        // ~5 flops per element is a rough conversion, enough for comparison.
        const double flops = 5.0 * static_cast<double>(rows) * d;
        std::printf("%-28s %12.2f %12.2f %8.2fx\n", name, flops / ts / 1e9, flops / tp / 1e9,
                    ts / tp);
    }
    return 0;
}
