#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <vector>

#include "mcbert/kernels.hpp"
#include "mcbert/rng.hpp"

using namespace mcbert;
using kernels::Exec;

namespace {

std::vector<double> random_vec(int64_t n, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) {
        x = 2.0 * rng.uniform() - 1.0;
    }
    return v;
}

// Plain triple loop, the reference the tuned kernels are checked against.
void naive_gemm(const std::vector<double>& a, const std::vector<double>& b,
                std::vector<double>& c, int64_t m, int64_t k, int64_t n,
                bool ta, bool tb) {
    c.assign(static_cast<size_t>(m * n), 0.0);
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p) {
                const double av = ta ? a[static_cast<size_t>(p * m + i)] : a[static_cast<size_t>(i * k + p)];
                const double bv = tb ? b[static_cast<size_t>(j * k + p)] : b[static_cast<size_t>(p * n + j)];
                s += av * bv;
            }
            c[static_cast<size_t>(i * n + j)] = s;
        }
    }
}

} // namespace

TEST_CASE("gemm_nn matches naive reference on assorted shapes") {
    Rng rng(11);
    for (auto [m, k, n] : std::vector<std::array<int64_t, 3>>{
             {1, 1, 1}, {2, 3, 4}, {5, 7, 3}, {8, 16, 8}, {13, 9, 17}, {32, 128, 64}}) {
        auto a = random_vec(m * k, rng);
        auto b = random_vec(k * n, rng);
        std::vector<double> want;
        naive_gemm(a, b, want, m, k, n, false, false);
        std::vector<double> got(static_cast<size_t>(m * n), -1.0);
        kernels::gemm_nn(a.data(), b.data(), got.data(), m, k, n, false, Exec::serial);
        for (size_t i = 0; i < want.size(); ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("gemm_nt and gemm_tn match naive reference") {
    Rng rng(12);
    const int64_t m = 9, k = 21, n = 6;
    auto a = random_vec(m * k, rng);

    SUBCASE("nt") {
        auto b = random_vec(n * k, rng); // b is (n,k)
        std::vector<double> want;
        naive_gemm(a, b, want, m, k, n, false, true);
        std::vector<double> got(static_cast<size_t>(m * n));
        kernels::gemm_nt(a.data(), b.data(), got.data(), m, k, n, false, Exec::serial);
        for (size_t i = 0; i < want.size(); ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
    SUBCASE("tn") {
        // C (k,n) = A^T B with A (m,k), B (m,n)
        auto b = random_vec(m * n, rng);
        std::vector<double> want;
        naive_gemm(a, b, want, k, m, n, true, false);
        std::vector<double> got(static_cast<size_t>(k * n));
        kernels::gemm_tn(a.data(), b.data(), got.data(), m, k, n, false, Exec::serial);
        for (size_t i = 0; i < want.size(); ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("accumulate flag adds on top of existing output") {
    Rng rng(13);
    const int64_t m = 4, k = 5, n = 3;
    auto a = random_vec(m * k, rng);
    auto b = random_vec(k * n, rng);
    std::vector<double> base = random_vec(m * n, rng);
    std::vector<double> got = base;
    kernels::gemm_nn(a.data(), b.data(), got.data(), m, k, n, true, Exec::serial);
    std::vector<double> prod;
    naive_gemm(a, b, prod, m, k, n, false, false);
    for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i] == doctest::Approx(base[i] + prod[i]).epsilon(1e-12));
    }
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
    Rng rng(14);
    for (auto [m, k, n] : std::vector<std::array<int64_t, 3>>{{7, 33, 15}, {64, 128, 128}}) {
        auto a = random_vec(m * k, rng);
        auto b = random_vec(k * n, rng);
        auto bt = random_vec(n * k, rng);
        std::vector<double> s(static_cast<size_t>(m * n)), p(static_cast<size_t>(m * n));
        kernels::gemm_nn(a.data(), b.data(), s.data(), m, k, n, false, Exec::serial);
        kernels::gemm_nn(a.data(), b.data(), p.data(), m, k, n, false, Exec::parallel);
        CHECK(s == p);
        kernels::gemm_nt(a.data(), bt.data(), s.data(), m, k, n, false, Exec::serial);
        kernels::gemm_nt(a.data(), bt.data(), p.data(), m, k, n, false, Exec::parallel);
        CHECK(s == p);
        auto b2 = random_vec(m * n, rng);
        std::vector<double> s2(static_cast<size_t>(k * n)), p2(static_cast<size_t>(k * n));
        kernels::gemm_tn(a.data(), b2.data(), s2.data(), m, k, n, false, Exec::serial);
        kernels::gemm_tn(a.data(), b2.data(), p2.data(), m, k, n, false, Exec::parallel);
        CHECK(s2 == p2);
    }
}

TEST_CASE("bmm equals slice-by-slice gemm") {
    Rng rng(15);
    const int64_t g = 5, m = 4, k = 6, n = 3;
    auto a = random_vec(g * m * k, rng);
    auto b = random_vec(g * k * n, rng);
    std::vector<double> got(static_cast<size_t>(g * m * n));
    kernels::bmm_nn(a.data(), b.data(), got.data(), g, m, k, n, false, Exec::parallel);
    for (int64_t s = 0; s < g; ++s) {
        std::vector<double> as(a.begin() + s * m * k, a.begin() + (s + 1) * m * k);
        std::vector<double> bs(b.begin() + s * k * n, b.begin() + (s + 1) * k * n);
        std::vector<double> want;
        naive_gemm(as, bs, want, m, k, n, false, false);
        for (int64_t i = 0; i < m * n; ++i) {
            CHECK(got[static_cast<size_t>(s * m * n + i)] ==
                  doctest::Approx(want[static_cast<size_t>(i)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax rows normalize; log form is its log") {
    Rng rng(16);
    const int64_t rows = 17, d = 23;
    auto x = random_vec(rows * d, rng);
    std::vector<double> y(x.size()), ly(x.size());
    kernels::softmax_rows(x.data(), y.data(), rows, d, Exec::parallel);
    kernels::log_softmax_rows(x.data(), ly.data(), rows, d, Exec::parallel);
    for (int64_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            s += y[static_cast<size_t>(i * d + j)];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (size_t i = 0; i < y.size(); ++i) {
        CHECK(std::fabs(std::log(y[i]) - ly[i]) < 1e-9);
    }
}

TEST_CASE("layer_norm rows have zero mean and unit variance before affine") {
    Rng rng(17);
    const int64_t rows = 6, d = 32;
    auto x = random_vec(rows * d, rng);
    std::vector<double> gain(static_cast<size_t>(d), 1.0), bias(static_cast<size_t>(d), 0.0);
    std::vector<double> y(x.size());
    kernels::layer_norm_rows(x.data(), gain.data(), bias.data(), y.data(), nullptr, nullptr,
                             rows, d, 1e-12, Exec::serial);
    for (int64_t i = 0; i < rows; ++i) {
        double m = 0.0, v = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            m += y[static_cast<size_t>(i * d + j)];
        }
        m /= static_cast<double>(d);
        for (int64_t j = 0; j < d; ++j) {
            const double c = y[static_cast<size_t>(i * d + j)] - m;
            v += c * c;
        }
        v /= static_cast<double>(d);
        CHECK(std::fabs(m) < 1e-10);
        CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
    }
}
