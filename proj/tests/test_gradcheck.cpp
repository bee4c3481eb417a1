#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mcbert/ops.hpp"
#include "test_util.hpp"

using namespace mcbert;
namespace op = mcbert::ops;
using test_util::grad_check;
using test_util::random_tensor;
using test_util::weighted_sum;

namespace {

// Each differentiable op gets >= 20 random shape/seed combinations checked
// against central finite differences at 1e-5 with 64-bit arithmetic.
constexpr int kTrials = 20;
constexpr double kTol = 1e-5;

Shape random_matrix_shape(Rng& rng) {
    return {2 + rng.uniform_int(5), 2 + rng.uniform_int(7)};
}

} // namespace

TEST_CASE("gradcheck: elementwise ops") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(100 + static_cast<uint64_t>(t));
        Shape shape = random_matrix_shape(rng);
        Tensor a = random_tensor(shape, rng);
        Tensor b = random_tensor(shape, rng);

        auto check = [&](const char* name, const std::function<Tensor(Tape*)>& f,
                         std::vector<Tensor> leaves) {
            auto res = grad_check(f, leaves);
            INFO(name << " trial " << t << " rel err " << res.max_rel_err);
            CHECK(res.max_rel_err < kTol);
        };

        check("add", [&](Tape* tp) { Rng w(300 + t); return weighted_sum(tp, op::add(tp, a, b), w); },
              {a, b});
        check("mul", [&](Tape* tp) { Rng w(301 + t); return weighted_sum(tp, op::mul(tp, a, b), w); },
              {a, b});
        check("affine",
              [&](Tape* tp) { Rng w(302 + t); return weighted_sum(tp, op::affine(tp, a, 1.7, -0.3), w); },
              {a});
        check("sigmoid",
              [&](Tape* tp) { Rng w(303 + t); return weighted_sum(tp, op::sigmoid(tp, a), w); }, {a});
        check("gelu", [&](Tape* tp) { Rng w(304 + t); return weighted_sum(tp, op::gelu(tp, a), w); },
              {a});
    }
}

TEST_CASE("gradcheck: log_clamped away from the clamp") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(400 + static_cast<uint64_t>(t));
        Tensor a = Tensor::zeros(random_matrix_shape(rng), true);
        for (auto& v : a.values()) {
            v = 0.05 + rng.uniform(); // keep x - step well above the clamp
        }
        auto res = grad_check(
            [&](Tape* tp) { Rng w(410 + t); return weighted_sum(tp, op::log_clamped(tp, a), w); }, {a});
        CHECK(res.max_rel_err < kTol);
    }
}

TEST_CASE("gradcheck: softmax and log_softmax") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(500 + static_cast<uint64_t>(t));
        Tensor a = random_tensor(random_matrix_shape(rng), rng, 2.0);
        auto res1 = grad_check(
            [&](Tape* tp) { Rng w(510 + t); return weighted_sum(tp, op::softmax(tp, a), w); }, {a});
        CHECK(res1.max_rel_err < kTol);
        auto res2 = grad_check(
            [&](Tape* tp) { Rng w(520 + t); return weighted_sum(tp, op::log_softmax(tp, a), w); }, {a});
        CHECK(res2.max_rel_err < kTol);
    }
}

TEST_CASE("gradcheck: log_softmax length-7 vector at 1e-6") {
    Rng rng(42);
    Tensor a = random_tensor({1, 7}, rng, 2.0);
    auto res = grad_check(
        [&](Tape* tp) { Rng w(43); return weighted_sum(tp, op::log_softmax(tp, a), w); }, {a});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: sigmoid derivative identity at 1e-6") {
    Rng rng(44);
    Tensor a = random_tensor({3, 4}, rng, 3.0);
    Tape tape;
    Tensor y = op::sigmoid(&tape, a);
    Tensor loss = op::sum(&tape, y);
    tape.backward(loss);
    for (size_t i = 0; i < a.values().size(); ++i) {
        const double s = y.values()[i];
        CHECK(a.grad_ref()[i] == doctest::Approx(s * (1.0 - s)).epsilon(1e-12));
    }
    auto res = grad_check([&](Tape* tp) { return op::sum(tp, op::sigmoid(tp, a)); }, {a});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: matmul family") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(600 + static_cast<uint64_t>(t));
        const int64_t m = 2 + rng.uniform_int(4);
        const int64_t k = 2 + rng.uniform_int(5);
        const int64_t n = 2 + rng.uniform_int(4);
        Tensor a = random_tensor({m, k}, rng);
        Tensor b = random_tensor({k, n}, rng);
        Tensor bt = random_tensor({n, k}, rng);
        auto res1 = grad_check(
            [&](Tape* tp) { Rng w(610 + t); return weighted_sum(tp, op::matmul(tp, a, b), w); },
            {a, b});
        CHECK(res1.max_rel_err < kTol);
        auto res2 = grad_check(
            [&](Tape* tp) { Rng w(620 + t); return weighted_sum(tp, op::matmul_nt(tp, a, bt), w); },
            {a, bt});
        CHECK(res2.max_rel_err < kTol);
    }
}

TEST_CASE("gradcheck: sum(matmul) on 3x4 * 4x2 at 1e-6") {
    Rng rng(45);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    auto res = grad_check([&](Tape* tp) { return op::sum(tp, op::matmul(tp, a, b)); }, {a, b});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: bmm both orientations") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(700 + static_cast<uint64_t>(t));
        const int64_t g = 1 + rng.uniform_int(3);
        const int64_t m = 2 + rng.uniform_int(3);
        const int64_t k = 2 + rng.uniform_int(3);
        const int64_t n = 2 + rng.uniform_int(3);
        Tensor a = random_tensor({g, m, k}, rng);
        Tensor b = random_tensor({g, k, n}, rng);
        Tensor bt = random_tensor({g, n, k}, rng);
        auto res1 = grad_check(
            [&](Tape* tp) { Rng w(710 + t); return weighted_sum(tp, op::bmm(tp, a, b, false), w); },
            {a, b});
        CHECK(res1.max_rel_err < kTol);
        auto res2 = grad_check(
            [&](Tape* tp) { Rng w(720 + t); return weighted_sum(tp, op::bmm(tp, a, bt, true), w); },
            {a, bt});
        CHECK(res2.max_rel_err < kTol);
    }
}

TEST_CASE("gradcheck: layer_norm including gain and bias") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(800 + static_cast<uint64_t>(t));
        const int64_t rows = 1 + rng.uniform_int(4);
        const int64_t d = 3 + rng.uniform_int(6);
        Tensor x = random_tensor({rows, d}, rng, 2.0);
        Tensor gain = random_tensor({d}, rng, 0.5);
        for (auto& v : gain.values()) {
            v += 1.0;
        }
        Tensor bias = random_tensor({d}, rng, 0.5);
        auto res = grad_check(
            [&](Tape* tp) {
                Rng w(810 + t);
                return weighted_sum(tp, op::layer_norm(tp, x, gain, bias, 1e-8), w);
            },
            {x, gain, bias});
        CHECK(res.max_rel_err < kTol);
    }
}

TEST_CASE("gradcheck: layer_norm random 4x8 at 1e-5") {
    Rng rng(46);
    Tensor x = random_tensor({4, 8}, rng, 2.0);
    Tensor gain = Tensor::full({8}, 1.0, true);
    Tensor bias = Tensor::zeros({8}, true);
    auto res = grad_check(
        [&](Tape* tp) {
            Rng w(47);
            return weighted_sum(tp, op::layer_norm(tp, x, gain, bias, 1e-8), w);
        },
        {x, gain, bias});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: gather/select/cand_scores/permutes/reductions") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(900 + static_cast<uint64_t>(t));
        const int64_t v = 4 + rng.uniform_int(4);
        const int64_t e = 3 + rng.uniform_int(4);
        Tensor emb = random_tensor({v, e}, rng);
        std::vector<int64_t> ids;
        const int64_t n = 3 + rng.uniform_int(4);
        for (int64_t i = 0; i < n; ++i) {
            ids.push_back(rng.uniform_int(v));
        }
        auto res1 = grad_check(
            [&](Tape* tp) { Rng w(910 + t); return weighted_sum(tp, op::gather_rows(tp, emb, ids), w); },
            {emb});
        CHECK(res1.max_rel_err < kTol);

        Tensor h = random_tensor({n, e}, rng);
        const int64_t k = 2 + rng.uniform_int(2);
        std::vector<int64_t> cands;
        for (int64_t i = 0; i < n * k; ++i) {
            cands.push_back(rng.uniform_int(v));
        }
        auto res2 = grad_check(
            [&](Tape* tp) {
                Rng w(920 + t);
                return weighted_sum(tp, op::cand_scores(tp, h, emb, cands, k), w);
            },
            {h, emb});
        CHECK(res2.max_rel_err < kTol);

        Tensor x = random_tensor({n, v}, rng);
        std::vector<int64_t> sel;
        for (int64_t i = 0; i < n; ++i) {
            sel.push_back(rng.uniform_int(v));
        }
        auto res3 = grad_check(
            [&](Tape* tp) {
                Rng w(930 + t);
                return weighted_sum(tp, op::select_per_row(tp, x, sel), w);
            },
            {x});
        CHECK(res3.max_rel_err < kTol);

        const int64_t B = 1 + rng.uniform_int(2), seq = 2 + rng.uniform_int(2), H = 2;
        Tensor xs = random_tensor({B * seq, H * e}, rng);
        auto res4 = grad_check(
            [&](Tape* tp) {
                Rng w(940 + t);
                return weighted_sum(
                    tp, op::merge_heads(tp, op::split_heads(tp, xs, B, seq, H), B, seq, H), w);
            },
            {xs});
        CHECK(res4.max_rel_err < kTol);

        auto res5 = grad_check([&](Tape* tp) { return op::mean(tp, op::mul(tp, x, x)); }, {x});
        CHECK(res5.max_rel_err < kTol);
        auto res6 = grad_check(
            [&](Tape* tp) { Rng w(950 + t); return weighted_sum(tp, op::add_rowvec(tp, x, emb.has_grad() ? Tensor::zeros({v}, true) : random_tensor({v}, rng)), w); },
            {x});
        CHECK(res6.max_rel_err < kTol);
    }
}

TEST_CASE("gradcheck: dropout with a fixed mask seed") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(1000 + static_cast<uint64_t>(t));
        Tensor x = random_tensor({4, 6}, rng);
        const uint64_t seed = 5000 + static_cast<uint64_t>(t);
        auto res = grad_check(
            [&](Tape* tp) {
                Rng drop(seed); // same mask every evaluation
                Rng w(1010 + t);
                return weighted_sum(tp, op::dropout(tp, x, 0.3, drop), w);
            },
            {x});
        CHECK(res.max_rel_err < kTol);
    }
}
