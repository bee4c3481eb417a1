#include "mcbert/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "mcbert/errors.hpp"

namespace mcbert {

namespace op = ops;

namespace {

Tensor reduce(Tape* tape, const Tensor& total, int64_t count, Reduction reduction) {
    if (reduction == Reduction::mean && count > 0) {
        return op::affine(tape, total, 1.0 / static_cast<double>(count), 0.0);
    }
    return total;
}

} // namespace

Tensor nll_loss(Tape* tape, const Tensor& logits, const std::vector<int64_t>& targets,
                Reduction reduction) {
    if (logits.rows() != static_cast<int64_t>(targets.size())) {
        throw DimensionError("nll_loss: one target per logit row required");
    }
    if (targets.empty()) {
        return Tensor::scalar(0.0);
    }
    Tensor logp = op::log_softmax(tape, logits);
    Tensor picked = op::select_per_row(tape, logp, targets);
    Tensor total = op::affine(tape, op::sum(tape, picked), -1.0, 0.0);
    return reduce(tape, total, static_cast<int64_t>(targets.size()), reduction);
}

Tensor mlm_loss(Tape* tape, const Tensor& masked_logits, const TokenSequence& x,
                const MaskedSequence& xm, Reduction reduction, uint64_t* zero_masked_counter) {
    if (xm.masked_positions.empty()) {
        if (zero_masked_counter) {
            ++*zero_masked_counter;
        }
        return Tensor::scalar(0.0);
    }
    std::vector<int64_t> targets;
    targets.reserve(xm.masked_positions.size());
    for (int32_t pos : xm.masked_positions) {
        targets.push_back(x.ids[static_cast<size_t>(pos)]);
    }
    return nll_loss(tape, masked_logits, targets, reduction);
}

int32_t sample_categorical(const double* probs, int64_t vocab, const std::vector<uint8_t>& allowed,
                           Rng& rng) {
    double total = 0.0;
    for (int64_t i = 0; i < vocab; ++i) {
        if (allowed[static_cast<size_t>(i)]) {
            total += probs[i];
        }
    }
    if (!(total > 0.0)) {
        throw NumericError("sample_categorical: no admissible probability mass");
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    int32_t last = -1;
    for (int64_t i = 0; i < vocab; ++i) {
        if (!allowed[static_cast<size_t>(i)]) {
            continue;
        }
        acc += probs[i];
        last = static_cast<int32_t>(i);
        if (u < acc) {
            return last;
        }
    }
    return last; // u landed on the total due to rounding
}

CorruptedSequence replace(const MaskedSequence& xm, const TokenSequence& x,
                          const ControllerDist& dist, Rng& rng) {
    if (dist.n < static_cast<int64_t>(xm.ids.size())) {
        throw DimensionError("replace: controller distribution rows do not cover the sequence");
    }
    CorruptedSequence out;
    out.ids = xm.ids;
    out.replaced.assign(xm.ids.size(), 0);
    std::vector<uint8_t> allowed(static_cast<size_t>(dist.vocab), 1);
    for (int32_t s = 0; s < Vocabulary::kNumSpecials; ++s) {
        allowed[static_cast<size_t>(s)] = 0;
    }
    // Non-masked positions keep x^M (== x there); masked ones draw from the
    // controller row with specials renormalized away.
    for (int32_t pos : xm.masked_positions) {
        const int32_t v = sample_categorical(dist.row(pos), dist.vocab, allowed, rng);
        out.ids[static_cast<size_t>(pos)] = v;
        out.replaced[static_cast<size_t>(pos)] = (v != x.ids[static_cast<size_t>(pos)]) ? 1 : 0;
    }
    return out;
}

double disc_prob(const std::vector<double>& w, const std::vector<double>& h) {
    if (w.size() != h.size()) {
        throw DimensionError("disc_prob: w and h must have equal dimension");
    }
    double dot = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
        dot += w[i] * h[i];
    }
    return op::sigmoid(nullptr, Tensor::scalar(dot)).item();
}

Tensor disc_loss(Tape* tape, const Tensor& probs, const std::vector<uint8_t>& z,
                 const std::vector<uint8_t>& include, Reduction reduction) {
    const int64_t n = probs.size();
    if (static_cast<int64_t>(z.size()) != n || static_cast<int64_t>(include.size()) != n) {
        throw DimensionError("disc_loss: flag vectors must match probs length");
    }
    Tensor w_orig = Tensor::zeros(probs.shape());
    Tensor w_repl = Tensor::zeros(probs.shape());
    int64_t count = 0;
    for (int64_t i = 0; i < n; ++i) {
        if (!include[static_cast<size_t>(i)]) {
            continue;
        }
        ++count;
        (z[static_cast<size_t>(i)] ? w_repl : w_orig).values()[static_cast<size_t>(i)] = 1.0;
    }
    Tensor log_p = op::log_clamped(tape, probs);
    Tensor log_q = op::log_clamped(tape, op::affine(tape, probs, -1.0, 1.0));
    Tensor total = op::add(tape, op::sum(tape, op::mul(tape, log_p, w_orig)),
                           op::sum(tape, op::mul(tape, log_q, w_repl)));
    return reduce(tape, op::affine(tape, total, -1.0, 0.0), count, reduction);
}

std::vector<int32_t> electra_sample_positions(const std::vector<int32_t>& masked_positions,
                                              int64_t n, Rng& rng, bool* flagged) {
    if (flagged) {
        *flagged = false;
    }
    const int64_t target = (n + 1) / 2;
    const int64_t m = static_cast<int64_t>(masked_positions.size());
    if (m >= target) {
        if (flagged && m > target) {
            *flagged = true;
        }
        return masked_positions;
    }
    std::vector<uint8_t> is_masked(static_cast<size_t>(n), 0);
    for (int32_t pos : masked_positions) {
        is_masked[static_cast<size_t>(pos)] = 1;
    }
    std::vector<int32_t> pool;
    pool.reserve(static_cast<size_t>(n - m));
    for (int64_t i = 0; i < n; ++i) {
        if (!is_masked[static_cast<size_t>(i)]) {
            pool.push_back(static_cast<int32_t>(i));
        }
    }
    // Partial Fisher-Yates: the first (target - m) entries form a uniform
    // subset of the non-masked positions.
    const int64_t need = target - m;
    for (int64_t i = 0; i < need; ++i) {
        const int64_t j = i + rng.uniform_int(static_cast<int64_t>(pool.size()) - i);
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    std::vector<int32_t> out = masked_positions;
    out.insert(out.end(), pool.begin(), pool.begin() + need);
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

std::vector<CandidateSet> make_candidates(const TokenSequence& x, const CorruptedSequence& xr,
                                          const ControllerDist& dist, int64_t k, Rng& rng,
                                          const std::vector<uint8_t>& include, bool leaky) {
    const int64_t n = x.length();
    if (k < 2) {
        throw ConfigError("candidate sets need k >= 2");
    }
    if (dist.n < n || static_cast<int64_t>(xr.ids.size()) != n ||
        static_cast<int64_t>(include.size()) != n) {
        throw DimensionError("build_candidates: inputs do not cover the sequence");
    }
    if (dist.vocab - Vocabulary::kNumSpecials < k) {
        throw SupportError("vocabulary too small: need |V \\ specials| >= k");
    }
    std::vector<CandidateSet> out;
    std::vector<double> work(static_cast<size_t>(dist.vocab));
    for (int64_t i = 0; i < n; ++i) {
        if (!include[static_cast<size_t>(i)]) {
            continue;
        }
        const int32_t xi = x.ids[static_cast<size_t>(i)];
        const bool repl = xr.replaced[static_cast<size_t>(i)] != 0;

        // Negative pool: the controller row minus specials and minus x_i (as a
        // negative it would either shadow [NOTA] or duplicate the listed
        // truth). x^R_i stays eligible as a distractor.
        std::copy(dist.row(i), dist.row(i) + dist.vocab, work.begin());
        std::vector<uint8_t> allowed(static_cast<size_t>(dist.vocab), 1);
        for (int32_t s = 0; s < Vocabulary::kNumSpecials; ++s) {
            allowed[static_cast<size_t>(s)] = 0;
        }
        allowed[static_cast<size_t>(xi)] = 0;

        int64_t num_neg;
        CandidateSet cs;
        cs.position = static_cast<int32_t>(i);
        if (leaky) {
            num_neg = k - 1;
            cs.candidates.push_back(xi);
        } else if (repl) {
            num_neg = k - 2;
            cs.candidates.push_back(xi);
            cs.candidates.push_back(Vocabulary::kNota);
        } else {
            num_neg = k - 1;
            cs.candidates.push_back(Vocabulary::kNota);
        }
        for (int64_t j = 0; j < num_neg; ++j) {
            const int32_t neg = sample_categorical(work.data(), dist.vocab, allowed, rng);
            allowed[static_cast<size_t>(neg)] = 0; // without replacement
            cs.candidates.push_back(neg);
        }
        // Shuffle so the answer position carries no signal.
        const int64_t sz = static_cast<int64_t>(cs.candidates.size());
        for (int64_t a = sz - 1; a > 0; --a) {
            const int64_t b = rng.uniform_int(a + 1);
            std::swap(cs.candidates[static_cast<size_t>(a)], cs.candidates[static_cast<size_t>(b)]);
        }
        const int32_t target_id = (leaky || repl) ? xi : Vocabulary::kNota;
        cs.target_index = static_cast<int32_t>(
            std::find(cs.candidates.begin(), cs.candidates.end(), target_id) -
            cs.candidates.begin());
        out.push_back(std::move(cs));
    }
    return out;
}

} // namespace

std::vector<CandidateSet> build_candidates(const TokenSequence& x, const CorruptedSequence& xr,
                                           const ControllerDist& dist, int64_t k, Rng& rng,
                                           const std::vector<uint8_t>& include) {
    return make_candidates(x, xr, dist, k, rng, include, false);
}

std::vector<CandidateSet> leaky_candidates(const TokenSequence& x, const CorruptedSequence& xr,
                                           const ControllerDist& dist, int64_t k, Rng& rng,
                                           const std::vector<uint8_t>& include) {
    return make_candidates(x, xr, dist, k, rng, include, true);
}

void validate_candidate_set(const CandidateSet& cs, int64_t k, int32_t x_i, bool replaced,
                            bool allow_nota) {
    if (static_cast<int64_t>(cs.candidates.size()) != k) {
        throw NumericError("candidate set has wrong size");
    }
    int nota = 0, truth = 0;
    for (size_t a = 0; a < cs.candidates.size(); ++a) {
        const int32_t c = cs.candidates[a];
        if (c == Vocabulary::kNota) {
            ++nota;
        } else if (Vocabulary::is_special(c)) {
            throw NumericError("special token used as candidate");
        }
        if (c == x_i) {
            ++truth;
        }
        for (size_t b = a + 1; b < cs.candidates.size(); ++b) {
            if (cs.candidates[b] == c) {
                throw NumericError("duplicate candidate");
            }
        }
    }
    if (allow_nota) {
        if (nota != 1) {
            throw NumericError("[NOTA] must appear exactly once");
        }
        if (replaced && truth != 1) {
            throw NumericError("replaced position must list the ground truth once");
        }
        if (!replaced && truth != 0) {
            throw NumericError("non-replaced position must not list x_i (it would shadow [NOTA])");
        }
        const int32_t want = replaced ? x_i : Vocabulary::kNota;
        if (cs.candidates[static_cast<size_t>(cs.target_index)] != want) {
            throw NumericError("target_index does not point at the label");
        }
    } else {
        if (nota != 0) {
            throw NumericError("leaky sets must not contain [NOTA]");
        }
        if (truth != 1 || cs.candidates[static_cast<size_t>(cs.target_index)] != x_i) {
            throw NumericError("leaky sets must target the input token");
        }
    }
    if (cs.target_index < 0 || cs.target_index >= k) {
        throw NumericError("target not in candidate set");
    }
}

Tensor candidate_distribution(Tape* tape, const Tensor& hidden, const Tensor& emb,
                              const std::vector<int64_t>& cand_ids, int64_t k) {
    return op::softmax(tape, op::cand_scores(tape, hidden, emb, cand_ids, k));
}

Tensor mc_loss(Tape* tape, const Tensor& cand_log_probs, const std::vector<int64_t>& target_idx,
               Reduction reduction) {
    if (cand_log_probs.rows() != static_cast<int64_t>(target_idx.size())) {
        throw DimensionError("mc_loss: one target per row required");
    }
    if (target_idx.empty()) {
        return Tensor::scalar(0.0);
    }
    for (int64_t t : target_idx) {
        if (t < 0 || t >= cand_log_probs.last_dim()) {
            throw NumericError("mc_loss: target not in candidate set");
        }
    }
    Tensor picked = op::select_per_row(tape, cand_log_probs, target_idx);
    Tensor total = op::affine(tape, op::sum(tape, picked), -1.0, 0.0);
    return reduce(tape, total, static_cast<int64_t>(target_idx.size()), reduction);
}

Tensor combined_loss(Tape* tape, const Tensor& mlm, const Tensor& task, double lambda) {
    if (!(lambda > 0.0)) {
        throw ConfigError("combined_loss: lambda must be positive");
    }
    return op::add(tape, mlm, op::affine(tape, task, lambda, 0.0));
}

std::vector<uint8_t> non_special_positions(const TokenSequence& x) {
    std::vector<uint8_t> out(x.ids.size(), 0);
    for (size_t i = 0; i < x.ids.size(); ++i) {
        out[i] = Vocabulary::is_special(x.ids[i]) ? 0 : 1;
    }
    return out;
}

} // namespace mcbert
