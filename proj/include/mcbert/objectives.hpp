#pragma once

#include <cstdint>
#include <vector>

#include "mcbert/data.hpp"
#include "mcbert/ops.hpp"
#include "mcbert/rng.hpp"
#include "mcbert/tensor.hpp"

namespace mcbert {

// Loss defaults from the published hyperparameter table.
constexpr double kDefaultLambdaMcBert = 20.0;
constexpr double kDefaultLambdaElectra = 50.0;
constexpr int64_t kDefaultNumCandidates = 10;

enum class Reduction { mean, sum };

// x^R plus the per-position replacement flags z_i = [x^R_i != x_i].
struct CorruptedSequence {
    std::vector<int32_t> ids;
    std::vector<uint8_t> replaced;
};

// The k-way choice set at one position. candidates holds exactly k distinct
// ids with [NOTA] exactly once; target_index points at [NOTA] when the input
// token is already correct, at x_i otherwise.
struct CandidateSet {
    int32_t position = 0;
    std::vector<int32_t> candidates;
    int32_t target_index = 0;
};

// Full-vocabulary controller distribution per position, detached from any
// graph: sampling is non-differentiable by design, so the controller only
// learns through its own MLM loss.
struct ControllerDist {
    const double* probs = nullptr; // (n, vocab) row-major
    int64_t n = 0;
    int64_t vocab = 0;
    const double* row(int64_t i) const { return probs + i * vocab; }
};

// Mean (or sum) of -log softmax(logits)[target] over the given rows. Backs
// both the MLM loss over masked positions and the full-vocabulary per-position
// loss of the harder discriminator variant.
Tensor nll_loss(Tape* tape, const Tensor& logits, const std::vector<int64_t>& targets,
                Reduction reduction);

// MLM loss over the masked positions of one sequence given full-vocab logits
// for those positions (one row per masked position, in order). Zero masked
// positions yields 0 and bumps the counter.
Tensor mlm_loss(Tape* tape, const Tensor& masked_logits, const TokenSequence& x,
                const MaskedSequence& xm, Reduction reduction = Reduction::mean,
                uint64_t* zero_masked_counter = nullptr);

// Sample one id from probs restricted to `allowed` (renormalized). Throws
// NumericError when no admissible mass remains.
int32_t sample_categorical(const double* probs, int64_t vocab, const std::vector<uint8_t>& allowed,
                           Rng& rng);

// x^R = Replace(x^M, G_ctrl): copy non-masked positions, sample masked ones
// from the controller row renormalized over non-special tokens.
CorruptedSequence replace(const MaskedSequence& xm, const TokenSequence& x,
                          const ControllerDist& dist, Rng& rng);

// sigmoid(w^T h): the one-weight binary head.
double disc_prob(const std::vector<double>& w, const std::vector<double>& h);

// Binary cross-entropy over the included positions: z=false positions score
// log p ("original"), z=true score log(1-p). Probabilities clamped at 1e-12.
Tensor disc_loss(Tape* tape, const Tensor& probs, const std::vector<uint8_t>& z,
                 const std::vector<uint8_t>& include, Reduction reduction = Reduction::mean);

// All masked positions plus uniformly drawn non-masked ones until the subset
// reaches ceil(n/2). If the masked positions already exceed half, returns just
// them and sets *flagged.
std::vector<int32_t> electra_sample_positions(const std::vector<int32_t>& masked_positions,
                                              int64_t n, Rng& rng, bool* flagged = nullptr);

// Candidate sets per Eq-5 semantics for every included position:
//   x^R_i == x_i: k-1 negatives (without replacement, controller-distributed,
//                 excluding x_i and specials) + [NOTA]; target [NOTA].
//   x^R_i != x_i: k-2 negatives (same pool; x^R_i stays eligible) + x_i +
//                 [NOTA]; target x_i.
// Candidate order is shuffled; target_index tracks the answer.
std::vector<CandidateSet> build_candidates(const TokenSequence& x, const CorruptedSequence& xr,
                                           const ControllerDist& dist, int64_t k, Rng& rng,
                                           const std::vector<uint8_t>& include);

// The label-leaking ablation: ground truth x_i in every set, no [NOTA].
std::vector<CandidateSet> leaky_candidates(const TokenSequence& x, const CorruptedSequence& xr,
                                           const ControllerDist& dist, int64_t k, Rng& rng,
                                           const std::vector<uint8_t>& include);

// Checks every structural invariant of one candidate set; throws on violation.
void validate_candidate_set(const CandidateSet& cs, int64_t k, int32_t x_i, bool replaced,
                            bool allow_nota = true);

// softmax over the k candidate scores Emb[cand]^T h per row.
Tensor candidate_distribution(Tape* tape, const Tensor& hidden, const Tensor& emb,
                              const std::vector<int64_t>& cand_ids, int64_t k);

// k-way cross entropy: mean of -log P(target) over rows of candidate
// log-probabilities.
Tensor mc_loss(Tape* tape, const Tensor& cand_log_probs, const std::vector<int64_t>& target_idx,
               Reduction reduction = Reduction::mean);

// L = mlm + lambda * task.
Tensor combined_loss(Tape* tape, const Tensor& mlm, const Tensor& task, double lambda);

// Positions eligible for the k-way loss: real tokens only (no CLS/SEP/PAD).
std::vector<uint8_t> non_special_positions(const TokenSequence& x);

} // namespace mcbert
