#pragma once

#include <cstdint>
#include <vector>

#include "mcbert/rng.hpp"
#include "mcbert/tensor.hpp"

namespace mcbert::ops {

// All ops compute eagerly and, when `tape` is non-null and some input requires
// a gradient, record a reverse closure on the tape. Passing tape = nullptr
// gives plain inference arithmetic on the same code path.

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);

// a is (rows, d), v is (d): broadcast add along rows (bias add).
Tensor add_rowvec(Tape* tape, const Tensor& a, const Tensor& v);

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);

// scale * a + shift, elementwise.
Tensor affine(Tape* tape, const Tensor& a, double scale, double shift);

// (M,K) x (K,N) -> (M,N)
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);

// (M,K) x (N,K)^T -> (M,N)
Tensor matmul_nt(Tape* tape, const Tensor& a, const Tensor& b);

// Batched: (G,m,k) x (G,k,n) -> (G,m,n); trans_b swaps b to (G,n,k).
Tensor bmm(Tape* tape, const Tensor& a, const Tensor& b, bool trans_b);

// (B*n, H*dh) -> (B*H, n, dh) and back. Pure permutations.
Tensor split_heads(Tape* tape, const Tensor& x, int64_t batch, int64_t seq, int64_t heads);
Tensor merge_heads(Tape* tape, const Tensor& x, int64_t batch, int64_t seq, int64_t heads);

// Row lookup: (V,e) gathered by ids -> (len(ids), e). Rows may repeat; the
// backward scatter-adds, which is exactly embedding-bag behaviour.
Tensor gather_rows(Tape* tape, const Tensor& emb, const std::vector<int64_t>& ids);

// scores[i][j] = dot(hidden[i], emb[cand_ids[i*k+j]]); hidden (N,e), emb (V,e)
// -> (N,k). The sparse version of hidden x emb^T restricted to candidates.
Tensor cand_scores(Tape* tape, const Tensor& hidden, const Tensor& emb,
                   const std::vector<int64_t>& cand_ids, int64_t k);

// y[i] = x[i, idx[i]] for x (N,M) -> (N).
Tensor select_per_row(Tape* tape, const Tensor& x, const std::vector<int64_t>& idx);

// Softmax family over the last axis, max-subtracted.
Tensor softmax(Tape* tape, const Tensor& x);
Tensor log_softmax(Tape* tape, const Tensor& x);

Tensor sigmoid(Tape* tape, const Tensor& x);
Tensor gelu(Tape* tape, const Tensor& x);

// log(max(x, 1e-12)): the clamp keeps saturated probabilities out of -inf.
Tensor log_clamped(Tape* tape, const Tensor& x);

// Row-wise layer norm over the last axis; gain/bias length = last axis.
Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-12);

// Inverted dropout with a caller-owned stream: mask entries are 0 or 1/(1-rate).
// Same seed, same mask, bit for bit.
Tensor dropout(Tape* tape, const Tensor& x, double rate, Rng& rng);

Tensor sum(Tape* tape, const Tensor& x);
Tensor mean(Tape* tape, const Tensor& x);

} // namespace mcbert::ops
