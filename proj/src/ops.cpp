#include "mcbert/ops.hpp"

#include <cmath>

#include "mcbert/kernels.hpp"

namespace mcbert::ops {

namespace {

constexpr double kLogClamp = 1e-12;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

using kernels::Exec;

Exec exec() { return kernels::default_exec(); }

bool track(Tape* tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape) {
        return false;
    }
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) {
            return true;
        }
    }
    return false;
}

Tensor make_out(Shape shape, bool tracked) {
    Tensor t = Tensor::zeros(std::move(shape));
    t.set_requires_grad(tracked);
    return t;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

void require_last_axis(const Tensor& x, const char* what) {
    if (x.ndim() < 1 || x.last_dim() < 1) {
        throw DimensionError(std::string(what) + ": empty axis in " + shape_str(x.shape()));
    }
}

} // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const bool tracked = track(tape, {&a, &b});
    Tensor out = make_out(a.shape(), tracked);
    const int64_t n = a.size();
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
#pragma omp simd
    for (int64_t i = 0; i < n; ++i) {
        po[i] = pa[i] + pb[i];
    }
    if (tracked) {
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record(out, [an, bn, on, n] {
            const double* g = on->grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                double* da = an->grad.data();
#pragma omp simd
                for (int64_t i = 0; i < n; ++i) da[i] += g[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                double* db = bn->grad.data();
#pragma omp simd
                for (int64_t i = 0; i < n; ++i) db[i] += g[i];
            }
        });
    }
    return out;
}

Tensor add_rowvec(Tape* tape, const Tensor& a, const Tensor& v) {
    const int64_t d = a.last_dim();
    if (v.ndim() != 1 || v.size() != d) {
        throw DimensionError("add_rowvec: vector " + shape_str(v.shape()) +
                             " does not match last axis of " + shape_str(a.shape()));
    }
    const bool tracked = track(tape, {&a, &v});
    Tensor out = make_out(a.shape(), tracked);
    const int64_t rows = a.rows();
    const double* pa = a.data();
    const double* pv = v.data();
    double* po = out.data();
    for (int64_t i = 0; i < rows; ++i) {
#pragma omp simd
        for (int64_t j = 0; j < d; ++j) {
            po[i * d + j] = pa[i * d + j] + pv[j];
        }
    }
    if (tracked) {
        auto an = a.node(), vn = v.node(), on = out.node();
        tape->record(out, [an, vn, on, rows, d] {
            const double* g = on->grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                double* da = an->grad.data();
                const int64_t n = rows * d;
#pragma omp simd
                for (int64_t i = 0; i < n; ++i) da[i] += g[i];
            }
            if (vn->requires_grad) {
                vn->ensure_grad();
                double* dv = vn->grad.data();
                for (int64_t i = 0; i < rows; ++i) {
#pragma omp simd
                    for (int64_t j = 0; j < d; ++j) dv[j] += g[i * d + j];
                }
            }
        });
    }
    return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const bool tracked = track(tape, {&a, &b});
    Tensor out = make_out(a.shape(), tracked);
    const int64_t n = a.size();
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
#pragma omp simd
    for (int64_t i = 0; i < n; ++i) {
        po[i] = pa[i] * pb[i];
    }
    if (tracked) {
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record(out, [an, bn, on, n] {
            const double* g = on->grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                double* da = an->grad.data();
                const double* pb2 = bn->values.data();
#pragma omp simd
                for (int64_t i = 0; i < n; ++i) da[i] += g[i] * pb2[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                double* db = bn->grad.data();
                const double* pa2 = an->values.data();
#pragma omp simd
                for (int64_t i = 0; i < n; ++i) db[i] += g[i] * pa2[i];
            }
        });
    }
    return out;
}

Tensor affine(Tape* tape, const Tensor& a, double scale, double shift) {
    const bool tracked = track(tape, {&a});
    Tensor out = make_out(a.shape(), tracked);
    const int64_t n = a.size();
    const double* pa = a.data();
    double* po = out.data();
#pragma omp simd
    for (int64_t i = 0; i < n; ++i) {
        po[i] = scale * pa[i] + shift;
    }
    if (tracked) {
        auto an = a.node(), on = out.node();
        tape->record(out, [an, on, n, scale] {
            an->ensure_grad();
            double* da = an->grad.data();
            const double* g = on->grad.data();
#pragma omp simd
            for (int64_t i = 0; i < n; ++i) da[i] += scale * g[i];
        });
    }
    return out;
}

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const bool tracked = track(tape, {&a, &b});
    Tensor out = make_out({m, n}, tracked);
    kernels::gemm_nn(a.data(), b.data(), out.data(), m, k, n, false, exec());
    if (tracked) {
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record(out, [an, bn, on, m, k, n] {
            const double* g = on->grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                kernels::gemm_nt(g, bn->values.data(), an->grad.data(), m, n, k, true, exec());
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                kernels::gemm_tn(an->values.data(), g, bn->grad.data(), m, k, n, true, exec());
            }
        });
    }
    return out;
}

Tensor matmul_nt(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1)) {
        throw DimensionError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()) + "^T");
    }
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    const bool tracked = track(tape, {&a, &b});
    Tensor out = make_out({m, n}, tracked);
    kernels::gemm_nt(a.data(), b.data(), out.data(), m, k, n, false, exec());
    if (tracked) {
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record(out, [an, bn, on, m, k, n] {
            const double* g = on->grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                kernels::gemm_nn(g, bn->values.data(), an->grad.data(), m, n, k, true, exec());
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                kernels::gemm_tn(g, an->values.data(), bn->grad.data(), m, n, k, true, exec());
            }
        });
    }
    return out;
}

Tensor bmm(Tape* tape, const Tensor& a, const Tensor& b, bool trans_b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0)) {
        throw DimensionError("bmm: need 3-d tensors with equal batch, got " +
                             shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const int64_t g = a.dim(0), m = a.dim(1), k = a.dim(2);
    const int64_t n = trans_b ? b.dim(1) : b.dim(2);
    const int64_t bk = trans_b ? b.dim(2) : b.dim(1);
    if (bk != k) {
        throw DimensionError("bmm: contraction mismatch " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    const bool tracked = track(tape, {&a, &b});
    Tensor out = make_out({g, m, n}, tracked);
    if (trans_b) {
        kernels::bmm_nt(a.data(), b.data(), out.data(), g, m, k, n, false, exec());
    } else {
        kernels::bmm_nn(a.data(), b.data(), out.data(), g, m, k, n, false, exec());
    }
    if (tracked) {
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record(out, [an, bn, on, g, m, k, n, trans_b] {
            const double* go = on->grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                if (trans_b) {
                    // dA = dC * B, with B (g,n,k)
                    kernels::bmm_nn(go, bn->values.data(), an->grad.data(), g, m, n, k, true, exec());
                } else {
                    kernels::bmm_nt(go, bn->values.data(), an->grad.data(), g, m, n, k, true, exec());
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                if (trans_b) {
                    // dB (g,n,k) = dC^T * A
                    kernels::bmm_tn(go, an->values.data(), bn->grad.data(), g, m, n, k, true, exec());
                } else {
                    kernels::bmm_tn(an->values.data(), go, bn->grad.data(), g, m, k, n, true, exec());
                }
            }
        });
    }
    return out;
}

Tensor split_heads(Tape* tape, const Tensor& x, int64_t batch, int64_t seq, int64_t heads) {
    if (x.ndim() != 2 || x.dim(0) != batch * seq || x.dim(1) % heads != 0) {
        throw DimensionError("split_heads: bad input " + shape_str(x.shape()));
    }
    const int64_t dh = x.dim(1) / heads;
    const bool tracked = track(tape, {&x});
    Tensor out = make_out({batch * heads, seq, dh}, tracked);
    const double* px = x.data();
    double* po = out.data();
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t h = 0; h < heads; ++h) {
            for (int64_t t = 0; t < seq; ++t) {
                const double* src = px + (b * seq + t) * heads * dh + h * dh;
                double* dst = po + ((b * heads + h) * seq + t) * dh;
                std::copy(src, src + dh, dst);
            }
        }
    }
    if (tracked) {
        auto xn = x.node(), on = out.node();
        tape->record(out, [xn, on, batch, seq, heads, dh] {
            xn->ensure_grad();
            const double* g = on->grad.data();
            double* dx = xn->grad.data();
            for (int64_t b = 0; b < batch; ++b) {
                for (int64_t h = 0; h < heads; ++h) {
                    for (int64_t t = 0; t < seq; ++t) {
                        const double* src = g + ((b * heads + h) * seq + t) * dh;
                        double* dst = dx + (b * seq + t) * heads * dh + h * dh;
                        for (int64_t c = 0; c < dh; ++c) dst[c] += src[c];
                    }
                }
            }
        });
    }
    return out;
}

Tensor merge_heads(Tape* tape, const Tensor& x, int64_t batch, int64_t seq, int64_t heads) {
    if (x.ndim() != 3 || x.dim(0) != batch * heads || x.dim(1) != seq) {
        throw DimensionError("merge_heads: bad input " + shape_str(x.shape()));
    }
    const int64_t dh = x.dim(2);
    const bool tracked = track(tape, {&x});
    Tensor out = make_out({batch * seq, heads * dh}, tracked);
    const double* px = x.data();
    double* po = out.data();
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t h = 0; h < heads; ++h) {
            for (int64_t t = 0; t < seq; ++t) {
                const double* src = px + ((b * heads + h) * seq + t) * dh;
                double* dst = po + (b * seq + t) * heads * dh + h * dh;
                std::copy(src, src + dh, dst);
            }
        }
    }
    if (tracked) {
        auto xn = x.node(), on = out.node();
        tape->record(out, [xn, on, batch, seq, heads, dh] {
            xn->ensure_grad();
            const double* g = on->grad.data();
            double* dx = xn->grad.data();
            for (int64_t b = 0; b < batch; ++b) {
                for (int64_t h = 0; h < heads; ++h) {
                    for (int64_t t = 0; t < seq; ++t) {
                        const double* src = g + (b * seq + t) * heads * dh + h * dh;
                        double* dst = dx + ((b * heads + h) * seq + t) * dh;
                        for (int64_t c = 0; c < dh; ++c) dst[c] += src[c];
                    }
                }
            }
        });
    }
    return out;
}

Tensor gather_rows(Tape* tape, const Tensor& emb, const std::vector<int64_t>& ids) {
    if (emb.ndim() != 2) {
        throw DimensionError("gather_rows: table must be 2-d, got " + shape_str(emb.shape()));
    }
    const int64_t v = emb.dim(0), e = emb.dim(1);
    for (int64_t id : ids) {
        if (id < 0 || id >= v) {
            throw DimensionError("gather_rows: row index " + std::to_string(id) +
                                 " out of range for table " + shape_str(emb.shape()));
        }
    }
    const int64_t n = static_cast<int64_t>(ids.size());
    const bool tracked = track(tape, {&emb});
    Tensor out = make_out({n, e}, tracked);
    const double* pe = emb.data();
    double* po = out.data();
    for (int64_t i = 0; i < n; ++i) {
        std::copy(pe + ids[static_cast<size_t>(i)] * e, pe + (ids[static_cast<size_t>(i)] + 1) * e,
                  po + i * e);
    }
    if (tracked) {
        auto en = emb.node(), on = out.node();
        auto ids_copy = ids;
        tape->record(out, [en, on, ids_copy, e] {
            en->ensure_grad();
            const double* g = on->grad.data();
            double* de = en->grad.data();
            // Scatter-add must stay serial: repeated ids collide.
            for (size_t i = 0; i < ids_copy.size(); ++i) {
                double* dst = de + ids_copy[i] * e;
                const double* src = g + static_cast<int64_t>(i) * e;
#pragma omp simd
                for (int64_t c = 0; c < e; ++c) dst[c] += src[c];
            }
        });
    }
    return out;
}

Tensor cand_scores(Tape* tape, const Tensor& hidden, const Tensor& emb,
                   const std::vector<int64_t>& cand_ids, int64_t k) {
    if (hidden.ndim() != 2 || emb.ndim() != 2 || hidden.dim(1) != emb.dim(1)) {
        throw DimensionError("cand_scores: width mismatch " + shape_str(hidden.shape()) +
                             " vs " + shape_str(emb.shape()));
    }
    const int64_t n = hidden.dim(0), e = hidden.dim(1), v = emb.dim(0);
    if (static_cast<int64_t>(cand_ids.size()) != n * k) {
        throw DimensionError("cand_scores: expected " + std::to_string(n * k) + " candidate ids");
    }
    for (int64_t id : cand_ids) {
        if (id < 0 || id >= v) {
            throw DimensionError("cand_scores: missing embedding row " + std::to_string(id));
        }
    }
    const bool tracked = track(tape, {&hidden, &emb});
    Tensor out = make_out({n, k}, tracked);
    const double* ph = hidden.data();
    const double* pe = emb.data();
    double* po = out.data();
    for (int64_t i = 0; i < n; ++i) {
        const double* h = ph + i * e;
        for (int64_t j = 0; j < k; ++j) {
            const double* w = pe + cand_ids[static_cast<size_t>(i * k + j)] * e;
            double s = 0.0;
#pragma omp simd reduction(+ : s)
            for (int64_t c = 0; c < e; ++c) {
                s += h[c] * w[c];
            }
            po[i * k + j] = s;
        }
    }
    if (tracked) {
        auto hn = hidden.node(), en = emb.node(), on = out.node();
        auto ids_copy = cand_ids;
        tape->record(out, [hn, en, on, ids_copy, n, e, k] {
            const double* g = on->grad.data();
            const bool want_h = hn->requires_grad;
            const bool want_e = en->requires_grad;
            if (want_h) hn->ensure_grad();
            if (want_e) en->ensure_grad();
            double* dh = want_h ? hn->grad.data() : nullptr;
            double* de = want_e ? en->grad.data() : nullptr;
            const double* ph = hn->values.data();
            const double* pe = en->values.data();
            for (int64_t i = 0; i < n; ++i) {
                for (int64_t j = 0; j < k; ++j) {
                    const double gv = g[i * k + j];
                    if (gv == 0.0) continue;
                    const int64_t cid = ids_copy[static_cast<size_t>(i * k + j)];
                    if (want_h) {
                        const double* w = pe + cid * e;
                        double* dst = dh + i * e;
#pragma omp simd
                        for (int64_t c = 0; c < e; ++c) dst[c] += gv * w[c];
                    }
                    if (want_e) {
                        const double* h = ph + i * e;
                        double* dst = de + cid * e;
#pragma omp simd
                        for (int64_t c = 0; c < e; ++c) dst[c] += gv * h[c];
                    }
                }
            }
        });
    }
    return out;
}

Tensor select_per_row(Tape* tape, const Tensor& x, const std::vector<int64_t>& idx) {
    if (x.ndim() < 2) {
        throw DimensionError("select_per_row: need at least 2-d input");
    }
    const int64_t rows = x.rows(), d = x.last_dim();
    if (static_cast<int64_t>(idx.size()) != rows) {
        throw DimensionError("select_per_row: index count mismatch");
    }
    for (int64_t j : idx) {
        if (j < 0 || j >= d) {
            throw DimensionError("select_per_row: column " + std::to_string(j) + " out of range");
        }
    }
    const bool tracked = track(tape, {&x});
    Tensor out = make_out({rows}, tracked);
    const double* px = x.data();
    double* po = out.data();
    for (int64_t i = 0; i < rows; ++i) {
        po[i] = px[i * d + idx[static_cast<size_t>(i)]];
    }
    if (tracked) {
        auto xn = x.node(), on = out.node();
        auto idx_copy = idx;
        tape->record(out, [xn, on, idx_copy, d] {
            xn->ensure_grad();
            const double* g = on->grad.data();
            double* dx = xn->grad.data();
            for (size_t i = 0; i < idx_copy.size(); ++i) {
                dx[static_cast<int64_t>(i) * d + idx_copy[i]] += g[i];
            }
        });
    }
    return out;
}

Tensor softmax(Tape* tape, const Tensor& x) {
    require_last_axis(x, "softmax");
    const int64_t rows = x.rows(), d = x.last_dim();
    const bool tracked = track(tape, {&x});
    Tensor out = make_out(x.shape(), tracked);
    kernels::softmax_rows(x.data(), out.data(), rows, d, exec());
    if (tracked) {
        auto xn = x.node(), on = out.node();
        tape->record(out, [xn, on, rows, d] {
            xn->ensure_grad();
            const double* g = on->grad.data();
            const double* y = on->values.data();
            double* dx = xn->grad.data();
            for (int64_t i = 0; i < rows; ++i) {
                double dot = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    dot += g[i * d + j] * y[i * d + j];
                }
#pragma omp simd
                for (int64_t j = 0; j < d; ++j) {
                    dx[i * d + j] += y[i * d + j] * (g[i * d + j] - dot);
                }
            }
        });
    }
    return out;
}

Tensor log_softmax(Tape* tape, const Tensor& x) {
    require_last_axis(x, "log_softmax");
    const int64_t rows = x.rows(), d = x.last_dim();
    const bool tracked = track(tape, {&x});
    Tensor out = make_out(x.shape(), tracked);
    kernels::log_softmax_rows(x.data(), out.data(), rows, d, exec());
    if (tracked) {
        auto xn = x.node(), on = out.node();
        tape->record(out, [xn, on, rows, d] {
            xn->ensure_grad();
            const double* g = on->grad.data();
            const double* y = on->values.data();
            double* dx = xn->grad.data();
            for (int64_t i = 0; i < rows; ++i) {
                double gsum = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    gsum += g[i * d + j];
                }
#pragma omp simd
                for (int64_t j = 0; j < d; ++j) {
                    dx[i * d + j] += g[i * d + j] - std::exp(y[i * d + j]) * gsum;
                }
            }
        });
    }
    return out;
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
    const bool tracked = track(tape, {&x});
    Tensor out = make_out(x.shape(), tracked);
    const int64_t n = x.size();
    const double* px = x.data();
    double* po = out.data();
    for (int64_t i = 0; i < n; ++i) {
        // Branch on sign so the exp argument is always non-positive.
        const double v = px[i];
        if (v >= 0.0) {
            po[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            po[i] = e / (1.0 + e);
        }
    }
    if (tracked) {
        auto xn = x.node(), on = out.node();
        tape->record(out, [xn, on, n] {
            xn->ensure_grad();
            const double* g = on->grad.data();
            const double* y = on->values.data();
            double* dx = xn->grad.data();
#pragma omp simd
            for (int64_t i = 0; i < n; ++i) {
                dx[i] += g[i] * y[i] * (1.0 - y[i]);
            }
        });
    }
    return out;
}

Tensor gelu(Tape* tape, const Tensor& x) {
    const bool tracked = track(tape, {&x});
    Tensor out = make_out(x.shape(), tracked);
    const int64_t n = x.size();
    const double* px = x.data();
    double* po = out.data();
    for (int64_t i = 0; i < n; ++i) {
        po[i] = 0.5 * px[i] * (1.0 + std::erf(px[i] * kInvSqrt2));
    }
    if (tracked) {
        auto xn = x.node(), on = out.node();
        tape->record(out, [xn, on, n] {
            xn->ensure_grad();
            const double* g = on->grad.data();
            const double* v = xn->values.data();
            double* dx = xn->grad.data();
            for (int64_t i = 0; i < n; ++i) {
                const double cdf = 0.5 * (1.0 + std::erf(v[i] * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v[i] * v[i]);
                dx[i] += g[i] * (cdf + v[i] * pdf);
            }
        });
    }
    return out;
}

Tensor log_clamped(Tape* tape, const Tensor& x) {
    const bool tracked = track(tape, {&x});
    Tensor out = make_out(x.shape(), tracked);
    const int64_t n = x.size();
    const double* px = x.data();
    double* po = out.data();
    for (int64_t i = 0; i < n; ++i) {
        po[i] = std::log(px[i] > kLogClamp ? px[i] : kLogClamp);
    }
    if (tracked) {
        auto xn = x.node(), on = out.node();
        tape->record(out, [xn, on, n] {
            xn->ensure_grad();
            const double* g = on->grad.data();
            const double* v = xn->values.data();
            double* dx = xn->grad.data();
            for (int64_t i = 0; i < n; ++i) {
                if (v[i] > kLogClamp) {
                    dx[i] += g[i] / v[i];
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
    require_last_axis(x, "layer_norm");
    const int64_t rows = x.rows(), d = x.last_dim();
    if (gain.size() != d || bias.size() != d) {
        throw DimensionError("layer_norm: gain/bias must have length " + std::to_string(d));
    }
    const bool tracked = track(tape, {&x, &gain, &bias});
    Tensor out = make_out(x.shape(), tracked);
    // mean / inv_std per row are needed again in the backward closure.
    auto mean_buf = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    auto istd_buf = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    kernels::layer_norm_rows(x.data(), gain.data(), bias.data(), out.data(),
                             mean_buf->data(), istd_buf->data(), rows, d, eps, exec());
    if (tracked) {
        auto xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
        tape->record(out, [xn, gn, bn, on, mean_buf, istd_buf, rows, d] {
            const double* g = on->grad.data();
            const double* xv = xn->values.data();
            const double* gv = gn->values.data();
            const bool want_x = xn->requires_grad;
            const bool want_g = gn->requires_grad;
            const bool want_b = bn->requires_grad;
            if (want_x) xn->ensure_grad();
            if (want_g) gn->ensure_grad();
            if (want_b) bn->ensure_grad();
            for (int64_t i = 0; i < rows; ++i) {
                const double mu = (*mean_buf)[static_cast<size_t>(i)];
                const double istd = (*istd_buf)[static_cast<size_t>(i)];
                const double* gr = g + i * d;
                const double* xr = xv + i * d;
                if (want_g || want_b) {
                    double* dg = want_g ? gn->grad.data() : nullptr;
                    double* db = want_b ? bn->grad.data() : nullptr;
                    for (int64_t j = 0; j < d; ++j) {
                        const double xhat = (xr[j] - mu) * istd;
                        if (dg) dg[j] += gr[j] * xhat;
                        if (db) db[j] += gr[j];
                    }
                }
                if (want_x) {
                    double hmean = 0.0, hx_mean = 0.0;
                    for (int64_t j = 0; j < d; ++j) {
                        const double h = gr[j] * gv[j];
                        const double xhat = (xr[j] - mu) * istd;
                        hmean += h;
                        hx_mean += h * xhat;
                    }
                    hmean /= static_cast<double>(d);
                    hx_mean /= static_cast<double>(d);
                    double* dx = xn->grad.data() + i * d;
#pragma omp simd
                    for (int64_t j = 0; j < d; ++j) {
                        const double h = gr[j] * gv[j];
                        const double xhat = (xr[j] - mu) * istd;
                        dx[j] += istd * (h - hmean - xhat * hx_mean);
                    }
                }
            }
        });
    }
    return out;
}

Tensor dropout(Tape* tape, const Tensor& x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw DimensionError("dropout: rate must be in [0,1)");
    }
    if (rate == 0.0) {
        // Identity; no mask drawn so the stream is untouched.
        return affine(tape, x, 1.0, 0.0);
    }
    const bool tracked = track(tape, {&x});
    Tensor out = make_out(x.shape(), tracked);
    const int64_t n = x.size();
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
    const double* px = x.data();
    double* po = out.data();
    for (int64_t i = 0; i < n; ++i) {
        const double m = rng.uniform() < rate ? 0.0 : keep_scale;
        (*mask)[static_cast<size_t>(i)] = m;
        po[i] = px[i] * m;
    }
    if (tracked) {
        auto xn = x.node(), on = out.node();
        tape->record(out, [xn, on, mask, n] {
            xn->ensure_grad();
            const double* g = on->grad.data();
            double* dx = xn->grad.data();
#pragma omp simd
            for (int64_t i = 0; i < n; ++i) {
                dx[i] += g[i] * (*mask)[static_cast<size_t>(i)];
            }
        });
    }
    return out;
}

Tensor sum(Tape* tape, const Tensor& x) {
    const bool tracked = track(tape, {&x});
    const int64_t n = x.size();
    const double* px = x.data();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        s += px[i];
    }
    Tensor out = Tensor::scalar(s);
    out.set_requires_grad(tracked);
    if (tracked) {
        auto xn = x.node(), on = out.node();
        tape->record(out, [xn, on, n] {
            xn->ensure_grad();
            const double g = on->grad[0];
            double* dx = xn->grad.data();
#pragma omp simd
            for (int64_t i = 0; i < n; ++i) dx[i] += g;
        });
    }
    return out;
}

Tensor mean(Tape* tape, const Tensor& x) {
    if (x.size() == 0) {
        throw DimensionError("mean: empty tensor");
    }
    Tensor s = sum(tape, x);
    return affine(tape, s, 1.0 / static_cast<double>(x.size()), 0.0);
}

} // namespace mcbert::ops
