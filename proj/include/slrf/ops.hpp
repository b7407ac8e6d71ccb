#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "slrf/params.hpp"
#include "slrf/rng.hpp"
#include "slrf/tape.hpp"
#include "slrf/tensor.hpp"

namespace slrf {

// Pushes every store entry onto a tape as a leaf (values copied) and routes
// leaf gradients back into the store after backward(). A store bound through
// the const overload is frozen: lookups work, pull_grads() refuses.
template <class Real>
struct BoundParams {
  Tape<Real>* tape = nullptr;
  const ParamStore<Real>* store = nullptr;
  ParamStore<Real>* grads_into = nullptr;
  std::vector<VarId> ids;

  static BoundParams bind(Tape<Real>& t, ParamStore<Real>& s) {
    BoundParams b = bind(t, static_cast<const ParamStore<Real>&>(s));
    b.grads_into = &s;
    return b;
  }

  static BoundParams bind(Tape<Real>& t, const ParamStore<Real>& s) {
    BoundParams b;
    b.tape = &t;
    b.store = &s;
    b.ids.reserve(s.entries().size());
    for (const auto& e : s.entries()) b.ids.push_back(t.push(e.value));
    return b;
  }

  VarId operator[](const std::string& name) const {
    return ids[static_cast<size_t>(store->position(name))];
  }

  // store.grad += tape grad of each leaf
  void pull_grads() {
    if (!grads_into) throw std::logic_error("bound params: frozen bind has no gradient sink");
    for (size_t i = 0; i < ids.size(); ++i) {
      auto& e = grads_into->entries()[i];
      Tensor<Real>& g = tape->grad(ids[i]);
      for (int64_t k = 0; k < g.numel(); ++k) e.grad.v[static_cast<size_t>(k)] += g.v[static_cast<size_t>(k)];
    }
  }
};

// Utterances packed back to back without padding: segment b holds the CLS row
// followed by len[b] token rows. All row-wise ops then touch real rows only.
struct Packed {
  int32_t batch = 0;
  std::vector<int32_t> off;  // segment start row, size batch
  std::vector<int32_t> m;    // rows per segment = len + 1
  int64_t rows = 0;          // sum of m

  int64_t token_rows() const { return rows - batch; }

  static Packed from_lengths(const std::vector<int32_t>& lengths) {
    Packed p;
    p.batch = static_cast<int32_t>(lengths.size());
    p.off.resize(lengths.size());
    p.m.resize(lengths.size());
    int64_t r = 0;
    for (size_t b = 0; b < lengths.size(); ++b) {
      p.off[b] = static_cast<int32_t>(r);
      p.m[b] = lengths[b] + 1;
      r += p.m[b];
    }
    p.rows = r;
    return p;
  }
};

// ---------------------------------------------------------------------------
// plain numeric kernels (shared by the tape ops, the inference path and tests)

template <class Real>
void softmax_inplace(Real* x, int64_t n) {
  Real mx = x[0];
  for (int64_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  Real sum = 0;
  for (int64_t i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - mx);
    sum += x[i];
  }
  for (int64_t i = 0; i < n; ++i) x[i] /= sum;
}

template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x) {
  Tensor<Real> y = x;
  softmax_inplace(y.data(), y.numel());
  return y;
}

template <class Real>
Real log_sum_exp(const Real* x, int64_t n) {
  Real mx = x[0];
  for (int64_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  Real sum = 0;
  for (int64_t i = 0; i < n; ++i) sum += std::exp(x[i] - mx);
  return mx + std::log(sum);
}

template <class Real>
struct CeResult {
  Real loss;
  std::vector<Real> grad;  // softmax(logits) - onehot(gold)
};

// -log softmax(logits)[gold], with its gradient.
template <class Real>
CeResult<Real> cross_entropy(const Real* logits, int64_t n, int64_t gold) {
  if (gold < 0 || gold >= n) throw std::out_of_range("cross_entropy: gold class out of range");
  Real lse = log_sum_exp(logits, n);
  CeResult<Real> r;
  r.loss = lse - logits[gold];
  r.grad.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) r.grad[static_cast<size_t>(i)] = std::exp(logits[i] - lse);
  r.grad[static_cast<size_t>(gold)] -= Real(1);
  return r;
}

template <class Real>
void layer_norm_row(const Real* x, const Real* gain, const Real* bias, Real* y, int64_t n,
                    Real eps) {
  Real mean = 0;
  for (int64_t i = 0; i < n; ++i) mean += x[i];
  mean /= Real(n);
  Real var = 0;
  for (int64_t i = 0; i < n; ++i) {
    Real d = x[i] - mean;
    var += d * d;
  }
  var /= Real(n);
  Real inv = Real(1) / std::sqrt(var + eps);
  for (int64_t i = 0; i < n; ++i) y[i] = gain[i] * ((x[i] - mean) * inv) + bias[i];
}

// Per-row argmax; ties go to the lowest index.
template <class Real>
std::vector<int32_t> argmax_rows(const Tensor<Real>& x) {
  int64_t R = x.rows(), C = x.cols();
  if (C == 0) throw std::logic_error("argmax_rows: zero-width rows");
  std::vector<int32_t> out(static_cast<size_t>(R), 0);
  for (int64_t r = 0; r < R; ++r) {
    const Real* row = x.data() + r * C;
    int32_t best = 0;
    for (int64_t c = 1; c < C; ++c)
      if (row[c] > row[best]) best = static_cast<int32_t>(c);
    out[static_cast<size_t>(r)] = best;
  }
  return out;
}

// clip(j - i, -clip, clip) + clip, the index into a (2*clip+1)-row table
inline int rel_bucket(int64_t j, int64_t i, int clip) {
  int64_t d = j - i;
  if (d > clip) d = clip;
  if (d < -clip) d = -clip;
  return static_cast<int>(d + clip);
}

// ---------------------------------------------------------------------------
// tape ops

template <class Real>
VarId leaf(Tape<Real>& t, Tensor<Real> value) {
  return t.push(std::move(value));
}

template <class Real>
VarId add(Tape<Real>& t, VarId a, VarId b) {
  const Tensor<Real>& av = t.val(a);
  if (!av.same_shape(t.val(b))) throw std::logic_error("add: shape mismatch");
  Tensor<Real> y = av;
  const Tensor<Real>& bv = t.val(b);
  for (int64_t i = 0; i < y.numel(); ++i) y.v[i] += bv.v[i];
  VarId out = t.push(std::move(y));
  t.set_back(out, [out, a, b](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.grad(out);
    Tensor<Real>& ga = tp.grad(a);
    Tensor<Real>& gb = tp.grad(b);
    for (int64_t i = 0; i < g.numel(); ++i) {
      ga.v[i] += g.v[i];
      gb.v[i] += g.v[i];
    }
  });
  return out;
}

template <class Real>
VarId relu(Tape<Real>& t, VarId x) {
  Tensor<Real> y = t.val(x);
  for (auto& e : y.v) e = e > Real(0) ? e : Real(0);
  VarId out = t.push(std::move(y));
  t.set_back(out, [out, x](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.grad(out);
    const Tensor<Real>& xv = tp.val(x);
    Tensor<Real>& gx = tp.grad(x);
    for (int64_t i = 0; i < g.numel(); ++i)
      if (xv.v[i] > Real(0)) gx.v[i] += g.v[i];
  });
  return out;
}

// y = x * W^T + b with x [R x I], W [O x I], b [O]
template <class Real>
VarId linear(Tape<Real>& t, VarId x, VarId w, VarId b) {
  const Tensor<Real>& xv = t.val(x);
  const Tensor<Real>& wv = t.val(w);
  const Tensor<Real>& bv = t.val(b);
  int64_t R = xv.rows(), I = xv.cols(), O = wv.dim(0);
  if (wv.dim(1) != I || bv.numel() != O) throw std::logic_error("linear: shape mismatch");
  Tensor<Real> y({R, O});
  std::vector<Real> wt(static_cast<size_t>(I * O));
  transpose(wt.data(), wv.data(), O, I);
  mm_acc(y.data(), xv.data(), wt.data(), R, I, O);
  for (int64_t r = 0; r < R; ++r) axpy(y.data() + r * O, Real(1), bv.data(), O);
  VarId out = t.push(std::move(y));
  t.set_back(out, [out, x, w, b, R, I, O](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.grad(out);
    // dx += g * W
    mm_acc(tp.grad(x).data(), g.data(), tp.val(w).data(), R, O, I);
    // dW += g^T * x
    mm_acc_ta(tp.grad(w).data(), g.data(), tp.val(x).data(), R, O, I);
    // db += column sums of g
    Tensor<Real>& gb = tp.grad(b);
    for (int64_t r = 0; r < R; ++r) axpy(gb.data(), Real(1), g.data() + r * O, O);
  });
  return out;
}

// Row-wise layer norm over the last axis, then affine.
template <class Real>
VarId layer_norm(Tape<Real>& t, VarId x, VarId gain, VarId bias, Real eps = Real(1e-6)) {
  const Tensor<Real>& xv = t.val(x);
  int64_t R = xv.rows(), C = xv.cols();
  if (t.val(gain).numel() != C || t.val(bias).numel() != C)
    throw std::logic_error("layer_norm: affine shape mismatch");
  if (C < 2) throw std::logic_error("layer_norm: needs at least 2 features");
  auto ctx = std::make_shared<Tensor<Real>>(Tensor<Real>({R, 2}));  // mean, inv_std per row
  Tensor<Real> y({R, C});
  for (int64_t r = 0; r < R; ++r) {
    const Real* xr = xv.data() + r * C;
    Real mean = 0;
    for (int64_t i = 0; i < C; ++i) mean += xr[i];
    mean /= Real(C);
    Real var = 0;
    for (int64_t i = 0; i < C; ++i) {
      Real d = xr[i] - mean;
      var += d * d;
    }
    var /= Real(C);
    Real inv = Real(1) / std::sqrt(var + eps);
    ctx->at(r, 0) = mean;
    ctx->at(r, 1) = inv;
    Real* yr = y.data() + r * C;
    const Real* gv = t.val(gain).data();
    const Real* bv = t.val(bias).data();
    for (int64_t i = 0; i < C; ++i) yr[i] = gv[i] * ((xr[i] - mean) * inv) + bv[i];
  }
  VarId out = t.push(std::move(y));
  t.set_back(out, [out, x, gain, bias, R, C, ctx](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.grad(out);
    const Tensor<Real>& xv2 = tp.val(x);
    const Real* gv = tp.val(gain).data();
    Tensor<Real>& gx = tp.grad(x);
    Tensor<Real>& gg = tp.grad(gain);
    Tensor<Real>& gb = tp.grad(bias);
    std::vector<Real> xhat(static_cast<size_t>(C)), dy(static_cast<size_t>(C));
    for (int64_t r = 0; r < R; ++r) {
      Real mean = ctx->at(r, 0), inv = ctx->at(r, 1);
      const Real* xr = xv2.data() + r * C;
      const Real* gr = g.data() + r * C;
      Real sum_dy = 0, sum_dy_xhat = 0;
      for (int64_t i = 0; i < C; ++i) {
        xhat[i] = (xr[i] - mean) * inv;
        dy[i] = gr[i] * gv[i];
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xhat[i];
        gg.v[i] += gr[i] * xhat[i];
        gb.v[i] += gr[i];
      }
      Real* gxr = gx.data() + r * C;
      for (int64_t i = 0; i < C; ++i)
        gxr[i] += inv * (dy[i] - sum_dy / Real(C) - xhat[i] * sum_dy_xhat / Real(C));
    }
  });
  return out;
}

// Inverted dropout; identity when rate == 0.
template <class Real>
VarId dropout(Tape<Real>& t, VarId x, Real rate, Rng& rng) {
  if (rate <= Real(0)) return x;
  if (rate >= Real(1)) throw std::logic_error("dropout: rate must be < 1");
  const Tensor<Real>& xv = t.val(x);
  auto keep = std::make_shared<std::vector<uint8_t>>(xv.v.size());
  Real scale = Real(1) / (Real(1) - rate);
  Tensor<Real> y = xv;
  for (size_t i = 0; i < y.v.size(); ++i) {
    bool k = rng.uniform() >= rate;
    (*keep)[i] = k;
    y.v[i] = k ? y.v[i] * scale : Real(0);
  }
  VarId out = t.push(std::move(y));
  t.set_back(out, [out, x, keep, scale](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.grad(out);
    Tensor<Real>& gx = tp.grad(x);
    for (int64_t i = 0; i < g.numel(); ++i)
      if ((*keep)[static_cast<size_t>(i)]) gx.v[i] += g.v[i] * scale;
  });
  return out;
}

// out[r] = token_table[tok_ids[r]] + tag_table[tag_ids[r]]
template <class Real>
VarId embed_sum(Tape<Real>& t, VarId token_table, VarId tag_table,
                std::shared_ptr<const std::vector<int32_t>> tok_ids,
                std::shared_ptr<const std::vector<int32_t>> tag_ids) {
  const Tensor<Real>& tok = t.val(token_table);
  const Tensor<Real>& tag = t.val(tag_table);
  int64_t h = tok.cols();
  if (tag.cols() != h) throw std::logic_error("embed_sum: embedding widths differ");
  int64_t R = static_cast<int64_t>(tok_ids->size());
  Tensor<Real> y({R, h});
  for (int64_t r = 0; r < R; ++r) {
    int32_t ti = (*tok_ids)[static_cast<size_t>(r)];
    int32_t gi = (*tag_ids)[static_cast<size_t>(r)];
    if (ti < 0 || ti >= tok.dim(0)) throw std::out_of_range("embed_sum: token id out of range");
    if (gi < 0 || gi >= tag.dim(0)) throw std::out_of_range("embed_sum: tag id out of range");
    const Real* a = tok.data() + int64_t(ti) * h;
    const Real* b = tag.data() + int64_t(gi) * h;
    Real* yr = y.data() + r * h;
    for (int64_t i = 0; i < h; ++i) yr[i] = a[i] + b[i];
  }
  VarId out = t.push(std::move(y));
  t.set_back(out, [out, token_table, tag_table, tok_ids, tag_ids, h](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.grad(out);
    Tensor<Real>& gtok = tp.grad(token_table);
    Tensor<Real>& gtag = tp.grad(tag_table);
    int64_t R = g.rows();
    for (int64_t r = 0; r < R; ++r) {
      const Real* gr = g.data() + r * h;
      axpy(gtok.data() + int64_t((*tok_ids)[static_cast<size_t>(r)]) * h, Real(1), gr, h);
      axpy(gtag.data() + int64_t((*tag_ids)[static_cast<size_t>(r)]) * h, Real(1), gr, h);
    }
  });
  return out;
}

// out[b] = H[segment b, row 0]
template <class Real>
VarId select_cls(Tape<Real>& t, VarId hvar, const Packed& p) {
  const Tensor<Real>& hv = t.val(hvar);
  int64_t h = hv.cols();
  Tensor<Real> y({p.batch, h});
  for (int32_t b = 0; b < p.batch; ++b)
    std::copy_n(hv.data() + int64_t(p.off[b]) * h, h, y.data() + int64_t(b) * h);
  VarId out = t.push(std::move(y));
  Packed pc = p;
  t.set_back(out, [out, hvar, pc, h](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.grad(out);
    Tensor<Real>& gh = tp.grad(hvar);
    for (int32_t b = 0; b < pc.batch; ++b)
      axpy(gh.data() + int64_t(pc.off[b]) * h, Real(1), g.data() + int64_t(b) * h, h);
  });
  return out;
}

// One row per real token: [h_cls(segment) ; h_token], width 2h.
template <class Real>
VarId concat_cls_tokens(Tape<Real>& t, VarId hvar, const Packed& p) {
  const Tensor<Real>& hv = t.val(hvar);
  int64_t h = hv.cols();
  Tensor<Real> y({p.token_rows(), 2 * h});
  int64_t row = 0;
  for (int32_t b = 0; b < p.batch; ++b) {
    const Real* cls = hv.data() + int64_t(p.off[b]) * h;
    for (int32_t tkn = 1; tkn < p.m[b]; ++tkn, ++row) {
      Real* yr = y.data() + row * 2 * h;
      std::copy_n(cls, h, yr);
      std::copy_n(hv.data() + int64_t(p.off[b] + tkn) * h, h, yr + h);
    }
  }
  VarId out = t.push(std::move(y));
  Packed pc = p;
  t.set_back(out, [out, hvar, pc, h](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.grad(out);
    Tensor<Real>& gh = tp.grad(hvar);
    int64_t row = 0;
    for (int32_t b = 0; b < pc.batch; ++b) {
      Real* gcls = gh.data() + int64_t(pc.off[b]) * h;
      for (int32_t tkn = 1; tkn < pc.m[b]; ++tkn, ++row) {
        const Real* gr = g.data() + row * 2 * h;
        axpy(gcls, Real(1), gr, h);
        axpy(gh.data() + int64_t(pc.off[b] + tkn) * h, Real(1), gr + h, h);
      }
    }
  });
  return out;
}

// Weighted cross entropy summed over rows: sum_r w[r] * CE(logits[r], gold[r]).
// Rows with gold < 0 are skipped (they carry no supervision).
template <class Real>
VarId ce_rows(Tape<Real>& t, VarId logits, std::shared_ptr<const std::vector<int32_t>> gold,
              Real weight) {
  const Tensor<Real>& lv = t.val(logits);
  int64_t R = lv.rows(), C = lv.cols();
  if (static_cast<int64_t>(gold->size()) != R) throw std::logic_error("ce_rows: gold size mismatch");
  auto lse = std::make_shared<std::vector<Real>>(static_cast<size_t>(R));
  Real total = 0;
  for (int64_t r = 0; r < R; ++r) {
    int32_t gd = (*gold)[static_cast<size_t>(r)];
    if (gd < 0) continue;
    if (gd >= C) throw std::out_of_range("ce_rows: gold class out of range");
    const Real* lr = lv.data() + r * C;
    Real s = log_sum_exp(lr, C);
    (*lse)[static_cast<size_t>(r)] = s;
    total += weight * (s - lr[gd]);
  }
  VarId out = t.push(Tensor<Real>::scalar(total));
  t.set_back(out, [out, logits, gold, lse, weight, R, C](Tape<Real>& tp) {
    Real g = tp.grad(out).v[0];
    const Tensor<Real>& lv2 = tp.val(logits);
    Tensor<Real>& gl = tp.grad(logits);
    for (int64_t r = 0; r < R; ++r) {
      int32_t gd = (*gold)[static_cast<size_t>(r)];
      if (gd < 0) continue;
      const Real* lr = lv2.data() + r * C;
      Real* glr = gl.data() + r * C;
      Real s = (*lse)[static_cast<size_t>(r)];
      for (int64_t c = 0; c < C; ++c) glr[c] += g * weight * std::exp(lr[c] - s);
      glr[gd] -= g * weight;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// multi-head attention core with relative position embeddings
//
// Per segment and head, with Qh/Kh/Vh the [m x d] head slices:
//   s[i][j]  = (Qh[i].Kh[j] + Qh[i].relk[bucket(j-i)]) / sqrt(d)
//   a        = softmax rows of s, then attention dropout
//   ctx[i]   = sum_j a[i][j] * (Vh[j] + relv[bucket(j-i)])
// relk/relv are shared across heads. The relv term can be disabled.

template <class Real>
struct AttnCtx {
  // per (segment, head): softmax matrix and post-dropout matrix, both m x m
  std::vector<std::vector<Real>> soft;
  std::vector<std::vector<Real>> used;
  bool has_dropout = false;
};

template <class Real>
VarId attention_core(Tape<Real>& t, VarId q, VarId k, VarId v, VarId relk, VarId relv,
                     const Packed& p, int heads, int clip, bool use_rel_values,
                     Real attn_dropout = Real(0), Rng* rng = nullptr) {
  const Tensor<Real>& qv = t.val(q);
  const Tensor<Real>& kv = t.val(k);
  const Tensor<Real>& vv = t.val(v);
  int64_t h = qv.cols();
  if (h % heads != 0) throw std::logic_error("attention_core: hidden not divisible by heads");
  int64_t d = h / heads;
  int nbuck = 2 * clip + 1;
  if (t.val(relk).dim(0) != nbuck || t.val(relk).dim(1) != d)
    throw std::logic_error("attention_core: relk shape mismatch");
  if (use_rel_values && (t.val(relv).dim(0) != nbuck || t.val(relv).dim(1) != d))
    throw std::logic_error("attention_core: relv shape mismatch");
  Real inv_sqrt_d = Real(1) / std::sqrt(Real(d));

  auto ctx = std::make_shared<AttnCtx<Real>>();
  ctx->soft.resize(static_cast<size_t>(p.batch) * heads);
  ctx->has_dropout = attn_dropout > Real(0);
  if (ctx->has_dropout) ctx->used.resize(ctx->soft.size());
  Real keep_scale = ctx->has_dropout ? Real(1) / (Real(1) - attn_dropout) : Real(1);

  Tensor<Real> y({p.rows, h});
  const Real* rk = t.val(relk).data();
  const Real* rv = use_rel_values ? t.val(relv).data() : nullptr;

  for (int32_t b = 0; b < p.batch; ++b) {
    int64_t m = p.m[b];
    int64_t base = p.off[b];
    for (int hd = 0; hd < heads; ++hd) {
      int64_t co = hd * d;  // column offset of this head
      auto& A = ctx->soft[static_cast<size_t>(b) * heads + hd];
      A.resize(static_cast<size_t>(m * m));
      // logits then row softmax
      for (int64_t i = 0; i < m; ++i) {
        const Real* qi = qv.data() + (base + i) * h + co;
        Real* arow = A.data() + i * m;
        for (int64_t j = 0; j < m; ++j) {
          const Real* kj = kv.data() + (base + j) * h + co;
          Real s = dot(qi, kj, d);
          s += dot(qi, rk + int64_t(rel_bucket(j, i, clip)) * d, d);
          arow[j] = s * inv_sqrt_d;
        }
        softmax_inplace(arow, m);
      }
      const Real* aw = A.data();
      if (ctx->has_dropout) {
        auto& U = ctx->used[static_cast<size_t>(b) * heads + hd];
        U = A;
        for (auto& e : U) e = (rng->uniform() >= attn_dropout) ? e * keep_scale : Real(0);
        aw = U.data();
      }
      // context
      for (int64_t i = 0; i < m; ++i) {
        Real* yr = y.data() + (base + i) * h + co;
        const Real* arow = aw + i * m;
        for (int64_t j = 0; j < m; ++j) {
          Real a = arow[j];
          if (a == Real(0)) continue;
          axpy(yr, a, vv.data() + (base + j) * h + co, d);
          if (rv) axpy(yr, a, rv + int64_t(rel_bucket(j, i, clip)) * d, d);
        }
      }
    }
  }

  VarId out = t.push(std::move(y));
  Packed pc = p;
  t.set_back(out, [out, q, k, v, relk, relv, pc, heads, clip, use_rel_values, ctx, inv_sqrt_d,
                   h, d](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.grad(out);
    const Tensor<Real>& qv2 = tp.val(q);
    const Tensor<Real>& kv2 = tp.val(k);
    const Tensor<Real>& vv2 = tp.val(v);
    Tensor<Real>& gq = tp.grad(q);
    Tensor<Real>& gk = tp.grad(k);
    Tensor<Real>& gv = tp.grad(v);
    Tensor<Real>& grk = tp.grad(relk);
    const Real* rk = tp.val(relk).data();
    const Real* rv = use_rel_values ? tp.val(relv).data() : nullptr;

    std::vector<Real> dA, dS;
    for (int32_t b = 0; b < pc.batch; ++b) {
      int64_t m = pc.m[b];
      int64_t base = pc.off[b];
      for (int hd = 0; hd < heads; ++hd) {
        int64_t co = hd * d;
        const auto& A = ctx->soft[static_cast<size_t>(b) * heads + hd];
        const Real* aw = ctx->has_dropout
                             ? ctx->used[static_cast<size_t>(b) * heads + hd].data()
                             : A.data();
        dA.assign(static_cast<size_t>(m * m), Real(0));
        // d(post-dropout weights) and dV, d relv
        for (int64_t i = 0; i < m; ++i) {
          const Real* gi = g.data() + (base + i) * h + co;
          Real* darow = dA.data() + i * m;
          const Real* arow = aw + i * m;
          for (int64_t j = 0; j < m; ++j) {
            const Real* vj = vv2.data() + (base + j) * h + co;
            Real dv = dot(gi, vj, d);
            if (rv) dv += dot(gi, rv + int64_t(rel_bucket(j, i, clip)) * d, d);
            darow[j] = dv;
            Real a = arow[j];
            if (a != Real(0)) {
              axpy(gv.data() + (base + j) * h + co, a, gi, d);
              if (rv)
                axpy(tp.grad(relv).data() + int64_t(rel_bucket(j, i, clip)) * d, a, gi, d);
            }
          }
        }
        // through dropout: zeroed weights carry no grad, kept ones scale
        if (ctx->has_dropout) {
          const auto& U = ctx->used[static_cast<size_t>(b) * heads + hd];
          for (int64_t i = 0; i < m * m; ++i) {
            // U = A * keep_scale where kept, 0 where dropped; A>0 always
            dA[static_cast<size_t>(i)] =
                (U[static_cast<size_t>(i)] == Real(0))
                    ? Real(0)
                    : dA[static_cast<size_t>(i)] * (U[static_cast<size_t>(i)] / A[static_cast<size_t>(i)]);
          }
        }
        // softmax backward per row: dS = A o (dA - sum(dA o A))
        dS.assign(static_cast<size_t>(m * m), Real(0));
        for (int64_t i = 0; i < m; ++i) {
          const Real* arow = A.data() + i * m;
          const Real* darow = dA.data() + i * m;
          Real acc = 0;
          for (int64_t j = 0; j < m; ++j) acc += darow[j] * arow[j];
          Real* dsrow = dS.data() + i * m;
          for (int64_t j = 0; j < m; ++j) dsrow[j] = arow[j] * (darow[j] - acc);
        }
        // through logits
        for (int64_t i = 0; i < m; ++i) {
          const Real* qi = qv2.data() + (base + i) * h + co;
          Real* gqi = gq.data() + (base + i) * h + co;
          const Real* dsrow = dS.data() + i * m;
          for (int64_t j = 0; j < m; ++j) {
            Real ds = dsrow[j] * inv_sqrt_d;
            if (ds == Real(0)) continue;
            int bkt = rel_bucket(j, i, clip);
            axpy(gqi, ds, kv2.data() + (base + j) * h + co, d);
            axpy(gqi, ds, rk + int64_t(bkt) * d, d);
            axpy(gk.data() + (base + j) * h + co, ds, qi, d);
            axpy(grk.data() + int64_t(bkt) * d, ds, qi, d);
          }
        }
      }
    }
  });
  return out;
}

}  // namespace slrf
