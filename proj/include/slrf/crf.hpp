#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "slrf/ops.hpp"
#include "slrf/tape.hpp"
#include "slrf/tensor.hpp"

namespace slrf {

// The transition matrix is [T+2 x T+2]; the last two rows/columns are the
// virtual states every path leaves from and ends in.
inline int64_t crf_start_state(int64_t num_tags) { return num_tags; }
inline int64_t crf_stop_state(int64_t num_tags) { return num_tags + 1; }

namespace detail {

template <class Real>
void check_crf_shapes(const Tensor<Real>& emissions, const Tensor<Real>& transitions) {
  int64_t T = emissions.cols();
  if (emissions.rows() < 1) throw std::invalid_argument("crf: needs at least one position");
  if (transitions.rank() != 2 || transitions.dim(0) != T + 2 || transitions.dim(1) != T + 2)
    throw std::invalid_argument("crf: transition matrix must be [T+2 x T+2]");
}

// alpha[t][j] = log sum over paths ending in tag j at position t; returns the
// full table so gradients can rerun the recursion backwards.
template <class Real>
std::vector<Real> forward_table(const Real* em, int64_t l, int64_t T, const Real* tr) {
  int64_t S = T + 2;
  int64_t start = crf_start_state(T);
  std::vector<Real> alpha(static_cast<size_t>(l * T));
  for (int64_t j = 0; j < T; ++j) alpha[static_cast<size_t>(j)] = tr[start * S + j] + em[j];
  std::vector<Real> scratch(static_cast<size_t>(T));
  for (int64_t t = 1; t < l; ++t) {
    const Real* prev = alpha.data() + (t - 1) * T;
    Real* cur = alpha.data() + t * T;
    for (int64_t j = 0; j < T; ++j) {
      for (int64_t i = 0; i < T; ++i) scratch[static_cast<size_t>(i)] = prev[i] + tr[i * S + j];
      cur[j] = log_sum_exp(scratch.data(), T) + em[t * T + j];
    }
  }
  return alpha;
}

template <class Real>
Real partition_from_table(const std::vector<Real>& alpha, int64_t l, int64_t T, const Real* tr) {
  int64_t S = T + 2;
  int64_t stop = crf_stop_state(T);
  std::vector<Real> fin(static_cast<size_t>(T));
  for (int64_t j = 0; j < T; ++j)
    fin[static_cast<size_t>(j)] = alpha[static_cast<size_t>((l - 1) * T + j)] + tr[j * S + stop];
  return log_sum_exp(fin.data(), T);
}

}  // namespace detail

template <class Real>
Real log_partition(const Tensor<Real>& emissions, const Tensor<Real>& transitions) {
  detail::check_crf_shapes(emissions, transitions);
  int64_t l = emissions.rows(), T = emissions.cols();
  auto alpha = detail::forward_table(emissions.data(), l, T, transitions.data());
  return detail::partition_from_table(alpha, l, T, transitions.data());
}

template <class Real>
Real path_score(const Tensor<Real>& emissions, const Tensor<Real>& transitions,
                const std::vector<int32_t>& tags) {
  detail::check_crf_shapes(emissions, transitions);
  int64_t l = emissions.rows(), T = emissions.cols();
  int64_t S = T + 2;
  if (static_cast<int64_t>(tags.size()) != l)
    throw std::invalid_argument("crf: tag path length differs from emissions");
  for (int32_t y : tags)
    if (y < 0 || y >= T) throw std::out_of_range("crf: tag id outside emission width");
  const Real* tr = transitions.data();
  Real s = tr[crf_start_state(T) * S + tags[0]];
  for (int64_t t = 0; t < l; ++t) s += emissions.at(t, tags[static_cast<size_t>(t)]);
  for (int64_t t = 1; t < l; ++t) s += tr[int64_t(tags[static_cast<size_t>(t - 1)]) * S + tags[static_cast<size_t>(t)]];
  s += tr[int64_t(tags[static_cast<size_t>(l - 1)]) * S + crf_stop_state(T)];
  return s;
}

// Maximum-scoring path; every argmax breaks ties toward the lowest tag id.
template <class Real>
std::vector<int32_t> viterbi(const Tensor<Real>& emissions, const Tensor<Real>& transitions) {
  detail::check_crf_shapes(emissions, transitions);
  int64_t l = emissions.rows(), T = emissions.cols();
  int64_t S = T + 2;
  const Real* em = emissions.data();
  const Real* tr = transitions.data();
  std::vector<Real> delta(static_cast<size_t>(T));
  std::vector<int32_t> back(static_cast<size_t>((l > 1 ? l - 1 : 0) * T));
  for (int64_t j = 0; j < T; ++j)
    delta[static_cast<size_t>(j)] = tr[crf_start_state(T) * S + j] + em[j];
  std::vector<Real> next(static_cast<size_t>(T));
  for (int64_t t = 1; t < l; ++t) {
    int32_t* bp = back.data() + (t - 1) * T;
    for (int64_t j = 0; j < T; ++j) {
      int64_t best = 0;
      Real best_score = delta[0] + tr[0 * S + j];
      for (int64_t i = 1; i < T; ++i) {
        Real s = delta[static_cast<size_t>(i)] + tr[i * S + j];
        if (s > best_score) {  // strict: ties keep the lower i
          best_score = s;
          best = i;
        }
      }
      next[static_cast<size_t>(j)] = best_score + em[t * T + j];
      bp[j] = static_cast<int32_t>(best);
    }
    delta.swap(next);
  }
  int64_t stop = crf_stop_state(T);
  int64_t best = 0;
  Real best_score = delta[0] + tr[0 * S + stop];
  for (int64_t j = 1; j < T; ++j) {
    Real s = delta[static_cast<size_t>(j)] + tr[j * S + stop];
    if (s > best_score) {
      best_score = s;
      best = j;
    }
  }
  std::vector<int32_t> path(static_cast<size_t>(l));
  path[static_cast<size_t>(l - 1)] = static_cast<int32_t>(best);
  for (int64_t t = l - 1; t >= 1; --t)
    path[static_cast<size_t>(t - 1)] = back[static_cast<size_t>((t - 1) * T + path[static_cast<size_t>(t)])];
  return path;
}

// Tape op: weight * sum over segments of (log Z - gold path score), the
// negative log-likelihood of each utterance's gold path. Emissions are the
// packed slot logits (token rows only; segment b starts at row off[b] - b).
// Segments containing a gold id of -1 are skipped whole: a partial path has
// no likelihood.
template <class Real>
VarId crf_nll_rows(Tape<Real>& t, VarId emissions, VarId transitions, const Packed& p,
                   std::shared_ptr<const std::vector<int32_t>> gold, Real weight) {
  const Tensor<Real>& ev = t.val(emissions);
  const Tensor<Real>& tv = t.val(transitions);
  detail::check_crf_shapes(ev, tv);
  int64_t T = ev.cols();
  if (static_cast<int64_t>(gold->size()) != p.token_rows())
    throw std::logic_error("crf_nll_rows: gold size mismatch");

  struct SegCtx {
    int64_t row0 = 0;  // first emission row of the segment
    int64_t l = 0;
    std::vector<Real> alpha;
    Real log_z = 0;
  };
  auto segs = std::make_shared<std::vector<SegCtx>>();
  Real total = 0;
  for (int32_t b = 0; b < p.batch; ++b) {
    int64_t l = p.m[b] - 1;
    if (l < 1) continue;
    int64_t row0 = p.off[b] - b;
    bool supervised = true;
    for (int64_t i = 0; i < l; ++i)
      if ((*gold)[static_cast<size_t>(row0 + i)] < 0) supervised = false;
    if (!supervised) continue;
    SegCtx ctx;
    ctx.row0 = row0;
    ctx.l = l;
    ctx.alpha = detail::forward_table(ev.data() + row0 * T, l, T, tv.data());
    ctx.log_z = detail::partition_from_table(ctx.alpha, l, T, tv.data());
    Real gold_score;
    {
      int64_t S = T + 2;
      const Real* em = ev.data() + row0 * T;
      const Real* tr = tv.data();
      auto y = [&](int64_t i) { return int64_t((*gold)[static_cast<size_t>(row0 + i)]); };
      gold_score = tr[crf_start_state(T) * S + y(0)];
      for (int64_t i = 0; i < l; ++i) gold_score += em[i * T + y(i)];
      for (int64_t i = 1; i < l; ++i) gold_score += tr[y(i - 1) * S + y(i)];
      gold_score += tr[y(l - 1) * S + crf_stop_state(T)];
    }
    total += weight * (ctx.log_z - gold_score);
    segs->push_back(std::move(ctx));
  }

  VarId out = t.push(Tensor<Real>::scalar(total));
  t.set_back(out, [out, emissions, transitions, gold, segs, weight, T](Tape<Real>& tp) {
    Real g = tp.grad(out).v[0] * weight;
    const Tensor<Real>& ev = tp.val(emissions);
    const Tensor<Real>& tv = tp.val(transitions);
    Tensor<Real>& ge = tp.grad(emissions);
    Tensor<Real>& gt = tp.grad(transitions);
    int64_t S = T + 2;
    int64_t start = crf_start_state(T), stop = crf_stop_state(T);
    const Real* tr = tv.data();
    for (const auto& seg : *segs) {
      const Real* em = ev.data() + seg.row0 * T;
      Real* dem = ge.data() + seg.row0 * T;
      const std::vector<Real>& alpha = seg.alpha;
      // d logZ: adjoint of the forward recursion. The final log-sum-exp
      // spreads g over exp(alpha + trans_to_stop - logZ).
      std::vector<Real> dalpha(static_cast<size_t>(T));
      for (int64_t j = 0; j < T; ++j) {
        Real w = std::exp(alpha[static_cast<size_t>((seg.l - 1) * T + j)] + tr[j * S + stop] -
                          seg.log_z);
        dalpha[static_cast<size_t>(j)] = g * w;
        gt.data()[j * S + stop] += g * w;
      }
      std::vector<Real> dprev(static_cast<size_t>(T));
      for (int64_t t2 = seg.l - 1; t2 >= 1; --t2) {
        std::fill(dprev.begin(), dprev.end(), Real(0));
        const Real* prev = alpha.data() + (t2 - 1) * T;
        const Real* cur = alpha.data() + t2 * T;
        for (int64_t j = 0; j < T; ++j) {
          Real dj = dalpha[static_cast<size_t>(j)];
          if (dj == Real(0)) continue;
          dem[t2 * T + j] += dj;
          // weights of the log-sum-exp that produced alpha[t2][j]
          Real lse = cur[j] - em[t2 * T + j];
          for (int64_t i = 0; i < T; ++i) {
            Real w = std::exp(prev[i] + tr[i * S + j] - lse);
            dprev[static_cast<size_t>(i)] += dj * w;
            gt.data()[i * S + j] += dj * w;
          }
        }
        dalpha.swap(dprev);
      }
      for (int64_t j = 0; j < T; ++j) {
        dem[j] += dalpha[static_cast<size_t>(j)];
        gt.data()[start * S + j] += dalpha[static_cast<size_t>(j)];
      }
      // minus the gold path
      auto y = [&](int64_t i) { return int64_t((*gold)[static_cast<size_t>(seg.row0 + i)]); };
      gt.data()[start * S + y(0)] -= g;
      for (int64_t i = 0; i < seg.l; ++i) dem[i * T + y(i)] -= g;
      for (int64_t i = 1; i < seg.l; ++i) gt.data()[y(i - 1) * S + y(i)] -= g;
      gt.data()[y(seg.l - 1) * S + stop] -= g;
    }
  });
  return out;
}

}  // namespace slrf
