#pragma once

// MAP inference on decomposed scores Σ_r θ_r(x_r): the LP-relaxation dual
// over messages, block-coordinate minimization of that dual, decoding, the
// λ-subgradient, and exact oracles.

#include <algorithm>
#include <limits>
#include <span>
#include <vector>

#include "nlstruct/regiongraph.hpp"
#include "nlstruct/top.hpp"

namespace nlstruct {

/// θ = λ ⊙ f (+ loss).
inline PotentialVector theta_from(const PotentialVector& lambda, const PotentialVector& f,
                                  const PotentialVector* loss = nullptr) {
  require(lambda.size() == f.size(), concat("theta: lambda has length ", lambda.size(),
                                            ", potentials ", f.size()));
  PotentialVector theta(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) theta[i] = lambda[i] * f[i];
  if (loss) {
    require(loss->size() == f.size(), "theta: loss vector length mismatch");
    for (std::size_t i = 0; i < f.size(); ++i) theta[i] += (*loss)[i];
  }
  return theta;
}

/// Dual variables μ_{r→k}(x_k), one table per (higher-order region, member).
class MessageSet {
public:
  MessageSet() = default;
  explicit MessageSet(const RegionGraph& g) : num_vars_(g.num_vars()) {
    std::size_t off = 0;
    for (std::size_t r = g.num_vars(); r < g.num_regions(); ++r) {
      region_first_.push_back(offsets_.size());
      for (std::size_t k : g.region_vars(r)) {
        offsets_.push_back(off);
        off += g.domain(k);
      }
    }
    region_first_.push_back(offsets_.size());
    offsets_.push_back(off);
    values_.assign(off, 0.0);
  }

  bool empty() const { return values_.empty(); }
  std::size_t num_tables() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }

  /// Message from higher-order region r to its i-th variable.
  std::span<double> message(std::size_t r, std::size_t i) {
    const std::size_t t = region_first_[r - num_vars_] + i;
    return std::span<double>(values_).subspan(offsets_[t], offsets_[t + 1] - offsets_[t]);
  }
  std::span<const double> message(std::size_t r, std::size_t i) const {
    const std::size_t t = region_first_[r - num_vars_] + i;
    return std::span<const double>(values_).subspan(offsets_[t], offsets_[t + 1] - offsets_[t]);
  }

  std::vector<double>& raw() { return values_; }
  const std::vector<double>& raw() const { return values_; }
  bool operator==(const MessageSet&) const = default;

private:
  std::size_t num_vars_ = 0;
  std::vector<std::size_t> region_first_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

namespace detail {

inline std::size_t position_in(const RegionGraph& g, std::size_t r, std::size_t k) {
  const auto& vs = g.region_vars(r);
  return static_cast<std::size_t>(std::find(vs.begin(), vs.end(), k) - vs.begin());
}

template <class Get>
inline std::pair<std::size_t, double> first_argmax(std::size_t n, Get&& get) {
  std::size_t best = 0;
  double bv = get(0);
  for (std::size_t i = 1; i < n; ++i) {
    const double v = get(i);
    if (v > bv) {
      bv = v;
      best = i;
    }
  }
  return {best, bv};
}

}  // namespace detail

/// β_k(x_k) = θ_k(x_k) + Σ_{r∋k} μ_{r→k}(x_k).
inline void unary_belief(const RegionGraph& g, const MessageSet& mu, const PotentialVector& theta,
                         std::size_t k, std::span<double> out) {
  const std::size_t off = g.offset(k);
  for (std::size_t s = 0; s < g.domain(k); ++s) out[s] = theta[off + s];
  for (std::size_t r : g.regions_of(k)) {
    const auto m = mu.message(r, detail::position_in(g, r, k));
    for (std::size_t s = 0; s < g.domain(k); ++s) out[s] += m[s];
  }
}

/// β_r(x_r) = θ_r(x_r) − Σ_{k∈r} μ_{r→k}(x_k) for local assignment idx.
inline double region_belief(const RegionGraph& g, const MessageSet& mu, const PotentialVector& theta,
                            std::size_t r, std::size_t idx) {
  double b = theta[g.offset(r) + idx];
  const auto& vs = g.region_vars(r);
  for (std::size_t i = 0; i < vs.size(); ++i) b -= mu.message(r, i)[g.local_label(r, idx, i)];
  return b;
}

/// Beliefs of every region laid out like θ.
inline PotentialVector beliefs(const RegionGraph& g, const MessageSet& mu, const PotentialVector& theta) {
  g.check_vector(theta, "theta");
  PotentialVector out(g.size());
  for (std::size_t k = 0; k < g.num_vars(); ++k)
    unary_belief(g, mu, theta, k, out.span().subspan(g.offset(k), g.domain(k)));
  for (std::size_t r = g.num_vars(); r < g.num_regions(); ++r)
    for (std::size_t idx = 0; idx < g.region_size(r); ++idx)
      out[g.offset(r) + idx] = region_belief(g, mu, theta, r, idx);
  return out;
}

/// H^D(μ) = Σ_k max β_k + Σ_r max β_r.
inline double dual_value(const RegionGraph& g, const MessageSet& mu, const PotentialVector& theta) {
  const PotentialVector b = beliefs(g, mu, theta);
  double total = 0.0;
  for (std::size_t r = 0; r < g.num_regions(); ++r) {
    const std::size_t off = g.offset(r);
    total += detail::first_argmax(g.region_size(r), [&](std::size_t i) { return b[off + i]; }).second;
  }
  return total;
}

struct DualSolveResult {
  MessageSet messages;
  double value = 0.0;
  std::size_t sweeps = 0;
  std::vector<double> trace;  // H^D after each sweep, initial value first
  std::size_t monotonicity_violations = 0;
  double worst_increase = 0.0;
};

namespace detail {

inline double local_dual(const RegionGraph& g, const MessageSet& mu, const PotentialVector& theta,
                         std::size_t r, std::vector<double>& scratch) {
  double total = 0.0;
  for (std::size_t k : g.region_vars(r)) {
    scratch.resize(g.domain(k));
    unary_belief(g, mu, theta, k, scratch);
    total += *std::max_element(scratch.begin(), scratch.end());
  }
  total += first_argmax(g.region_size(r), [&](std::size_t i) { return region_belief(g, mu, theta, r, i); })
               .second;
  return total;
}

// MPLP star update of every message leaving region r.
inline void mplp_update(const RegionGraph& g, MessageSet& mu, const PotentialVector& theta, std::size_t r,
                        std::vector<std::vector<double>>& gamma, std::vector<std::vector<double>>& best) {
  const auto& vs = g.region_vars(r);
  const std::size_t n = vs.size();
  gamma.resize(n);
  best.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = vs[i];
    gamma[i].resize(g.domain(k));
    unary_belief(g, mu, theta, k, gamma[i]);
    const auto m = mu.message(r, i);
    for (std::size_t s = 0; s < g.domain(k); ++s) gamma[i][s] -= m[s];
    best[i].assign(g.domain(k), -std::numeric_limits<double>::infinity());
  }
  const std::size_t off = g.offset(r);
  const auto& strides = g.strides(r);
  for (std::size_t idx = 0; idx < g.region_size(r); ++idx) {
    double v = theta[off + idx];
    for (std::size_t i = 0; i < n; ++i) v += gamma[i][(idx / strides[i]) % g.domain(vs[i])];
    for (std::size_t i = 0; i < n; ++i) {
      double& b = best[i][(idx / strides[i]) % g.domain(vs[i])];
      if (v > b) b = v;
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto m = mu.message(r, i);
    for (std::size_t s = 0; s < m.size(); ++s) m[s] = -gamma[i][s] + inv * best[i][s];
  }
}

}  // namespace detail

struct DualSolveOptions {
  std::size_t max_sweeps = 200;
  double tol = 1e-12;
  bool check_monotone = false;  // evaluate the local dual before/after every block update
};

/// Block-coordinate descent on H^D, one block per higher-order region.
/// Sweeps alternate between forward and reverse region order.
inline DualSolveResult minimize_dual(const RegionGraph& g, const PotentialVector& theta,
                                     const DualSolveOptions& opt = {}, const MessageSet* warm = nullptr) {
  g.check_vector(theta, "theta");
  require(opt.max_sweeps >= 1, "minimize_dual needs at least one sweep");
  DualSolveResult res;
  res.messages = warm ? *warm : MessageSet(g);
  res.value = dual_value(g, res.messages, theta);
  res.trace.push_back(res.value);
  if (g.num_higher() == 0) return res;

  std::vector<std::vector<double>> gamma, best;
  std::vector<double> scratch;
  const std::size_t K = g.num_vars();
  const std::size_t R = g.num_regions();
  for (std::size_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    for (std::size_t j = 0; j < R - K; ++j) {
      const std::size_t r = (sweep % 2 == 0) ? K + j : R - 1 - j;
      double before = 0.0;
      if (opt.check_monotone) before = detail::local_dual(g, res.messages, theta, r, scratch);
      detail::mplp_update(g, res.messages, theta, r, gamma, best);
      if (opt.check_monotone) {
        const double after = detail::local_dual(g, res.messages, theta, r, scratch);
        const double slack = 1e-12 * std::max(1.0, std::abs(before));
        if (after > before + slack) {
          ++res.monotonicity_violations;
          res.worst_increase = std::max(res.worst_increase, after - before);
        }
      }
    }
    ++res.sweeps;
    const double v = dual_value(g, res.messages, theta);
    if (!std::isfinite(v)) throw NumericalFailure("non-finite dual value", res.sweeps, res.trace);
    res.trace.push_back(v);
    const double decrease = res.value - v;
    res.value = v;
    if (decrease < opt.tol) break;
  }
  return res;
}

/// Unary-belief argmax per variable, ties to the smallest label.
inline Assignment decode(const RegionGraph& g, const MessageSet& mu, const PotentialVector& theta) {
  g.check_vector(theta, "theta");
  Assignment x(std::vector<Label>(g.num_vars(), 0));
  std::vector<double> b;
  for (std::size_t k = 0; k < g.num_vars(); ++k) {
    b.resize(g.domain(k));
    unary_belief(g, mu, theta, k, b);
    x[k] = detail::first_argmax(b.size(), [&](std::size_t i) { return b[i]; }).first;
  }
  return x;
}

/// Subgradient of H^D(μ, λ) in λ for fixed μ: f at the belief argmax of every
/// region, zero elsewhere.
inline PotentialVector grad_lambda(const RegionGraph& g, const MessageSet& mu, const PotentialVector& theta,
                                   const PotentialVector& f) {
  g.check_vector(f);
  const PotentialVector b = beliefs(g, mu, theta);
  PotentialVector out(g.size(), 0.0);
  for (std::size_t r = 0; r < g.num_regions(); ++r) {
    const std::size_t off = g.offset(r);
    const auto s = detail::first_argmax(g.region_size(r), [&](std::size_t i) { return b[off + i]; }).first;
    out[off + s] = f[off + s];
  }
  return out;
}

struct MapResult {
  double value = 0.0;
  Assignment x;
};

inline MapResult map_bruteforce(const RegionGraph& g, const PotentialVector& theta) {
  g.check_vector(theta, "theta");
  double configs = 1.0;
  for (auto d : g.domains()) configs *= static_cast<double>(d);
  require(configs <= 1e6, "brute-force MAP limited to 10^6 configurations");
  MapResult best{-std::numeric_limits<double>::infinity(), {}};
  for_each_assignment(g, [&](const Assignment& x) {
    const double v = score_decomposed(g, theta, x);
    if (v > best.value) best = {v, x};
  });
  return best;
}

/// Exact MAP on chains by dynamic programming; the lexicographically smallest
/// maximizer is returned.
inline MapResult map_chain_dp(const RegionGraph& g, const PotentialVector& theta) {
  g.check_vector(theta, "theta");
  require(g.is_chain(), "chain DP requires pair regions (k, k+1) only");
  const std::size_t K = g.num_vars();
  std::vector<std::ptrdiff_t> edge(K, -1);  // region joining k and k+1
  for (std::size_t r = K; r < g.num_regions(); ++r) edge[g.region_vars(r)[0]] = static_cast<std::ptrdiff_t>(r);

  auto pair_term = [&](std::size_t k, Label a, Label b) {
    if (edge[k] < 0) return 0.0;
    const auto r = static_cast<std::size_t>(edge[k]);
    return theta[g.offset(r) + a * g.domain(k + 1) + b];
  };

  // tail[k][x_k]: best score of variables k+1.. given x_k
  std::vector<std::vector<double>> tail(K);
  tail[K - 1].assign(g.domain(K - 1), 0.0);
  for (std::size_t k = K - 1; k-- > 0;) {
    tail[k].assign(g.domain(k), -std::numeric_limits<double>::infinity());
    for (Label a = 0; a < g.domain(k); ++a)
      for (Label b = 0; b < g.domain(k + 1); ++b)
        tail[k][a] = std::max(tail[k][a], pair_term(k, a, b) + theta[g.offset(k + 1) + b] + tail[k + 1][b]);
  }
  Assignment x(std::vector<Label>(K, 0));
  x[0] = detail::first_argmax(g.domain(0), [&](std::size_t a) { return theta[g.offset(0) + a] + tail[0][a]; })
             .first;
  for (std::size_t k = 0; k + 1 < K; ++k)
    x[k + 1] = detail::first_argmax(g.domain(k + 1), [&](std::size_t b) {
                 return pair_term(k, x[k], b) + theta[g.offset(k + 1) + b] + tail[k + 1][b];
               }).first;
  return {score_decomposed(g, theta, x), x};
}

struct SpenOptions {
  std::size_t steps = 200;
  double step_size = 0.05;
  std::size_t restarts = 5;
  std::uint64_t seed = 0;
};

/// Soft-masked potential vector for binary soft labels b (b_k = P(x_k = 1)).
inline PotentialVector soft_mask(const RegionGraph& g, const PotentialVector& f, std::span<const double> b) {
  PotentialVector out(g.size());
  for (std::size_t r = 0; r < g.num_regions(); ++r) {
    const auto& vs = g.region_vars(r);
    for (std::size_t idx = 0; idx < g.region_size(r); ++idx) {
      double p = 1.0;
      for (std::size_t i = 0; i < vs.size(); ++i) p *= g.local_label(r, idx, i) == 1 ? b[vs[i]] : 1.0 - b[vs[i]];
      out[g.offset(r) + idx] = f[g.offset(r) + idx] * p;
    }
  }
  return out;
}

/// Relaxed inference: projected gradient ascent of T(soft_mask(f, b)) over
/// b ∈ [0,1]^K from random starts, rounded at 0.5; best restart by T at the
/// rounded configuration.
template <TopModel Top>
Assignment spen_relaxed_infer(const RegionGraph& g, const PotentialVector& f, const Top& top,
                              const SpenOptions& opt) {
  g.check_vector(f);
  for (std::size_t k = 0; k < g.num_vars(); ++k)
    require(g.domain(k) == 2, concat("relaxed inference needs binary variables; variable ", k,
                                     " has ", g.domain(k), " labels"));
  require(top.dim() == g.size(), "top dimension does not match the graph");
  Rng rng(opt.seed);
  const std::size_t K = g.num_vars();
  Assignment best;
  double best_value = -std::numeric_limits<double>::infinity();
  std::vector<double> b(K), grad_b(K), grad_y(g.size());
  for (std::size_t restart = 0; restart < std::max<std::size_t>(1, opt.restarts); ++restart) {
    for (double& v : b) v = rng.uniform();
    for (std::size_t step = 0; step < opt.steps; ++step) {
      const PotentialVector y = soft_mask(g, f, b);
      top.gradient(y.span(), grad_y);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);
      for (std::size_t r = 0; r < g.num_regions(); ++r) {
        const auto& vs = g.region_vars(r);
        for (std::size_t idx = 0; idx < g.region_size(r); ++idx) {
          const double c = grad_y[g.offset(r) + idx] * f[g.offset(r) + idx];
          if (c == 0.0) continue;
          for (std::size_t i = 0; i < vs.size(); ++i) {
            double p = g.local_label(r, idx, i) == 1 ? 1.0 : -1.0;
            for (std::size_t j = 0; j < vs.size(); ++j)
              if (j != i) p *= g.local_label(r, idx, j) == 1 ? b[vs[j]] : 1.0 - b[vs[j]];
            grad_b[vs[i]] += c * p;
          }
        }
      }
      for (std::size_t k = 0; k < K; ++k) b[k] = std::clamp(b[k] + opt.step_size * grad_b[k], 0.0, 1.0);
    }
    Assignment x(std::vector<Label>(K, 0));
    for (std::size_t k = 0; k < K; ++k) x[k] = b[k] >= 0.5 ? 1 : 0;
    const double v = top.value(mask(g, f, x).span());
    if (v > best_value) {
      best_value = v;
      best = x;
    }
  }
  return best;
}

}  // namespace nlstruct
