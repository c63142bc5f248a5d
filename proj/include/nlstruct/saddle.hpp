#pragma once

// Primal-dual saddle-point inference coupling a top transformation T(y) to
// the discrete subproblem max_x λᵀH(x) through its relaxed dual.

#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include "nlstruct/mapsolver.hpp"
#include "nlstruct/top.hpp"

namespace nlstruct {

struct SaddleConfig {
  double alpha_y = 0.5;
  double alpha_lambda = 0.5;
  std::size_t iterations = 100;  // n, even
  std::size_t prox_max_iters = 50;
  double prox_step = 1.0;  // relaxation of the inner fixed-point update, in (0, 1]
  double prox_tol = 1e-6;
  std::size_t resolve_mu_every = 0;
  DualSolveOptions dual{};
  bool record_trace = false;
  bool record_iterates = false;

  void validate() const {
    require(alpha_y > 0.0 && alpha_lambda > 0.0, "saddle step sizes must be positive");
    require(iterations >= 2 && iterations % 2 == 0, "saddle iteration count must be even and >= 2");
    require(prox_step > 0.0 && prox_step <= 1.0, "prox_step must lie in (0, 1]");
    require(prox_max_iters >= 1, "prox_max_iters must be >= 1");
  }

  bool step_product_ok() const { return alpha_y * alpha_lambda <= 1.0; }
};

struct ProxResult {
  PotentialVector y;
  std::vector<double> gradient;  // ∇T at the returned y
  double residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Approximately solves argmax_y T(y) − λ̄ᵀy − ‖y − y_prev‖²/(2α_y) by the
/// damped fixed-point iteration y ← y_prev + α_y(∇T(y) − λ̄).
/// `grad_at_prev`, when given, is ∇T(y_prev) and saves one evaluation.
template <TopModel Top>
ProxResult prox_y(const Top& top, const PotentialVector& lambda_bar, const PotentialVector& y_prev,
                  double alpha_y, const SaddleConfig& cfg, const std::vector<double>* grad_at_prev = nullptr) {
  require(alpha_y > 0.0, "prox step alpha_y must be positive");
  require(lambda_bar.size() == y_prev.size() && top.dim() == y_prev.size(), "prox: dimension mismatch");
  const std::size_t D = y_prev.size();
  ProxResult res;
  res.y = y_prev;
  res.gradient.resize(D);
  if (grad_at_prev) {
    require(grad_at_prev->size() == D, "prox: cached gradient length mismatch");
    res.gradient = *grad_at_prev;
  } else {
    top.gradient(res.y.span(), res.gradient);
  }
  std::vector<double> r(D);
  std::vector<double> trace;
  for (std::size_t it = 0;; ++it) {
    double worst = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      r[j] = res.gradient[j] - lambda_bar[j] - (res.y[j] - y_prev[j]) / alpha_y;
      if (!std::isfinite(r[j])) worst = r[j];
      else if (std::isfinite(worst)) worst = std::max(worst, std::abs(r[j]));
    }
    if (!std::isfinite(worst)) throw NumericalFailure("non-finite prox residual", it, trace);
    trace.push_back(worst);
    res.residual = worst;
    res.iterations = it;
    if (worst <= cfg.prox_tol) {
      res.converged = true;
      return res;
    }
    if (it == cfg.prox_max_iters) return res;
    const double step = cfg.prox_step * alpha_y;
    for (std::size_t j = 0; j < D; ++j) res.y[j] += step * r[j];
    top.gradient(res.y.span(), res.gradient);
  }
}

/// T(y) − λᵀy + H^D(μ, θ(λ)).
template <TopModel Top>
double saddle_objective(const RegionGraph& g, const PotentialVector& y, const PotentialVector& lambda,
                        const MessageSet& mu, const PotentialVector& f, const Top& top,
                        const PotentialVector* loss = nullptr) {
  return top.value(y.span()) - lambda.dot(y) + dual_value(g, mu, theta_from(lambda, f, loss));
}

struct TraceRow {
  std::size_t iteration = 0;
  double objective = 0.0;
  double prox_residual = 0.0;
  double lambda_step = 0.0;
};

inline void write_trace(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "iteration\tobjective\tprox_residual\tlambda_step\n";
  os.precision(17);
  for (const auto& row : trace)
    os << row.iteration << '\t' << row.objective << '\t' << row.prox_residual << '\t' << row.lambda_step << '\n';
}

struct InferenceResult {
  MessageSet messages;
  PotentialVector lambda;  // averaged over the second half
  PotentialVector y;       // averaged over the second half
  PotentialVector lambda_bar;
  Assignment x;
  std::vector<TraceRow> trace;
  std::vector<PotentialVector> lambda_iterates;  // second-half iterates, when recorded
  std::vector<PotentialVector> y_iterates;
  double dual_value = 0.0;    // H^D at the returned messages
  double primal_score = 0.0;  // Σ θ at the decoded x, θ at the final λ̄
  double duality_gap = 0.0;
  std::size_t prox_limit_hits = 0;
  double max_prox_residual = 0.0;
  bool step_warning = false;
};

/// Runs the saddle-point procedure: messages for θ(λ₀), n primal-dual steps
/// with extrapolated λ̄, averaging over the last n/2 iterates, then messages
/// and decoding at the final λ̄. `loss` is added to θ for loss-augmented runs.
template <TopModel Top>
InferenceResult infer(const RegionGraph& g, const PotentialVector& f, const Top& top, const SaddleConfig& cfg,
                      const PotentialVector* loss = nullptr, const PotentialVector* lambda0 = nullptr,
                      const PotentialVector* y0 = nullptr) {
  cfg.validate();
  g.check_vector(f);
  require(top.dim() == g.size(), concat("top expects ", top.dim(), " inputs, graph has ", g.size(), " slots"));
  const std::size_t D = g.size();
  InferenceResult res;
  res.step_warning = !cfg.step_product_ok();

  PotentialVector lambda_prev = lambda0 ? *lambda0 : PotentialVector(D, 1.0);
  g.check_vector(lambda_prev, "lambda0");
  DualSolveResult dual = minimize_dual(g, theta_from(lambda_prev, f, loss), cfg.dual);
  MessageSet mu = std::move(dual.messages);

  PotentialVector y_prev = y0 ? *y0 : grad_lambda(g, mu, theta_from(lambda_prev, f, loss), f);
  g.check_vector(y_prev, "y0");
  PotentialVector lambda_bar = lambda_prev;

  const std::size_t n = cfg.iterations;
  const std::size_t half = n / 2;
  std::vector<double> sum_lambda(D, 0.0), sum_y(D, 0.0);
  std::vector<double> objective_trace;
  std::optional<std::vector<double>> cached_grad;

  for (std::size_t i = 1; i <= n; ++i) {
    ProxResult prox = prox_y(top, lambda_bar, y_prev, cfg.alpha_y, cfg, cached_grad ? &*cached_grad : nullptr);
    if (!prox.converged) ++res.prox_limit_hits;
    res.max_prox_residual = std::max(res.max_prox_residual, prox.residual);

    const PotentialVector g_lambda = grad_lambda(g, mu, theta_from(lambda_prev, f, loss), f);
    PotentialVector lambda(D);
    double step = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      lambda[j] = lambda_prev[j] - cfg.alpha_lambda * (g_lambda[j] - prox.y[j]);
      step = std::max(step, std::abs(lambda[j] - lambda_prev[j]));
      lambda_bar[j] = 2.0 * lambda[j] - lambda_prev[j];
    }
    if (!std::isfinite(step)) throw NumericalFailure("non-finite multiplier update", i, objective_trace);

    if (cfg.record_trace) {
      TraceRow row{i, saddle_objective(g, prox.y, lambda, mu, f, top, loss), prox.residual, step};
      objective_trace.push_back(row.objective);
      res.trace.push_back(row);
    }
    if (i > half) {
      for (std::size_t j = 0; j < D; ++j) {
        sum_lambda[j] += lambda[j];
        sum_y[j] += prox.y[j];
      }
      if (cfg.record_iterates) {
        res.lambda_iterates.push_back(lambda);
        res.y_iterates.push_back(prox.y);
      }
    }
    if (cfg.resolve_mu_every > 0 && i % cfg.resolve_mu_every == 0 && i < n)
      mu = minimize_dual(g, theta_from(lambda, f, loss), cfg.dual, &mu).messages;

    cached_grad = std::move(prox.gradient);
    y_prev = std::move(prox.y);
    lambda_prev = std::move(lambda);
  }

  res.lambda = PotentialVector(D);
  res.y = PotentialVector(D);
  const double count = static_cast<double>(n - half);
  for (std::size_t j = 0; j < D; ++j) {
    res.lambda[j] = sum_lambda[j] / count;
    res.y[j] = sum_y[j] / count;
  }
  res.lambda_bar = lambda_bar;
  const PotentialVector theta = theta_from(lambda_bar, f, loss);
  DualSolveResult final_dual = minimize_dual(g, theta, cfg.dual);
  res.messages = std::move(final_dual.messages);
  res.dual_value = final_dual.value;
  res.x = decode(g, res.messages, theta);
  res.primal_score = score_decomposed(g, theta, res.x);
  res.duality_gap = res.dual_value - res.primal_score;
  return res;
}

}  // namespace nlstruct
