#pragma once

// Top transformations T(y): scalar functions of a potential-sized vector that
// expose their value and input gradient. Context enters through the potentials.

#include <concepts>
#include <span>
#include <vector>

#include "nlstruct/diffnet.hpp"

namespace nlstruct {

template <class T>
concept TopModel = requires(const T& t, std::span<const double> y, std::span<double> g) {
  { t.dim() } -> std::convertible_to<std::size_t>;
  { t.value(y) } -> std::convertible_to<double>;
  // Writes ∇_y T(y) into g and returns T(y).
  { t.gradient(y, g) } -> std::convertible_to<double>;
};

/// T(y) = 1ᵀy, the classical summed score.
struct SumTop {
  std::size_t size = 0;

  std::size_t dim() const { return size; }
  double value(std::span<const double> y) const {
    double s = 0.0;
    for (double v : y) s += v;
    return s;
  }
  double gradient(std::span<const double> y, std::span<double> g) const {
    std::fill(g.begin(), g.end(), 1.0);
    return value(y);
  }
};

/// T(y) = wᵀy.
struct LinearTop {
  std::span<const double> weights;

  std::size_t dim() const { return weights.size(); }
  double value(std::span<const double> y) const {
    require(y.size() == weights.size(), "linear top: input length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weights[i] * y[i];
    return s;
  }
  double gradient(std::span<const double> y, std::span<double> g) const {
    std::copy(weights.begin(), weights.end(), g.begin());
    return value(y);
  }
};

/// T(y) = −½‖y − a‖² (+ offset). Strongly concave; used to pin down saddle points.
struct QuadraticTop {
  std::vector<double> center;
  double offset = 0.0;

  std::size_t dim() const { return center.size(); }
  double value(std::span<const double> y) const {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - center[i]) * (y[i] - center[i]);
    return offset - 0.5 * s;
  }
  double gradient(std::span<const double> y, std::span<double> g) const {
    for (std::size_t i = 0; i < y.size(); ++i) g[i] = center[i] - y[i];
    return value(y);
  }
};

/// Scalar-output DiffNet used as T.
class MlpTop {
public:
  MlpTop(const DiffNet& net, const ParamVector& params) : net_(&net), params_(&params) {
    require(net.output_dim() == 1, "top network must have a scalar output");
  }

  std::size_t dim() const { return net_->input_dim(); }
  double value(std::span<const double> y) const { return net_->forward_scalar(*params_, y); }
  double gradient(std::span<const double> y, std::span<double> g) const {
    std::vector<std::vector<double>> acts;
    const double v = net_->forward(*params_, y, &acts)[0];
    const double one = 1.0;
    auto grads = net_->backward(*params_, acts, std::span<const double>(&one, 1), false);
    std::copy(grads.input.begin(), grads.input.end(), g.begin());
    return v;
  }

  const DiffNet& net() const { return *net_; }
  const ParamVector& params() const { return *params_; }

private:
  const DiffNet* net_;
  const ParamVector* params_;
};

}  // namespace nlstruct
