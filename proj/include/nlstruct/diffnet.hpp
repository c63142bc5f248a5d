#pragma once

// Small reverse-mode differentiable MLPs over flat parameter vectors, plus
// table-valued pairwise potentials.

#include <algorithm>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "nlstruct/core.hpp"

namespace nlstruct {

struct BlockSpec {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t size() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  bool operator==(const BlockSpec&) const = default;
};

/// Ordered, immutable list of named parameter blocks.
class ParamLayout {
public:
  ParamLayout() = default;
  explicit ParamLayout(std::vector<BlockSpec> blocks) : blocks_(std::move(blocks)) {
    offsets_.assign(1, 0);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j)
        require(blocks_[j].name != blocks_[i].name,
                concat("duplicate parameter block '", blocks_[i].name, "'"));
      offsets_.push_back(offsets_.back() + blocks_[i].size());
    }
  }

  std::size_t num_blocks() const { return blocks_.size(); }
  std::size_t total() const { return offsets_.empty() ? 0 : offsets_.back(); }
  const BlockSpec& block(std::size_t i) const { return blocks_.at(i); }
  const std::vector<BlockSpec>& blocks() const { return blocks_; }
  std::size_t offset(std::size_t i) const { return offsets_.at(i); }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      if (blocks_[i].name == name) return i;
    return std::nullopt;
  }

  bool operator==(const ParamLayout& o) const { return blocks_ == o.blocks_; }

private:
  std::vector<BlockSpec> blocks_;
  std::vector<std::size_t> offsets_{0};
};

/// Flat real vector partitioned by a shared ParamLayout.
class ParamVector {
public:
  ParamVector() : layout_(std::make_shared<const ParamLayout>()) {}
  explicit ParamVector(std::shared_ptr<const ParamLayout> layout, double fill = 0.0)
      : layout_(std::move(layout)), values_(layout_->total(), fill) {}

  const ParamLayout& layout() const { return *layout_; }
  const std::shared_ptr<const ParamLayout>& layout_ptr() const { return layout_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& raw() { return values_; }
  const std::vector<double>& raw() const { return values_; }

  std::span<double> block(std::size_t i) {
    return std::span<double>(values_).subspan(layout_->offset(i), layout_->block(i).size());
  }
  std::span<const double> block(std::size_t i) const {
    return std::span<const double>(values_).subspan(layout_->offset(i),
                                                    layout_->block(i).size());
  }
  std::span<double> block(std::string_view name) { return block(index_of(name)); }
  std::span<const double> block(std::string_view name) const { return block(index_of(name)); }

  std::size_t index_of(std::string_view name) const {
    auto i = layout_->find(name);
    require(i.has_value(), concat("unknown parameter block '", name, "'"));
    return *i;
  }

  ParamVector zeros_like() const { return ParamVector(layout_, 0.0); }

  double squared_norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return s;
  }

  ParamVector& operator+=(const ParamVector& o) {
    require(o.size() == size(), "parameter vector size mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }

  bool operator==(const ParamVector& o) const {
    return *layout_ == *o.layout_ && values_ == o.values_;
  }

private:
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<double> values_;
};

enum class Activation { identity, relu, leaky_relu, sigmoid, hardtanh };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::hardtanh: return "hardtanh";
  }
  return "?";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu" || s == "leaky-relu") return Activation::leaky_relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "hardtanh") return Activation::hardtanh;
  throw StructuralError(concat("unknown activation '", s, "'"));
}

struct AffineLayer {
  std::size_t in = 0;
  std::size_t out = 0;
};

struct ActivationLayer {
  Activation kind = Activation::identity;
  double slope = 0.01;  // leaky_relu only
};

using Layer = std::variant<AffineLayer, ActivationLayer>;

inline double activate(const ActivationLayer& a, double u) {
  switch (a.kind) {
    case Activation::identity: return u;
    case Activation::relu: return u > 0.0 ? u : 0.0;
    case Activation::leaky_relu: return u > 0.0 ? u : a.slope * u;
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-u));
    case Activation::hardtanh: return std::clamp(u, -1.0, 1.0);
  }
  return u;
}

// Derivative given the pre-activation u and the output v.
inline double activate_grad(const ActivationLayer& a, double u, double v) {
  switch (a.kind) {
    case Activation::identity: return 1.0;
    case Activation::relu: return u > 0.0 ? 1.0 : 0.0;
    case Activation::leaky_relu: return u > 0.0 ? 1.0 : a.slope;
    case Activation::sigmoid: return v * (1.0 - v);
    case Activation::hardtanh: return (u > -1.0 && u < 1.0) ? 1.0 : 0.0;
  }
  return 1.0;
}

enum class InitScheme { glorot_uniform, identity_ones, zeros };

inline InitScheme init_scheme_from_string(std::string_view s) {
  if (s == "glorot" || s == "glorot_uniform" || s == "glorot-uniform") return InitScheme::glorot_uniform;
  if (s == "identity_ones" || s == "identity-ones") return InitScheme::identity_ones;
  if (s == "zeros") return InitScheme::zeros;
  throw StructuralError(concat("unknown init scheme '", s, "'"));
}

/// A feed-forward network of affine and elementwise layers. The descriptor is
/// immutable; parameters come from a ParamVector with layout() as its layout.
class DiffNet {
public:
  DiffNet() = default;

  DiffNet(std::string prefix, std::vector<Layer> layers)
      : prefix_(std::move(prefix)), layers_(std::move(layers)) {
    require(!layers_.empty(), "network needs at least one layer");
    std::vector<BlockSpec> blocks;
    std::optional<std::size_t> width;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (const auto* aff = std::get_if<AffineLayer>(&layers_[i])) {
        require(aff->in > 0 && aff->out > 0, "affine layer with zero width");
        if (width) require(*width == aff->in, concat("layer ", i, ": expects width ", aff->in,
                                                       " but receives ", *width));
        if (!width) input_dim_ = aff->in;
        width = aff->out;
        affine_blocks_.push_back(blocks.size());
        blocks.push_back({concat(prefix_, ".", i, ".weight"), {aff->out, aff->in}});
        blocks.push_back({concat(prefix_, ".", i, ".bias"), {aff->out}});
      } else {
        require(width.has_value(), "network must start with an affine layer");
      }
    }
    output_dim_ = *width;
    layout_ = std::make_shared<const ParamLayout>(std::move(blocks));
  }

  /// Affine layers of the given widths with `hidden` between them and
  /// `output` after the last one.
  static DiffNet mlp(std::string prefix, const std::vector<std::size_t>& widths,
                     Activation hidden, Activation output = Activation::identity,
                     double slope = 0.01) {
    require(widths.size() >= 2, "mlp needs at least input and output widths");
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      layers.push_back(AffineLayer{widths[i], widths[i + 1]});
      const bool last = i + 2 == widths.size();
      const Activation a = last ? output : hidden;
      if (a != Activation::identity) layers.push_back(ActivationLayer{a, slope});
    }
    return DiffNet(std::move(prefix), std::move(layers));
  }

  const std::string& prefix() const { return prefix_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  const std::shared_ptr<const ParamLayout>& layout() const { return layout_; }
  std::size_t num_affine() const { return affine_blocks_.size(); }

  ParamVector make_params() const { return ParamVector(layout_); }

  /// Forward pass. `activations`, when given, receives every intermediate
  /// vector (input first) for a subsequent backward pass.
  std::vector<double> forward(const ParamVector& params, std::span<const double> input,
                              std::vector<std::vector<double>>* activations = nullptr) const {
    check_params(params);
    require(input.size() == input_dim_,
            concat(prefix_, ": input length ", input.size(), " != ", input_dim_));
    std::vector<double> cur(input.begin(), input.end());
    if (activations) {
      activations->clear();
      activations->push_back(cur);
    }
    std::size_t aff = 0;
    for (const auto& layer : layers_) {
      if (const auto* a = std::get_if<AffineLayer>(&layer)) {
        const auto [w, b] = affine_maps(params, aff++, *a);
        Eigen::Map<const Eigen::VectorXd> x(cur.data(), static_cast<Eigen::Index>(a->in));
        std::vector<double> next(a->out);
        Eigen::Map<Eigen::VectorXd> y(next.data(), static_cast<Eigen::Index>(a->out));
        y.noalias() = w * x;
        y += b;
        cur = std::move(next);
      } else {
        const auto& act = std::get<ActivationLayer>(layer);
        for (double& v : cur) v = activate(act, v);
      }
      if (activations) activations->push_back(cur);
    }
    return cur;
  }

  double forward_scalar(const ParamVector& params, std::span<const double> input) const {
    require(output_dim_ == 1, "forward_scalar on a vector-valued network");
    return forward(params, input)[0];
  }

  struct Gradients {
    std::vector<double> input;
    ParamVector params;
  };

  /// Reverse-mode product cotangentᵀ·J for the input and, when
  /// `want_params`, for every parameter block.
  Gradients vjp(const ParamVector& params, std::span<const double> input,
                std::span<const double> cotangent, bool want_params = true) const {
    std::vector<std::vector<double>> acts;
    forward(params, input, &acts);
    return backward(params, acts, cotangent, want_params);
  }

  /// Backward pass over activations recorded by forward().
  Gradients backward(const ParamVector& params, const std::vector<std::vector<double>>& acts,
                     std::span<const double> cotangent, bool want_params = true) const {
    require(acts.size() == layers_.size() + 1, "activation tape does not match network");
    require(cotangent.size() == output_dim_,
            concat(prefix_, ": cotangent length ", cotangent.size(), " != ", output_dim_));
    Gradients g;
    if (want_params) g.params = params.zeros_like();
    std::vector<double> delta(cotangent.begin(), cotangent.end());
    std::size_t aff = num_affine();
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& layer = layers_[li];
      if (const auto* a = std::get_if<AffineLayer>(&layer)) {
        --aff;
        const auto [w, b] = affine_maps(params, aff, *a);
        const auto& x = acts[li];
        Eigen::Map<const Eigen::VectorXd> d(delta.data(), static_cast<Eigen::Index>(a->out));
        if (want_params) {
          const std::size_t wi = affine_blocks_[aff];
          auto gw = g.params.block(wi);
          auto gb = g.params.block(wi + 1);
          Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> GW(
              gw.data(), static_cast<Eigen::Index>(a->out), static_cast<Eigen::Index>(a->in));
          Eigen::Map<const Eigen::VectorXd> X(x.data(), static_cast<Eigen::Index>(a->in));
          GW.noalias() = d * X.transpose();
          std::copy(delta.begin(), delta.end(), gb.begin());
        }
        std::vector<double> prev(a->in);
        Eigen::Map<Eigen::VectorXd> p(prev.data(), static_cast<Eigen::Index>(a->in));
        p.noalias() = w.transpose() * d;
        delta = std::move(prev);
      } else {
        const auto& act = std::get<ActivationLayer>(layer);
        const auto& u = acts[li];
        const auto& v = acts[li + 1];
        for (std::size_t j = 0; j < delta.size(); ++j) delta[j] *= activate_grad(act, u[j], v[j]);
      }
    }
    g.input = std::move(delta);
    return g;
  }

  ParamVector init(InitScheme scheme, std::uint64_t seed) const {
    ParamVector p = make_params();
    switch (scheme) {
      case InitScheme::zeros:
        break;
      case InitScheme::glorot_uniform: {
        Rng rng(seed);
        for (std::size_t k = 0; k < affine_blocks_.size(); ++k) {
          const auto& spec = p.layout().block(affine_blocks_[k]);
          const double limit = std::sqrt(6.0 / static_cast<double>(spec.shape[0] + spec.shape[1]));
          for (double& v : p.block(affine_blocks_[k])) v = rng.uniform(-limit, limit);
        }
        break;
      }
      case InitScheme::identity_ones: {
        require(affine_blocks_.size() == 2, "identity-ones init needs exactly two affine layers");
        const auto& first = p.layout().block(affine_blocks_[0]);
        require(first.shape[0] == first.shape[1],
                concat("identity-ones init needs a square first layer, got ", first.shape[0], "x",
                       first.shape[1]));
        auto w0 = p.block(affine_blocks_[0]);
        for (std::size_t i = 0; i < first.shape[0]; ++i) w0[i * first.shape[1] + i] = 1.0;
        for (double& v : p.block(affine_blocks_[1])) v = 1.0;
        break;
      }
    }
    return p;
  }

private:
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  void check_params(const ParamVector& params) const {
    require(params.layout() == *layout_, concat(prefix_, ": parameter layout mismatch"));
  }

  std::pair<Eigen::Map<const RowMat>, Eigen::Map<const Eigen::VectorXd>> affine_maps(
      const ParamVector& params, std::size_t aff, const AffineLayer& a) const {
    const std::size_t wi = affine_blocks_[aff];
    auto w = params.block(wi);
    auto b = params.block(wi + 1);
    return {Eigen::Map<const RowMat>(w.data(), static_cast<Eigen::Index>(a.out),
                                     static_cast<Eigen::Index>(a.in)),
            Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(a.out))};
  }

  std::string prefix_;
  std::vector<Layer> layers_;
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  std::vector<std::size_t> affine_blocks_;  // weight block index per affine layer
  std::shared_ptr<const ParamLayout> layout_ = std::make_shared<const ParamLayout>();
};

enum class Symmetry { none, diag_offdiag };

/// Pairwise potential f(s, t) = W[s][t]. Under diag_offdiag the table is
/// parameterized by two numbers: the shared diagonal and off-diagonal value.
struct PairTable {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Symmetry symmetry = Symmetry::none;

  static PairTable make(std::size_t rows, std::size_t cols, Symmetry symmetry) {
    require(rows > 0 && cols > 0, "empty pair table");
    require(symmetry == Symmetry::none || rows == cols,
            "diag-offdiag symmetry needs a square table");
    return PairTable{rows, cols, symmetry};
  }

  std::size_t num_params() const { return symmetry == Symmetry::diag_offdiag ? 2 : rows * cols; }
  std::vector<std::size_t> shape() const {
    if (symmetry == Symmetry::diag_offdiag) return {2};
    return {rows, cols};
  }

  std::size_t param_index(std::size_t s, std::size_t t) const {
    require(s < rows && t < cols, concat("pair label (", s, ",", t, ") out of range ", rows, "x", cols));
    if (symmetry == Symmetry::diag_offdiag) return s == t ? 0 : 1;
    return s * cols + t;
  }

  double eval(std::span<const double> params, std::size_t s, std::size_t t) const {
    return params[param_index(s, t)];
  }

  void accumulate_grad(std::span<double> grad, std::size_t s, std::size_t t, double cotangent) const {
    grad[param_index(s, t)] += cotangent;
  }
};

}  // namespace nlstruct
