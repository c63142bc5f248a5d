#pragma once

// Structured max-margin learning of unary networks, pairwise tables and the
// top transformation, with loss-augmented inference and staged training.

#include <exception>
#include <ostream>
#include <set>
#include <thread>

#include "nlstruct/dataset.hpp"
#include "nlstruct/metrics.hpp"
#include "nlstruct/saddle.hpp"

namespace nlstruct {

enum class PairMode { none, shared, per_edge };
enum class TopKind { none, sum, linear, mlp };

inline std::string_view to_string(PairMode m) {
  switch (m) {
    case PairMode::none: return "none";
    case PairMode::shared: return "shared";
    case PairMode::per_edge: return "per_edge";
  }
  return "?";
}

inline PairMode pair_mode_from_string(std::string_view s) {
  if (s == "none") return PairMode::none;
  if (s == "shared") return PairMode::shared;
  if (s == "per_edge" || s == "per-edge") return PairMode::per_edge;
  throw ConfigError(concat("unknown pair mode '", s, "'"));
}

inline std::string_view to_string(Symmetry s) { return s == Symmetry::none ? "none" : "diag_offdiag"; }

inline Symmetry symmetry_from_string(std::string_view s) {
  if (s == "none") return Symmetry::none;
  if (s == "diag_offdiag" || s == "diag-offdiag") return Symmetry::diag_offdiag;
  throw ConfigError(concat("unknown symmetry '", s, "'"));
}

inline std::string_view to_string(TopKind k) {
  switch (k) {
    case TopKind::none: return "none";
    case TopKind::sum: return "sum";
    case TopKind::linear: return "linear";
    case TopKind::mlp: return "mlp";
  }
  return "?";
}

inline TopKind top_kind_from_string(std::string_view s) {
  if (s == "none") return TopKind::none;
  if (s == "sum") return TopKind::sum;
  if (s == "linear") return TopKind::linear;
  if (s == "mlp") return TopKind::mlp;
  throw ConfigError(concat("unknown top kind '", s, "'"));
}

inline std::string_view to_string(InitScheme s) {
  switch (s) {
    case InitScheme::glorot_uniform: return "glorot_uniform";
    case InitScheme::identity_ones: return "identity_ones";
    case InitScheme::zeros: return "zeros";
  }
  return "?";
}

struct TopSpec {
  TopKind kind = TopKind::sum;
  std::size_t hidden = 0;  // 0 means the potential vector length
  Activation activation = Activation::sigmoid;
  double slope = 0.25;
  InitScheme init = InitScheme::identity_ones;
  double input_scale = 1.0;
};

struct ModelSpec {
  std::size_t feature_dim = 0;
  bool per_variable = true;  // one shared unary net applied to each variable's features
  std::vector<std::size_t> unary_hidden{128};
  Activation unary_activation = Activation::relu;
  double unary_slope = 0.01;
  PairMode pairs = PairMode::shared;
  Symmetry symmetry = Symmetry::none;
  TopSpec top;

  /// Canonical text, hashed into checkpoints.
  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "feature_dim " << feature_dim << "\nper_variable " << per_variable << "\nunary_hidden";
    for (auto h : unary_hidden) os << ' ' << h;
    os << "\nunary_activation " << to_string(unary_activation) << "\nunary_slope " << unary_slope
       << "\npairs " << to_string(pairs) << "\nsymmetry " << to_string(symmetry) << "\ntop " << to_string(top.kind)
       << "\ntop_hidden " << top.hidden << "\ntop_activation " << to_string(top.activation) << "\ntop_slope "
       << top.slope << "\ntop_init " << to_string(top.init) << "\ntop_input_scale " << top.input_scale << "\n";
    return os.str();
  }
};

/// Which parts of the model score a configuration: unary potentials only
/// (summed), unary and pairwise potentials (summed), or everything through T.
enum class View { unary, structured, full };

inline std::string_view to_string(View v) {
  switch (v) {
    case View::unary: return "unary";
    case View::structured: return "structured";
    case View::full: return "full";
  }
  return "?";
}

/// Parameters of the three model components.
struct ModelParams {
  ParamVector unary, pair, top;

  std::array<ParamVector*, 3> parts() { return {&unary, &pair, &top}; }
  std::array<const ParamVector*, 3> parts() const { return {&unary, &pair, &top}; }

  ModelParams zeros_like() const { return {unary.zeros_like(), pair.zeros_like(), top.zeros_like()}; }

  ModelParams& operator+=(const ModelParams& o) {
    unary += o.unary;
    pair += o.pair;
    top += o.top;
    return *this;
  }

  std::vector<std::string> block_names() const {
    std::vector<std::string> names;
    for (const ParamVector* p : parts())
      for (const auto& b : p->layout().blocks()) names.push_back(b.name);
    return names;
  }

  /// The block with this name in whichever component holds it.
  std::span<double> block(std::string_view name) {
    for (ParamVector* p : parts())
      if (auto i = p->layout().find(name)) return p->block(*i);
    throw StructuralError(concat("unknown parameter block '", name, "'"));
  }
  std::span<const double> block(std::string_view name) const {
    return const_cast<ModelParams*>(this)->block(name);
  }

  bool operator==(const ModelParams& o) const { return unary == o.unary && pair == o.pair && top == o.top; }
};

/// T backed by the model's top parameters.
class ModelTop {
public:
  ModelTop(TopKind kind, std::size_t dim, const DiffNet* net, const ParamVector* params, double scale)
      : kind_(kind), dim_(dim), net_(net), params_(params), scale_(scale) {}

  TopKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }

  double value(std::span<const double> y) const {
    require(y.size() == dim_, "top: input length mismatch");
    switch (kind_) {
      case TopKind::none:
      case TopKind::sum: return SumTop{dim_}.value(y);
      case TopKind::linear: return LinearTop{weights()}.value(y);
      case TopKind::mlp: return net_->forward_scalar(*params_, scaled(y));
    }
    return 0.0;
  }

  double gradient(std::span<const double> y, std::span<double> g) const {
    switch (kind_) {
      case TopKind::none:
      case TopKind::sum: return SumTop{dim_}.gradient(y, g);
      case TopKind::linear: return LinearTop{weights()}.gradient(y, g);
      case TopKind::mlp: {
        const double v = MlpTop(*net_, *params_).gradient(scaled(y), g);
        for (double& x : g) x *= scale_;
        return v;
      }
    }
    return 0.0;
  }

  /// out += coef · ∂T(y)/∂w over the top parameters.
  void accumulate_param_grad(std::span<const double> y, double coef, ParamVector& out) const {
    if (kind_ == TopKind::linear) {
      auto o = out.block(0);
      for (std::size_t i = 0; i < dim_; ++i) o[i] += coef * y[i];
    } else if (kind_ == TopKind::mlp) {
      const double one = 1.0;
      auto g = net_->vjp(*params_, scaled(y), std::span<const double>(&one, 1), true);
      auto& dst = out.raw();
      const auto& src = g.params.raw();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += coef * src[i];
    }
  }

  /// Weights of a linear top.
  std::span<const double> weights() const { return params_->block(0); }

private:
  std::vector<double> scaled(std::span<const double> y) const {
    std::vector<double> s(y.begin(), y.end());
    if (scale_ != 1.0)
      for (double& v : s) v *= scale_;
    return s;
  }

  TopKind kind_;
  std::size_t dim_;
  const DiffNet* net_;
  const ParamVector* params_;
  double scale_;
};

enum class InferMode { automatic, exact_dp, message_passing, saddle, spen_relaxed };

inline std::string_view to_string(InferMode m) {
  switch (m) {
    case InferMode::automatic: return "auto";
    case InferMode::exact_dp: return "exact-dp";
    case InferMode::message_passing: return "message-passing";
    case InferMode::saddle: return "saddle";
    case InferMode::spen_relaxed: return "spen-relaxed";
  }
  return "?";
}

inline InferMode infer_mode_from_string(std::string_view s) {
  if (s == "auto") return InferMode::automatic;
  if (s == "exact-dp") return InferMode::exact_dp;
  if (s == "message-passing") return InferMode::message_passing;
  if (s == "saddle") return InferMode::saddle;
  if (s == "spen-relaxed") return InferMode::spen_relaxed;
  throw ConfigError(concat("unknown inference mode '", s, "'"));
}

struct InferOptions {
  InferMode mode = InferMode::automatic;
  SaddleConfig saddle{};
  SpenOptions spen{};
};

struct Decoded {
  Assignment x;
  double duality_gap = 0.0;
  std::size_t prox_limit_hits = 0;
  std::vector<TraceRow> trace;
};

/// Unary slot (k, s) = scale · 1[s ≠ x_k]; higher-order slots 0.
inline PotentialVector loss_vector(const RegionGraph& g, const Assignment& x, double scale) {
  g.check_assignment(x);
  PotentialVector loss(g.size());
  for (std::size_t k = 0; k < g.num_vars(); ++k)
    for (std::size_t s = 0; s < g.domain(k); ++s) loss[g.offset(k) + s] = s == x[k] ? 0.0 : scale;
  return loss;
}

inline double hamming(const Assignment& a, const Assignment& b) {
  double n = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) n += a[k] != b[k];
  return n;
}

/// Saddle-point inference on the loss-augmented objective T(y) + L(x_true, x).
template <TopModel Top>
InferenceResult loss_augmented_infer(const RegionGraph& g, const PotentialVector& f, const Top& top,
                                     const Assignment& x_true, double loss_scale, const SaddleConfig& cfg) {
  const PotentialVector loss = loss_vector(g, x_true, loss_scale);
  return infer(g, f, top, cfg, &loss);
}

class Model {
public:
  Model(RegionGraph graph, ModelSpec spec) : graph_(std::move(graph)), spec_(std::move(spec)) {
    const std::size_t K = graph_.num_vars();
    require(spec_.feature_dim > 0, "model feature dimension must be positive");
    std::vector<std::size_t> widths{spec_.feature_dim};
    widths.insert(widths.end(), spec_.unary_hidden.begin(), spec_.unary_hidden.end());
    if (spec_.per_variable) {
      for (std::size_t k = 1; k < K; ++k)
        require(graph_.domain(k) == graph_.domain(0), "a shared unary net needs equal domains");
      widths.push_back(graph_.domain(0));
    } else {
      std::size_t total = 0;
      for (auto d : graph_.domains()) total += d;
      widths.push_back(total);
    }
    unary_net_ = DiffNet::mlp("unary", widths, spec_.unary_activation, Activation::identity, spec_.unary_slope);

    std::vector<BlockSpec> pair_blocks;
    if (spec_.pairs != PairMode::none) {
      for (std::size_t r = K; r < graph_.num_regions(); ++r) {
        const auto& vs = graph_.region_vars(r);
        require(vs.size() == 2, "pair tables need pairwise regions");
        const PairTable t = PairTable::make(graph_.domain(vs[0]), graph_.domain(vs[1]), spec_.symmetry);
        if (spec_.pairs == PairMode::shared) {
          if (tables_.empty()) {
            tables_.push_back(t);
            pair_blocks.push_back({"pair.shared", t.shape()});
          }
          require(t.rows == tables_[0].rows && t.cols == tables_[0].cols, "a shared pair table needs equal domains");
          table_of_.push_back(0);
        } else {
          table_of_.push_back(tables_.size());
          tables_.push_back(t);
          pair_blocks.push_back({concat("pair.", vs[0], "_", vs[1]), t.shape()});
        }
      }
    }
    pair_layout_ = std::make_shared<const ParamLayout>(std::move(pair_blocks));

    const std::size_t D = graph_.size();
    if (spec_.top.kind == TopKind::linear) {
      top_layout_ = std::make_shared<const ParamLayout>(std::vector<BlockSpec>{{"top.weight", {D}}});
    } else if (spec_.top.kind == TopKind::mlp) {
      const std::size_t hidden = spec_.top.hidden == 0 ? D : spec_.top.hidden;
      top_net_ = DiffNet::mlp("top", {D, hidden, 1}, spec_.top.activation, Activation::identity, spec_.top.slope);
      top_layout_ = top_net_->layout();
    } else {
      top_layout_ = std::make_shared<const ParamLayout>();
    }
  }

  const RegionGraph& graph() const { return graph_; }
  const ModelSpec& spec() const { return spec_; }
  const DiffNet& unary_net() const { return unary_net_; }
  const DiffNet* top_net() const { return top_net_ ? &*top_net_ : nullptr; }
  const std::vector<PairTable>& tables() const { return tables_; }

  /// Unary nets Glorot-uniform, pair tables zero, linear T all ones, MLP T per spec.
  ModelParams init(std::uint64_t seed) const {
    ModelParams p;
    p.unary = unary_net_.init(InitScheme::glorot_uniform, derive_seed(seed, 1));
    p.pair = ParamVector(pair_layout_);
    if (spec_.top.kind == TopKind::linear) p.top = ParamVector(top_layout_, 1.0);
    else if (top_net_) p.top = top_net_->init(spec_.top.init, derive_seed(seed, 3));
    else p.top = ParamVector(top_layout_);
    return p;
  }

  /// Collapses views that coincide for this spec.
  View effective(View v) const {
    if (v == View::full && spec_.top.kind == TopKind::none) return View::unary;
    if (v == View::full && spec_.top.kind == TopKind::sum) return View::structured;
    return v;
  }

  TopKind top_kind(View v) const { return effective(v) == View::full ? spec_.top.kind : TopKind::sum; }

  ModelTop top(const ModelParams& p, View v) const {
    const TopKind k = top_kind(v);
    return ModelTop(k, graph_.size(), top_net(), &p.top, k == TopKind::mlp ? spec_.top.input_scale : 1.0);
  }

  void check(const Dataset& d) const {
    require(d.domains == graph_.domains(), "dataset domains do not match the model graph");
    require(d.feature_dim == spec_.feature_dim && d.per_variable == spec_.per_variable,
            "dataset features do not match the model");
  }

  PotentialVector potentials(const ModelParams& p, View v, const Dataset& d, const Example& e) const {
    d.check(e);
    PotentialVector f(graph_.size());
    const std::size_t K = graph_.num_vars();
    if (spec_.per_variable) {
      for (std::size_t k = 0; k < K; ++k) {
        const auto out = unary_net_.forward(p.unary, d.features(e, k));
        std::copy(out.begin(), out.end(), f.begin() + static_cast<std::ptrdiff_t>(graph_.offset(k)));
      }
    } else {
      const auto out = unary_net_.forward(p.unary, e.features);
      std::copy(out.begin(), out.end(), f.begin());
    }
    if (effective(v) != View::unary && spec_.pairs != PairMode::none) {
      for (std::size_t r = K; r < graph_.num_regions(); ++r) {
        const PairTable& t = tables_[table_of_[r - K]];
        const auto w = p.pair.block(table_of_[r - K]);
        for (std::size_t idx = 0; idx < graph_.region_size(r); ++idx)
          f[graph_.offset(r) + idx] = t.eval(w, idx / t.cols, idx % t.cols);
      }
    }
    return f;
  }

  /// grad += ∂(cotᵀ f)/∂w for the unary and/or pair components.
  void backprop_potentials(const ModelParams& p, View v, const Dataset& d, const Example& e,
                           const std::vector<double>& cot, ModelParams& grad, bool unary, bool pair) const {
    const std::size_t K = graph_.num_vars();
    if (unary) {
      auto add = [&](std::span<const double> input, std::span<const double> c) {
        bool any = false;
        for (double x : c) any |= x != 0.0;
        if (!any) return;
        const auto g = unary_net_.vjp(p.unary, input, c, true);
        grad.unary += g.params;
      };
      if (spec_.per_variable) {
        for (std::size_t k = 0; k < K; ++k)
          add(d.features(e, k), std::span<const double>(cot).subspan(graph_.offset(k), graph_.domain(k)));
      } else {
        add(e.features, std::span<const double>(cot).subspan(0, graph_.offset(K)));
      }
    }
    if (pair && effective(v) != View::unary && spec_.pairs != PairMode::none) {
      for (std::size_t r = K; r < graph_.num_regions(); ++r) {
        const PairTable& t = tables_[table_of_[r - K]];
        auto gw = grad.pair.block(table_of_[r - K]);
        for (std::size_t idx = 0; idx < graph_.region_size(r); ++idx) {
          const double c = cot[graph_.offset(r) + idx];
          if (c != 0.0) t.accumulate_grad(gw, idx / t.cols, idx % t.cols, c);
        }
      }
    }
  }

  /// Decodes argmax_x T(H(x)) (+ loss) with the requested inference mode.
  Decoded decode(const ModelParams& p, View v, const PotentialVector& f, const InferOptions& opt,
                 const PotentialVector* loss = nullptr) const {
    const View ev = effective(v);
    const ModelTop t = top(p, v);
    const bool linear_in_y = t.kind() != TopKind::mlp;
    Decoded out;
    InferMode mode = opt.mode;
    if (mode == InferMode::automatic) {
      if (!linear_in_y) mode = InferMode::saddle;
      else if (ev == View::unary || graph_.num_higher() == 0 || graph_.is_chain()) mode = InferMode::exact_dp;
      else mode = InferMode::message_passing;
    }
    auto linear_theta = [&] {
      if (t.kind() == TopKind::linear) return theta_from(PotentialVector(std::vector<double>(t.weights().begin(), t.weights().end())), f, loss);
      return theta_from(PotentialVector(graph_.size(), 1.0), f, loss);
    };
    switch (mode) {
      case InferMode::exact_dp: {
        require(linear_in_y, "exact-dp inference needs a top that is linear in the potentials");
        const PotentialVector theta = linear_theta();
        if (ev == View::unary || graph_.num_higher() == 0) {
          out.x = nlstruct::decode(graph_, MessageSet(graph_), theta);
        } else {
          require(graph_.is_chain(), "exact-dp inference needs a chain graph");
          out.x = map_chain_dp(graph_, theta).x;
        }
        break;
      }
      case InferMode::message_passing: {
        require(linear_in_y, "message-passing inference needs a top that is linear in the potentials");
        const PotentialVector theta = linear_theta();
        const auto dual = minimize_dual(graph_, theta, opt.saddle.dual);
        out.x = nlstruct::decode(graph_, dual.messages, theta);
        out.duality_gap = dual.value - score_decomposed(graph_, theta, out.x);
        break;
      }
      case InferMode::saddle: {
        auto res = infer(graph_, f, t, opt.saddle, loss);
        out.x = std::move(res.x);
        out.duality_gap = res.duality_gap;
        out.prox_limit_hits = res.prox_limit_hits;
        out.trace = std::move(res.trace);
        break;
      }
      case InferMode::spen_relaxed:
        require(loss == nullptr, "relaxed inference does not support loss augmentation");
        out.x = spen_relaxed_infer(graph_, f, t, opt.spen);
        break;
      case InferMode::automatic: break;
    }
    return out;
  }

private:
  RegionGraph graph_;
  ModelSpec spec_;
  DiffNet unary_net_;
  std::optional<DiffNet> top_net_;
  std::vector<PairTable> tables_;
  std::vector<std::size_t> table_of_;  // per higher-order region
  std::shared_ptr<const ParamLayout> pair_layout_;
  std::shared_ptr<const ParamLayout> top_layout_;
};

/// Trainable block names, grouped per component for quick checks.
class BlockSelection {
public:
  BlockSelection() = default;
  BlockSelection(const ModelParams& p, const std::set<std::string>& names) : names_(names) {
    const auto all = p.block_names();
    for (const auto& n : names_)
      require(std::find(all.begin(), all.end(), n) != all.end(), concat("unknown parameter block '", n, "'"));
    const auto parts = p.parts();
    for (std::size_t c = 0; c < 3; ++c)
      for (const auto& b : parts[c]->layout().blocks()) any_[c] |= names_.count(b.name) > 0;
  }

  static BlockSelection all(const ModelParams& p) {
    const auto names = p.block_names();
    return BlockSelection(p, std::set<std::string>(names.begin(), names.end()));
  }

  bool contains(const std::string& name) const { return names_.count(name) > 0; }
  bool unary() const { return any_[0]; }
  bool pair() const { return any_[1]; }
  bool top() const { return any_[2]; }
  bool empty() const { return names_.empty(); }
  const std::set<std::string>& names() const { return names_; }

private:
  std::set<std::string> names_;
  std::array<bool, 3> any_{};
};

struct ExampleGradient {
  ModelParams grad;
  double t_hat = 0.0;
  double t_true = 0.0;
  double loss = 0.0;

  double hinge() const { return t_hat + loss - t_true; }
};

/// ∇_w [T(H(x̂)) − T(H(x))] at fixed x̂ for the selected components. Exactly
/// zero when x̂ = x.
inline ExampleGradient example_gradient(const Model& m, const ModelParams& p, View v, const Dataset& d,
                                        const Example& e, const PotentialVector& f, const Assignment& x_hat,
                                        double loss_scale, const BlockSelection& sel) {
  const RegionGraph& g = m.graph();
  g.check_assignment(x_hat);
  ExampleGradient out{p.zeros_like()};
  const ModelTop top = m.top(p, v);
  const PotentialVector y_hat = mask(g, f, x_hat), y_true = mask(g, f, e.x);
  out.loss = loss_scale * hamming(x_hat, e.x);
  if (x_hat == e.x) {
    out.t_hat = out.t_true = top.value(y_true.span());
    return out;
  }
  std::vector<double> gy_hat(g.size()), gy_true(g.size());
  out.t_hat = top.gradient(y_hat.span(), gy_hat);
  out.t_true = top.gradient(y_true.span(), gy_true);
  if (!std::isfinite(out.t_hat) || !std::isfinite(out.t_true))
    throw NumericalFailure("non-finite top value in the example gradient");
  if (sel.unary() || sel.pair()) {
    std::vector<double> cot(g.size(), 0.0);
    for (auto s : selected_slots(g, x_hat)) cot[s] += gy_hat[s];
    for (auto s : selected_slots(g, e.x)) cot[s] -= gy_true[s];
    m.backprop_potentials(p, v, d, e, cot, out.grad, sel.unary(), sel.pair());
  }
  if (sel.top()) {
    top.accumulate_param_grad(y_hat.span(), 1.0, out.grad.top);
    top.accumulate_param_grad(y_true.span(), -1.0, out.grad.top);
  }
  return out;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Exceptions are
/// captured per index; the lowest failing index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) run(i);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct TrainConfig {
  double learning_rate = 0.01;
  double weight_decay = 0.0;  // C
  std::size_t minibatch = 10;
  std::size_t epochs = 10;
  double loss_scale = 1.0;
  std::uint64_t seed = 0;
  InferOptions inference{};
  std::size_t threads = 1;
  bool train_metrics = false;
  bool select_best = true;

  void validate() const {
    require(learning_rate > 0.0, "learning rate must be positive");
    require(weight_decay >= 0.0, "weight decay must be non-negative");
    require(minibatch >= 1, "minibatch size must be at least 1");
    require(loss_scale >= 0.0, "loss scale must be non-negative");
  }
};

/// Decodes every example of `d` (no loss augmentation).
inline std::vector<Assignment> predict_all(const Model& m, const ModelParams& p, View v, const Dataset& d,
                                           const InferOptions& opt, std::size_t threads = 1,
                                           const std::vector<PotentialVector>* cached = nullptr) {
  std::vector<Assignment> out(d.size());
  parallel_for(d.size(), threads, [&](std::size_t i) {
    const PotentialVector f = cached ? (*cached)[i] : m.potentials(p, v, d, d.examples[i]);
    out[i] = m.decode(p, v, f, opt).x;
  });
  return out;
}

struct HistoryRow {
  std::size_t epoch = 0;
  double objective = 0.0;  // mean hinge + C/2‖w‖² over trainable blocks; NaN for epoch 0
  std::optional<MetricReport> train;
  MetricReport val;
};

inline void write_history(std::ostream& os, const std::vector<HistoryRow>& rows) {
  os << "epoch\tobjective\ttrain_word_acc\ttrain_char_acc\tval_word_acc\tval_char_acc\tval_hamming\tval_macro_f1\n";
  os.precision(10);
  for (const auto& r : rows) {
    os << r.epoch << '\t';
    if (std::isnan(r.objective)) os << '-';
    else os << r.objective;
    if (r.train) os << '\t' << r.train->word_accuracy << '\t' << r.train->char_accuracy;
    else os << "\t-\t-";
    os << '\t' << r.val.word_accuracy << '\t' << r.val.char_accuracy << '\t' << r.val.hamming_loss << '\t'
       << r.val.macro_f1 << '\n';
  }
}

struct TrainResult {
  ModelParams params;  // best-validation parameters when selection is on, else final
  ModelParams final_params;
  std::vector<HistoryRow> history;
  std::size_t best_epoch = 0;
  bool halted = false;
  std::string failure;
};

/// Minibatch subgradient descent w ← w − α(Cw + g) on the selected blocks.
inline TrainResult train(const Model& m, const ModelParams& init, View v, const Dataset& train_set,
                         const Dataset& val_set, const TrainConfig& cfg, const BlockSelection& sel) {
  cfg.validate();
  require(!train_set.empty(), "training set is empty");
  m.check(train_set);
  if (!val_set.empty()) m.check(val_set);
  TrainResult res;
  ModelParams p = init;

  // Potentials stay fixed when neither unary nor pair blocks move.
  const bool fixed_potentials = !sel.unary() && !(sel.pair() && m.effective(v) != View::unary);
  std::vector<PotentialVector> f_train, f_val;
  auto fill_cache = [&](const Dataset& d, std::vector<PotentialVector>& cache) {
    cache.resize(d.size());
    parallel_for(d.size(), cfg.threads, [&](std::size_t i) { cache[i] = m.potentials(p, v, d, d.examples[i]); });
  };
  if (fixed_potentials) {
    fill_cache(train_set, f_train);
    fill_cache(val_set, f_val);
  }

  auto evaluate_val = [&](HistoryRow& row) {
    row.val = compute_metrics(val_set, predict_all(m, p, v, val_set, cfg.inference, cfg.threads,
                                                   fixed_potentials ? &f_val : nullptr));
    if (cfg.train_metrics)
      row.train = compute_metrics(train_set, predict_all(m, p, v, train_set, cfg.inference, cfg.threads,
                                                         fixed_potentials ? &f_train : nullptr));
  };

  auto decay_norm = [&] {
    double s = 0.0;
    for (const auto& name : sel.names())
      for (double w : p.block(name)) s += w * w;
    return 0.5 * cfg.weight_decay * s;
  };

  HistoryRow first;
  first.objective = std::nan("");
  evaluate_val(first);
  res.history.push_back(first);
  res.params = p;
  double best_score = first.val.char_accuracy;

  const std::size_t N = train_set.size();
  std::vector<std::size_t> order(N);
  const std::vector<std::string> names(sel.names().begin(), sel.names().end());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < N; ++i) order[i] = i;
    Rng shuffle(derive_seed(cfg.seed, epoch));
    shuffle.shuffle(order);
    double hinge_sum = 0.0;
    for (std::size_t start = 0; start < N; start += cfg.minibatch) {
      const std::size_t count = std::min(cfg.minibatch, N - start);
      std::vector<ExampleGradient> grads(count);
      try {
        parallel_for(count, cfg.threads, [&](std::size_t j) {
          const std::size_t idx = order[start + j];
          const Example& e = train_set.examples[idx];
          try {
            const PotentialVector f = fixed_potentials ? f_train[idx] : m.potentials(p, v, train_set, e);
            const PotentialVector loss = loss_vector(m.graph(), e.x, cfg.loss_scale);
            const Assignment x_hat = m.decode(p, v, f, cfg.inference, &loss).x;
            grads[j] = example_gradient(m, p, v, train_set, e, f, x_hat, cfg.loss_scale, sel);
          } catch (const NumericalFailure& err) {
            throw NumericalFailure(concat("example ", idx, ": ", err.what()), err.iteration(), err.trace());
          }
        });
      } catch (const NumericalFailure& err) {
        res.halted = true;
        res.failure = concat("epoch ", epoch, ", ", err.what());
        res.final_params = p;
        if (!cfg.select_best) res.params = p;
        return res;
      }
      ModelParams g = p.zeros_like();
      for (const auto& eg : grads) {
        g += eg.grad;
        hinge_sum += eg.hinge();
      }
      for (const auto& name : names) {
        auto w = p.block(name);
        const auto gw = g.block(name);
        for (std::size_t i = 0; i < w.size(); ++i)
          w[i] -= cfg.learning_rate * (cfg.weight_decay * w[i] + gw[i]);
      }
    }
    HistoryRow row;
    row.epoch = epoch;
    row.objective = hinge_sum / static_cast<double>(N) + decay_norm();
    evaluate_val(row);
    res.history.push_back(row);
    if (!cfg.select_best || row.val.char_accuracy > best_score) {
      best_score = row.val.char_accuracy;
      res.best_epoch = epoch;
      res.params = p;
    }
  }
  res.final_params = p;
  return res;
}

enum class StageKind { unary_only, pairwise_given_unary, top_given_potentials, joint };

inline std::string_view to_string(StageKind k) {
  switch (k) {
    case StageKind::unary_only: return "unary-only";
    case StageKind::pairwise_given_unary: return "pairwise-given-unary";
    case StageKind::top_given_potentials: return "top-given-potentials";
    case StageKind::joint: return "joint";
  }
  return "?";
}

inline StageKind stage_kind_from_string(std::string_view s) {
  if (s == "unary-only") return StageKind::unary_only;
  if (s == "pairwise-given-unary") return StageKind::pairwise_given_unary;
  if (s == "top-given-potentials") return StageKind::top_given_potentials;
  if (s == "joint") return StageKind::joint;
  throw ConfigError(concat("unknown stage kind '", s, "'"));
}

struct Stage {
  std::string name;
  StageKind kind = StageKind::joint;
  TrainConfig train{};
  std::vector<std::string> freeze;  // block names, or a component name: unary, pair, top
};

inline View stage_view(StageKind k) {
  switch (k) {
    case StageKind::unary_only: return View::unary;
    case StageKind::pairwise_given_unary: return View::structured;
    default: return View::full;
  }
}

inline BlockSelection stage_selection(const ModelParams& p, const Stage& s) {
  std::set<std::string> names;
  auto add_component = [&](const ParamVector& c) {
    for (const auto& b : c.layout().blocks()) names.insert(b.name);
  };
  switch (s.kind) {
    case StageKind::unary_only: add_component(p.unary); break;
    case StageKind::pairwise_given_unary: add_component(p.pair); break;
    case StageKind::top_given_potentials: add_component(p.top); break;
    case StageKind::joint:
      add_component(p.unary);
      add_component(p.pair);
      add_component(p.top);
      break;
  }
  const auto all = p.block_names();
  for (const auto& f : s.freeze) {
    const ParamVector* component = f == "unary" ? &p.unary : f == "pair" ? &p.pair : f == "top" ? &p.top : nullptr;
    if (component) {
      for (const auto& b : component->layout().blocks()) names.erase(b.name);
    } else {
      require(std::find(all.begin(), all.end(), f) != all.end(), concat("unknown parameter block '", f, "'"));
      names.erase(f);
    }
  }
  return BlockSelection(p, names);
}

struct StagedResult {
  ModelParams params;
  std::vector<std::pair<std::string, TrainResult>> stages;
  bool halted = false;
};

/// Runs the stages in order, each starting from the previous stage's selected parameters.
inline StagedResult staged_training(const Model& m, const ModelParams& init, const std::vector<Stage>& plan,
                                    const Dataset& train_set, const Dataset& val_set) {
  StagedResult out{init, {}};
  for (const Stage& s : plan) {
    const BlockSelection sel = stage_selection(out.params, s);
    TrainResult r = train(m, out.params, stage_view(s.kind), train_set, val_set, s.train, sel);
    out.params = r.params;
    out.halted = r.halted;
    out.stages.emplace_back(s.name, std::move(r));
    if (out.halted) break;
  }
  return out;
}

}  // namespace nlstruct
