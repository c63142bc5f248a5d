#pragma once

// Run configuration: a sectioned `key = value` text format. Every key must be
// known to its section; stage sections are `[stage.<name>]` and run in file order.

#include <charconv>
#include <functional>
#include <map>

#include "nlstruct/tasks.hpp"

namespace nlstruct {

struct ConfigEntry {
  std::string key, value;
  std::size_t line = 0;
};

struct ConfigSection {
  std::string name;
  std::size_t line = 0;
  std::vector<ConfigEntry> entries;
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::vector<ConfigSection> read_sections(const std::string& text, const std::string& source) {
  std::vector<ConfigSection> sections;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(concat(source, ":", line, ": malformed section header"));
      const std::string name = trim(s.substr(1, s.size() - 2));
      for (const auto& sec : sections)
        if (sec.name == name) throw ConfigError(concat(source, ":", line, ": duplicate section [", name, "]"));
      sections.push_back({name, line, {}});
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(concat(source, ":", line, ": expected 'key = value'"));
    if (sections.empty()) throw ConfigError(concat(source, ":", line, ": key outside of any section"));
    ConfigEntry e{trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line};
    if (e.key.empty()) throw ConfigError(concat(source, ":", line, ": empty key"));
    for (const auto& prev : sections.back().entries)
      if (prev.key == e.key) throw ConfigError(concat(source, ":", line, ": duplicate key '", e.key, "'"));
    sections.back().entries.push_back(std::move(e));
  }
  return sections;
}

struct BenchSpec {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<GraphKind> graphs{GraphKind::chain};
  std::string unary_stage = "unary";
  std::string pair_stage = "pairwise";
  std::string linear_stage = "linear_top";
  std::string mlp_stage = "mlp_top";
  bool spen = true;  // add relaxed inference on the NLTop model when variables are binary
};

struct GradcheckSpec {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t samples_per_block = 12;  // coordinates checked per block, 0 = all
  std::size_t example = 0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "run";
  std::size_t threads = 1;
  std::vector<std::string> plan;  // stage names run by train; empty = all, in file order

  TaskKind task = TaskKind::words;
  std::optional<std::uint64_t> task_seed;
  WordTaskSpec words = WordTaskSpec::reduced();
  MultilabelTaskSpec multilabel{};
  std::string dataset;  // load instead of generating when set

  GraphKind graph = GraphKind::chain;
  ModelSpec model{};
  InferOptions inference{};  // [saddle], [spen] and the evaluation mode
  std::vector<Stage> stages;
  BenchSpec bench{};
  GradcheckSpec gradcheck{};
  std::string source_text;

  std::uint64_t data_seed() const { return task_seed.value_or(seed); }

  const Stage& stage(const std::string& name) const {
    for (const auto& s : stages)
      if (s.name == name) return s;
    throw ConfigError(concat("no [stage.", name, "] section"));
  }
};

namespace detail {

template <class T>
T parse_number(const ConfigEntry& e, const std::string& source) {
  T v{};
  const char* b = e.value.data();
  const char* end = b + e.value.size();
  auto [ptr, ec] = std::from_chars(b, end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(concat(source, ":", e.line, ": invalid value '", e.value, "' for '", e.key, "'"));
  return v;
}

inline bool parse_bool(const ConfigEntry& e, const std::string& source) {
  if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no") return false;
  throw ConfigError(concat(source, ":", e.line, ": expected a boolean for '", e.key, "'"));
}

using Setter = std::function<void(const ConfigEntry&)>;

inline void apply(const ConfigSection& sec, const std::map<std::string, Setter>& keys, const std::string& source) {
  for (const auto& e : sec.entries) {
    auto it = keys.find(e.key);
    if (it == keys.end())
      throw ConfigError(concat(source, ":", e.line, ": unknown key '", e.key, "' in [", sec.name, "]"));
    try {
      it->second(e);
    } catch (const ConfigError& err) {
      const std::string what = err.what();
      if (what.rfind(source + ":", 0) == 0) throw;
      throw ConfigError(concat(source, ":", e.line, ": ", what));
    }
  }
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
  using detail::parse_bool;
  using detail::parse_number;
  RunConfig c;
  c.source_text = text;
  const auto sections = read_sections(text, source);
  auto num = [&](auto& target) {
    return [&target, &source](const ConfigEntry& e) {
      target = parse_number<std::remove_reference_t<decltype(target)>>(e, source);
    };
  };
  auto flag = [&](bool& target) { return [&target, &source](const ConfigEntry& e) { target = parse_bool(e, source); }; };

  // Task and model keys are applied after we know which task is selected.
  for (const auto& sec : sections) {
    if (sec.name == "run") {
      detail::apply(sec,
                    {{"seed", num(c.seed)},
                     {"out", [&](const ConfigEntry& e) { c.out = e.value; }},
                     {"threads", num(c.threads)},
                     {"stages", [&](const ConfigEntry& e) { c.plan = split_list(e.value); }}},
                    source);
    } else if (sec.name == "task") {
      detail::apply(
          sec,
          {{"kind",
            [&](const ConfigEntry& e) {
              if (e.value == "words") c.task = TaskKind::words;
              else if (e.value == "multilabel") c.task = TaskKind::multilabel;
              else throw ConfigError(concat("unknown task kind '", e.value, "'"));
            }},
           {"seed", [&](const ConfigEntry& e) { c.task_seed = parse_number<std::uint64_t>(e, source); }},
           {"dataset", [&](const ConfigEntry& e) { c.dataset = e.value; }},
           {"vocabulary",
            [&](const ConfigEntry& e) {
              if (e.value == "common50") c.words.vocabulary = common_words();
              else if (e.value == "reduced10") c.words.vocabulary = reduced_words();
              else c.words.vocabulary = split_list(e.value);
            }},
           {"alphabet",
            [&](const ConfigEntry& e) {
              if (e.value == "full") c.words.full_alphabet = true;
              else if (e.value == "vocabulary") c.words.full_alphabet = false;
              else throw ConfigError(concat("alphabet must be 'full' or 'vocabulary'"));
            }},
           {"train",
            [&](const ConfigEntry& e) { c.words.train = c.multilabel.train = parse_number<std::size_t>(e, source); }},
           {"val", [&](const ConfigEntry& e) { c.words.val = c.multilabel.val = parse_number<std::size_t>(e, source); }},
           {"test",
            [&](const ConfigEntry& e) { c.words.test = c.multilabel.test = parse_number<std::size_t>(e, source); }},
           {"max_rotation_deg", num(c.words.noise.max_rotation_deg)},
           {"max_shift", num(c.words.noise.max_shift)},
           {"scale_min", num(c.words.noise.scale_min)},
           {"scale_max", num(c.words.noise.scale_max)},
           {"contrast_min", num(c.words.noise.contrast_min)},
           {"contrast_max", num(c.words.noise.contrast_max)},
           {"ink_min", num(c.words.noise.ink_min)},
           {"ink_max", num(c.words.noise.ink_max)},
           {"labels", num(c.multilabel.labels)},
           {"features", num(c.multilabel.features)},
           {"pairs", num(c.multilabel.pairs)},
           {"couplings", num(c.multilabel.couplings)},
           {"bias_mean", num(c.multilabel.bias_mean)},
           {"bias_sd", num(c.multilabel.bias_sd)},
           {"coupling_sd", num(c.multilabel.coupling_sd)},
           {"gibbs_sweeps", num(c.multilabel.gibbs_sweeps)},
           {"components", num(c.multilabel.components)},
           {"feature_noise", num(c.multilabel.feature_noise)}},
          source);
    } else if (sec.name == "graph") {
      detail::apply(sec,
                    {{"kind", [&](const ConfigEntry& e) { c.graph = graph_kind_from_string(e.value); }},
                     {"pairs", num(c.multilabel.pairs)}},
                    source);
    } else if (sec.name == "model") {
      detail::apply(
          sec,
          {{"unary_hidden",
            [&](const ConfigEntry& e) {
              c.model.unary_hidden.clear();
              for (const auto& item : split_list(e.value)) {
                ConfigEntry one{e.key, item, e.line};
                c.model.unary_hidden.push_back(parse_number<std::size_t>(one, source));
              }
            }},
           {"unary_activation", [&](const ConfigEntry& e) { c.model.unary_activation = activation_from_string(e.value); }},
           {"unary_slope", num(c.model.unary_slope)},
           {"pairs", [&](const ConfigEntry& e) { c.model.pairs = pair_mode_from_string(e.value); }},
           {"symmetry", [&](const ConfigEntry& e) { c.model.symmetry = symmetry_from_string(e.value); }},
           {"top", [&](const ConfigEntry& e) { c.model.top.kind = top_kind_from_string(e.value); }},
           {"top_hidden", num(c.model.top.hidden)},
           {"top_activation", [&](const ConfigEntry& e) { c.model.top.activation = activation_from_string(e.value); }},
           {"top_slope", num(c.model.top.slope)},
           {"top_init", [&](const ConfigEntry& e) { c.model.top.init = init_scheme_from_string(e.value); }},
           {"top_input_scale", num(c.model.top.input_scale)}},
          source);
    } else if (sec.name == "saddle") {
      SaddleConfig& s = c.inference.saddle;
      detail::apply(sec,
                    {{"alpha_y", num(s.alpha_y)},
                     {"alpha_lambda", num(s.alpha_lambda)},
                     {"iterations", num(s.iterations)},
                     {"prox_max_iters", num(s.prox_max_iters)},
                     {"prox_step", num(s.prox_step)},
                     {"prox_tol", num(s.prox_tol)},
                     {"resolve_mu_every", num(s.resolve_mu_every)},
                     {"dual_max_sweeps", num(s.dual.max_sweeps)},
                     {"dual_tol", num(s.dual.tol)}},
                    source);
    } else if (sec.name == "spen") {
      SpenOptions& s = c.inference.spen;
      detail::apply(sec,
                    {{"steps", num(s.steps)},
                     {"step_size", num(s.step_size)},
                     {"restarts", num(s.restarts)},
                     {"seed", num(s.seed)}},
                    source);
    } else if (sec.name == "eval") {
      detail::apply(sec, {{"mode", [&](const ConfigEntry& e) { c.inference.mode = infer_mode_from_string(e.value); }}},
                    source);
    } else if (sec.name == "bench") {
      BenchSpec& b = c.bench;
      detail::apply(
          sec,
          {{"seeds",
            [&](const ConfigEntry& e) {
              b.seeds.clear();
              for (const auto& item : split_list(e.value))
                b.seeds.push_back(parse_number<std::uint64_t>(ConfigEntry{e.key, item, e.line}, source));
            }},
           {"graphs",
            [&](const ConfigEntry& e) {
              b.graphs.clear();
              for (const auto& item : split_list(e.value)) b.graphs.push_back(graph_kind_from_string(item));
            }},
           {"unary_stage", [&](const ConfigEntry& e) { b.unary_stage = e.value; }},
           {"pair_stage", [&](const ConfigEntry& e) { b.pair_stage = e.value; }},
           {"linear_stage", [&](const ConfigEntry& e) { b.linear_stage = e.value; }},
           {"mlp_stage", [&](const ConfigEntry& e) { b.mlp_stage = e.value; }},
           {"spen", flag(b.spen)}},
          source);
    } else if (sec.name == "gradcheck") {
      GradcheckSpec& g = c.gradcheck;
      detail::apply(sec,
                    {{"step", num(g.step)},
                     {"tolerance", num(g.tolerance)},
                     {"samples_per_block", num(g.samples_per_block)},
                     {"example", num(g.example)}},
                    source);
    } else if (sec.name.rfind("stage.", 0) == 0) {
      Stage st;
      st.name = sec.name.substr(6);
      if (st.name.empty()) throw ConfigError(concat(source, ":", sec.line, ": stage section needs a name"));
      bool has_kind = false;
      TrainConfig& t = st.train;
      detail::apply(sec,
                    {{"kind",
                      [&](const ConfigEntry& e) {
                        st.kind = stage_kind_from_string(e.value);
                        has_kind = true;
                      }},
                     {"epochs", num(t.epochs)},
                     {"learning_rate", num(t.learning_rate)},
                     {"weight_decay", num(t.weight_decay)},
                     {"minibatch", num(t.minibatch)},
                     {"loss_scale", num(t.loss_scale)},
                     {"inference", [&](const ConfigEntry& e) { t.inference.mode = infer_mode_from_string(e.value); }},
                     {"train_metrics", flag(t.train_metrics)},
                     {"select_best", flag(t.select_best)},
                     {"freeze", [&](const ConfigEntry& e) { st.freeze = split_list(e.value); }}},
                    source);
      if (!has_kind) throw ConfigError(concat(source, ":", sec.line, ": [", sec.name, "] needs a 'kind'"));
      c.stages.push_back(std::move(st));
    } else {
      throw ConfigError(concat(source, ":", sec.line, ": unknown section [", sec.name, "]"));
    }
  }
  // Stage inference shares the [saddle] and [spen] settings.
  for (auto& st : c.stages) {
    const InferMode mode = st.train.inference.mode;
    st.train.inference = c.inference;
    st.train.inference.mode = mode;
    st.train.threads = c.threads;
  }
  for (const auto& name : c.plan) {
    bool found = false;
    for (const auto& st : c.stages) found |= st.name == name;
    if (!found) throw ConfigError(concat(source, ": [run] stages names unknown stage '", name, "'"));
  }
  try {
    c.inference.saddle.validate();
    for (const auto& st : c.stages) st.train.validate();
    if (c.task == TaskKind::words) c.words.validate();
    else c.multilabel.validate();
  } catch (const StructuralError& e) {
    throw ConfigError(concat(source, ": ", e.what()));
  }
  return c;
}

inline RunConfig load_config(const std::string& path) { return parse_config(io::read_file(path), path); }

}  // namespace nlstruct
