#pragma once

// Command implementations behind the CLI: data generation, training,
// evaluation, single-example inference, gradient checks and the baseline bench.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "nlstruct/checkpoint.hpp"

namespace nlstruct {

inline Splits load_task_data(const RunConfig& cfg) {
  if (!cfg.dataset.empty()) return load_dataset(cfg.dataset);
  if (cfg.task == TaskKind::words) {
    WordTaskSpec spec = cfg.words;
    spec.seed = cfg.data_seed();
    return gen_words(spec);
  }
  MultilabelTaskSpec spec = cfg.multilabel;
  spec.seed = cfg.data_seed();
  return gen_multilabel(spec);
}

inline Model make_model(const RunConfig& cfg, const Dataset& train_set, GraphKind graph, const ModelSpec& base) {
  ModelSpec spec = base;
  spec.feature_dim = train_set.feature_dim;
  spec.per_variable = train_set.per_variable;
  return Model(build_task_graph(graph, train_set, cfg.multilabel.pairs), spec);
}

inline Model make_model(const RunConfig& cfg, const Dataset& train_set) {
  return make_model(cfg, train_set, cfg.graph, cfg.model);
}

/// Stage configs with their shuffle seeds derived from the run seed.
inline Stage seeded_stage(const RunConfig& cfg, const std::string& name) {
  for (std::size_t i = 0; i < cfg.stages.size(); ++i)
    if (cfg.stages[i].name == name) {
      Stage s = cfg.stages[i];
      s.train.seed = derive_seed(cfg.seed, 100 + i);
      return s;
    }
  throw ConfigError(concat("no [stage.", name, "] section"));
}

/// The training plan: [run] stages when given, else every stage in file order.
inline std::vector<Stage> seeded_stages(const RunConfig& cfg) {
  std::vector<Stage> out;
  if (cfg.plan.empty())
    for (const auto& s : cfg.stages) out.push_back(seeded_stage(cfg, s.name));
  else
    for (const auto& name : cfg.plan) out.push_back(seeded_stage(cfg, name));
  return out;
}

/// Wall-clock log kept apart from the deterministic outputs.
class TimingLog {
public:
  explicit TimingLog(const std::string& path) : out_(path, std::ios::app) {}
  void record(const std::string& what, double seconds) {
    if (out_) out_ << what << '\t' << std::fixed << std::setprecision(3) << seconds << "\n";
  }

private:
  std::ofstream out_;
};

class Stopwatch {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(concat("cannot create directory '", dir, "': ", ec.message()));
}

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline void cmd_gen_data(const RunConfig& cfg, const std::string& path, std::ostream& log) {
  const Splits s = load_task_data(cfg);
  const std::string bytes = encode_dataset({&s.train, &s.val, &s.test});
  if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) ensure_dir(parent.string());
  io::write_file(path, bytes);
  log << "task " << to_string(s.train.kind) << "\ntrain " << s.train.size() << "\nval " << s.val.size() << "\ntest "
      << s.test.size() << "\nvariables " << s.train.num_vars() << "\nfeature_dim " << s.train.feature_dim
      << "\nfnv1a " << hex64(io::fnv1a(bytes)) << "\n";
}

struct TrainOutcome {
  Checkpoint checkpoint;
  StagedResult staged;
  MetricReport test;
};

inline Checkpoint make_checkpoint(const Model& m, const ModelParams& p, const Dataset& shape, std::uint64_t seed) {
  return Checkpoint{m.graph(), m.spec(), p, shape.kind, shape.alphabet, Rng(seed).state()};
}

inline void write_stage_history(std::ostream& os, const StagedResult& r) {
  for (const auto& [name, tr] : r.stages) {
    os << "# stage " << name << " best_epoch " << tr.best_epoch << (tr.halted ? " halted" : "") << "\n";
    write_history(os, tr.history);
  }
}

/// Runs every configured stage in order and writes config.conf, dataset.fnv1a,
/// history.tsv, checkpoint.nlck and summary.txt to the run directory.
inline TrainOutcome cmd_train(const RunConfig& cfg, const std::string& out_dir, std::ostream& log) {
  require(!cfg.stages.empty(), "no [stage.*] sections to train");
  ensure_dir(out_dir);
  TimingLog timing(join_path(out_dir, "timing.log"));
  Stopwatch total;
  const Splits data = load_task_data(cfg);
  io::write_file(join_path(out_dir, "config.conf"), cfg.source_text);
  io::write_file(join_path(out_dir, "dataset.fnv1a"),
                 hex64(io::fnv1a(encode_dataset({&data.train, &data.val, &data.test}))) + "\n");
  const Model model = make_model(cfg, data.train);
  TrainOutcome out;
  out.staged = staged_training(model, model.init(cfg.seed), seeded_stages(cfg), data.train, data.val);
  out.checkpoint = make_checkpoint(model, out.staged.params, data.train, cfg.seed);
  save_checkpoint(join_path(out_dir, "checkpoint.nlck"), out.checkpoint);
  {
    std::ostringstream hist;
    write_stage_history(hist, out.staged);
    io::write_file(join_path(out_dir, "history.tsv"), hist.str());
  }
  std::ostringstream summary;
  for (const auto& [name, tr] : out.staged.stages) {
    const auto& best = tr.history[tr.best_epoch].val;
    summary << "stage " << name << " epochs " << tr.history.size() - 1 << " best_epoch " << tr.best_epoch
            << " val_word " << best.word_accuracy << " val_char " << best.char_accuracy << "\n";
    if (tr.halted) summary << "halted " << tr.failure << "\n";
  }
  if (!out.staged.halted && !data.test.empty()) {
    const View last = stage_view(seeded_stages(cfg).back().kind);
    out.test = evaluate(model, out.staged.params, last, data.test, cfg.inference, cfg.threads).report;
    summary << "test_word " << out.test.word_accuracy << " test_char " << out.test.char_accuracy << " test_hamming "
            << out.test.hamming_loss << " test_macro_f1 " << out.test.macro_f1 << "\n";
  }
  io::write_file(join_path(out_dir, "summary.txt"), summary.str());
  log << summary.str();
  timing.record("train", total.seconds());
  if (out.staged.halted)
    throw NumericalFailure(concat("training halted: ", out.staged.stages.back().second.failure));
  return out;
}

inline MetricReport cmd_eval(const Checkpoint& ck, const Dataset& d, const InferOptions& opt, std::size_t threads,
                             std::ostream& log) {
  const Model model(ck.graph, ck.spec);
  const auto ev = evaluate(model, ck.params, View::full, d, opt, threads);
  log << "mode " << to_string(opt.mode) << "\n" << ev.report;
  return ev.report;
}

struct InferOutcome {
  Assignment x;
  std::string word;
  InferenceResult saddle;
  bool used_saddle = false;
};

/// Decodes the first example of `d`. With a saddle run, the per-iteration
/// trace is recorded.
inline InferOutcome cmd_infer(const Checkpoint& ck, const Dataset& d, InferOptions opt, std::ostream& log) {
  require(!d.empty(), "no example to decode");
  const Model model(ck.graph, ck.spec);
  model.check(d);
  const Example& e = d.examples.front();
  const PotentialVector f = model.potentials(ck.params, View::full, d, e);
  InferOutcome out;
  const bool saddle = opt.mode == InferMode::saddle ||
                      (opt.mode == InferMode::automatic && model.top_kind(View::full) == TopKind::mlp);
  if (saddle) {
    SaddleConfig sc = opt.saddle;
    sc.record_trace = true;
    out.saddle = infer(model.graph(), f, model.top(ck.params, View::full), sc);
    out.x = out.saddle.x;
    out.used_saddle = true;
  } else {
    out.x = model.decode(ck.params, View::full, f, opt).x;
  }
  out.word = d.kind == TaskKind::words ? d.decode_word(out.x) : std::string();
  log << "labels";
  for (auto l : out.x.labels) log << ' ' << l;
  log << "\n";
  if (!out.word.empty()) log << "word " << out.word << "\n";
  log << "truth";
  for (auto l : e.x.labels) log << ' ' << l;
  log << "\n";
  if (saddle) {
    log.precision(10);
    log << "dual_value " << out.saddle.dual_value << "\nduality_gap " << out.saddle.duality_gap
        << "\nprox_limit_hits " << out.saddle.prox_limit_hits << "\n";
  }
  return out;
}

struct GradcheckRow {
  std::string block;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool pass = true;
};

/// Relative error with denominators floored at 1e-3, so coordinates with
/// vanishing derivatives are held to an absolute 1e-7 at the default tolerance.
inline double gradcheck_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

/// Finite-difference check of example_gradient on every parameter block of
/// the configured model, at a fixed decoded x̂ that differs from the truth.
inline std::vector<GradcheckRow> cmd_gradcheck(const RunConfig& cfg, std::ostream& log) {
  const Splits data = load_task_data(cfg);
  require(!data.train.empty(), "gradcheck needs training data");
  const Model model = make_model(cfg, data.train);
  ModelParams p = model.init(cfg.seed);
  // Random pair tables and a perturbed top so no block sits at a symmetric point.
  Rng rng(derive_seed(cfg.seed, 77));
  for (double& v : p.pair.raw()) v = rng.uniform(-0.5, 0.5);
  for (double& v : p.top.raw()) v += rng.uniform(-0.05, 0.05);
  const Dataset& d = data.train;
  const Example& e = d.examples.at(cfg.gradcheck.example % d.size());
  const View v = View::full;
  const PotentialVector f = model.potentials(p, v, d, e);
  Assignment x_hat = e.x;
  for (std::size_t k = 0; k < x_hat.size(); k += 2) x_hat[k] = (x_hat[k] + 1) % model.graph().domain(k);
  const auto eg = example_gradient(model, p, v, d, e, f, x_hat, 1.0, BlockSelection::all(p));

  auto margin = [&](const ModelParams& q) {
    const PotentialVector fq = model.potentials(q, v, d, e);
    const ModelTop top = model.top(q, v);
    return top.value(mask(model.graph(), fq, x_hat).span()) - top.value(mask(model.graph(), fq, e.x).span());
  };
  std::vector<GradcheckRow> rows;
  const double h = cfg.gradcheck.step;
  for (const auto& name : p.block_names()) {
    GradcheckRow row{name};
    const auto g = eg.grad.block(name);
    std::vector<std::size_t> coords(g.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    const std::size_t n = cfg.gradcheck.samples_per_block;
    if (n > 0 && n < coords.size()) {
      // Half the largest-magnitude coordinates, half drawn at random.
      std::stable_sort(coords.begin(), coords.end(),
                       [&](std::size_t a, std::size_t b) { return std::abs(g[a]) > std::abs(g[b]); });
      std::vector<std::size_t> chosen(coords.begin(), coords.begin() + static_cast<std::ptrdiff_t>(n / 2));
      std::vector<std::size_t> rest(coords.begin() + static_cast<std::ptrdiff_t>(n / 2), coords.end());
      Rng pick(derive_seed(cfg.seed, io::fnv1a(name)));
      pick.shuffle(rest);
      chosen.insert(chosen.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n - n / 2));
      std::sort(chosen.begin(), chosen.end());
      coords = std::move(chosen);
    }
    for (std::size_t i : coords) {
      ModelParams q = p;
      const double w0 = q.block(name)[i];
      q.block(name)[i] = w0 + h;
      const double up = margin(q);
      q.block(name)[i] = w0 - h;
      const double down = margin(q);
      const double fd = (up - down) / (2.0 * h);
      row.max_rel_error = std::max(row.max_rel_error, gradcheck_error(g[i], fd));
      ++row.checked;
    }
    row.pass = row.max_rel_error <= cfg.gradcheck.tolerance;
    rows.push_back(row);
  }
  log << "block\tchecked\tmax_rel_error\tresult\n";
  for (const auto& r : rows)
    log << r.block << '\t' << r.checked << '\t' << std::scientific << std::setprecision(3) << r.max_rel_error
        << std::defaultfloat << '\t' << (r.pass ? "PASS" : "FAIL") << "\n";
  return rows;
}

struct BenchEntry {
  std::string model;  // Unary, DeepStruct, LinearTop, NLTop, NLTop+SPENInf
  GraphKind graph = GraphKind::chain;
  std::vector<MetricReport> per_seed;  // test split

  double mean(double MetricReport::*field) const {
    double s = 0.0;
    for (const auto& r : per_seed) s += r.*field;
    return per_seed.empty() ? 0.0 : s / static_cast<double>(per_seed.size());
  }
};

struct BenchResult {
  std::vector<std::uint64_t> seeds;
  std::vector<BenchEntry> rows;

  const BenchEntry& find(const std::string& model, GraphKind g) const {
    for (const auto& r : rows)
      if (r.model == model && r.graph == g) return r;
    throw StructuralError(concat("no bench row for ", model, " on the ", to_string(g), " graph"));
  }
};

inline void write_bench(std::ostream& os, const BenchResult& b) {
  os << "model\tgraph\ttest_word_acc\ttest_char_acc\ttest_hamming\ttest_macro_f1";
  for (auto s : b.seeds) os << "\tchar_acc_seed" << s;
  os << "\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& r : b.rows) {
    os << r.model << '\t' << to_string(r.graph) << '\t' << r.mean(&MetricReport::word_accuracy) << '\t'
       << r.mean(&MetricReport::char_accuracy) << '\t' << r.mean(&MetricReport::hamming_loss) << '\t'
       << r.mean(&MetricReport::macro_f1);
    for (const auto& m : r.per_seed) os << '\t' << m.char_accuracy;
    os << "\n";
  }
  os << std::defaultfloat;
}

/// Unary → DeepStruct → LinearTop / NLTop for every seed and graph, with test
/// metrics per model. The unary stage is shared by all graphs of a seed.
inline BenchResult cmd_bench(const RunConfig& base, std::ostream& log, TimingLog* timing = nullptr) {
  BenchResult out;
  out.seeds = base.bench.seeds;
  require(base.model.top.kind == TopKind::mlp, "bench needs [model] top = mlp for the NLTop row");
  auto row = [&](const std::string& name, GraphKind g) -> BenchEntry& {
    for (auto& r : out.rows)
      if (r.model == name && r.graph == g) return r;
    out.rows.push_back({name, g, {}});
    return out.rows.back();
  };
  for (auto seed : base.bench.seeds) {
    RunConfig cfg = base;
    cfg.seed = seed;
    Stopwatch sw;
    const Splits data = load_task_data(cfg);
    ModelSpec linear_spec = cfg.model;
    linear_spec.top = TopSpec{.kind = TopKind::linear};
    std::optional<ParamVector> unary_params;
    for (GraphKind g : cfg.bench.graphs) {
      const Model nl = make_model(cfg, data.train, g, cfg.model);
      const Model lin = make_model(cfg, data.train, g, linear_spec);
      ModelParams p = nl.init(seed);
      if (!unary_params) {
        const Stage s = seeded_stage(cfg, cfg.bench.unary_stage);
        require(s.kind == StageKind::unary_only, "bench unary stage must be unary-only");
        unary_params = train(nl, p, View::unary, data.train, data.val, s.train, stage_selection(p, s)).params.unary;
      }
      p.unary = *unary_params;
      row("Unary", g).per_seed.push_back(evaluate(nl, p, View::unary, data.test, cfg.inference, cfg.threads).report);

      const Stage ps = seeded_stage(cfg, cfg.bench.pair_stage);
      require(ps.kind == StageKind::pairwise_given_unary, "bench pair stage must be pairwise-given-unary");
      p = train(nl, p, View::structured, data.train, data.val, ps.train, stage_selection(p, ps)).params;
      row("DeepStruct", g).per_seed.push_back(
          evaluate(nl, p, View::structured, data.test, cfg.inference, cfg.threads).report);

      ModelParams pl = lin.init(seed);
      pl.unary = p.unary;
      pl.pair = p.pair;
      const Stage ls = seeded_stage(cfg, cfg.bench.linear_stage);
      require(ls.kind == StageKind::top_given_potentials, "bench linear stage must be top-given-potentials");
      const auto lr = train(lin, pl, View::full, data.train, data.val, ls.train, stage_selection(pl, ls));
      if (lr.halted) throw NumericalFailure(concat("LinearTop training halted: ", lr.failure));
      row("LinearTop", g).per_seed.push_back(
          evaluate(lin, lr.params, View::full, data.test, cfg.inference, cfg.threads).report);

      const Stage ms = seeded_stage(cfg, cfg.bench.mlp_stage);
      require(ms.kind == StageKind::top_given_potentials || ms.kind == StageKind::joint,
              "bench mlp stage must be top-given-potentials or joint");
      const auto nr = train(nl, p, View::full, data.train, data.val, ms.train, stage_selection(p, ms));
      if (nr.halted) throw NumericalFailure(concat("NLTop training halted: ", nr.failure));
      InferOptions saddle = cfg.inference;
      saddle.mode = InferMode::automatic;
      row("NLTop", g).per_seed.push_back(evaluate(nl, nr.params, View::full, data.test, saddle, cfg.threads).report);

      bool binary = true;
      for (auto dk : data.train.domains) binary &= dk == 2;
      if (cfg.bench.spen && binary) {
        InferOptions spen = cfg.inference;
        spen.mode = InferMode::spen_relaxed;
        spen.spen.seed = derive_seed(seed, 55);
        row("NLTop+SPENInf", g).per_seed.push_back(
            evaluate(nl, nr.params, View::full, data.test, spen, cfg.threads).report);
      }
    }
    if (timing) timing->record(concat("bench seed ", seed), sw.seconds());
  }
  write_bench(log, out);
  return out;
}

}  // namespace nlstruct
