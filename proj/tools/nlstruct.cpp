#include <iostream>

#include <CLI11.hpp>

#include "nlstruct/commands.hpp"

namespace {

using namespace nlstruct;

enum Exit { ok = 0, check_failed = 1, config_error = 2, numerical_failure = 3, io_error = 4 };

struct Options {
  std::string config;
  std::string checkpoint;
  std::string dataset;
  std::string mode;
  std::string out;
  std::string split = "test";
  std::optional<std::uint64_t> seed_override;
  std::optional<std::size_t> threads;
  std::size_t index = 0;
};

RunConfig resolve_config(const Options& o, bool required) {
  RunConfig cfg;
  if (!o.config.empty()) cfg = load_config(o.config);
  else if (required) throw ConfigError("--config is required");
  if (o.seed_override) cfg.seed = *o.seed_override;
  if (o.threads) {
    cfg.threads = *o.threads;
    for (auto& s : cfg.stages) s.train.threads = *o.threads;
  }
  if (!o.mode.empty()) cfg.inference.mode = infer_mode_from_string(o.mode);
  return cfg;
}

const Dataset& pick_split(const Splits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw ConfigError(concat("unknown split '", name, "'"));
}

// Writes `text` to --out when given, always echoing it to stdout.
void emit(const Options& o, const std::string& text) {
  std::cout << text;
  if (!o.out.empty()) io::write_file(o.out, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured prediction with a nonlinear top transformation over structured potentials"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "run configuration file");
    sub->add_option("--out", o.out, "output path");
    sub->add_option("--seed-override", o.seed_override, "replace the [run] seed");
    sub->add_option("--threads", o.threads, "worker threads for per-example work");
  };
  auto* gen = app.add_subcommand("gen-data", "generate a dataset file");
  add_common(gen);
  auto* tr = app.add_subcommand("train", "run all configured training stages");
  add_common(tr);
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  add_common(ev);
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  ev->add_option("--dataset", o.dataset, "dataset file")->required();
  ev->add_option("--mode", o.mode, "auto, exact-dp, message-passing, saddle or spen-relaxed");
  ev->add_option("--split", o.split, "train, val or test");
  auto* inf = app.add_subcommand("infer", "decode one example and print diagnostics");
  add_common(inf);
  inf->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  inf->add_option("--dataset", o.dataset, "dataset file holding the example")->required();
  inf->add_option("--mode", o.mode, "inference mode");
  inf->add_option("--split", o.split, "split holding the example");
  inf->add_option("--index", o.index, "example index within the split");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every parameter block");
  add_common(gc);
  auto* bench = app.add_subcommand("bench", "Unary / DeepStruct / LinearTop / NLTop comparison");
  add_common(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    if (gen->parsed()) {
      const RunConfig cfg = resolve_config(o, true);
      if (o.out.empty()) throw ConfigError("gen-data needs --out");
      cmd_gen_data(cfg, o.out, std::cout);
    } else if (tr->parsed()) {
      const RunConfig cfg = resolve_config(o, true);
      cmd_train(cfg, o.out.empty() ? cfg.out : o.out, std::cout);
    } else if (ev->parsed()) {
      const RunConfig cfg = resolve_config(o, false);
      const Checkpoint ck = load_checkpoint(o.checkpoint);
      const Splits data = load_dataset(o.dataset);
      std::ostringstream text;
      cmd_eval(ck, pick_split(data, o.split), cfg.inference, cfg.threads, text);
      emit(o, text.str());
    } else if (inf->parsed()) {
      const RunConfig cfg = resolve_config(o, false);
      const Checkpoint ck = load_checkpoint(o.checkpoint);
      const Splits data = load_dataset(o.dataset);
      Dataset one = pick_split(data, o.split).shape_only();
      const Dataset& src = pick_split(data, o.split);
      if (o.index >= src.size()) throw ConfigError(concat("example index ", o.index, " out of range"));
      one.examples.push_back(src.examples[o.index]);
      std::ostringstream text;
      const auto res = cmd_infer(ck, one, cfg.inference, text);
      std::cout << text.str();
      if (!o.out.empty()) {
        std::ostringstream trace;
        if (res.used_saddle) write_trace(trace, res.saddle.trace);
        io::write_file(o.out, text.str() + trace.str());
      }
    } else if (gc->parsed()) {
      const RunConfig cfg = resolve_config(o, true);
      std::ostringstream text;
      const auto rows = cmd_gradcheck(cfg, text);
      emit(o, text.str());
      for (const auto& r : rows)
        if (!r.pass) return check_failed;
    } else if (bench->parsed()) {
      const RunConfig cfg = resolve_config(o, true);
      std::ostringstream text;
      std::optional<TimingLog> timing;
      if (!o.out.empty()) timing.emplace(o.out + ".timing.log");
      cmd_bench(cfg, text, timing ? &*timing : nullptr);
      emit(o, text.str());
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const StructuralError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return config_error;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << " (iteration " << e.iteration() << ")\n";
    return numerical_failure;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return io_error;
  }
  return ok;
}
