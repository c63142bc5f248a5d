#pragma once

// Binary checkpoint: model structure, parameter blocks and RNG state.

#include "nlstruct/config.hpp"

namespace nlstruct {

inline constexpr std::string_view kCheckpointMagic = "NLCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline ModelSpec parse_model_spec(const std::string& text) {
  ModelSpec s;
  s.unary_hidden.clear();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key.empty()) continue;
    std::string v;
    if (key == "unary_hidden") {
      std::size_t h;
      while (ls >> h) s.unary_hidden.push_back(h);
      continue;
    }
    ls >> v;
    if (key == "feature_dim") s.feature_dim = std::stoull(v);
    else if (key == "per_variable") s.per_variable = v == "1";
    else if (key == "unary_activation") s.unary_activation = activation_from_string(v);
    else if (key == "unary_slope") s.unary_slope = std::stod(v);
    else if (key == "pairs") s.pairs = pair_mode_from_string(v);
    else if (key == "symmetry") s.symmetry = symmetry_from_string(v);
    else if (key == "top") s.top.kind = top_kind_from_string(v);
    else if (key == "top_hidden") s.top.hidden = std::stoull(v);
    else if (key == "top_activation") s.top.activation = activation_from_string(v);
    else if (key == "top_slope") s.top.slope = std::stod(v);
    else if (key == "top_init") s.top.init = init_scheme_from_string(v);
    else if (key == "top_input_scale") s.top.input_scale = std::stod(v);
    else throw IoError(concat("unknown model spec field '", key, "'"));
  }
  return s;
}

struct Checkpoint {
  RegionGraph graph;
  ModelSpec spec;
  ModelParams params;
  TaskKind task = TaskKind::words;
  std::string alphabet;
  std::string rng_state;
};

inline std::string encode_checkpoint(const Checkpoint& c) {
  io::Writer w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(c.task));
  w.str(c.alphabet);
  w.str(c.graph.describe());
  const std::string spec = c.spec.describe();
  w.str(spec);
  w.u64(io::fnv1a(spec));
  std::uint32_t blocks = 0;
  for (const ParamVector* p : c.params.parts()) blocks += static_cast<std::uint32_t>(p->layout().num_blocks());
  w.u32(blocks);
  for (const ParamVector* p : c.params.parts())
    for (std::size_t i = 0; i < p->layout().num_blocks(); ++i) {
      const BlockSpec& b = p->layout().block(i);
      w.str(b.name);
      w.u32(static_cast<std::uint32_t>(b.shape.size()));
      for (auto d : b.shape) w.u32(static_cast<std::uint32_t>(d));
      for (double v : p->block(i)) w.f64(v);
    }
  w.str(c.rng_state);
  return w.bytes();
}

inline Checkpoint decode_checkpoint(std::string bytes, const std::string& source = "checkpoint") {
  io::Reader r(std::move(bytes), source);
  if (r.raw(4) != kCheckpointMagic) throw IoError(concat(source, ": not a checkpoint file"));
  const auto version = r.u32();
  if (version != kCheckpointVersion) throw IoError(concat(source, ": unsupported checkpoint version ", version));
  Checkpoint c;
  const auto kind = r.u32();
  if (kind != 1 && kind != 2) throw IoError(concat(source, ": unknown task kind ", kind));
  c.task = static_cast<TaskKind>(kind);
  c.alphabet = r.str();
  try {
    c.graph = RegionGraph::parse(r.str());
  } catch (const StructuralError& e) {
    throw IoError(concat(source, ": bad graph description: ", e.what()));
  }
  const std::string spec = r.str();
  if (r.u64() != io::fnv1a(spec)) throw IoError(concat(source, ": model spec hash mismatch"));
  try {
    c.spec = parse_model_spec(spec);
  } catch (const std::exception& e) {
    throw IoError(concat(source, ": bad model spec: ", e.what()));
  }
  const Model model(c.graph, c.spec);
  c.params = model.init(0);
  const auto expected = c.params.block_names();
  const std::uint32_t blocks = r.u32();
  if (blocks != expected.size())
    throw IoError(concat(source, ": ", blocks, " parameter blocks, model has ", expected.size()));
  for (ParamVector* p : c.params.parts())
    for (std::size_t i = 0; i < p->layout().num_blocks(); ++i) {
      const BlockSpec& b = p->layout().block(i);
      const std::string name = r.str();
      if (name != b.name) throw IoError(concat(source, ": expected block '", b.name, "', found '", name, "'"));
      std::vector<std::size_t> shape(r.u32());
      for (auto& d : shape) d = r.u32();
      if (shape != b.shape) throw IoError(concat(source, ": shape mismatch for block '", name, "'"));
      for (double& v : p->block(i)) v = r.f64();
    }
  c.rng_state = r.str();
  r.expect_end();
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) { io::write_file(path, encode_checkpoint(c)); }

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path), path); }

}  // namespace nlstruct
