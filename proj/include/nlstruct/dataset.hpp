#pragma once

// Labeled examples and the NLSD binary dataset file.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "nlstruct/io.hpp"
#include "nlstruct/regiongraph.hpp"

namespace nlstruct {

enum class TaskKind : std::uint32_t { words = 1, multilabel = 2 };

inline std::string_view to_string(TaskKind k) { return k == TaskKind::words ? "words" : "multilabel"; }

struct Example {
  std::vector<double> features;  // num_vars × feature_dim when per-variable, else feature_dim
  Assignment x;
};

struct Dataset {
  TaskKind kind = TaskKind::words;
  std::vector<std::size_t> domains;
  std::size_t feature_dim = 0;
  bool per_variable = true;
  std::string alphabet;  // label names for word tasks, one character per label
  std::vector<Example> examples;

  std::size_t num_vars() const { return domains.size(); }
  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }

  std::size_t input_length() const { return per_variable ? domains.size() * feature_dim : feature_dim; }

  std::span<const double> features(const Example& e, std::size_t k) const {
    return std::span<const double>(e.features).subspan(k * feature_dim, feature_dim);
  }

  /// Empty copy sharing the shape metadata.
  Dataset shape_only() const {
    Dataset d = *this;
    d.examples.clear();
    return d;
  }

  void check(const Example& e) const {
    require(e.features.size() == input_length(),
            concat("example has ", e.features.size(), " features, expected ", input_length()));
    require(e.x.size() == num_vars(), "example label count does not match the task");
    for (std::size_t k = 0; k < num_vars(); ++k)
      require(e.x[k] < domains[k], concat("label ", e.x[k], " out of range for variable ", k));
  }

  std::string decode_word(const Assignment& x) const {
    std::string s;
    for (auto l : x.labels) s += l < alphabet.size() ? alphabet[l] : '?';
    return s;
  }

  bool operator==(const Dataset& o) const {
    if (kind != o.kind || domains != o.domains || feature_dim != o.feature_dim ||
        per_variable != o.per_variable || alphabet != o.alphabet || examples.size() != o.examples.size())
      return false;
    for (std::size_t i = 0; i < examples.size(); ++i)
      if (examples[i].features != o.examples[i].features || examples[i].x != o.examples[i].x) return false;
    return true;
  }
};

struct Splits {
  Dataset train, val, test;
};

inline constexpr std::string_view kDatasetMagic = "NLSD";
inline constexpr std::uint32_t kDatasetVersion = 1;

/// Header: magic, version, kind, split counts, variable count, feature dim,
/// per-variable flag, domains, alphabet; then one record per example
/// (features as doubles, labels as u16), train first.
inline std::string encode_dataset(const std::array<const Dataset*, 3>& parts) {
  const Dataset& ref = *parts[0];
  for (const Dataset* d : parts)
    require(d->kind == ref.kind && d->domains == ref.domains && d->feature_dim == ref.feature_dim &&
                d->per_variable == ref.per_variable && d->alphabet == ref.alphabet,
            "dataset splits disagree on their shape");
  io::Writer w;
  w.raw(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ref.kind));
  for (const Dataset* d : parts) w.u32(static_cast<std::uint32_t>(d->size()));
  w.u32(static_cast<std::uint32_t>(ref.num_vars()));
  w.u32(static_cast<std::uint32_t>(ref.feature_dim));
  w.u8(ref.per_variable ? 1 : 0);
  for (auto d : ref.domains) w.u32(static_cast<std::uint32_t>(d));
  w.str(ref.alphabet);
  for (const Dataset* d : parts)
    for (const Example& e : d->examples) {
      ref.check(e);
      for (double v : e.features) w.f64(v);
      for (auto l : e.x.labels) w.u16(static_cast<std::uint16_t>(l));
    }
  return w.bytes();
}

inline Splits decode_dataset(std::string bytes, const std::string& source = "dataset") {
  io::Reader r(std::move(bytes), source);
  if (r.raw(4) != kDatasetMagic) throw IoError(concat(source, ": not an NLSD dataset file"));
  const auto version = r.u32();
  if (version != kDatasetVersion) throw IoError(concat(source, ": unsupported dataset version ", version));
  Dataset shape;
  const auto kind = r.u32();
  if (kind != 1 && kind != 2) throw IoError(concat(source, ": unknown task kind ", kind));
  shape.kind = static_cast<TaskKind>(kind);
  std::array<std::uint32_t, 3> counts{r.u32(), r.u32(), r.u32()};
  const std::uint32_t K = r.u32();
  shape.feature_dim = r.u32();
  shape.per_variable = r.u8() != 0;
  for (std::uint32_t k = 0; k < K; ++k) shape.domains.push_back(r.u32());
  shape.alphabet = r.str();
  Splits s{shape, shape, shape};
  Dataset* parts[3] = {&s.train, &s.val, &s.test};
  for (int p = 0; p < 3; ++p) {
    parts[p]->examples.resize(counts[p]);
    for (Example& e : parts[p]->examples) {
      e.features.resize(shape.input_length());
      for (double& v : e.features) v = r.f64();
      e.x.labels.resize(K);
      for (auto& l : e.x.labels) l = r.u16();
      try {
        shape.check(e);
      } catch (const StructuralError& err) {
        throw IoError(concat(source, ": ", err.what()));
      }
    }
  }
  r.expect_end();
  return s;
}

inline void save_dataset(const std::string& path, const Splits& s) {
  io::write_file(path, encode_dataset({&s.train, &s.val, &s.test}));
}

inline Splits load_dataset(const std::string& path) { return decode_dataset(io::read_file(path), path); }

}  // namespace nlstruct
