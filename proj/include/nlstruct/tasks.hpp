#pragma once

// Synthetic benchmark tasks: rendered five-letter words and an Ising-style
// multilabel problem, plus evaluation of trained models on them.

#include <array>
#include <map>
#include <numbers>

#include "nlstruct/learn.hpp"

namespace nlstruct {

inline constexpr std::size_t kGlyphRows = 7;
inline constexpr std::size_t kGlyphCols = 5;
inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;

// 5×7 lowercase bitmaps, row-major, '#' = ink.
inline const std::array<std::array<const char*, kGlyphRows>, 26>& glyph_font() {
  static const std::array<std::array<const char*, kGlyphRows>, 26> font{{
      {".....", ".....", ".###.", "....#", ".####", "#...#", ".####"},  // a
      {"#....", "#....", "#.##.", "##..#", "#...#", "#...#", "####."},  // b
      {".....", ".....", ".###.", "#....", "#....", "#...#", ".###."},  // c
      {"....#", "....#", ".##.#", "#..##", "#...#", "#...#", ".####"},  // d
      {".....", ".....", ".###.", "#...#", "#####", "#....", ".###."},  // e
      {"..##.", ".#..#", ".#...", "###..", ".#...", ".#...", ".#..."},  // f
      {".....", ".####", "#...#", "#...#", ".####", "....#", ".###."},  // g
      {"#....", "#....", "#.##.", "##..#", "#...#", "#...#", "#...#"},  // h
      {"..#..", ".....", ".##..", "..#..", "..#..", "..#..", ".###."},  // i
      {"...#.", ".....", "..##.", "...#.", "...#.", "#..#.", ".##.."},  // j
      {"#....", "#....", "#..#.", "#.#..", "##...", "#.#..", "#..#."},  // k
      {".##..", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."},  // l
      {".....", ".....", "##.#.", "#.#.#", "#.#.#", "#...#", "#...#"},  // m
      {".....", ".....", "#.##.", "##..#", "#...#", "#...#", "#...#"},  // n
      {".....", ".....", ".###.", "#...#", "#...#", "#...#", ".###."},  // o
      {".....", ".....", "####.", "#...#", "####.", "#....", "#...."},  // p
      {".....", ".....", ".##.#", "#..##", ".####", "....#", "....#"},  // q
      {".....", ".....", "#.##.", "##..#", "#....", "#....", "#...."},  // r
      {".....", ".....", ".###.", "#....", ".###.", "....#", "####."},  // s
      {".#...", ".#...", "###..", ".#...", ".#...", ".#..#", "..##."},  // t
      {".....", ".....", "#...#", "#...#", "#...#", "#..##", ".##.#"},  // u
      {".....", ".....", "#...#", "#...#", "#...#", ".#.#.", "..#.."},  // v
      {".....", ".....", "#...#", "#...#", "#.#.#", "#.#.#", ".#.#."},  // w
      {".....", ".....", "#...#", ".#.#.", "..#..", ".#.#.", "#...#"},  // x
      {".....", ".....", "#...#", "#...#", ".####", "....#", ".###."},  // y
      {".....", ".....", "#####", "...#.", "..#..", ".#...", "#####"},  // z
  }};
  return font;
}

/// The glyph upscaled 4× to 20×28 and centered in a 28×28 image.
inline std::vector<double> render_glyph(char c) {
  require(c >= 'a' && c <= 'z', concat("no glyph for character '", c, "'"));
  const auto& rows = glyph_font()[static_cast<std::size_t>(c - 'a')];
  constexpr std::size_t scale = 4, left = (kImageSide - kGlyphCols * scale) / 2;
  std::vector<double> img(kImagePixels, 0.0);
  for (std::size_t r = 0; r < kImageSide; ++r)
    for (std::size_t col = 0; col < kGlyphCols * scale; ++col)
      if (rows[r / scale][col / scale] == '#') img[r * kImageSide + left + col] = 1.0;
  return img;
}

struct WordNoise {
  double max_rotation_deg = 15.0;
  double max_shift = 3.0;
  double scale_min = 0.7;
  double scale_max = 1.1;
  double contrast_min = 0.0;  // background noise amplitude range
  double contrast_max = 0.0;
  double ink_min = 1.0;
  double ink_max = 1.0;
};

inline const std::vector<std::string>& common_words() {
  static const std::vector<std::string> words{
      "about", "other", "which", "their", "there", "first", "would", "these", "click", "price",
      "state", "email", "world", "music", "after", "video", "where", "books", "links", "years",
      "order", "items", "group", "under", "games", "could", "great", "hotel", "store", "terms",
      "right", "local", "those", "using", "phone", "forum", "based", "black", "check", "index",
      "being", "women", "today", "south", "pages", "found", "house", "photo", "power", "while"};
  return words;
}

inline const std::vector<std::string>& reduced_words() {
  static const std::vector<std::string> words{"there", "these", "three", "other", "where",
                                              "those", "heart", "earth", "start", "store"};
  return words;
}

struct WordTaskSpec {
  std::vector<std::string> vocabulary = common_words();
  bool full_alphabet = true;  // all 26 letters, else only those in the vocabulary
  std::size_t train = 1000, val = 200, test = 200;
  std::uint64_t seed = 0;
  WordNoise noise{.contrast_min = 0.2, .contrast_max = 0.8};

  static WordTaskSpec reduced() {
    WordTaskSpec s;
    s.vocabulary = reduced_words();
    s.full_alphabet = false;
    s.train = 300;
    s.val = 100;
    s.test = 100;
    return s;
  }

  std::string alphabet() const {
    if (full_alphabet) return "abcdefghijklmnopqrstuvwxyz";
    std::string a;
    for (const auto& w : vocabulary) a += w;
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    return a;
  }

  void validate() const {
    require(!vocabulary.empty(), "word vocabulary is empty");
    for (const auto& w : vocabulary) {
      require(w.size() == 5, concat("word '", w, "' does not have five letters"));
      for (char c : w) require(c >= 'a' && c <= 'z', concat("unknown character '", c, "' in '", w, "'"));
    }
    require(noise.scale_min > 0.0 && noise.scale_min <= noise.scale_max, "invalid scale range");
    require(noise.contrast_min >= 0.0 && noise.contrast_min <= noise.contrast_max && noise.contrast_max <= 1.0,
            "invalid background contrast range");
    require(noise.ink_min >= 0.0 && noise.ink_min <= noise.ink_max && noise.ink_max <= 1.0, "invalid ink range");
  }
};

/// Rotation, shift and scale about the image center with nearest-neighbor
/// sampling, then the ink composited over uniform noise of random contrast.
inline std::vector<double> render_letter(char c, const WordNoise& n, Rng& rng) {
  const std::vector<double> glyph = render_glyph(c);
  const double deg = rng.uniform(-n.max_rotation_deg, n.max_rotation_deg);
  const double dx = std::round(rng.uniform(-n.max_shift, n.max_shift));
  const double dy = std::round(rng.uniform(-n.max_shift, n.max_shift));
  const double s = rng.uniform(n.scale_min, n.scale_max);
  const double contrast = rng.uniform(n.contrast_min, n.contrast_max);
  const double ink = rng.uniform(n.ink_min, n.ink_max);
  const double th = deg * std::numbers::pi / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  constexpr double center = (kImageSide - 1) / 2.0;
  std::vector<double> img(kImagePixels);
  for (std::size_t r = 0; r < kImageSide; ++r)
    for (std::size_t col = 0; col < kImageSide; ++col) {
      const double u = (static_cast<double>(col) - center - dx) / s;
      const double v = (static_cast<double>(r) - center - dy) / s;
      const double sc = std::floor(ct * u + st * v + center + 0.5);
      const double sr = std::floor(-st * u + ct * v + center + 0.5);
      double g = 0.0;
      if (sc >= 0 && sr >= 0 && sc < kImageSide && sr < kImageSide)
        g = glyph[static_cast<std::size_t>(sr) * kImageSide + static_cast<std::size_t>(sc)];
      const double bg = contrast * rng.uniform();
      img[r * kImageSide + col] = std::max(ink * g, bg);
    }
  return img;
}

inline Splits gen_words(const WordTaskSpec& spec) {
  spec.validate();
  const std::string alphabet = spec.alphabet();
  Dataset shape;
  shape.kind = TaskKind::words;
  shape.domains.assign(5, alphabet.size());
  shape.feature_dim = kImagePixels;
  shape.per_variable = true;
  shape.alphabet = alphabet;
  Splits s{shape, shape, shape};
  const std::array<std::pair<Dataset*, std::size_t>, 3> parts{{{&s.train, spec.train}, {&s.val, spec.val}, {&s.test, spec.test}}};
  for (std::size_t p = 0; p < 3; ++p) {
    auto [d, count] = parts[p];
    d->examples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng(derive_seed(derive_seed(spec.seed, p + 1), i));
      const std::string& word = spec.vocabulary[rng.below(spec.vocabulary.size())];
      Example& e = d->examples[i];
      e.features.reserve(5 * kImagePixels);
      for (char c : word) {
        const auto pos = alphabet.find(c);
        require(pos != std::string::npos, concat("character '", c, "' is not in the alphabet"));
        e.x.labels.push_back(pos);
        const auto img = render_letter(c, spec.noise, rng);
        e.features.insert(e.features.end(), img.begin(), img.end());
      }
    }
  }
  return s;
}

struct MultilabelTaskSpec {
  std::size_t labels = 16;
  std::size_t features = 32;
  std::size_t pairs = 24;  // pair budget for the structured graph
  std::size_t train = 400, val = 100, test = 200;
  std::uint64_t seed = 0;
  std::size_t couplings = 24;  // nonzero couplings in the ground-truth model
  double bias_mean = -1.0;
  double bias_sd = 0.5;
  double coupling_sd = 1.5;
  std::size_t gibbs_sweeps = 30;
  std::size_t components = 2;
  double feature_noise = 1.0;

  void validate() const {
    require(labels >= 2 && features >= 1, "multilabel task needs at least two labels and one feature");
    require(pairs <= labels * (labels - 1) / 2, "pair budget exceeds the number of label pairs");
    require(couplings <= labels * (labels - 1) / 2, "coupling count exceeds the number of label pairs");
    require(components >= 1, "need at least one mixture component");
  }
};

/// Fixed ground-truth generator drawn from the spec seed.
struct IsingGenerator {
  std::vector<double> bias;
  std::vector<std::vector<double>> coupling;  // symmetric, zero diagonal
  std::vector<std::vector<std::vector<double>>> means;  // [label][component][feature]

  explicit IsingGenerator(const MultilabelTaskSpec& spec) {
    Rng rng(derive_seed(spec.seed, 0xC0));
    const std::size_t L = spec.labels;
    bias.resize(L);
    for (double& b : bias) b = spec.bias_mean + spec.bias_sd * rng.normal();
    coupling.assign(L, std::vector<double>(L, 0.0));
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = i + 1; j < L; ++j) all.emplace_back(i, j);
    rng.shuffle(all);
    for (std::size_t c = 0; c < spec.couplings; ++c) {
      const auto [i, j] = all[c];
      coupling[i][j] = coupling[j][i] = spec.coupling_sd * rng.normal();
    }
    means.assign(L, std::vector<std::vector<double>>(spec.components, std::vector<double>(spec.features)));
    for (auto& per_label : means)
      for (auto& mu : per_label)
        for (double& v : mu) v = rng.normal();
  }

  Assignment sample_labels(const MultilabelTaskSpec& spec, Rng& rng) const {
    const std::size_t L = bias.size();
    Assignment x{std::vector<Label>(L)};
    for (std::size_t k = 0; k < L; ++k) x[k] = rng.uniform() < 0.5 ? 1 : 0;
    for (std::size_t sweep = 0; sweep < spec.gibbs_sweeps; ++sweep)
      for (std::size_t k = 0; k < L; ++k) {
        double field = bias[k];
        for (std::size_t j = 0; j < L; ++j)
          if (j != k) field += coupling[k][j] * static_cast<double>(x[j]);
        x[k] = rng.uniform() < 1.0 / (1.0 + std::exp(-field)) ? 1 : 0;
      }
    return x;
  }

  std::vector<double> sample_features(const MultilabelTaskSpec& spec, const Assignment& x, Rng& rng) const {
    std::vector<double> f(spec.features, 0.0);
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (x[k] != 1) continue;
      const auto& mu = means[k][rng.below(spec.components)];
      for (std::size_t i = 0; i < f.size(); ++i) f[i] += mu[i];
    }
    for (double& v : f) v += spec.feature_noise * rng.normal();
    return f;
  }
};

inline Splits gen_multilabel(const MultilabelTaskSpec& spec) {
  spec.validate();
  const IsingGenerator gen(spec);
  Dataset shape;
  shape.kind = TaskKind::multilabel;
  shape.domains.assign(spec.labels, 2);
  shape.feature_dim = spec.features;
  shape.per_variable = false;
  Splits s{shape, shape, shape};
  const std::array<std::pair<Dataset*, std::size_t>, 3> parts{{{&s.train, spec.train}, {&s.val, spec.val}, {&s.test, spec.test}}};
  for (std::size_t p = 0; p < 3; ++p) {
    auto [d, count] = parts[p];
    d->examples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng(derive_seed(derive_seed(spec.seed, p + 1), i));
      Example& e = d->examples[i];
      e.x = gen.sample_labels(spec, rng);
      e.features = gen.sample_features(spec, e.x, rng);
    }
  }
  return s;
}

/// Pairs (i, j), i < j, of co-occurrence counts of label 1.
inline std::vector<std::vector<std::size_t>> cooccurrence(const Dataset& d) {
  const std::size_t L = d.num_vars();
  std::vector<std::vector<std::size_t>> c(L, std::vector<std::size_t>(L, 0));
  for (const Example& e : d.examples)
    for (std::size_t i = 0; i < L; ++i)
      if (e.x[i] == 1)
        for (std::size_t j = i + 1; j < L; ++j) c[i][j] += e.x[j] == 1;
  return c;
}

/// The P most frequently co-occurring label pairs; ties go to the
/// lexicographically smaller pair. Returned in lexicographic order.
inline std::vector<std::vector<std::size_t>> select_pairs(const Dataset& d, std::size_t P) {
  const std::size_t L = d.num_vars();
  require(P <= L * (L - 1) / 2, "pair budget exceeds the number of label pairs");
  const auto c = cooccurrence(d);
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = i + 1; j < L; ++j) all.emplace_back(i, j);
  std::stable_sort(all.begin(), all.end(),
                   [&](const auto& a, const auto& b) { return c[a.first][a.second] > c[b.first][b.second]; });
  all.resize(P);
  std::sort(all.begin(), all.end());
  std::vector<std::vector<std::size_t>> out;
  for (auto [i, j] : all) out.push_back({i, j});
  return out;
}

enum class GraphKind { unary, chain, second_order, cooccurrence };

inline std::string_view to_string(GraphKind k) {
  switch (k) {
    case GraphKind::unary: return "unary";
    case GraphKind::chain: return "chain";
    case GraphKind::second_order: return "second-order";
    case GraphKind::cooccurrence: return "cooccurrence";
  }
  return "?";
}

inline GraphKind graph_kind_from_string(std::string_view s) {
  if (s == "unary") return GraphKind::unary;
  if (s == "chain") return GraphKind::chain;
  if (s == "second-order" || s == "second_order") return GraphKind::second_order;
  if (s == "cooccurrence") return GraphKind::cooccurrence;
  throw ConfigError(concat("unknown graph kind '", s, "'"));
}

/// Graph over the dataset's variables; `pairs` is the budget for cooccurrence graphs.
inline RegionGraph build_task_graph(GraphKind kind, const Dataset& train_set, std::size_t pairs = 0) {
  const auto& dom = train_set.domains;
  std::vector<std::vector<std::size_t>> regions;
  const std::size_t K = dom.size();
  switch (kind) {
    case GraphKind::unary: break;
    case GraphKind::chain:
      for (std::size_t k = 0; k + 1 < K; ++k) regions.push_back({k, k + 1});
      break;
    case GraphKind::second_order:
      for (std::size_t k = 0; k + 1 < K; ++k) regions.push_back({k, k + 1});
      for (std::size_t k = 0; k + 2 < K; ++k) regions.push_back({k, k + 2});
      break;
    case GraphKind::cooccurrence: regions = select_pairs(train_set, pairs); break;
  }
  return RegionGraph(dom, regions);
}

struct Evaluation {
  MetricReport report;
  std::vector<Assignment> predictions;
};

inline Evaluation evaluate(const Model& m, const ModelParams& p, View v, const Dataset& d, const InferOptions& opt,
                           std::size_t threads = 1) {
  m.check(d);
  Evaluation e;
  e.predictions = predict_all(m, p, v, d, opt, threads);
  e.report = compute_metrics(d, e.predictions);
  return e;
}

}  // namespace nlstruct
