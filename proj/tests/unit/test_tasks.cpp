#include <gtest/gtest.h>

#include "nlstruct/tasks.hpp"

using namespace nlstruct;

namespace {

Dataset labels_only(TaskKind kind, std::vector<std::size_t> domains, std::vector<Assignment> xs) {
  Dataset d;
  d.kind = kind;
  d.domains = std::move(domains);
  d.feature_dim = 1;
  d.per_variable = false;
  for (auto& x : xs) d.examples.push_back({{0.0}, std::move(x)});
  return d;
}

WordTaskSpec tiny_words(std::uint64_t seed) {
  WordTaskSpec s = WordTaskSpec::reduced();
  s.train = 12;
  s.val = 4;
  s.test = 4;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Glyphs, UpscaledBitmapIsExact) {
  for (char c = 'a'; c <= 'z'; ++c) {
    const auto img = render_glyph(c);
    const auto& rows = glyph_font()[static_cast<std::size_t>(c - 'a')];
    for (std::size_t r = 0; r < kImageSide; ++r)
      for (std::size_t col = 0; col < kImageSide; ++col) {
        const bool inside = col >= 4 && col < 24;
        const bool ink = inside && rows[r / 4][(col - 4) / 4] == '#';
        ASSERT_EQ(img[r * kImageSide + col], ink ? 1.0 : 0.0) << c << " at " << r << "," << col;
      }
  }
  EXPECT_THROW(render_glyph('A'), StructuralError);
}

TEST(Glyphs, LettersAreDistinct) {
  for (char a = 'a'; a <= 'z'; ++a)
    for (char b = a + 1; b <= 'z'; ++b) EXPECT_NE(render_glyph(a), render_glyph(b)) << a << b;
}

TEST(Glyphs, NoiseFreeRenderingIsTheGlyph) {
  const WordNoise clean{.max_rotation_deg = 0, .max_shift = 0, .scale_min = 1, .scale_max = 1};
  Rng rng(1);
  for (char c : std::string("thera")) EXPECT_EQ(render_letter(c, clean, rng), render_glyph(c));
}

TEST(Glyphs, RenderedPixelsStayInUnitRange) {
  WordNoise n;
  n.contrast_min = 0.5;
  n.contrast_max = 1.0;
  n.ink_min = 0.5;
  Rng rng(2);
  for (int i = 0; i < 50; ++i)
    for (double v : render_letter('e', n, rng)) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
}

TEST(WordTask, AlphabetIsVocabularyLetters) {
  EXPECT_EQ(WordTaskSpec::reduced().alphabet(), "aehorstw");
  WordTaskSpec full;
  EXPECT_EQ(full.alphabet().size(), 26u);
}

TEST(WordTask, SizesAndLabels) {
  const WordTaskSpec spec = tiny_words(3);
  const Splits s = gen_words(spec);
  EXPECT_EQ(s.train.size(), 12u);
  EXPECT_EQ(s.val.size(), 4u);
  EXPECT_EQ(s.test.size(), 4u);
  const auto& vocab = spec.vocabulary;
  for (const Dataset* d : {&s.train, &s.val, &s.test}) {
    EXPECT_EQ(d->domains, std::vector<std::size_t>(5, 8));
    EXPECT_EQ(d->feature_dim, kImagePixels);
    for (const auto& e : d->examples) {
      d->check(e);
      EXPECT_NE(std::find(vocab.begin(), vocab.end(), d->decode_word(e.x)), vocab.end());
    }
  }
}

TEST(WordTask, DeterministicAndSeedSensitive) {
  EXPECT_EQ(gen_words(tiny_words(5)).train, gen_words(tiny_words(5)).train);
  EXPECT_FALSE(gen_words(tiny_words(5)).train == gen_words(tiny_words(6)).train);
}

TEST(WordTask, ExamplesDoNotDependOnSplitSize) {
  WordTaskSpec big = tiny_words(7);
  big.train = 20;
  const Splits a = gen_words(tiny_words(7)), b = gen_words(big);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train.examples[i].x, b.train.examples[i].x);
    EXPECT_EQ(a.train.examples[i].features, b.train.examples[i].features);
  }
  EXPECT_EQ(a.test, b.test);
}

TEST(WordTask, RejectsBadVocabulary) {
  WordTaskSpec s = tiny_words(0);
  s.vocabulary = {"abc"};
  EXPECT_THROW(gen_words(s), StructuralError);
  s.vocabulary = {"ab1de"};
  EXPECT_THROW(gen_words(s), StructuralError);
}

TEST(MultilabelTask, ShapesAndDeterminism) {
  MultilabelTaskSpec spec;
  spec.train = 30;
  spec.val = 10;
  spec.test = 10;
  const Splits s = gen_multilabel(spec);
  EXPECT_EQ(s.train.size(), 30u);
  EXPECT_EQ(s.train.domains, std::vector<std::size_t>(16, 2));
  EXPECT_FALSE(s.train.per_variable);
  for (const auto& e : s.train.examples) s.train.check(e);
  EXPECT_EQ(s.train, gen_multilabel(spec).train);
  spec.seed = 1;
  EXPECT_FALSE(s.train == gen_multilabel(spec).train);
}

TEST(MultilabelTask, CooccurrenceMatchesDirectCount) {
  MultilabelTaskSpec spec;
  spec.train = 60;
  const Dataset d = gen_multilabel(spec).train;
  const auto c = cooccurrence(d);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = i + 1; j < 16; ++j) {
      std::size_t n = 0;
      for (const auto& e : d.examples) n += e.x[i] == 1 && e.x[j] == 1;
      EXPECT_EQ(c[i][j], n);
    }
}

TEST(MultilabelTask, SelectPairsKeepsTheMostFrequent) {
  MultilabelTaskSpec spec;
  spec.train = 80;
  const Dataset d = gen_multilabel(spec).train;
  const auto c = cooccurrence(d);
  const auto chosen = select_pairs(d, 10);
  ASSERT_EQ(chosen.size(), 10u);
  EXPECT_TRUE(std::is_sorted(chosen.begin(), chosen.end()));
  std::size_t weakest = SIZE_MAX;
  for (const auto& p : chosen) weakest = std::min(weakest, c[p[0]][p[1]]);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = i + 1; j < 16; ++j) {
      const bool in = std::find(chosen.begin(), chosen.end(), std::vector<std::size_t>{i, j}) != chosen.end();
      if (!in) {
        EXPECT_LE(c[i][j], weakest);
      }
    }
  EXPECT_EQ(select_pairs(d, 120).size(), 120u);
  EXPECT_THROW(select_pairs(d, 121), StructuralError);
}

TEST(MultilabelTask, SelectPairsBreaksTiesLexicographically) {
  const Dataset d = labels_only(TaskKind::multilabel, {2, 2, 2, 2}, {Assignment{1, 1, 1, 1}});
  EXPECT_EQ(select_pairs(d, 2), (std::vector<std::vector<std::size_t>>{{0, 1}, {0, 2}}));
}

TEST(TaskGraph, Shapes) {
  const Dataset d = labels_only(TaskKind::words, {3, 3, 3, 3, 3}, {});
  EXPECT_EQ(build_task_graph(GraphKind::unary, d).num_higher(), 0u);
  EXPECT_EQ(build_task_graph(GraphKind::chain, d).num_higher(), 4u);
  EXPECT_TRUE(build_task_graph(GraphKind::chain, d).is_chain());
  EXPECT_EQ(build_task_graph(GraphKind::second_order, d).num_higher(), 7u);
  EXPECT_EQ(graph_kind_from_string("second-order"), GraphKind::second_order);
  EXPECT_THROW(graph_kind_from_string("grid"), ConfigError);
}

TEST(Metrics, MultilabelHandFixture) {
  const Dataset d = labels_only(TaskKind::multilabel, {2, 2, 2, 2}, {Assignment{1, 0, 1, 0}, Assignment{0, 0, 1, 0}});
  const auto m = compute_metrics(d, {Assignment{1, 1, 0, 0}, Assignment{0, 0, 1, 0}});
  EXPECT_EQ(m.f1_classes, 3u);
  EXPECT_NEAR(m.macro_f1, (1.0 + 0.0 + 2.0 / 3.0) / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.hamming_loss, 1.0);
  EXPECT_DOUBLE_EQ(m.char_accuracy, 6.0 / 8.0);
  EXPECT_DOUBLE_EQ(m.word_accuracy, 0.5);
}

TEST(Metrics, WordHandFixture) {
  const Dataset d = labels_only(TaskKind::words, {3, 3}, {Assignment{0, 1}, Assignment{2, 2}});
  const auto m = compute_metrics(d, {Assignment{0, 2}, Assignment{2, 2}});
  EXPECT_NEAR(m.macro_f1, (1.0 + 0.0 + 0.8) / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.char_accuracy, 0.75);
  EXPECT_DOUBLE_EQ(m.word_accuracy, 0.5);
  EXPECT_EQ(m.mismatches, 1u);
}

TEST(Metrics, PerfectPrediction) {
  const Dataset d = labels_only(TaskKind::words, {4, 4, 4}, {Assignment{0, 1, 2}, Assignment{3, 3, 0}});
  std::vector<Assignment> pred;
  for (const auto& e : d.examples) pred.push_back(e.x);
  const auto m = compute_metrics(d, pred);
  EXPECT_DOUBLE_EQ(m.word_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.macro_f1, 1.0);
  EXPECT_DOUBLE_EQ(m.hamming_loss, 0.0);
  EXPECT_THROW(compute_metrics(d, {pred[0]}), StructuralError);
}

TEST(DatasetFile, RoundTrip) {
  const Splits s = gen_words(tiny_words(9));
  const std::string bytes = encode_dataset({&s.train, &s.val, &s.test});
  const Splits back = decode_dataset(bytes);
  EXPECT_EQ(back.train, s.train);
  EXPECT_EQ(back.val, s.val);
  EXPECT_EQ(back.test, s.test);
  EXPECT_EQ(encode_dataset({&back.train, &back.val, &back.test}), bytes);
}

TEST(DatasetFile, RejectsCorruptInput) {
  const Splits s = gen_words(tiny_words(9));
  std::string bytes = encode_dataset({&s.train, &s.val, &s.test});
  EXPECT_THROW(decode_dataset(bytes.substr(0, bytes.size() - 3)), IoError);
  EXPECT_THROW(decode_dataset(bytes + "x"), IoError);
  bytes[0] = 'X';
  EXPECT_THROW(decode_dataset(bytes), IoError);
}
