#pragma once

#include <algorithm>
#include <ostream>
#include <vector>

#include "nlstruct/dataset.hpp"

namespace nlstruct {

struct MetricReport {
  std::size_t examples = 0;
  std::size_t words_correct = 0;
  std::size_t variables = 0;
  std::size_t chars_correct = 0;
  std::size_t mismatches = 0;
  std::size_t f1_classes = 0;  // classes with a defined F1
  double word_accuracy = 0.0;
  double char_accuracy = 0.0;
  double hamming_loss = 0.0;  // mean mismatched variables per example
  double macro_f1 = 0.0;
};

/// For word tasks each label value is a class pooled over positions; for
/// multilabel tasks each variable is a class with label 1 as the positive.
/// Classes that never occur in either truth or prediction are left out of the
/// macro average.
inline MetricReport compute_metrics(const Dataset& truth, const std::vector<Assignment>& pred) {
  require(pred.size() == truth.size(), "prediction count does not match the dataset");
  MetricReport m;
  m.examples = truth.size();
  const bool per_variable_classes = truth.kind == TaskKind::multilabel;
  std::size_t num_classes = per_variable_classes ? truth.num_vars() : 0;
  if (!per_variable_classes)
    for (auto d : truth.domains) num_classes = std::max(num_classes, d);
  std::vector<std::size_t> tp(num_classes), fp(num_classes), fn(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const Assignment& x = truth.examples[i].x;
    const Assignment& p = pred[i];
    require(p.size() == x.size(), concat("prediction ", i, " has the wrong length"));
    std::size_t wrong = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      wrong += x[k] != p[k];
      if (per_variable_classes) {
        tp[k] += x[k] == 1 && p[k] == 1;
        fp[k] += x[k] != 1 && p[k] == 1;
        fn[k] += x[k] == 1 && p[k] != 1;
      } else {
        require(p[k] < num_classes && x[k] < num_classes, "label out of range");
        if (x[k] == p[k]) {
          ++tp[x[k]];
        } else {
          ++fp[p[k]];
          ++fn[x[k]];
        }
      }
    }
    m.variables += x.size();
    m.mismatches += wrong;
    m.chars_correct += x.size() - wrong;
    m.words_correct += wrong == 0;
  }
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom == 0) continue;
    ++m.f1_classes;
    f1_sum += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  if (m.examples > 0) {
    m.word_accuracy = static_cast<double>(m.words_correct) / static_cast<double>(m.examples);
    m.hamming_loss = static_cast<double>(m.mismatches) / static_cast<double>(m.examples);
  }
  if (m.variables > 0) m.char_accuracy = static_cast<double>(m.chars_correct) / static_cast<double>(m.variables);
  if (m.f1_classes > 0) m.macro_f1 = f1_sum / static_cast<double>(m.f1_classes);
  return m;
}

inline std::ostream& operator<<(std::ostream& os, const MetricReport& m) {
  os << "examples " << m.examples << "\nword_accuracy " << m.word_accuracy << " (" << m.words_correct << "/"
     << m.examples << ")\nchar_accuracy " << m.char_accuracy << " (" << m.chars_correct << "/" << m.variables
     << ")\nhamming_loss " << m.hamming_loss << " (" << m.mismatches << " mismatches)\nmacro_f1 " << m.macro_f1
     << " (" << m.f1_classes << " classes)\n";
  return os;
}

}  // namespace nlstruct
