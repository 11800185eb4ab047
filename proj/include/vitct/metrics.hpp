#pragma once

// Patient-level evaluation metrics. COVID is the positive class throughout.
// Any 0/0 ratio is reported as 0 together with a degenerate flag so reports
// never contain NaN.

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "json.hpp"
#include "vitct/dataset.hpp"

namespace vitct {

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  std::size_t covid_support() const { return tp + fn; }
  std::size_t noncovid_support() const { return tn + fp; }
  // Same counts with the positive class switched to non-COVID.
  ConfusionMatrix swapped() const { return {tn, fn, fp, tp}; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

// Labels must be Covid or NonCovid; sequences must match in length.
ConfusionMatrix confusion_matrix(std::span<const Label> predicted,
                                 std::span<const Label> truth);

// (tp + tn) / total. Throws ContractError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  bool degenerate = false;  // some ratio was 0/0
};

struct PerClassScores {
  ClassScores covid;
  ClassScores noncovid;
};

PerClassScores per_class_prf(const ConfusionMatrix& cm);

struct Score {
  double value = 0.0;
  bool degenerate = false;
};

// Harmonic mean of macro-averaged precision and macro-averaged recall.
Score macro_f1_eq2(const ConfusionMatrix& cm);
// Unweighted mean of the per-class F1 scores.
Score macro_f1_classwise(const ConfusionMatrix& cm);
// Per-class F1 weighted by true-class support.
Score weighted_f1(const ConfusionMatrix& cm);

inline constexpr double kDefaultZ = 1.96;

// Normal-approximation half width z * sqrt(score * (1 - score) / n).
double binomial_ci_radius(double score, std::size_t n, double z = kDefaultZ);

struct MetricsReport {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  double precision_covid = 0.0;
  double recall_covid = 0.0;
  double f1_covid = 0.0;
  double precision_noncovid = 0.0;
  double recall_noncovid = 0.0;
  double f1_noncovid = 0.0;
  double macro_f1_eq2 = 0.0;
  double macro_f1_classwise = 0.0;
  double weighted_f1 = 0.0;
  // Radius of the binomial interval around macro_f1_eq2.
  std::optional<double> ci_radius;
  std::size_t n = 0;
  double z = kDefaultZ;

  bool degenerate_covid = false;
  bool degenerate_noncovid = false;
  bool degenerate_macro_f1_eq2 = false;
  bool degenerate_macro_f1_classwise = false;
  bool degenerate_weighted_f1 = false;
};

// Full metric suite. When ci_n is given, ci_radius is filled with that
// sample count; otherwise n is the matrix total and no radius is computed.
MetricsReport compute_report(const ConfusionMatrix& cm,
                             std::optional<std::size_t> ci_n = std::nullopt,
                             double z = kDefaultZ);

nlohmann::json to_json(const MetricsReport& report);

}  // namespace vitct
