#pragma once

// Slice-to-patient aggregation: tally per-slice predictions, then apply a
// voting policy to the tally.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vitct/dataset.hpp"
#include "vitct/metrics.hpp"

namespace vitct {

struct SlicePrediction {
  std::string patient_id;
  std::string slice_id;
  double p_covid = 0.0;
  Label predicted = Label::NonCovid;  // Covid iff p_covid >= 0.5

  static SlicePrediction from_probability(std::string patient_id,
                                          std::string slice_id, double p_covid);
};

struct PatientTally {
  std::string patient_id;
  std::size_t covid_slices = 0;
  std::size_t noncovid_slices = 0;

  std::size_t total() const { return covid_slices + noncovid_slices; }
};

enum class VoteRule {
  Majority,  // covid > noncovid
  Fraction,  // covid / (covid + noncovid) > t
  Ratio,     // covid > t * noncovid
};

struct ThresholdPolicy {
  VoteRule rule = VoteRule::Majority;
  double t = 0.5;
  Label tie_break = Label::NonCovid;  // outcome when the comparison is equal

  static ThresholdPolicy majority(Label tie = Label::NonCovid) {
    return {VoteRule::Majority, 0.5, tie};
  }
  static ThresholdPolicy fraction(double t, Label tie = Label::NonCovid) {
    return {VoteRule::Fraction, t, tie};
  }
  static ThresholdPolicy ratio(double t, Label tie = Label::NonCovid) {
    return {VoteRule::Ratio, t, tie};
  }

  // Fraction needs t in (0, 1), Ratio t > 0; tie_break must be a class.
  void validate() const;
  std::string describe() const;
};

// Counts for one patient. Throws ContractError on empty input or mixed ids.
PatientTally tally_slices(std::span<const SlicePrediction> predictions);

// One tally per patient, in natural patient-id order.
std::vector<PatientTally> tally_by_patient(
    std::span<const SlicePrediction> predictions);

// Uses only the counts in the tally.
Label decide_patient(const PatientTally& tally, const ThresholdPolicy& policy);

using LabelMap = std::map<std::string, Label>;

struct PatientOutcome {
  PatientTally tally;
  Label predicted = Label::NonCovid;
  Label truth = Label::NonCovid;
};

struct PatientEvaluation {
  ConfusionMatrix confusion;
  std::vector<PatientOutcome> outcomes;
  std::vector<std::string> excluded;  // predicted patients without a label
  std::size_t positives = 0;          // patients diagnosed COVID
};

PatientEvaluation evaluate_patients(std::span<const PatientTally> tallies,
                                    const LabelMap& labels,
                                    const ThresholdPolicy& policy);

struct SweepRow {
  double threshold = 0.0;
  std::size_t positives = 0;
  MetricsReport report;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> excluded;
  std::size_t best_accuracy = 0;     // row index, lowest threshold on ties
  std::size_t best_weighted_f1 = 0;  // row index, lowest threshold on ties
};

// k / 20 for k = 1..19.
std::vector<double> default_threshold_grid();

// Applies Fraction(t) (or Ratio(t) when rule is Ratio) for every threshold.
SweepResult sweep_thresholds(std::span<const SlicePrediction> predictions,
                             const LabelMap& labels,
                             std::span<const double> thresholds,
                             VoteRule rule = VoteRule::Fraction,
                             Label tie_break = Label::NonCovid);

// Prediction CSV: `patient_id,slice_id,p_covid,predicted_label`.
std::string predictions_to_csv(std::span<const SlicePrediction> predictions);
std::vector<SlicePrediction> predictions_from_csv(std::string_view text);

// Sweep CSV: `threshold,accuracy,macro_f1_eq2,macro_f1_classwise,
// weighted_f1,tp,fp,fn,tn`.
struct SweepCsvRow {
  double threshold = 0.0;
  double accuracy = 0.0;
  double macro_f1_eq2 = 0.0;
  double macro_f1_classwise = 0.0;
  double weighted_f1 = 0.0;
  ConfusionMatrix confusion;
};
std::string sweep_to_csv(std::span<const SweepCsvRow> rows);
std::string sweep_to_csv(const SweepResult& sweep);
std::vector<SweepCsvRow> sweep_from_csv(std::string_view text);

}  // namespace vitct
