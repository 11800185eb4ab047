#include "vitct/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vitct/csv.hpp"
#include "vitct/error.hpp"

namespace vitct {

SlicePrediction SlicePrediction::from_probability(std::string patient_id,
                                                  std::string slice_id,
                                                  double p_covid) {
  if (!(p_covid >= 0.0 && p_covid <= 1.0)) {
    throw ContractError("p_covid must lie in [0, 1]");
  }
  return {std::move(patient_id), std::move(slice_id), p_covid,
          p_covid >= 0.5 ? Label::Covid : Label::NonCovid};
}

void ThresholdPolicy::validate() const {
  if (tie_break == Label::Unknown) {
    throw ConfigError("tie_break must be covid or non-covid");
  }
  if (rule == VoteRule::Fraction && !(t > 0.0 && t < 1.0)) {
    throw ConfigError("fraction threshold must lie in (0, 1), got " +
                      csv::format_double(t));
  }
  if (rule == VoteRule::Ratio && !(t > 0.0 && std::isfinite(t))) {
    throw ConfigError("ratio threshold must be positive, got " +
                      csv::format_double(t));
  }
}

std::string ThresholdPolicy::describe() const {
  std::string out;
  switch (rule) {
    case VoteRule::Majority: out = "majority"; break;
    case VoteRule::Fraction: out = "fraction(" + csv::format_double(t) + ")"; break;
    case VoteRule::Ratio: out = "ratio(" + csv::format_double(t) + ")"; break;
  }
  return out + ", ties -> " + std::string(to_string(tie_break));
}

PatientTally tally_slices(std::span<const SlicePrediction> predictions) {
  if (predictions.empty()) throw ContractError("tally_slices: no predictions");
  PatientTally tally;
  tally.patient_id = predictions.front().patient_id;
  for (const auto& p : predictions) {
    if (p.patient_id != tally.patient_id) {
      throw ContractError("tally_slices: mixed patients '" + tally.patient_id +
                          "' and '" + p.patient_id + "'");
    }
    if (p.predicted == Label::Covid) ++tally.covid_slices;
    else ++tally.noncovid_slices;
  }
  return tally;
}

std::vector<PatientTally> tally_by_patient(
    std::span<const SlicePrediction> predictions) {
  std::map<std::string, PatientTally> by_id;
  for (const auto& p : predictions) {
    auto& t = by_id[p.patient_id];
    t.patient_id = p.patient_id;
    if (p.predicted == Label::Covid) ++t.covid_slices;
    else ++t.noncovid_slices;
  }
  std::vector<PatientTally> out;
  out.reserve(by_id.size());
  for (auto& [id, t] : by_id) out.push_back(std::move(t));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return natural_less(a.patient_id, b.patient_id);
  });
  return out;
}

Label decide_patient(const PatientTally& tally, const ThresholdPolicy& policy) {
  if (tally.total() == 0) {
    throw ContractError("decide_patient: patient " + tally.patient_id +
                        " has no slices");
  }
  const double covid = static_cast<double>(tally.covid_slices);
  const double noncovid = static_cast<double>(tally.noncovid_slices);
  // Compare a correctly rounded quotient against t so that a count ratio
  // exactly equal to a decimal threshold (e.g. 40/100 vs 0.4) is a tie.
  double lhs = 0.0, rhs = 0.0;
  switch (policy.rule) {
    case VoteRule::Majority:
      lhs = covid;
      rhs = noncovid;
      break;
    case VoteRule::Fraction:
      lhs = covid / (covid + noncovid);
      rhs = policy.t;
      break;
    case VoteRule::Ratio:
      if (tally.noncovid_slices == 0) return Label::Covid;
      lhs = covid / noncovid;
      rhs = policy.t;
      break;
  }
  if (lhs > rhs) return Label::Covid;
  if (lhs < rhs) return Label::NonCovid;
  return policy.tie_break;
}

PatientEvaluation evaluate_patients(std::span<const PatientTally> tallies,
                                    const LabelMap& labels,
                                    const ThresholdPolicy& policy) {
  policy.validate();
  PatientEvaluation eval;
  for (const auto& t : tallies) {
    auto it = labels.find(t.patient_id);
    if (it == labels.end() || it->second == Label::Unknown) {
      eval.excluded.push_back(t.patient_id);
      continue;
    }
    const Label predicted = decide_patient(t, policy);
    eval.outcomes.push_back({t, predicted, it->second});
    const bool pred_pos = predicted == Label::Covid;
    const bool true_pos = it->second == Label::Covid;
    if (pred_pos) ++eval.positives;
    if (pred_pos && true_pos) ++eval.confusion.tp;
    else if (pred_pos) ++eval.confusion.fp;
    else if (true_pos) ++eval.confusion.fn;
    else ++eval.confusion.tn;
  }
  return eval;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 19; ++k) grid.push_back(k / 20.0);
  return grid;
}

SweepResult sweep_thresholds(std::span<const SlicePrediction> predictions,
                             const LabelMap& labels,
                             std::span<const double> thresholds, VoteRule rule,
                             Label tie_break) {
  if (rule == VoteRule::Majority) {
    throw ConfigError("sweep_thresholds needs the fraction or ratio rule");
  }
  const auto tallies = tally_by_patient(predictions);
  SweepResult result;
  for (double t : thresholds) {
    const ThresholdPolicy policy{rule, t, tie_break};
    auto eval = evaluate_patients(tallies, labels, policy);
    if (eval.confusion.total() == 0) {
      throw ContractError("sweep_thresholds: no labeled patients to evaluate");
    }
    if (result.rows.empty()) result.excluded = eval.excluded;
    result.rows.push_back({t, eval.positives, compute_report(eval.confusion)});
  }
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    if (result.rows[i].report.accuracy >
        result.rows[result.best_accuracy].report.accuracy) {
      result.best_accuracy = i;
    }
    if (result.rows[i].report.weighted_f1 >
        result.rows[result.best_weighted_f1].report.weighted_f1) {
      result.best_weighted_f1 = i;
    }
  }
  return result;
}

namespace {

constexpr const char* kPredictionHeader = "patient_id,slice_id,p_covid,predicted_label";
constexpr const char* kSweepHeader =
    "threshold,accuracy,macro_f1_eq2,macro_f1_classwise,weighted_f1,tp,fp,fn,tn";

void expect_header(const std::vector<csv::Row>& rows, std::string_view header) {
  if (rows.empty()) throw FormatError("missing CSV header '" + std::string(header) + "'");
  if (csv::join(rows.front().fields) != header) {
    throw FormatError("line " + std::to_string(rows.front().line) +
                      ": expected header '" + std::string(header) + "'");
  }
}

std::string at_line(const csv::Row& row, const std::string& msg) {
  return "line " + std::to_string(row.line) + ": " + msg;
}

}  // namespace

std::string predictions_to_csv(std::span<const SlicePrediction> predictions) {
  std::ostringstream os;
  os << kPredictionHeader << '\n';
  for (const auto& p : predictions) {
    os << csv::join({p.patient_id, p.slice_id, csv::format_double(p.p_covid),
                     std::string(to_string(p.predicted))})
       << '\n';
  }
  return os.str();
}

std::vector<SlicePrediction> predictions_from_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  expect_header(rows, kPredictionHeader);
  std::vector<SlicePrediction> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.fields.size() != 4) {
      throw FormatError(at_line(row, "expected 4 fields, got " +
                                         std::to_string(row.fields.size())));
    }
    SlicePrediction p;
    try {
      p.patient_id = row.fields[0];
      p.slice_id = row.fields[1];
      p.p_covid = csv::parse_double(row.fields[2], "p_covid");
      p.predicted = parse_label(row.fields[3]);
    } catch (const FormatError& e) {
      throw FormatError(at_line(row, e.what()));
    }
    if (p.patient_id.empty()) throw FormatError(at_line(row, "empty patient_id"));
    if (!(p.p_covid >= 0.0 && p.p_covid <= 1.0)) {
      throw FormatError(at_line(row, "p_covid outside [0, 1]"));
    }
    if (p.predicted == Label::Unknown ||
        (p.predicted == Label::Covid) != (p.p_covid >= 0.5)) {
      throw FormatError(at_line(row, "predicted_label inconsistent with p_covid"));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string sweep_to_csv(std::span<const SweepCsvRow> rows) {
  std::ostringstream os;
  os << kSweepHeader << '\n';
  for (const auto& r : rows) {
    os << csv::join({csv::format_double(r.threshold), csv::format_double(r.accuracy),
                     csv::format_double(r.macro_f1_eq2),
                     csv::format_double(r.macro_f1_classwise),
                     csv::format_double(r.weighted_f1), std::to_string(r.confusion.tp),
                     std::to_string(r.confusion.fp), std::to_string(r.confusion.fn),
                     std::to_string(r.confusion.tn)})
       << '\n';
  }
  return os.str();
}

std::string sweep_to_csv(const SweepResult& sweep) {
  std::vector<SweepCsvRow> rows;
  for (const auto& r : sweep.rows) {
    rows.push_back({r.threshold, r.report.accuracy, r.report.macro_f1_eq2,
                    r.report.macro_f1_classwise, r.report.weighted_f1,
                    r.report.confusion});
  }
  return sweep_to_csv(rows);
}

std::vector<SweepCsvRow> sweep_from_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  expect_header(rows, kSweepHeader);
  std::vector<SweepCsvRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.fields.size() != 9) {
      throw FormatError(at_line(row, "expected 9 fields, got " +
                                         std::to_string(row.fields.size())));
    }
    try {
      SweepCsvRow r;
      r.threshold = csv::parse_double(row.fields[0], "threshold");
      r.accuracy = csv::parse_double(row.fields[1], "accuracy");
      r.macro_f1_eq2 = csv::parse_double(row.fields[2], "macro_f1_eq2");
      r.macro_f1_classwise = csv::parse_double(row.fields[3], "macro_f1_classwise");
      r.weighted_f1 = csv::parse_double(row.fields[4], "weighted_f1");
      r.confusion = {csv::parse_count(row.fields[5], "tp"),
                     csv::parse_count(row.fields[6], "fp"),
                     csv::parse_count(row.fields[7], "fn"),
                     csv::parse_count(row.fields[8], "tn")};
      out.push_back(r);
    } catch (const FormatError& e) {
      throw FormatError(at_line(row, e.what()));
    }
  }
  return out;
}

}  // namespace vitct
