#include "vitct/metrics.hpp"

#include <cmath>

#include "vitct/error.hpp"

namespace vitct {

namespace {

struct Ratio {
  double value;
  bool degenerate;
};

Ratio safe_ratio(std::size_t num, std::size_t den) {
  if (den == 0) return {0.0, true};
  return {static_cast<double>(num) / static_cast<double>(den), false};
}

// Scores for the class whose true positives are `hit`.
ClassScores class_scores(std::size_t hit, std::size_t false_pos,
                         std::size_t false_neg) {
  const auto p = safe_ratio(hit, hit + false_pos);
  const auto r = safe_ratio(hit, hit + false_neg);
  // 2tp / (2tp + fp + fn) equals 2PR / (P + R) wherever the latter is defined.
  const auto f = safe_ratio(2 * hit, 2 * hit + false_pos + false_neg);
  return {p.value, r.value, f.value, hit + false_neg,
          p.degenerate || r.degenerate || f.degenerate};
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const Label> predicted,
                                 std::span<const Label> truth) {
  if (predicted.size() != truth.size()) {
    throw ContractError("confusion_matrix: " + std::to_string(predicted.size()) +
                        " predictions vs " + std::to_string(truth.size()) +
                        " labels");
  }
  if (predicted.empty()) throw ContractError("confusion_matrix: no labels");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == Label::Unknown || truth[i] == Label::Unknown) {
      throw ContractError("confusion_matrix: unknown label at index " +
                          std::to_string(i));
    }
    const bool pred_pos = predicted[i] == Label::Covid;
    const bool true_pos = truth[i] == Label::Covid;
    if (pred_pos && true_pos) ++cm.tp;
    else if (pred_pos) ++cm.fp;
    else if (true_pos) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ContractError("accuracy of an empty confusion matrix");
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

PerClassScores per_class_prf(const ConfusionMatrix& cm) {
  return {class_scores(cm.tp, cm.fp, cm.fn), class_scores(cm.tn, cm.fn, cm.fp)};
}

Score macro_f1_eq2(const ConfusionMatrix& cm) {
  const auto pc = per_class_prf(cm);
  const double avg_p = 0.5 * (pc.covid.precision + pc.noncovid.precision);
  const double avg_r = 0.5 * (pc.covid.recall + pc.noncovid.recall);
  const bool degenerate = pc.covid.degenerate || pc.noncovid.degenerate;
  if (avg_p + avg_r == 0.0) return {0.0, true};
  return {2.0 * avg_p * avg_r / (avg_p + avg_r), degenerate};
}

Score macro_f1_classwise(const ConfusionMatrix& cm) {
  const auto pc = per_class_prf(cm);
  return {0.5 * (pc.covid.f1 + pc.noncovid.f1),
          pc.covid.degenerate || pc.noncovid.degenerate};
}

Score weighted_f1(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ContractError("weighted_f1 of an empty confusion matrix");
  const auto pc = per_class_prf(cm);
  const double total = static_cast<double>(cm.total());
  const double value =
      (static_cast<double>(pc.covid.support) * pc.covid.f1 +
       static_cast<double>(pc.noncovid.support) * pc.noncovid.f1) / total;
  return {value, pc.covid.support == 0 || pc.noncovid.support == 0};
}

double binomial_ci_radius(double score, std::size_t n, double z) {
  if (n == 0) throw ContractError("binomial_ci_radius needs n >= 1");
  if (!(score >= 0.0 && score <= 1.0)) {
    throw ContractError("binomial_ci_radius score must lie in [0, 1]");
  }
  if (!(z > 0.0)) throw ContractError("binomial_ci_radius needs z > 0");
  return z * std::sqrt(score * (1.0 - score) / static_cast<double>(n));
}

MetricsReport compute_report(const ConfusionMatrix& cm,
                             std::optional<std::size_t> ci_n, double z) {
  MetricsReport r;
  r.confusion = cm;
  r.accuracy = accuracy(cm);
  const auto pc = per_class_prf(cm);
  r.precision_covid = pc.covid.precision;
  r.recall_covid = pc.covid.recall;
  r.f1_covid = pc.covid.f1;
  r.precision_noncovid = pc.noncovid.precision;
  r.recall_noncovid = pc.noncovid.recall;
  r.f1_noncovid = pc.noncovid.f1;
  r.degenerate_covid = pc.covid.degenerate;
  r.degenerate_noncovid = pc.noncovid.degenerate;
  const auto eq2 = macro_f1_eq2(cm);
  const auto cw = macro_f1_classwise(cm);
  const auto wf = weighted_f1(cm);
  r.macro_f1_eq2 = eq2.value;
  r.degenerate_macro_f1_eq2 = eq2.degenerate;
  r.macro_f1_classwise = cw.value;
  r.degenerate_macro_f1_classwise = cw.degenerate;
  r.weighted_f1 = wf.value;
  r.degenerate_weighted_f1 = wf.degenerate;
  r.z = z;
  r.n = ci_n.value_or(cm.total());
  if (ci_n) r.ci_radius = binomial_ci_radius(r.macro_f1_eq2, *ci_n, z);
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j{
      {"confusion",
       {{"tp", r.confusion.tp}, {"fp", r.confusion.fp},
        {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}},
      {"accuracy", r.accuracy},
      {"precision_covid", r.precision_covid},
      {"recall_covid", r.recall_covid},
      {"f1_covid", r.f1_covid},
      {"precision_noncovid", r.precision_noncovid},
      {"recall_noncovid", r.recall_noncovid},
      {"f1_noncovid", r.f1_noncovid},
      {"macro_f1_eq2", r.macro_f1_eq2},
      {"macro_f1_classwise", r.macro_f1_classwise},
      {"weighted_f1", r.weighted_f1},
      {"ci_radius", r.ci_radius ? nlohmann::json(*r.ci_radius) : nlohmann::json()},
      {"ci_score", "macro_f1_eq2"},
      {"n", r.n},
      {"z", r.z},
      {"degenerate",
       {{"covid", r.degenerate_covid},
        {"noncovid", r.degenerate_noncovid},
        {"macro_f1_eq2", r.degenerate_macro_f1_eq2},
        {"macro_f1_classwise", r.degenerate_macro_f1_classwise},
        {"weighted_f1", r.degenerate_weighted_f1}}}};
  return j;
}

}  // namespace vitct
