#include <gtest/gtest.h>

#include "support.hpp"
#include "vitct/dataset.hpp"
#include "vitct/error.hpp"
#include "vitct/metrics.hpp"

namespace vitct {
namespace {

using testing::Gen;

const ConfusionMatrix kReference{142, 110, 83, 358};

// Textbook formulas, written independently of the library.
struct Oracle {
  double p_pos, r_pos, f_pos, p_neg, r_neg, f_neg;
  explicit Oracle(const ConfusionMatrix& cm) {
    const double tp = cm.tp, fp = cm.fp, fn = cm.fn, tn = cm.tn;
    p_pos = tp / (tp + fp);
    r_pos = tp / (tp + fn);
    f_pos = 2 * p_pos * r_pos / (p_pos + r_pos);
    p_neg = tn / (tn + fn);
    r_neg = tn / (tn + fp);
    f_neg = 2 * p_neg * r_neg / (p_neg + r_neg);
  }
};

ConfusionMatrix random_cm(Gen& gen, std::size_t hi = 1000) {
  ConfusionMatrix cm;
  do {
    cm = {gen.index(0, hi), gen.index(0, hi), gen.index(0, hi), gen.index(0, hi)};
  } while (cm.total() == 0);
  return cm;
}

TEST(ConfusionMatrixTest, CountsMatchScalarOracle) {
  Gen gen(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = gen.index(1, 200);
    std::vector<Label> pred(n), truth(n);
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = gen.coin() ? Label::Covid : Label::NonCovid;
      truth[i] = gen.coin() ? Label::Covid : Label::NonCovid;
      const int code = (pred[i] == Label::Covid) * 2 + (truth[i] == Label::Covid);
      tp += code == 3;
      fp += code == 2;
      fn += code == 1;
      tn += code == 0;
    }
    EXPECT_EQ(confusion_matrix(pred, truth), (ConfusionMatrix{tp, fp, fn, tn}));
  }
}

TEST(ConfusionMatrixTest, AllCorrectAndErrors) {
  std::vector<Label> labels{Label::Covid, Label::NonCovid, Label::Covid};
  const auto cm = confusion_matrix(labels, labels);
  EXPECT_EQ(cm.fp, 0u);
  EXPECT_EQ(cm.fn, 0u);
  std::vector<Label> shorter{Label::Covid};
  EXPECT_THROW(confusion_matrix(shorter, labels), ContractError);
  EXPECT_THROW(confusion_matrix({}, {}), ContractError);
}

TEST(AccuracyTest, Examples) {
  EXPECT_DOUBLE_EQ(accuracy(kReference), 500.0 / 693.0);
  EXPECT_NEAR(accuracy(kReference), 0.7215, 5e-5);
  EXPECT_EQ(accuracy({5, 0, 0, 7}), 1.0);
  EXPECT_EQ(accuracy({0, 4, 3, 0}), 0.0);
  EXPECT_THROW(accuracy({}), ContractError);
}

TEST(PerClassTest, ReferenceMatrix) {
  const auto pc = per_class_prf(kReference);
  EXPECT_NEAR(pc.covid.precision, 142.0 / 252.0, 1e-12);
  EXPECT_NEAR(pc.covid.recall, 142.0 / 225.0, 1e-12);
  EXPECT_NEAR(pc.covid.precision, 0.5635, 5e-5);
  EXPECT_NEAR(pc.covid.recall, 0.6311, 5e-5);
  EXPECT_NEAR(pc.covid.f1, 0.60, 0.005);
  EXPECT_NEAR(pc.noncovid.f1, 0.79, 0.005);
  EXPECT_EQ(pc.covid.support, 225u);
  EXPECT_EQ(pc.noncovid.support, 468u);
  EXPECT_FALSE(pc.covid.degenerate);
}

TEST(PerClassTest, PerfectAndDegenerate) {
  const auto perfect = compute_report({10, 0, 0, 10});
  for (double v : {perfect.precision_covid, perfect.recall_covid, perfect.f1_covid,
                   perfect.precision_noncovid, perfect.recall_noncovid, perfect.f1_noncovid,
                   perfect.macro_f1_eq2, perfect.macro_f1_classwise, perfect.weighted_f1})
    EXPECT_EQ(v, 1.0);
  const auto pc = per_class_prf({0, 0, 0, 9});
  EXPECT_TRUE(pc.covid.degenerate);
  EXPECT_EQ(pc.covid.precision, 0.0);
  EXPECT_EQ(pc.covid.f1, 0.0);
  EXPECT_FALSE(pc.noncovid.degenerate);
}

TEST(MacroF1Test, ReferenceMatrix) {
  const auto o = Oracle(kReference);
  const double avg_p = (o.p_pos + o.p_neg) / 2, avg_r = (o.r_pos + o.r_neg) / 2;
  EXPECT_NEAR(avg_p, 0.6877, 1e-4);
  EXPECT_NEAR(avg_r, 0.6981, 1e-4);
  EXPECT_NEAR(macro_f1_eq2(kReference).value, 2 * avg_p * avg_r / (avg_p + avg_r), 1e-12);
  EXPECT_NEAR(macro_f1_eq2(kReference).value, 0.693, 5e-4);
  EXPECT_NEAR(macro_f1_classwise(kReference).value, 0.69, 0.005);
  EXPECT_NEAR(macro_f1_classwise(kReference).value, (o.f_pos + o.f_neg) / 2, 1e-12);
}

TEST(WeightedF1Test, ReferenceMatrix) {
  const auto o = Oracle(kReference);
  EXPECT_NEAR(weighted_f1(kReference).value, (225 * o.f_pos + 468 * o.f_neg) / 693, 1e-12);
  EXPECT_NEAR(weighted_f1(kReference).value, 0.725, 5e-4);
  EXPECT_NEAR(468 * per_class_prf(kReference).noncovid.f1 / 693, 0.532, 5e-4);
}

TEST(WeightedF1Test, EqualSupportAndDominantClass) {
  Gen gen(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t pos = gen.index(1, 100), neg = pos;
    const std::size_t tp = gen.index(0, pos), tn = gen.index(0, neg);
    const ConfusionMatrix cm{tp, neg - tn, pos - tp, tn};
    EXPECT_NEAR(weighted_f1(cm).value, macro_f1_classwise(cm).value, 1e-12);
  }
  // Non-COVID perfect with weight 90/91, COVID F1 zero.
  const ConfusionMatrix cm{0, 0, 1, 90};
  EXPECT_NEAR(weighted_f1(cm).value, 90.0 / 91.0 * per_class_prf(cm).noncovid.f1, 1e-12);
  EXPECT_NEAR(per_class_prf(cm).noncovid.f1, 180.0 / 181.0, 1e-12);
  EXPECT_TRUE(weighted_f1({0, 0, 0, 5}).degenerate);
}

TEST(MetricsPropertyTest, RatesInUnitInterval) {
  Gen gen(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto cm = random_cm(gen, trial % 2 ? 5 : 1000);
    const auto r = compute_report(cm, gen.index(1, 1000));
    for (double v : {r.accuracy, r.precision_covid, r.recall_covid, r.f1_covid,
                     r.precision_noncovid, r.recall_noncovid, r.f1_noncovid, r.macro_f1_eq2,
                     r.macro_f1_classwise, r.weighted_f1}) {
      ASSERT_TRUE(std::isfinite(v));
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    ASSERT_GE(*r.ci_radius, 0.0);
  }
}

TEST(MetricsPropertyTest, ClassSwapSymmetry) {
  Gen gen(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto cm = random_cm(gen);
    const auto a = compute_report(cm), b = compute_report(cm.swapped());
    ASSERT_EQ(a.precision_covid, b.precision_noncovid);
    ASSERT_EQ(a.recall_covid, b.recall_noncovid);
    ASSERT_EQ(a.f1_covid, b.f1_noncovid);
    ASSERT_EQ(a.f1_noncovid, b.f1_covid);
    ASSERT_EQ(a.accuracy, b.accuracy);
    ASSERT_EQ(a.macro_f1_classwise, b.macro_f1_classwise);
    ASSERT_EQ(a.macro_f1_eq2, b.macro_f1_eq2);
  }
}

TEST(MetricsPropertyTest, ScaleInvariance) {
  Gen gen(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto cm = random_cm(gen);
    const std::size_t k = gen.index(2, 1000);
    const auto a = compute_report(cm);
    const auto b = compute_report({cm.tp * k, cm.fp * k, cm.fn * k, cm.tn * k});
    ASSERT_DOUBLE_EQ(a.accuracy, b.accuracy);
    ASSERT_DOUBLE_EQ(a.f1_covid, b.f1_covid);
    ASSERT_DOUBLE_EQ(a.f1_noncovid, b.f1_noncovid);
    ASSERT_DOUBLE_EQ(a.precision_covid, b.precision_covid);
    ASSERT_DOUBLE_EQ(a.recall_noncovid, b.recall_noncovid);
    ASSERT_DOUBLE_EQ(a.macro_f1_eq2, b.macro_f1_eq2);
    ASSERT_DOUBLE_EQ(a.macro_f1_classwise, b.macro_f1_classwise);
    ASSERT_DOUBLE_EQ(a.weighted_f1, b.weighted_f1);
  }
}

TEST(MetricsPropertyTest, Eq2EqualsClasswiseWhenPrecisionEqualsRecall) {
  Gen gen(6);
  for (int trial = 0; trial < 500; ++trial) {
    // fp == fn makes precision equal recall for both classes.
    const std::size_t tp = gen.index(1, 500), tn = gen.index(1, 500), off = gen.index(0, 500);
    const ConfusionMatrix cm{tp, off, off, tn};
    ASSERT_NEAR(macro_f1_eq2(cm).value, macro_f1_classwise(cm).value, 1e-12);
  }
}

TEST(MetricsPropertyTest, AgreesWithOracleWhenNonDegenerate) {
  Gen gen(7);
  for (int trial = 0; trial < 500; ++trial) {
    const ConfusionMatrix cm{gen.index(1, 400), gen.index(1, 400), gen.index(1, 400),
                             gen.index(1, 400)};
    const Oracle o(cm);
    const auto pc = per_class_prf(cm);
    ASSERT_NEAR(pc.covid.f1, o.f_pos, 1e-12);
    ASSERT_NEAR(pc.noncovid.f1, o.f_neg, 1e-12);
    ASSERT_NEAR(pc.noncovid.precision, o.p_neg, 1e-12);
    ASSERT_NEAR(macro_f1_classwise(cm).value, (o.f_pos + o.f_neg) / 2, 1e-12);
  }
}

TEST(BinomialCiTest, Examples) {
  EXPECT_NEAR(binomial_ci_radius(0.5, 100, 1.96), 0.098, 1e-9);
  EXPECT_NEAR(binomial_ci_radius(0.75, 106378, 1.96), 0.002602, 1e-6);
  for (std::size_t n : {1u, 7u, 1000u}) {
    EXPECT_EQ(binomial_ci_radius(0.0, n), 0.0);
    EXPECT_EQ(binomial_ci_radius(1.0, n), 0.0);
  }
  EXPECT_THROW(binomial_ci_radius(0.5, 0), ContractError);
  EXPECT_THROW(binomial_ci_radius(1.5, 10), ContractError);
  EXPECT_THROW(binomial_ci_radius(0.5, 10, 0.0), ContractError);
}

// The worked example's printed value does not satisfy the formula for the
// same inputs; the formula is implemented.
TEST(BinomialCiTest, KnownInconsistencyWithWorkedExample) {
  const double printed = 0.00013;
  const double computed = binomial_ci_radius(0.75, 106378, 1.96);
  EXPECT_GT(computed / printed, 19.0);
  EXPECT_GT(std::abs(computed - printed), 1e-3);
}

TEST(BinomialCiTest, PropertyMaximalAtHalfAndDecreasingInN) {
  Gen gen(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = gen.index(1, 100000);
    const double z = gen.uniform(0.5, 4), s = gen.uniform(0, 1);
    ASSERT_LE(binomial_ci_radius(s, n, z), binomial_ci_radius(0.5, n, z));
    if (s > 0 && s < 1) ASSERT_LT(binomial_ci_radius(s, n + gen.index(1, 100), z),
                                  binomial_ci_radius(s, n, z));
  }
}

TEST(ReportTest, JsonCarriesEveryField) {
  const auto j = to_json(compute_report(kReference, 693));
  for (const char* key : {"accuracy", "precision_covid", "recall_covid", "f1_covid",
                          "precision_noncovid", "recall_noncovid", "f1_noncovid",
                          "macro_f1_eq2", "macro_f1_classwise", "weighted_f1", "ci_radius", "n",
                          "z", "confusion", "degenerate"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["confusion"]["tp"], 142);
  EXPECT_EQ(j["n"], 693);
  EXPECT_NEAR(j["ci_radius"].get<double>(),
              binomial_ci_radius(macro_f1_eq2(kReference).value, 693), 1e-15);
  EXPECT_TRUE(to_json(compute_report(kReference))["ci_radius"].is_null());
}

}  // namespace
}  // namespace vitct
