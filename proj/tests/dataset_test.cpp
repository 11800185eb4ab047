#include <gtest/gtest.h>

#include <fstream>
#include <map>

#include "support.hpp"
#include "vitct/csv.hpp"
#include "vitct/dataset.hpp"
#include "vitct/error.hpp"

namespace vitct {
namespace {

namespace fs = std::filesystem;
using testing::Gen;
using testing::TempDir;

void write_slice(const fs::path& path, float value = 100.0f) {
  fs::create_directories(path.parent_path());
  save_slice(SliceImage(8, 8, 1, PixelScale::Byte, value), path);
}

TEST(LabelTest, ParsingIsCaseInsensitive) {
  EXPECT_EQ(parse_label("COVID"), Label::Covid);
  EXPECT_EQ(parse_label("Non-Covid"), Label::NonCovid);
  EXPECT_EQ(parse_partition("Validation"), Partition::Validation);
  try {
    parse_label("maybe");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("non-covid"), std::string::npos);
  }
}

TEST(NaturalSortTest, DigitRunsCompareNumerically) {
  std::vector<std::string> names{"10.png", "2.png", "1.png", "b", "a10", "a9", "a09x"};
  std::sort(names.begin(), names.end(), [](const auto& a, const auto& b) {
    return natural_less(a, b);
  });
  EXPECT_EQ(names[0], "1.png");
  EXPECT_EQ(names[1], "2.png");
  EXPECT_EQ(names[2], "10.png");
  EXPECT_LT(std::find(names.begin(), names.end(), "a9") - names.begin(),
            std::find(names.begin(), names.end(), "a10") - names.begin());
}

TEST(ScanTreeTest, SummaryOfConstructedTree) {
  TempDir dir("scan");
  SyntheticSpec spec;
  spec.train = {2, 3};
  spec.min_slices = 2;
  spec.max_slices = 4;
  spec.image_size = 16;
  spec.force = true;
  generate_synthetic(dir.path(), spec);
  const auto r = scan_tree(dir.path());
  ASSERT_EQ(r.summaries.size(), 1u);
  const auto* s = r.summary(Partition::Train);
  ASSERT_NE(s, nullptr);
  EXPECT_EQ(s->covid_patients, 2u);
  EXPECT_EQ(s->noncovid_patients, 3u);
  std::size_t slices = 0;
  for (const auto& p : r.patients) slices += p.slice_paths.size();
  EXPECT_EQ(s->total_slices, slices);
  EXPECT_EQ(s->out_of_range_patients, 5u);
  EXPECT_EQ(r.summary(Partition::Validation), nullptr);
}

TEST(ScanTreeTest, SlicesInNaturalOrderAndNonImagesWarned) {
  TempDir dir("order");
  const auto patient = dir / "train" / "covid" / "p1";
  for (int i : {10, 2, 1}) write_slice(patient / (std::to_string(i) + ".png"));
  std::ofstream(patient / "notes.txt") << "x";
  const auto r = scan_tree(dir.path());
  ASSERT_EQ(r.patients.size(), 1u);
  const auto& paths = r.patients[0].slice_paths;
  ASSERT_EQ(paths.size(), 3u);
  EXPECT_EQ(paths[0].filename(), "1.png");
  EXPECT_EQ(paths[2].filename(), "10.png");
  EXPECT_TRUE(std::any_of(r.warnings.begin(), r.warnings.end(),
                          [](const auto& w) { return w.find("notes.txt") != std::string::npos; }));
}

TEST(ScanTreeTest, EmptyPatientIsSkippedWithWarning) {
  TempDir dir("empty");
  write_slice(dir / "train" / "non-covid" / "a" / "0.png");
  fs::create_directories(dir / "train" / "non-covid" / "b");
  const auto r = scan_tree(dir.path());
  EXPECT_EQ(r.patients.size(), 1u);
  EXPECT_EQ(r.summary(Partition::Train)->skipped_patients, 1u);
  EXPECT_EQ(r.summary(Partition::Train)->noncovid_patients, 1u);
}

TEST(ScanTreeTest, UnknownClassFolderAndMissingRoot) {
  TempDir dir("unknown");
  write_slice(dir / "train" / "pneumonia" / "a" / "0.png");
  EXPECT_THROW(scan_tree(dir.path()), FormatError);
  EXPECT_THROW(scan_tree(dir / "nope"), IoError);
}

TEST(ScanTreeTest, TestPartitionAcceptsUnlabeledPatients) {
  TempDir dir("test_part");
  write_slice(dir / "test" / "ct_scan_9" / "0.png");
  write_slice(dir / "test" / "covid" / "ct_scan_3" / "0.png");
  const auto r = scan_tree(dir.path());
  ASSERT_EQ(r.patients.size(), 2u);
  const auto* s = r.summary(Partition::Test);
  EXPECT_EQ(s->covid_patients, 1u);
  EXPECT_EQ(s->unlabeled_patients, 1u);
}

TEST(ScanTreeTest, PropertyRescanIsDeterministicAndTotalsAdd) {
  Gen gen(1);
  for (int trial = 0; trial < 3; ++trial) {
    TempDir dir("rescan");
    SyntheticSpec spec;
    spec.train = {gen.index(0, 3), gen.index(1, 3)};
    spec.validation = {gen.index(0, 2), gen.index(0, 2)};
    spec.min_slices = 1;
    spec.max_slices = gen.index(1, 4);
    spec.image_size = 8;
    spec.seed = trial;
    spec.force = true;
    generate_synthetic(dir.path(), spec);
    const auto a = scan_tree(dir.path());
    const auto b = scan_tree(dir.path());
    ASSERT_EQ(a.patients.size(), b.patients.size());
    for (std::size_t i = 0; i < a.patients.size(); ++i) {
      EXPECT_EQ(a.patients[i].patient_id, b.patients[i].patient_id);
      EXPECT_EQ(a.patients[i].slice_paths, b.patients[i].slice_paths);
    }
    for (const auto& s : a.summaries) {
      std::size_t slices = 0, covid = 0, noncovid = 0;
      for (const auto& p : a.partition(s.partition)) {
        slices += p.slice_paths.size();
        covid += p.label == Label::Covid;
        noncovid += p.label == Label::NonCovid;
      }
      EXPECT_EQ(s.total_slices, slices);
      EXPECT_EQ(s.covid_patients, covid);
      EXPECT_EQ(s.noncovid_patients, noncovid);
    }
    const auto* tr = a.summary(Partition::Train);
    EXPECT_EQ(tr->covid_patients, spec.train.covid);
    EXPECT_EQ(tr->noncovid_patients, spec.train.noncovid);
  }
}

TEST(ManifestTest, CsvColumns) {
  PatientScan p{"ct_1", Partition::Validation, Label::Covid, {"a.png", "b.png"}};
  const auto rows = csv::parse(manifest_csv({p}));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].fields, (std::vector<std::string>{"patient_id", "partition", "label", "num_slices"}));
  EXPECT_EQ(rows[1].fields, (std::vector<std::string>{"ct_1", "validation", "covid", "2"}));
}

TEST(BatchPlanTest, FinalPartialBatch) {
  const auto plan = plan_batches(10, 3, std::nullopt);
  ASSERT_EQ(plan.size(), 4u);
  EXPECT_EQ(plan[0].size(), 3u);
  EXPECT_EQ(plan[1].size(), 3u);
  EXPECT_EQ(plan[2].size(), 3u);
  EXPECT_EQ(plan[3].size(), 1u);
  EXPECT_EQ(plan[3][0], 9u);
  EXPECT_THROW(plan_batches(10, 0, std::nullopt), ContractError);
}

TEST(BatchPlanTest, PropertySeededShuffleIsDeterministicPermutation) {
  Gen gen(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = gen.index(1, 200), bs = gen.index(1, 40);
    const std::uint64_t seed = gen.index(0, 1000000);
    const auto a = plan_batches(n, bs, seed);
    EXPECT_EQ(a, plan_batches(n, bs, seed));
    std::vector<std::size_t> flat;
    for (const auto& b : a) {
      EXPECT_LE(b.size(), bs);
      flat.insert(flat.end(), b.begin(), b.end());
    }
    EXPECT_EQ(a.size(), (n + bs - 1) / bs);
    std::sort(flat.begin(), flat.end());
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(flat[i], i);
  }
}

TEST(BatchStreamTest, ShufflePreservesSliceLabelPairs) {
  TempDir dir("stream");
  std::vector<LabeledSlice> slices;
  for (int i = 0; i < 10; ++i) {
    const auto path = dir / (std::to_string(i) + ".png");
    write_slice(path, static_cast<float>(i * 20));
    slices.push_back({path, i % 3 ? Label::NonCovid : Label::Covid, "p" + std::to_string(i)});
  }
  PreprocessConfig pre;
  pre.size = 8;
  BatchStream stream(slices, 3, 77, pre);
  EXPECT_EQ(stream.num_batches(), 4u);
  std::multiset<std::pair<std::size_t, int>> seen;
  std::vector<std::size_t> sizes;
  Batch b;
  while (stream.next(b)) {
    sizes.push_back(b.images.size());
    for (std::size_t i = 0; i < b.images.size(); ++i) {
      seen.insert({b.sample_ids[i], b.labels[i]});
      const float expect = (static_cast<float>(b.sample_ids[i]) * 20.0f / 255.0f - 0.485f) / 0.229f;
      EXPECT_NEAR(b.images[i][0], expect, 1e-5);
    }
  }
  std::multiset<std::pair<std::size_t, int>> expect;
  for (std::size_t i = 0; i < slices.size(); ++i) expect.insert({i, static_cast<int>(slices[i].label)});
  EXPECT_EQ(seen, expect);
  std::sort(sizes.begin(), sizes.end());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{1, 3, 3, 3}));
}

TEST(BatchStreamTest, CorruptSliceIsSkippedAndCounted) {
  TempDir dir("stream_bad");
  std::vector<LabeledSlice> slices;
  for (int i = 0; i < 4; ++i) {
    const auto path = dir / (std::to_string(i) + ".png");
    write_slice(path);
    slices.push_back({path, Label::Covid, "p"});
  }
  std::ofstream(slices[2].path, std::ios::trunc) << "garbage";
  PreprocessConfig pre;
  pre.size = 8;
  BatchStream stream(slices, 2, std::nullopt, pre);
  std::size_t total = 0;
  Batch b;
  while (stream.next(b)) total += b.images.size();
  EXPECT_EQ(total, 3u);
  EXPECT_EQ(stream.skipped(), 1u);
  EXPECT_EQ(stream.warnings().size(), 1u);
}

TEST(SyntheticTest, RoundTripAndRefusesNonEmptyRoot) {
  TempDir dir("synth");
  SyntheticSpec spec;
  spec.train = {2, 2};
  spec.test = {1, 1};
  spec.image_size = 16;
  spec.force = true;
  const auto truth = generate_synthetic(dir.path(), spec);
  EXPECT_EQ(truth.size(), 6u);
  const auto r = scan_tree(dir.path());
  EXPECT_EQ(r.summary(Partition::Train)->covid_patients, 2u);
  EXPECT_EQ(r.summary(Partition::Train)->noncovid_patients, 2u);
  EXPECT_EQ(r.summary(Partition::Test)->unlabeled_patients, 2u);
  for (const auto& p : r.patients) EXPECT_EQ(p.slice_paths.size(), 5u);
  std::size_t covid = 0;
  for (const auto& p : truth) covid += p.label == Label::Covid;
  EXPECT_EQ(covid, 3u);

  spec.force = false;
  EXPECT_THROW(generate_synthetic(dir.path(), spec), IoError);
}

TEST(SyntheticTest, ClassesDifferInLungBrightness) {
  double covid = 0, clear = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    for (float v : synthetic_slice(32, true, s).pixels) covid += v;
    for (float v : synthetic_slice(32, false, s).pixels) clear += v;
  }
  EXPECT_GT(covid, clear * 1.02);
  EXPECT_EQ(synthetic_slice(32, true, 5), synthetic_slice(32, true, 5));
}

}  // namespace
}  // namespace vitct
