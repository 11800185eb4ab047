#pragma once

// Directory ingestion for CT datasets laid out as
//
//   <root>/<partition>/<covid|non-covid>/<patient_id>/<slice files>
//
// with partition one of train, validation, test. Test patients may also sit
// directly under <root>/test/<patient_id>/ and are then unlabeled.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vitct/imaging.hpp"
#include "vitct/tensor.hpp"

namespace vitct {

// Class index order matches the model's logits: 0 = non-COVID, 1 = COVID.
enum class Label { NonCovid = 0, Covid = 1, Unknown = 2 };
enum class Partition { Train, Validation, Test };

std::string_view to_string(Label label);
std::string_view to_string(Partition partition);
// Case-insensitive; throws FormatError listing the accepted names.
Label parse_label(std::string_view text);
Partition parse_partition(std::string_view text);
std::optional<Partition> try_parse_partition(std::string_view text);

// Slice counts outside this range are reported, not rejected.
inline constexpr std::size_t kMinExpectedSlices = 50;
inline constexpr std::size_t kMaxExpectedSlices = 700;

struct PatientScan {
  std::string patient_id;
  Partition partition = Partition::Train;
  Label label = Label::Unknown;
  std::vector<std::filesystem::path> slice_paths;  // natural filename order
};

struct PartitionSummary {
  Partition partition = Partition::Train;
  std::size_t covid_patients = 0;
  std::size_t noncovid_patients = 0;
  std::size_t unlabeled_patients = 0;
  std::size_t total_slices = 0;
  std::size_t skipped_patients = 0;        // empty patient folders
  std::size_t out_of_range_patients = 0;   // slice count outside [50, 700]
};

struct ScanResult {
  std::vector<PatientScan> patients;
  std::vector<PartitionSummary> summaries;  // one per partition present
  std::vector<std::string> warnings;

  const PartitionSummary* summary(Partition p) const;
  std::vector<PatientScan> partition(Partition p) const;
};

// Natural ordering: digit runs compare by numeric value ("2" < "10").
bool natural_less(std::string_view a, std::string_view b);

ScanResult scan_tree(const std::filesystem::path& root);

// CSV with header `patient_id,partition,label,num_slices`.
std::string manifest_csv(const std::vector<PatientScan>& patients);

struct LabeledSlice {
  std::filesystem::path path;
  Label label = Label::Unknown;
  std::string patient_id;
};

// All slices of labeled patients, in patient then slice order. Throws
// ContractError if any patient is unlabeled.
std::vector<LabeledSlice> labeled_slices(const std::vector<PatientScan>& patients);

// Index batches over n samples. Without a seed the order is sequential;
// with one, a deterministic permutation. The last batch may be short.
std::vector<std::vector<std::size_t>> plan_batches(
    std::size_t n, std::size_t batch_size,
    std::optional<std::uint64_t> shuffle_seed);

struct Batch {
  std::vector<Tensor<float>> images;
  std::vector<int> labels;              // class indices
  std::vector<std::size_t> sample_ids;  // indices into the slice list
};

// Decodes and preprocesses slices batch by batch. Slices that fail to decode
// are dropped from their batch and counted; a batch whose slices all fail is
// skipped entirely.
class BatchStream {
 public:
  BatchStream(std::vector<LabeledSlice> slices, std::size_t batch_size,
              std::optional<std::uint64_t> shuffle_seed,
              PreprocessConfig preprocess);

  bool next(Batch& out);
  std::size_t skipped() const { return skipped_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::size_t num_batches() const { return plan_.size(); }

 private:
  std::vector<LabeledSlice> slices_;
  std::vector<std::vector<std::size_t>> plan_;
  PreprocessConfig preprocess_;
  std::size_t cursor_ = 0;
  std::size_t skipped_ = 0;
  std::vector<std::string> warnings_;
};

struct SyntheticSpec {
  struct Counts {
    std::size_t covid = 0;
    std::size_t noncovid = 0;
  };
  Counts train{4, 4};
  Counts validation{0, 0};
  Counts test{0, 0};           // written unlabeled under test/<patient>/
  std::size_t min_slices = 5;
  std::size_t max_slices = 5;
  std::size_t image_size = 64;
  std::uint64_t seed = 0;
  bool force = false;          // delete an existing non-empty root first
};

// Writes a synthetic tree. COVID slices carry bright diffuse opacities inside
// the lung fields; non-COVID slices do not. Labels for test patients are
// returned in the result so callers can evaluate against them.
std::vector<PatientScan> generate_synthetic(const std::filesystem::path& root,
                                            const SyntheticSpec& spec);

// Renders one synthetic slice (grayscale, byte scale).
SliceImage synthetic_slice(std::size_t size, bool covid, std::uint64_t seed);

}  // namespace vitct
