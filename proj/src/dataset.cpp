#include "vitct/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <system_error>

#include "vitct/error.hpp"

namespace vitct {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::optional<Label> try_parse_label(std::string_view text) {
  const auto l = lower(text);
  if (l == "covid") return Label::Covid;
  if (l == "non-covid") return Label::NonCovid;
  return std::nullopt;
}

std::vector<fs::directory_entry> sorted_entries(const fs::path& dir) {
  std::vector<fs::directory_entry> entries;
  std::error_code ec;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec))
    entries.push_back(*it);
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return natural_less(a.path().filename().string(), b.path().filename().string());
  });
  return entries;
}

}  // namespace

std::string_view to_string(Label label) {
  switch (label) {
    case Label::Covid: return "covid";
    case Label::NonCovid: return "non-covid";
    case Label::Unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(Partition partition) {
  switch (partition) {
    case Partition::Train: return "train";
    case Partition::Validation: return "validation";
    case Partition::Test: return "test";
  }
  return "train";
}

Label parse_label(std::string_view text) {
  if (auto l = try_parse_label(text)) return *l;
  if (lower(text) == "unknown") return Label::Unknown;
  throw FormatError("unknown label '" + std::string(text) +
                    "' (accepted: covid, non-covid)");
}

std::optional<Partition> try_parse_partition(std::string_view text) {
  const auto l = lower(text);
  if (l == "train") return Partition::Train;
  if (l == "validation") return Partition::Validation;
  if (l == "test") return Partition::Test;
  return std::nullopt;
}

Partition parse_partition(std::string_view text) {
  if (auto p = try_parse_partition(text)) return *p;
  throw FormatError("unknown partition '" + std::string(text) +
                    "' (accepted: train, validation, test)");
}

bool natural_less(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  while (i < a.size() && j < b.size()) {
    if (digit(a[i]) && digit(b[j])) {
      std::size_t ei = i, ej = j;
      while (ei < a.size() && digit(a[ei])) ++ei;
      while (ej < b.size() && digit(b[ej])) ++ej;
      // Compare by value: strip leading zeros, then length, then digits.
      std::size_t si = i, sj = j;
      while (si + 1 < ei && a[si] == '0') ++si;
      while (sj + 1 < ej && b[sj] == '0') ++sj;
      const auto na = a.substr(si, ei - si), nb = b.substr(sj, ej - sj);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      if (ei - i != ej - j) return ei - i < ej - j;  // fewer leading zeros first
      i = ei;
      j = ej;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j;
}

const PartitionSummary* ScanResult::summary(Partition p) const {
  for (const auto& s : summaries)
    if (s.partition == p) return &s;
  return nullptr;
}

std::vector<PatientScan> ScanResult::partition(Partition p) const {
  std::vector<PatientScan> out;
  for (const auto& s : patients)
    if (s.partition == p) out.push_back(s);
  return out;
}

namespace {

void scan_patient(const fs::path& dir, Partition partition, Label label,
                  ScanResult& result, PartitionSummary& summary) {
  PatientScan scan;
  scan.patient_id = dir.filename().string();
  scan.partition = partition;
  scan.label = label;
  for (const auto& e : sorted_entries(dir)) {
    if (e.is_regular_file() && is_supported_image(e.path())) {
      scan.slice_paths.push_back(e.path());
    } else {
      result.warnings.push_back("skipping non-image entry " + e.path().string());
    }
  }
  if (scan.slice_paths.empty()) {
    ++summary.skipped_patients;
    result.warnings.push_back("skipping empty patient folder " + dir.string());
    return;
  }
  const std::size_t n = scan.slice_paths.size();
  if (n < kMinExpectedSlices || n > kMaxExpectedSlices) {
    ++summary.out_of_range_patients;
    result.warnings.push_back("patient " + scan.patient_id + " has " +
                              std::to_string(n) + " slices, outside [" +
                              std::to_string(kMinExpectedSlices) + ", " +
                              std::to_string(kMaxExpectedSlices) + "]");
  }
  summary.total_slices += n;
  switch (label) {
    case Label::Covid: ++summary.covid_patients; break;
    case Label::NonCovid: ++summary.noncovid_patients; break;
    case Label::Unknown: ++summary.unlabeled_patients; break;
  }
  result.patients.push_back(std::move(scan));
}

}  // namespace

ScanResult scan_tree(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw IoError("dataset root " + root.string() + " is not a directory");
  }
  ScanResult result;
  for (const auto& pe : sorted_entries(root)) {
    if (!pe.is_directory()) continue;
    const auto partition = try_parse_partition(pe.path().filename().string());
    if (!partition) {
      result.warnings.push_back("ignoring directory " + pe.path().string() +
                                " (not train, validation or test)");
      continue;
    }
    PartitionSummary summary;
    summary.partition = *partition;
    for (const auto& ce : sorted_entries(pe.path())) {
      if (!ce.is_directory()) {
        result.warnings.push_back("skipping non-directory entry " +
                                  ce.path().string());
        continue;
      }
      const auto name = ce.path().filename().string();
      if (auto label = try_parse_label(name)) {
        for (const auto& patient : sorted_entries(ce.path())) {
          if (patient.is_directory()) {
            scan_patient(patient.path(), *partition, *label, result, summary);
          } else {
            result.warnings.push_back("skipping non-directory entry " +
                                      patient.path().string());
          }
        }
      } else if (*partition == Partition::Test) {
        scan_patient(ce.path(), *partition, Label::Unknown, result, summary);
      } else {
        throw FormatError("unknown class folder '" + ce.path().string() +
                          "' (accepted: covid, non-covid)");
      }
    }
    result.summaries.push_back(summary);
  }
  return result;
}

std::string manifest_csv(const std::vector<PatientScan>& patients) {
  std::ostringstream os;
  os << "patient_id,partition,label,num_slices\n";
  for (const auto& p : patients) {
    os << p.patient_id << ',' << to_string(p.partition) << ',' << to_string(p.label)
       << ',' << p.slice_paths.size() << '\n';
  }
  return os.str();
}

std::vector<LabeledSlice> labeled_slices(const std::vector<PatientScan>& patients) {
  std::vector<LabeledSlice> out;
  for (const auto& p : patients) {
    if (p.label == Label::Unknown) {
      throw ContractError("patient " + p.patient_id + " has no label");
    }
    for (const auto& s : p.slice_paths) out.push_back({s, p.label, p.patient_id});
  }
  return out;
}

std::vector<std::vector<std::size_t>> plan_batches(
    std::size_t n, std::size_t batch_size,
    std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) throw ContractError("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + i,
                         order.begin() + std::min(n, i + batch_size));
  }
  return batches;
}

BatchStream::BatchStream(std::vector<LabeledSlice> slices, std::size_t batch_size,
                         std::optional<std::uint64_t> shuffle_seed,
                         PreprocessConfig preprocess)
    : slices_(std::move(slices)),
      plan_(plan_batches(slices_.size(), batch_size, shuffle_seed)),
      preprocess_(std::move(preprocess)) {
  for (const auto& s : slices_) {
    if (s.label == Label::Unknown) {
      throw ContractError("slice " + s.path.string() + " has no label");
    }
  }
}

bool BatchStream::next(Batch& out) {
  while (cursor_ < plan_.size()) {
    const auto& ids = plan_[cursor_++];
    out = Batch{};
    for (std::size_t id : ids) {
      const auto& s = slices_[id];
      try {
        out.images.push_back(preprocess_slice(s.path, preprocess_));
      } catch (const DecodeError& e) {
        ++skipped_;
        warnings_.push_back(e.what());
        continue;
      } catch (const FormatError& e) {
        ++skipped_;
        warnings_.push_back(e.what());
        continue;
      }
      out.labels.push_back(static_cast<int>(s.label));
      out.sample_ids.push_back(id);
    }
    if (!out.images.empty()) return true;
  }
  return false;
}

SliceImage synthetic_slice(std::size_t size, bool covid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 6.0);
  SliceImage img(size, size, 1);
  const double s = static_cast<double>(size);
  const double cx = s / 2.0, cy = s / 2.0;
  // Body ellipse with two dark lung fields.
  const double body_rx = 0.45 * s, body_ry = 0.38 * s;
  const double lung_rx = 0.15 * s, lung_ry = 0.25 * s;
  const double lung_dx = 0.2 * s;
  struct Blob {
    double x, y, sigma, amp;
  };
  std::vector<Blob> blobs;
  if (covid) {
    const int count = 3 + static_cast<int>(unit(rng) * 4.0);
    for (int i = 0; i < count; ++i) {
      const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
      blobs.push_back({cx + side * lung_dx + (unit(rng) - 0.5) * lung_rx,
                       cy + (unit(rng) - 0.5) * 1.4 * lung_ry,
                       (0.05 + 0.05 * unit(rng)) * s, 90.0 + 60.0 * unit(rng)});
    }
  }
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      double v = 15.0;
      const double bx = (px - cx) / body_rx, by = (py - cy) / body_ry;
      if (bx * bx + by * by <= 1.0) v = 110.0;
      bool in_lung = false;
      for (double side : {-1.0, 1.0}) {
        const double lx = (px - cx - side * lung_dx) / lung_rx;
        const double ly = (py - cy) / lung_ry;
        if (lx * lx + ly * ly <= 1.0) in_lung = true;
      }
      if (in_lung) {
        v = 35.0;
        for (const auto& b : blobs) {
          const double d2 = (px - b.x) * (px - b.x) + (py - b.y) * (py - b.y);
          v += b.amp * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
        }
      }
      v += noise(rng);
      img.at(y, x) = static_cast<float>(std::clamp(std::round(v), 0.0, 255.0));
    }
  }
  return img;
}

std::vector<PatientScan> generate_synthetic(const fs::path& root,
                                            const SyntheticSpec& spec) {
  if (spec.min_slices == 0 || spec.min_slices > spec.max_slices) {
    throw ConfigError("synthetic slice range must satisfy 1 <= min <= max");
  }
  if (spec.image_size == 0) throw ConfigError("synthetic image_size must be >= 1");
  std::error_code ec;
  if (fs::exists(root, ec) && !fs::is_empty(root, ec)) {
    if (!spec.force) {
      throw IoError("refusing to write synthetic data into non-empty " +
                    root.string() + " (use force to overwrite)");
    }
    fs::remove_all(root, ec);
    if (ec) throw IoError("cannot clear " + root.string() + ": " + ec.message());
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> slice_count(spec.min_slices,
                                                         spec.max_slices);
  std::vector<PatientScan> patients;
  std::size_t next_id = 0;
  auto write_partition = [&](Partition part, const SyntheticSpec::Counts& counts) {
    for (const Label label : {Label::Covid, Label::NonCovid}) {
      const std::size_t n = label == Label::Covid ? counts.covid : counts.noncovid;
      for (std::size_t i = 0; i < n; ++i) {
        PatientScan scan;
        scan.patient_id = "ct_scan_" + std::to_string(next_id++);
        scan.partition = part;
        scan.label = label;
        fs::path dir = root / std::string(to_string(part));
        if (part != Partition::Test) dir /= std::string(to_string(label));
        dir /= scan.patient_id;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        const std::size_t slices = slice_count(rng);
        for (std::size_t k = 0; k < slices; ++k) {
          const auto path = dir / (std::to_string(k) + ".png");
          save_slice(synthetic_slice(spec.image_size, label == Label::Covid, rng()),
                     path);
          scan.slice_paths.push_back(path);
        }
        patients.push_back(std::move(scan));
      }
    }
  };
  write_partition(Partition::Train, spec.train);
  write_partition(Partition::Validation, spec.validation);
  write_partition(Partition::Test, spec.test);
  return patients;
}

}  // namespace vitct
