#include "vitct/predict.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <optional>
#include <thread>

#include "vitct/error.hpp"

namespace vitct {

namespace {

struct SliceJob {
  const PatientScan* patient;
  const std::filesystem::path* path;
};

struct SliceResult {
  std::optional<double> p_covid;
  std::string error;
  std::exception_ptr fatal;
};

}  // namespace

PredictionRun predict_patients(const VitParams<float>& params,
                               const std::vector<PatientScan>& patients,
                               const PreprocessConfig& preprocess,
                               std::size_t threads) {
  std::vector<SliceJob> jobs;
  for (const auto& p : patients)
    for (const auto& s : p.slice_paths) jobs.push_back({&p, &s});

  std::vector<SliceResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
      try {
        const auto image = preprocess_slice(*jobs[i].path, preprocess);
        const auto probs = predict_proba(image, params);
        results[i].p_covid = static_cast<double>(probs[static_cast<std::size_t>(Label::Covid)]);
      } catch (const DecodeError& e) {
        results[i].error = e.what();
      } catch (const FormatError& e) {
        results[i].error = e.what();
      } catch (...) {
        results[i].fatal = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, jobs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  PredictionRun run;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (results[i].fatal) std::rethrow_exception(results[i].fatal);
    if (!results[i].p_covid) {
      ++run.skipped;
      run.warnings.push_back(results[i].error);
      continue;
    }
    if (!std::isfinite(*results[i].p_covid)) {
      throw NumericError("non-finite probability for " + jobs[i].path->string());
    }
    run.predictions.push_back(SlicePrediction::from_probability(
        jobs[i].patient->patient_id, jobs[i].path->filename().string(),
        *results[i].p_covid));
  }
  return run;
}

}  // namespace vitct
