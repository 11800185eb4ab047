#pragma once

#include <string>
#include <vector>

#include "vitct/aggregation.hpp"
#include "vitct/dataset.hpp"
#include "vitct/imaging.hpp"
#include "vitct/vit.hpp"

namespace vitct {

struct PredictionRun {
  std::vector<SlicePrediction> predictions;  // patient order, then slice order
  std::size_t skipped = 0;                   // slices that failed to decode
  std::vector<std::string> warnings;
};

// Classifies every slice of every patient. Slices that cannot be decoded are
// skipped and counted. With threads > 1 slices are processed concurrently;
// output order and values do not depend on the thread count.
PredictionRun predict_patients(const VitParams<float>& params,
                               const std::vector<PatientScan>& patients,
                               const PreprocessConfig& preprocess,
                               std::size_t threads = 1);

}  // namespace vitct
