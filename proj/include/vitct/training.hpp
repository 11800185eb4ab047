#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vitct/autodiff.hpp"
#include "vitct/dataset.hpp"
#include "vitct/imaging.hpp"
#include "vitct/vit.hpp"

namespace vitct {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::size_t num_classes = 2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  bool freeze_backbone = false;  // train head.weight / head.bias only
  std::size_t max_steps = 0;     // stop after this many optimizer steps; 0 = no cap

  void validate() const;
};

// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  const auto& z = logits.value();
  if (z.rank() != 2 || z.dim(0) != labels.size() || labels.empty()) {
    throw DimensionError("cross_entropy: logits " + shape_str(z.shape()) +
                         " for " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = z.dim(0), k = z.dim(1);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ContractError("cross_entropy: label " + std::to_string(y) +
                          " outside [0, " + std::to_string(k) + ")");
    }
  }
  std::vector<T> probs(b * k);
  T total{0};
  for (std::size_t i = 0; i < b; ++i) {
    const T* row = z.data().data() + i * k;
    T mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T s{0};
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    const T lse = mx + std::log(s);
    total += lse - row[labels[i]];
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - lse);
  }
  std::vector<int> ys(labels.begin(), labels.end());
  return make_result<T>(
      Tensor<T>({1}, total / static_cast<T>(b)), {logits},
      [b, k, probs = std::move(probs), ys = std::move(ys)](Node<T>& self) {
        const T g = self.grad_span()[0] / static_cast<T>(b);
        auto d = self.parents[0]->grad_span();
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < k; ++j)
            d[i * k + j] +=
                g * (probs[i * k + j] - (static_cast<int>(j) == ys[i] ? T{1} : T{0}));
      });
}

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update over `params`. Parameters with
// requires_grad == false are skipped; a trainable parameter without a grad is
// a ContractError. Moments are allocated on the first call.
template <typename T>
void adam_step(std::span<const NamedParam<T>> params, AdamState<T>& state,
               const TrainConfig& config) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Tensor<T>::zeros(p.var.shape()));
      state.second_moment.push_back(Tensor<T>::zeros(p.var.shape()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ContractError("Adam state tracks " +
                        std::to_string(state.first_moment.size()) +
                        " tensors, got " + std::to_string(params.size()));
  }
  for (const auto& p : params) {
    if (p.var.requires_grad() && !p.var.has_grad()) {
      throw ContractError("trainable parameter " + p.name + " has no gradient");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(config.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(config.beta2, t)));
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  const T lr = static_cast<T>(config.learning_rate);
  const T eps = static_cast<T>(config.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var<T> var = params[i].var;
    if (!var.requires_grad()) continue;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.shape() != var.shape()) {
      throw ContractError("Adam moment shape mismatch for " + params[i].name);
    }
    const auto g = var.grad().data();
    auto w = var.mutable_value().data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      const T mhat = m[j] * c1;
      const T vhat = v[j] * c2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean batch loss
  double accuracy = 0.0;  // slice level, training data
  double precision = 0.0; // COVID class
  double recall = 0.0;    // COVID class
  std::size_t steps = 0;  // optimizer steps taken in this epoch
  std::optional<double> val_macro_f1;  // class-wise, patient level
};

nlohmann::json to_json(const EpochRecord& record);

struct FitOptions {
  PreprocessConfig preprocess;
  // Per-epoch checkpoints (epoch_NNN.vitw), best.vitw and train_log.jsonl are
  // written here when set.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct FitResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  std::size_t total_steps = 0;
  std::size_t skipped_slices = 0;
  VitParams<float> best;  // deep copy of the selected checkpoint
};

// Fine-tunes `params` in place on the labeled slices of `train`. With a
// validation set the best checkpoint is the epoch with the highest
// patient-level (majority vote) class-wise macro F1; otherwise the last.
FitResult fit(VitParams<float>& params, const std::vector<PatientScan>& train,
              const std::vector<PatientScan>& validation,
              const TrainConfig& config, const FitOptions& options);

// Deep copy of every tensor.
template <typename T>
VitParams<T> clone_params(const VitParams<T>& params) {
  return convert_params<T>(params);
}

}  // namespace vitct
