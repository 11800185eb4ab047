#include "vitct/training.hpp"

#include <cstdio>
#include <sstream>

#include "vitct/aggregation.hpp"
#include "vitct/error.hpp"
#include "vitct/fileio.hpp"
#include "vitct/metrics.hpp"
#include "vitct/predict.hpp"
#include "vitct/weights.hpp"

namespace vitct {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (num_classes != 2) throw ConfigError("num_classes must be 2");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("Adam eps must be > 0");
}

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch},
                   {"loss", r.loss},
                   {"accuracy", r.accuracy},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"steps", r.steps}};
  if (r.val_macro_f1) j["val_macro_f1"] = *r.val_macro_f1;
  return j;
}

namespace {

std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%03zu.vitw", epoch);
  return buf;
}

double validation_macro_f1(const VitParams<float>& params,
                           const std::vector<PatientScan>& validation,
                           const PreprocessConfig& preprocess) {
  const auto run = predict_patients(params, validation, preprocess);
  LabelMap labels;
  for (const auto& p : validation) labels[p.patient_id] = p.label;
  const auto tallies = tally_by_patient(run.predictions);
  const auto eval = evaluate_patients(tallies, labels, ThresholdPolicy::majority());
  if (eval.confusion.total() == 0) return 0.0;
  return macro_f1_classwise(eval.confusion).value;
}

}  // namespace

FitResult fit(VitParams<float>& params, const std::vector<PatientScan>& train,
              const std::vector<PatientScan>& validation,
              const TrainConfig& config, const FitOptions& options) {
  config.validate();
  options.preprocess.norm.validate();
  if (options.preprocess.size != params.config.image_size) {
    throw ConfigError("preprocess size " + std::to_string(options.preprocess.size) +
                      " does not match model image_size " +
                      std::to_string(params.config.image_size));
  }
  auto slices = labeled_slices(train);
  if (slices.empty()) throw ContractError("fit: training set has no slices");

  const auto named = params.named();
  std::vector<bool> saved_flags;
  for (const auto& p : named) {
    saved_flags.push_back(p.var.requires_grad());
    Var<float> v = p.var;
    v.set_requires_grad(!config.freeze_backbone || p.name.starts_with("head."));
  }

  AdamState<float> adam;
  FitResult result;
  std::optional<double> best_score;
  std::string log_text;
  bool stop = false;

  for (std::size_t epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
    BatchStream stream(slices, config.batch_size, config.seed + epoch,
                       options.preprocess);
    EpochRecord record;
    record.epoch = epoch;
    ConfusionMatrix cm;
    double loss_sum = 0.0;
    Batch batch;
    while (stream.next(batch)) {
      params.zero_grad();
      auto logits = forward_batch(batch.images, params);
      auto loss = cross_entropy(logits, std::span<const int>(batch.labels));
      const double loss_value = loss.value().item();
      if (!std::isfinite(loss_value)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(result.total_steps + 1));
      }
      backward(loss);
      adam_step<float>(named, adam, config);
      ++result.total_steps;
      ++record.steps;
      loss_sum += loss_value;

      const auto& z = logits.value();
      for (std::size_t i = 0; i < batch.labels.size(); ++i) {
        const bool pred_pos = z.at(i, 1) > z.at(i, 0);
        const bool true_pos = batch.labels[i] == static_cast<int>(Label::Covid);
        if (pred_pos && true_pos) ++cm.tp;
        else if (pred_pos) ++cm.fp;
        else if (true_pos) ++cm.fn;
        else ++cm.tn;
      }
      if (config.max_steps && result.total_steps >= config.max_steps) {
        stop = true;
        break;
      }
    }
    result.skipped_slices += stream.skipped();
    params.zero_grad();
    if (record.steps == 0) {
      throw ContractError("fit: no decodable training slices in epoch " +
                          std::to_string(epoch));
    }

    record.loss = loss_sum / static_cast<double>(record.steps);
    const auto pc = per_class_prf(cm);
    record.accuracy = accuracy(cm);
    record.precision = pc.covid.precision;
    record.recall = pc.covid.recall;
    if (!validation.empty()) {
      record.val_macro_f1 = validation_macro_f1(params, validation, options.preprocess);
    }
    const double score = record.val_macro_f1.value_or(0.0);
    const bool improved = validation.empty() || !best_score || score > *best_score;
    if (improved) {
      best_score = score;
      result.best_epoch = epoch;
      result.best = clone_params(params);
    }
    if (options.out_dir) {
      save_weights(params, *options.out_dir / checkpoint_name(epoch));
      if (improved) save_weights(params, *options.out_dir / "best.vitw");
      log_text += to_json(record).dump() + "\n";
      write_file_atomic(*options.out_dir / "train_log.jsonl", log_text);
    }
    result.log.push_back(record);
    if (options.on_epoch) options.on_epoch(record);
  }

  for (std::size_t i = 0; i < named.size(); ++i) {
    Var<float> v = named[i].var;
    v.set_requires_grad(saved_flags[i]);
  }
  return result;
}

}  // namespace vitct
