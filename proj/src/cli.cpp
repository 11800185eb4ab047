#include "vitct/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vitct/aggregation.hpp"
#include "vitct/csv.hpp"
#include "vitct/dataset.hpp"
#include "vitct/error.hpp"
#include "vitct/fileio.hpp"
#include "vitct/metrics.hpp"
#include "vitct/predict.hpp"
#include "vitct/training.hpp"
#include "vitct/weights.hpp"

namespace vitct::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kOutputDirEnv = "VITCT_OUTPUT_DIR";

// Raised for conditions that map to the empty-input exit code.
class EmptyInput : public Error {
 public:
  using Error::Error;
};

struct PreprocessFlags {
  std::vector<float> mean;
  std::vector<float> stddev;
  std::size_t size = 0;  // 0: use the model's image size

  void add_to(CLI::App* app) {
    app->add_option("--preprocess.mean", mean, "Per-channel mean (3 values, comma separated)")
        ->expected(3)
        ->delimiter(',');
    app->add_option("--preprocess.std", stddev, "Per-channel std (3 values, comma separated)")
        ->expected(3)
        ->delimiter(',');
    app->add_option("--preprocess.size", size,
                    "Model input size in pixels (defaults to the model's image size)");
  }

  PreprocessConfig resolve(const VitConfig& model) const {
    PreprocessConfig p;
    p.size = size ? size : model.image_size;
    if (p.size != model.image_size) {
      throw ConfigError("preprocess.size " + std::to_string(p.size) +
                        " does not match the model input size " +
                        std::to_string(model.image_size));
    }
    if (!mean.empty()) std::copy(mean.begin(), mean.end(), p.norm.mean.begin());
    if (!stddev.empty()) std::copy(stddev.begin(), stddev.end(), p.norm.stddev.begin());
    p.norm.validate();
    return p;
  }
};

struct PolicyFlags {
  std::string rule = "majority";
  double threshold = 0.5;
  std::string tie_break = "non-covid";

  void add_to(CLI::App* app, bool with_rule) {
    if (with_rule) {
      app->add_option("--policy", rule, "Voting rule: majority, fraction or ratio")
          ->check(CLI::IsMember({"majority", "fraction", "ratio"}))
          ->capture_default_str();
      app->add_option("--threshold", threshold,
                      "t for the fraction rule (covid/total > t) or ratio rule "
                      "(covid > t * noncovid)")
          ->capture_default_str();
    }
    app->add_option("--tie-break", tie_break, "Outcome on exact ties: covid or non-covid")
        ->check(CLI::IsMember({"covid", "non-covid"}))
        ->capture_default_str();
  }

  ThresholdPolicy resolve() const {
    ThresholdPolicy p;
    p.rule = rule == "fraction" ? VoteRule::Fraction
             : rule == "ratio"  ? VoteRule::Ratio
                                : VoteRule::Majority;
    p.t = threshold;
    p.tie_break = parse_label(tie_break);
    p.validate();
    return p;
  }
};

fs::path output_dir_or_default(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return fs::current_path();
}

void require_file(const std::string& path, const std::string& what) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw IoError(what + " not found: " + path);
  }
}

LabelMap load_labels(const std::string& source) {
  std::error_code ec;
  LabelMap labels;
  if (fs::is_directory(source, ec)) {
    for (const auto& p : scan_tree(source).patients) labels[p.patient_id] = p.label;
    return labels;
  }
  require_file(source, "labels source");
  const auto rows = csv::parse(read_file_text(source));
  if (rows.empty()) throw FormatError("labels file " + source + " is empty");
  const auto& header = rows.front().fields;
  const auto id_col = std::find(header.begin(), header.end(), "patient_id");
  const auto label_col = std::find(header.begin(), header.end(), "label");
  if (id_col == header.end() || label_col == header.end()) {
    throw FormatError("labels file " + source +
                      " needs patient_id and label columns");
  }
  const auto id_idx = static_cast<std::size_t>(id_col - header.begin());
  const auto label_idx = static_cast<std::size_t>(label_col - header.begin());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.fields.size() != header.size()) {
      throw FormatError("line " + std::to_string(r.line) + " of " + source +
                        ": expected " + std::to_string(header.size()) + " fields");
    }
    try {
      labels[r.fields[id_idx]] = parse_label(r.fields[label_idx]);
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(r.line) + " of " + source + ": " +
                        e.what());
    }
  }
  return labels;
}

std::vector<SlicePrediction> load_predictions(const std::string& path) {
  require_file(path, "prediction file");
  auto text = read_file_text(path);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw EmptyInput("prediction file " + path + " is empty");
  }
  auto preds = predictions_from_csv(text);
  if (preds.empty()) throw EmptyInput("prediction file " + path + " has no rows");
  return preds;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, text);
}

// Thresholds from "a:b:step" or "a,b,c"; empty selects the default grid.
std::vector<double> parse_grid(const std::string& spec) {
  if (spec.empty()) return default_threshold_grid();
  std::vector<double> grid;
  if (spec.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(csv::parse_double(item, "--grid"));
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
      throw ConfigError("--grid range must be start:stop:step with step > 0");
    }
    const auto n = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) {
      // Snap to the nearest short decimal so 0.1 + 2 * 0.1 becomes 0.3.
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.12g", parts[0] + static_cast<double>(i) * parts[2]);
      grid.push_back(std::strtod(buf, nullptr));
    }
  } else {
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) grid.push_back(csv::parse_double(item, "--grid"));
  }
  if (grid.empty()) throw ConfigError("--grid selects no thresholds");
  return grid;
}

void print_warnings(std::ostream& err, const std::vector<std::string>& warnings,
                    bool verbose, const std::string& what) {
  if (warnings.empty()) return;
  if (verbose) {
    for (const auto& w : warnings) err << "warning: " << w << '\n';
  } else {
    err << "warning: " << warnings.size() << ' ' << what
        << " (run with --verbose to list)\n";
  }
}

// ---- synth -----------------------------------------------------------------

struct SynthOptions {
  std::string root;
  SyntheticSpec spec;
};

void add_synth(CLI::App& app, SynthOptions& o, std::function<void()>& action,
               std::ostream& out) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic CT dataset tree");
  cmd->add_option("--root", o.root, "Directory to create")->required();
  cmd->add_option("--train-covid", o.spec.train.covid, "COVID patients in train")->capture_default_str();
  cmd->add_option("--train-noncovid", o.spec.train.noncovid, "Non-COVID patients in train")->capture_default_str();
  cmd->add_option("--val-covid", o.spec.validation.covid, "COVID patients in validation")->capture_default_str();
  cmd->add_option("--val-noncovid", o.spec.validation.noncovid, "Non-COVID patients in validation")->capture_default_str();
  cmd->add_option("--test-covid", o.spec.test.covid, "COVID patients in test (written unlabeled)")->capture_default_str();
  cmd->add_option("--test-noncovid", o.spec.test.noncovid, "Non-COVID patients in test (written unlabeled)")->capture_default_str();
  cmd->add_option("--min-slices", o.spec.min_slices, "Minimum slices per patient")->capture_default_str();
  cmd->add_option("--max-slices", o.spec.max_slices, "Maximum slices per patient")->capture_default_str();
  cmd->add_option("--image-size", o.spec.image_size, "Slice width and height in pixels")->capture_default_str();
  cmd->add_option("--seed", o.spec.seed, "Random seed")->capture_default_str();
  cmd->add_flag("--force", o.spec.force, "Delete a non-empty root before writing");
  cmd->callback([&o, &action, &out]() {
    action = [&o, &out]() {
      const auto patients = generate_synthetic(o.root, o.spec);
      write_text(fs::path(o.root) / "synthetic_labels.csv", manifest_csv(patients));
      std::size_t slices = 0;
      for (const auto& p : patients) slices += p.slice_paths.size();
      out << "wrote " << patients.size() << " patients, " << slices << " slices to "
          << o.root << '\n';
    };
  });
}

// ---- scan ------------------------------------------------------------------

struct ScanOptions {
  std::string root;
  std::string manifest;
  bool as_json = false;
  bool verbose = false;
};

void add_scan(CLI::App& app, ScanOptions& o, std::function<void()>& action,
              std::ostream& out, std::ostream& err) {
  auto* cmd = app.add_subcommand("scan", "Summarize a dataset tree per partition");
  cmd->add_option("--root", o.root, "Dataset root")->required();
  cmd->add_option("--manifest", o.manifest,
                  "Write patient_id,partition,label,num_slices CSV here");
  cmd->add_flag("--json", o.as_json, "Print the summary as JSON");
  cmd->add_flag("--verbose", o.verbose, "List every warning");
  cmd->callback([&o, &action, &out, &err]() {
    action = [&o, &out, &err]() {
      const auto result = scan_tree(o.root);
      if (!o.manifest.empty()) write_text(o.manifest, manifest_csv(result.patients));
      print_warnings(err, result.warnings, o.verbose, "scan warnings");
      if (o.as_json) {
        json j = json::array();
        for (const auto& s : result.summaries) {
          j.push_back({{"partition", to_string(s.partition)},
                       {"covid_patients", s.covid_patients},
                       {"noncovid_patients", s.noncovid_patients},
                       {"unlabeled_patients", s.unlabeled_patients},
                       {"total_slices", s.total_slices},
                       {"skipped_patients", s.skipped_patients},
                       {"out_of_range_patients", s.out_of_range_patients}});
        }
        out << j.dump(2) << '\n';
      } else {
        out << std::left << std::setw(12) << "partition" << std::setw(8) << "covid"
            << std::setw(11) << "non-covid" << std::setw(11) << "unlabeled"
            << std::setw(10) << "slices" << "skipped\n";
        for (const auto& s : result.summaries) {
          out << std::setw(12) << to_string(s.partition) << std::setw(8)
              << s.covid_patients << std::setw(11) << s.noncovid_patients
              << std::setw(11) << s.unlabeled_patients << std::setw(10)
              << s.total_slices << s.skipped_patients << '\n';
        }
      }
      if (result.patients.empty()) throw EmptyInput("no patients found under " + o.root);
    };
  });
}

// ---- train -----------------------------------------------------------------

struct TrainOptions {
  std::string data;
  std::string out_dir;
  std::string model = "base";
  std::string init_weights;
  std::size_t image_size = 0, patch_size = 0, embed_dim = 0, depth = 0,
              heads = 0, mlp_ratio = 0;
  bool no_validation = false;
  TrainConfig train;
  PreprocessFlags preprocess;
};

void add_train(CLI::App& app, TrainOptions& o, std::function<void()>& action,
               std::ostream& out, std::ostream& err) {
  auto* cmd = app.add_subcommand("train", "Fine-tune the ViT on the train partition");
  cmd->add_option("--data", o.data, "Dataset root")->required();
  cmd->add_option("--out-dir", o.out_dir, "Directory for checkpoints and train_log.jsonl")
      ->envname(kOutputDirEnv);
  cmd->add_option("--model", o.model, "Architecture preset: base (ViT-B/16 224) or toy")
      ->check(CLI::IsMember({"base", "toy"}))
      ->capture_default_str();
  cmd->add_option("--init-weights", o.init_weights,
                  "Start from this weight container instead of a random init");
  cmd->add_option("--image-size", o.image_size, "Override model input size");
  cmd->add_option("--patch-size", o.patch_size, "Override patch size");
  cmd->add_option("--embed-dim", o.embed_dim, "Override embedding width");
  cmd->add_option("--depth", o.depth, "Override block count");
  cmd->add_option("--heads", o.heads, "Override attention heads");
  cmd->add_option("--mlp-ratio", o.mlp_ratio, "Override MLP expansion ratio");
  cmd->add_option("--lr", o.train.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--epochs", o.train.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch-size", o.train.batch_size, "Slices per batch")->capture_default_str();
  cmd->add_option("--max-steps", o.train.max_steps, "Stop after this many steps (0: no cap)")
      ->capture_default_str();
  cmd->add_option("--seed", o.train.seed, "Seed for init and shuffling")->capture_default_str();
  cmd->add_flag("--freeze-backbone", o.train.freeze_backbone, "Train the head only");
  cmd->add_flag("--no-validation", o.no_validation,
                "Ignore the validation partition (keeps the last epoch)");
  o.preprocess.add_to(cmd);
  cmd->callback([&o, &action, &out, &err]() {
    action = [&o, &out, &err]() {
      o.train.validate();
      VitParams<float> params;
      if (!o.init_weights.empty()) {
        require_file(o.init_weights, "initial weights");
        params = load_weights(o.init_weights);
      } else {
        VitConfig config = o.model == "toy" ? VitConfig::toy() : VitConfig{};
        if (o.image_size) config.image_size = o.image_size;
        if (o.patch_size) config.patch_size = o.patch_size;
        if (o.embed_dim) config.embed_dim = o.embed_dim;
        if (o.depth) config.depth = o.depth;
        if (o.heads) config.num_heads = o.heads;
        if (o.mlp_ratio) config.mlp_ratio = o.mlp_ratio;
        config.validate();
        params = init_params<float>(config, o.train.seed);
      }
      const auto scan = scan_tree(o.data);
      const auto train = scan.partition(Partition::Train);
      std::vector<PatientScan> validation;
      if (!o.no_validation) {
        for (auto& p : scan.partition(Partition::Validation))
          if (p.label != Label::Unknown) validation.push_back(p);
      }
      if (train.empty()) throw EmptyInput("no training patients under " + o.data);

      FitOptions fo;
      fo.preprocess = o.preprocess.resolve(params.config);
      fo.out_dir = output_dir_or_default(o.out_dir);
      fo.on_epoch = [&out](const EpochRecord& r) { out << to_json(r).dump() << '\n'; };
      const auto result = fit(params, train, validation, o.train, fo);
      if (result.skipped_slices) {
        err << "warning: skipped " << result.skipped_slices
            << " undecodable slice reads during training\n";
      }
      out << "best epoch " << result.best_epoch << ", checkpoint "
          << (*fo.out_dir / "best.vitw").string() << '\n';
    };
  });
}

// ---- predict ---------------------------------------------------------------

struct PredictOptions {
  std::string weights;
  std::string data;
  std::string out;
  std::string out_dir;
  std::string partition;
  std::size_t threads = 1;
  bool verbose = false;
  PreprocessFlags preprocess;
};

void add_predict(CLI::App& app, PredictOptions& o, std::function<void()>& action,
                 std::ostream& out, std::ostream& err) {
  auto* cmd = app.add_subcommand("predict", "Write per-slice COVID probabilities");
  cmd->add_option("--weights", o.weights, "Weight container")->required();
  cmd->add_option("--data", o.data, "Dataset root")->required();
  cmd->add_option("--out", o.out, "Prediction CSV (default <out-dir>/predictions.csv)");
  cmd->add_option("--out-dir", o.out_dir, "Output directory")->envname(kOutputDirEnv);
  cmd->add_option("--partition", o.partition, "Only this partition (train, validation, test)")
      ->check(CLI::IsMember({"train", "validation", "test"}));
  cmd->add_option("--threads", o.threads, "Worker threads for inference")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("--verbose", o.verbose, "List every warning");
  o.preprocess.add_to(cmd);
  cmd->callback([&o, &action, &out, &err]() {
    action = [&o, &out, &err]() {
      require_file(o.weights, "weights file");
      const auto params = load_weights(o.weights);
      const auto preprocess = o.preprocess.resolve(params.config);
      auto scan = scan_tree(o.data);
      print_warnings(err, scan.warnings, o.verbose, "scan warnings");
      auto patients = o.partition.empty() ? scan.patients
                                          : scan.partition(parse_partition(o.partition));
      if (patients.empty()) throw EmptyInput("no patients found under " + o.data);
      const auto run = predict_patients(params, patients, preprocess, o.threads);
      if (run.predictions.empty()) throw EmptyInput("no readable slices under " + o.data);
      const fs::path dest =
          o.out.empty() ? output_dir_or_default(o.out_dir) / "predictions.csv" : fs::path(o.out);
      write_text(dest, predictions_to_csv(run.predictions));
      print_warnings(err, run.warnings, o.verbose, "slice decode failures");
      err << "skipped " << run.skipped << " slices\n";
      out << "wrote " << run.predictions.size() << " predictions to " << dest.string() << '\n';
    };
  });
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateOptions {
  std::string predictions;
  std::string labels;
  std::string out_dir;
  std::string report;
  std::string confusion;
  std::string ci_n = "patients";
  double z = kDefaultZ;
  PolicyFlags policy;
};

std::string confusion_csv(const ConfusionMatrix& cm) {
  // Rows are predicted classes, columns actual classes.
  std::ostringstream os;
  os << "predicted,actual_covid,actual_noncovid\n"
     << "covid," << cm.tp << ',' << cm.fp << '\n'
     << "non-covid," << cm.fn << ',' << cm.tn << '\n';
  return os.str();
}

void add_evaluate(CLI::App& app, EvaluateOptions& o, std::function<void()>& action,
                  std::ostream& out) {
  auto* cmd = app.add_subcommand("evaluate", "Patient-level diagnosis and metrics");
  cmd->add_option("--predictions", o.predictions, "Prediction CSV")->required();
  cmd->add_option("--labels", o.labels,
                  "Dataset root or CSV with patient_id and label columns")
      ->required();
  cmd->add_option("--out-dir", o.out_dir, "Output directory")->envname(kOutputDirEnv);
  cmd->add_option("--report", o.report, "Report JSON (default <out-dir>/report.json)");
  cmd->add_option("--confusion", o.confusion,
                  "Confusion CSV (default <out-dir>/confusion.csv)");
  cmd->add_option("--ci-n", o.ci_n,
                  "Sample count for the confidence interval: patients or slices")
      ->check(CLI::IsMember({"patients", "slices"}))
      ->capture_default_str();
  cmd->add_option("--z", o.z, "Standard-normal quantile for the interval")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  o.policy.add_to(cmd, true);
  cmd->callback([&o, &action, &out]() {
    action = [&o, &out]() {
      const auto policy = o.policy.resolve();
      const auto preds = load_predictions(o.predictions);
      const auto labels = load_labels(o.labels);
      const auto tallies = tally_by_patient(preds);
      const auto eval = evaluate_patients(tallies, labels, policy);
      if (eval.confusion.total() == 0) {
        throw EmptyInput("no predicted patient has a label");
      }
      std::size_t n = eval.outcomes.size();
      if (o.ci_n == "slices") {
        n = 0;
        for (const auto& oc : eval.outcomes) n += oc.tally.total();
      }
      const auto report = compute_report(eval.confusion, n, o.z);
      json j = to_json(report);
      j["policy"] = policy.describe();
      j["ci_n_mode"] = o.ci_n;
      j["patients_evaluated"] = eval.outcomes.size();
      j["excluded_patients"] = eval.excluded;
      const fs::path dir = output_dir_or_default(o.out_dir);
      const fs::path report_path = o.report.empty() ? dir / "report.json" : fs::path(o.report);
      const fs::path cm_path =
          o.confusion.empty() ? dir / "confusion.csv" : fs::path(o.confusion);
      write_text(report_path, j.dump(2) + "\n");
      write_text(cm_path, confusion_csv(eval.confusion));
      out << "patients " << eval.outcomes.size() << " (excluded " << eval.excluded.size()
          << "), accuracy " << report.accuracy << ", macro F1 (class-wise) "
          << report.macro_f1_classwise << ", weighted F1 " << report.weighted_f1 << '\n';
    };
  });
}

// ---- sweep -----------------------------------------------------------------

struct SweepOptions {
  std::string predictions;
  std::string labels;
  std::string out_dir;
  std::string out;
  std::string summary;
  std::string grid;
  std::string rule = "fraction";
  PolicyFlags policy;
};

json summary_entry(const SweepRow& row) {
  return {{"threshold", row.threshold},
          {"accuracy", row.report.accuracy},
          {"weighted_f1", row.report.weighted_f1},
          {"macro_f1_classwise", row.report.macro_f1_classwise},
          {"macro_f1_eq2", row.report.macro_f1_eq2},
          {"covid_positive_patients", row.positives}};
}

void add_sweep(CLI::App& app, SweepOptions& o, std::function<void()>& action,
               std::ostream& out) {
  auto* cmd = app.add_subcommand("sweep", "Metrics over a grid of voting thresholds");
  cmd->add_option("--predictions", o.predictions, "Prediction CSV")->required();
  cmd->add_option("--labels", o.labels,
                  "Dataset root or CSV with patient_id and label columns")
      ->required();
  cmd->add_option("--out-dir", o.out_dir, "Output directory")->envname(kOutputDirEnv);
  cmd->add_option("--out", o.out, "Sweep CSV (default <out-dir>/sweep.csv)");
  cmd->add_option("--summary", o.summary,
                  "Best-threshold JSON (default <out-dir>/sweep_summary.json)");
  cmd->add_option("--grid", o.grid,
                  "Thresholds as start:stop:step or a comma list (default 0.05:0.95:0.05)");
  cmd->add_option("--rule", o.rule, "fraction (covid/total > t) or ratio (covid > t * noncovid)")
      ->check(CLI::IsMember({"fraction", "ratio"}))
      ->capture_default_str();
  o.policy.add_to(cmd, false);
  cmd->callback([&o, &action, &out]() {
    action = [&o, &out]() {
      const auto grid = parse_grid(o.grid);
      const VoteRule rule = o.rule == "ratio" ? VoteRule::Ratio : VoteRule::Fraction;
      const Label tie = parse_label(o.policy.tie_break);
      for (double t : grid) ThresholdPolicy{rule, t, tie}.validate();
      const auto preds = load_predictions(o.predictions);
      const auto labels = load_labels(o.labels);
      bool any_labeled = false;
      for (const auto& t : tally_by_patient(preds)) {
        auto it = labels.find(t.patient_id);
        if (it != labels.end() && it->second != Label::Unknown) any_labeled = true;
      }
      if (!any_labeled) throw EmptyInput("no predicted patient has a label");
      const auto sweep = sweep_thresholds(preds, labels, grid, rule, tie);

      const fs::path dir = output_dir_or_default(o.out_dir);
      const fs::path csv_path = o.out.empty() ? dir / "sweep.csv" : fs::path(o.out);
      const fs::path summary_path =
          o.summary.empty() ? dir / "sweep_summary.json" : fs::path(o.summary);
      json summary{{"rule", o.rule},
                   {"tie_break", o.policy.tie_break},
                   {"rows", sweep.rows.size()},
                   {"best_accuracy", summary_entry(sweep.rows[sweep.best_accuracy])},
                   {"best_weighted_f1", summary_entry(sweep.rows[sweep.best_weighted_f1])},
                   {"excluded_patients", sweep.excluded}};
      write_text(csv_path, sweep_to_csv(sweep));
      write_text(summary_path, summary.dump(2) + "\n");
      out << "best accuracy " << sweep.rows[sweep.best_accuracy].report.accuracy
          << " at t=" << sweep.rows[sweep.best_accuracy].threshold
          << "; best weighted F1 " << sweep.rows[sweep.best_weighted_f1].report.weighted_f1
          << " at t=" << sweep.rows[sweep.best_weighted_f1].threshold << '\n';
    };
  });
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("CT slice classification with a Vision Transformer and patient-level voting",
               "vitct");
  app.require_subcommand(1, 1);
  app.set_config("--config", "", "Read options from a key=value file ([subcommand] sections)");
  app.allow_config_extras(false);
  // Keys such as preprocess.mean are option names, not nested sections.
  app.get_config_formatter_base()->parentSeparator('/');
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::function<void()> action;
  SynthOptions synth;
  ScanOptions scan;
  TrainOptions train;
  PredictOptions predict;
  EvaluateOptions evaluate;
  SweepOptions sweep;
  add_synth(app, synth, action, out);
  add_scan(app, scan, action, out, err);
  add_train(app, train, action, out, err);
  add_predict(app, predict, action, out, err);
  add_evaluate(app, evaluate, action, out);
  add_sweep(app, sweep, action, out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const EmptyInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitEmpty;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace vitct::cli
