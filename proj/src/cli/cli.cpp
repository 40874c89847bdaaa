#include "mgpms/cli/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include "mgpms/config/run_config.hpp"
#include "mgpms/data/io.hpp"
#include "mgpms/data/synth.hpp"
#include "mgpms/error.hpp"
#include "mgpms/eval/report.hpp"
#include "mgpms/importance/importance.hpp"
#include "mgpms/model/model.hpp"
#include "mgpms/train/pipeline.hpp"

namespace mgpms::cli {

namespace fs = std::filesystem;

namespace {

struct CohortInput {
  data::Manifest manifest;
  std::vector<data::RawPatient> patients;
  std::size_t malformed = 0;
};

// A cohort path may name the JSONL file or the directory holding cohort.jsonl.
fs::path cohort_file(const fs::path& p) { return fs::is_directory(p) ? p / "cohort.jsonl" : p; }

CohortInput load_cohort(const fs::path& path, std::ostream& err) {
  const fs::path file = cohort_file(path);
  if (!fs::is_regular_file(file)) throw DataError("no cohort file at " + file.string());
  CohortInput in;
  in.manifest = data::read_manifest(data::manifest_path_for(file));
  auto parsed = data::read_cohort(file);
  in.patients = std::move(parsed.patients);
  in.malformed = parsed.malformed;
  for (const auto& m : parsed.messages) err << "warning: " << m << "\n";
  return in;
}

void write_run_config(const fs::path& dir, const config::RunConfig& rc) {
  data::write_text(dir / "run_config.json", rc.resolved.dump(2) + "\n");
}

void apply_threads(std::size_t config_threads, std::size_t flag_threads) {
  const std::size_t n = flag_threads > 0 ? flag_threads : config_threads;
  if (n > 0) omp_set_num_threads(static_cast<int>(n));
}

Json report_json(const data::TruncationReport& r) {
  return {{"total", r.total},
          {"eligible", r.eligible},
          {"positives", r.positives},
          {"vent_at_admission", r.vent_at_admission},
          {"vent_in_period", r.vent_in_period},
          {"short_stay", r.short_stay},
          {"malformed", r.malformed},
          {"messages", r.messages}};
}

std::string summary_line(const data::TruncationReport& r) {
  std::ostringstream o;
  o << "patients " << r.total << ", eligible " << r.eligible << ", positives " << r.positives << "; excluded "
    << r.vent_at_admission << " ventilated at admission, " << r.vent_in_period << " ventilated in period, "
    << r.short_stay << " short stay, " << r.malformed << " malformed";
  return o.str();
}

// Model and config must agree on the grid when the user configured one.
void check_grid(const model::ModelBundle& b, const config::RunConfig& rc, bool configured) {
  if (!configured) return;
  const auto& c = rc.pipeline.cohort;
  if (c.study_period_h != b.cohort.study_period_h || c.window_h != b.cohort.window_h || c.windows != b.cohort.windows)
    throw ConfigError("grid mismatch: model uses " + std::to_string(b.cohort.windows) + " windows of " +
                      eval::format_number(b.cohort.window_h) + " h, config asks for " + std::to_string(c.windows) +
                      " of " + eval::format_number(c.window_h) + " h");
}

void check_vocabulary(const model::ModelBundle& b, const data::Manifest& m) {
  if (m.features != b.manifest.features || m.medications != b.manifest.medications ||
      m.demographics != b.manifest.demographics)
    throw DataError("cohort manifest does not match the model's vocabulary");
}

struct Common {
  std::optional<std::string> config;
  std::vector<std::string> overrides;
  std::size_t threads = 0;

  void attach(CLI::App* app, bool with_config = true) {
    if (with_config) {
      app->add_option("--config", config, "JSON config file (default: $MGPMS_CONFIG)");
      app->add_option("--set", overrides, "override a config value, e.g. train.epochs=20")->take_all();
    }
    app->add_option("--threads", threads, "OpenMP threads (0: config or runtime default)");
  }
  bool configured() const {
    if (config || !overrides.empty()) return true;
    const char* env = std::getenv(config::kConfigEnv);
    return env && *env;
  }
  config::RunConfig resolve() const {
    auto rc = config::RunConfig::load(config ? std::optional<fs::path>(*config) : std::nullopt, overrides);
    apply_threads(rc.threads, threads);
    return rc;
  }
};

int cmd_synth(std::size_t n, double prevalence, std::uint64_t seed, const std::string& out_dir,
              std::optional<std::size_t> informative, std::optional<std::size_t> noise,
              std::optional<double> drift_probability, std::ostream& out) {
  data::SynthConfig sc;
  sc.patients = n;
  sc.prevalence = prevalence;
  sc.seed = seed;
  if (drift_probability) sc.drift_probability = *drift_probability;
  if (informative.has_value() != noise.has_value()) throw ConfigError("--informative and --noise go together");
  const data::Manifest manifest = informative ? data::small_manifest(*informative, *noise) : data::synth_manifest();
  const auto patients = data::synth_cohort(sc, manifest);
  const fs::path dir(out_dir);
  data::write_cohort(dir / "cohort.jsonl", patients);
  data::write_manifest(dir / "manifest.json", manifest);
  const auto preview = data::truncate(patients, manifest, data::CohortConfig{});
  out << "wrote " << (dir / "cohort.jsonl").string() << "\n" << summary_line(preview.report) << "\n";
  return 0;
}

int cmd_train(const std::string& cohort_path, const std::string& out_dir, const Common& common, std::ostream& out,
              std::ostream& err) {
  const auto rc = common.resolve();
  const auto cohort = load_cohort(cohort_path, err);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_run_config(dir, rc);
  std::string log;
  train::TrainingRun run;
  try {
    run = train::train_pipeline(cohort.patients, cohort.manifest, rc.pipeline, [&](const train::EpochLog& e) {
      const std::string line = e.to_line();
      out << line << "\n" << std::flush;
      log += line + "\n";
      data::write_text(dir / "training_log.jsonl", log);
    });
  } catch (const train::TrainingDiverged& e) {
    auto last = e.last_good();
    last.run_config = rc.resolved;
    model::save_checkpoint(dir / "model.last_good.json", last);
    throw;
  }
  auto bundle = run.fit.bundle;
  bundle.run_config = rc.resolved;
  model::save_checkpoint(dir / "model.json", bundle);
  data::write_text(dir / "training_log.jsonl", log);
  Json summary = {{"truncation", report_json(run.data.report)},
                  {"train_patients", run.data.train.size()},
                  {"test_patients", run.data.test.size()},
                  {"validation_ids", run.fit.validation_ids}};
  data::write_text(dir / "train_summary.json", summary.dump(2) + "\n");
  out << summary_line(run.data.report) << "\n"
      << "trained on " << run.data.train.size() << " patients; " << run.data.test.size() << " held out for test\n"
      << "wrote " << (dir / "model.json").string() << "\n";
  return 0;
}

std::vector<data::WindowedPatient> model_cohort(const model::ModelBundle& bundle, const std::string& cohort_path,
                                                const std::string& split, std::ostream& err) {
  const auto cohort = load_cohort(cohort_path, err);
  check_vocabulary(bundle, cohort.manifest);
  if (split != "all" && split != "test") throw ConfigError("--split must be all or test");
  return train::cohort_for_model(bundle, cohort.patients, split == "test");
}

int cmd_predict(const std::string& model_path, const std::string& cohort_path, const std::string& out_dir,
                const std::string& split, const Common& common, std::ostream& out, std::ostream& err) {
  const auto rc = common.resolve();
  const auto bundle = model::load_checkpoint(model_path);
  check_grid(bundle, rc, common.configured());
  const auto patients = model_cohort(bundle, cohort_path, split, err);
  const auto predictions = model::predict_all(bundle, patients, rc.predict);
  const fs::path dir(out_dir);
  data::write_text(dir / "predictions.csv", eval::predictions_csv(predictions, bundle.cohort.grid()));
  write_run_config(dir, rc);
  out << "wrote " << predictions.size() << " trajectories to " << (dir / "predictions.csv").string() << "\n";
  return 0;
}

int cmd_evaluate(const std::optional<std::string>& model_path, const std::optional<std::string>& trajectories_path,
                 const std::string& cohort_path, const std::string& out_dir, const std::string& split,
                 const std::string& score, const std::string& trajectory_column, const std::vector<double>& hours, bool svg, const Common& common,
                 std::ostream& out, std::ostream& err) {
  if (model_path.has_value() == trajectories_path.has_value())
    throw ConfigError("give exactly one of --model and --trajectories");
  const auto rc = common.resolve();
  std::vector<eval::Trajectory> trajectories;
  data::CohortConfig cohort_config = rc.pipeline.cohort;
  if (model_path) {
    const auto bundle = model::load_checkpoint(*model_path);
    check_grid(bundle, rc, common.configured());
    cohort_config = bundle.cohort;
    const auto patients = model_cohort(bundle, cohort_path, split, err);
    auto options = rc.predict;
    const auto column = eval::parse_score_column(score);
    if (column != eval::ScoreColumn::McProbability) options.mc_samples = 0;
    trajectories = eval::trajectories_from(model::predict_all(bundle, patients, options), column);
  } else {
    const auto cohort = load_cohort(cohort_path, err);
    const auto truncated = data::truncate(cohort.patients, cohort.manifest, cohort_config);
    const auto windowed = data::window_all(truncated.patients, cohort.manifest, cohort_config);
    trajectories = eval::read_trajectories_csv(data::read_text(*trajectories_path), windowed, cohort_config.windows,
                                               trajectory_column);
  }
  const auto timepoints = eval::evaluate_timepoints(trajectories, cohort_config, hours);
  const auto summary = eval::trajectory_summary(trajectories, cohort_config.grid());
  const fs::path dir(out_dir);
  data::write_text(dir / "timepoints.csv", eval::timepoints_csv(timepoints));
  data::write_text(dir / "patient_metrics.csv", eval::patient_metrics_csv(summary));
  data::write_text(dir / "class_curves.csv", eval::class_curves_csv(summary));
  data::write_text(dir / "histogram.csv", eval::histogram_csv(summary));
  Json meta = eval::summary_json(summary, timepoints);
  meta["score_column"] = model_path ? score : "external:" + trajectory_column;
  meta["patients"] = trajectories.size();
  data::write_text(dir / "summary.json", meta.dump(2) + "\n");
  if (svg) data::write_text(dir / "class_curves.svg", eval::class_curves_svg(summary));
  write_run_config(dir, rc);
  out << eval::timepoints_csv(timepoints);
  out << "mean slope: positive " << eval::format_number(summary.positive.mean_slope) << ", negative "
      << eval::format_number(summary.negative.mean_slope) << "\n";
  return 0;
}

int cmd_importance(const std::string& cohort_path, const std::string& out_dir, const std::string& features,
                   std::optional<std::size_t> top_k, const Common& common, std::ostream& out, std::ostream& err) {
  const auto rc = common.resolve();
  const auto cohort = load_cohort(cohort_path, err);
  auto options = rc.importance;
  if (!features.empty()) {
    options.features.clear();
    std::istringstream in(features);
    for (std::string f; std::getline(in, f, ',');)
      if (!f.empty()) options.features.push_back(f);
  }
  if (top_k) options.top_k = *top_k;
  const auto report = importance::rank_features(cohort.patients, cohort.manifest, rc.pipeline, options);
  const fs::path dir(out_dir);
  data::write_text(dir / "importance.csv", importance::importance_csv(report, options.top_k));
  data::write_text(dir / "importance_all.csv", importance::importance_csv(report, 0));
  Json meta = report.metadata;
  meta["top_k"] = options.top_k;
  data::write_text(dir / "importance_metadata.json", meta.dump(2) + "\n");
  write_run_config(dir, rc);
  out << importance::importance_csv(report, options.top_k);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Risk trajectories from irregular clinical time series", "mgpms"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "write a synthetic cohort and manifest");
  std::size_t n = 500;
  double prevalence = 0.1558;
  std::uint64_t seed = 1;
  std::string synth_out;
  std::optional<std::size_t> informative, noise;
  std::optional<double> drift_probability;
  synth->add_option("--n", n, "patients")->capture_default_str();
  synth->add_option("--prevalence", prevalence, "positive fraction among eligible patients")->capture_default_str();
  synth->add_option("--seed", seed, "generator seed")->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--informative", informative, "small vocabulary: informative features");
  synth->add_option("--noise", noise, "small vocabulary: pure-noise features");
  synth->add_option("--drift-probability", drift_probability, "chance each informative feature drifts");

  std::string cohort_path, out_dir, split = "all", score = "mc_probability", features;
  std::optional<std::string> model_path, trajectories_path;
  std::vector<double> hours = eval::kDefaultEvaluationHours;
  bool svg = false;
  std::optional<std::size_t> top_k;
  Common common;

  auto* train = app.add_subcommand("train", "fit a model on a cohort");
  train->add_option("--cohort", cohort_path, "cohort file or directory")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  common.attach(train);

  auto* predict = app.add_subcommand("predict", "write per-window risk trajectories");
  predict->add_option("--model", model_path, "checkpoint")->required();
  predict->add_option("--cohort", cohort_path, "cohort file or directory")->required();
  predict->add_option("--out", out_dir, "output directory")->required();
  predict->add_option("--split", split, "all or test (the model's held-out ids)")->capture_default_str();
  common.attach(predict);

  auto* evaluate = app.add_subcommand("evaluate", "time-point AUC/AUPRC and trajectory metrics");
  evaluate->add_option("--model", model_path, "checkpoint");
  evaluate->add_option("--trajectories", trajectories_path, "external CSV: patient_id,window,score");
  evaluate->add_option("--cohort", cohort_path, "cohort file or directory (labels)")->required();
  evaluate->add_option("--out", out_dir, "output directory")->required();
  std::string eval_split = "test";
  evaluate->add_option("--split", eval_split, "all or test")->capture_default_str();
  evaluate->add_option("--score", score, "mc_probability, probability or logit")->capture_default_str();
  std::string trajectory_column = "score";
  evaluate->add_option("--column", trajectory_column, "score column of the --trajectories file")->capture_default_str();
  evaluate->add_option("--hours", hours, "evaluation hours")->capture_default_str();
  evaluate->add_flag("--svg", svg, "also write class_curves.svg");
  common.attach(evaluate);

  auto* imp = app.add_subcommand("importance", "rank features by drop-and-retrain loss increase");
  imp->add_option("--cohort", cohort_path, "cohort file or directory")->required();
  imp->add_option("--out", out_dir, "output directory")->required();
  imp->add_option("--features", features, "comma-separated subset (default: all)");
  imp->add_option("--top-k", top_k, "rows in importance.csv");
  common.attach(imp);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*synth) {
      apply_threads(0, 0);
      return cmd_synth(n, prevalence, seed, synth_out, informative, noise, drift_probability, out);
    }
    if (*train) return cmd_train(cohort_path, out_dir, common, out, err);
    if (*predict) return cmd_predict(*model_path, cohort_path, out_dir, split, common, out, err);
    if (*evaluate)
      return cmd_evaluate(model_path, trajectories_path, cohort_path, out_dir, eval_split, score, trajectory_column, hours, svg, common,
                          out, err);
    if (*imp) return cmd_importance(cohort_path, out_dir, features, top_k, common, out, err);
  } catch (const Error& e) {
    err << "error: " << e.code() << ": " << e.what() << "\n";
    return e.code() == "config" ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace mgpms::cli
