#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tomoloc/io.hpp"

namespace tomoloc {

/// Everything a run needs, assembled from defaults, an optional config file
/// and command-line overrides (in that precedence order).
struct PipelineConfig {
  ExperimentConfig experiment;
  std::vector<int> dims = {1, 4, 9, 16, 25};
  int repetitions = 10;
  double fraction = 0.9;
  double tau = 0.1;
  std::string context = "both";  // full | real | both
  std::string out_dir = "out";
  int jobs = 1;
  int calib_trials = 5;
  double calib_kappa = -1.0;  // negative: calibrate at the estimated noise scale
  FitOptions fit;
  SecondaryOptions secondary;
};

/// Keys accepted in config files (and their CLI override equivalents).
const std::vector<std::string>& config_keys();

PipelineConfig load_config(const std::string& path);
void apply_key(PipelineConfig& cfg, const std::string& key, const std::string& value);
void save_config(const PipelineConfig& cfg, const std::string& path);

/// Result bundle of one locality analysis (one context).
struct ContextReport {
  std::string context;
  FitResult fit;
  GptModel model;
  SecondarySets secondary;
  RankReport primary_report, secondary_report;
  LocalityVerdict verdict;
};

/// Fit (at dim2_override when positive, else the single dimension in cfg.dims
/// or the scan-selected one when several are given), extract secondary
/// objects and render the verdict for one context of a sampled dataset.
ContextReport analyze_context(const PipelineConfig& cfg, const Catalog& catalog,
                              const AngleTable& table, const DataMatrix& D,
                              const std::string& context, int dim2_override = -1);

/// Subcommand drivers; artifacts land in cfg.out_dir. All throw Error on
/// failure (the CLI maps categories to exit codes).
void run_generate(const PipelineConfig& cfg);
void run_fit(const PipelineConfig& cfg);
void run_locality(const PipelineConfig& cfg);
void run_calibrate(const PipelineConfig& cfg);
void run_pipeline(const PipelineConfig& cfg);

}  // namespace tomoloc
