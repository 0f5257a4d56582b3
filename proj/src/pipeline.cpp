#include "tomoloc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "tomoloc/rng.hpp"

namespace tomoloc {

namespace {

std::string path_join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::vector<int> parse_dims(const std::string& value) {
  std::vector<int> dims;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    dims.push_back(static_cast<int>(std::stol(item)));
  }
  require(!dims.empty(), ErrorCategory::validation, "dims list is empty");
  return dims;
}

std::string dims_to_string(const std::vector<int>& dims) {
  std::string s;
  for (std::size_t k = 0; k < dims.size(); ++k) s += (k ? "," : "") + std::to_string(dims[k]);
  return s;
}

struct SharedSetup {
  Catalog catalog;
  AngleTable table;
  DataMatrix ideal;    // at configured visibility
  DataMatrix sampled;
};

SharedSetup make_setup(const PipelineConfig& cfg) {
  SharedSetup s;
  s.catalog = build_catalog();
  s.table = angle_table(s.catalog);
  s.ideal = ideal_matrix(s.catalog, s.table, cfg.experiment.visibility);
  s.sampled = sample_counts(s.ideal, cfg.experiment, cfg.jobs);
  return s;
}

void write_manifest(const PipelineConfig& cfg, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& extras,
                    const std::vector<std::string>& artifacts) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("command", command);
  kv.emplace_back("seed", std::to_string(cfg.experiment.seed));
  kv.emplace_back("trials", std::to_string(cfg.experiment.trials));
  kv.emplace_back("kappa", format_double(cfg.experiment.kappa));
  kv.emplace_back("visibility", format_double(cfg.experiment.visibility));
  kv.emplace_back("dims", dims_to_string(cfg.dims));
  kv.emplace_back("repetitions", std::to_string(cfg.repetitions));
  kv.emplace_back("fraction", format_double(cfg.fraction));
  kv.emplace_back("tau", format_double(cfg.tau));
  kv.emplace_back("context", cfg.context);
  for (const auto& e : extras) kv.push_back(e);
  for (const auto& a : artifacts) kv.emplace_back("artifact", a);
  write_key_values(kv, path_join(cfg.out_dir, "manifest.txt"));
}

std::vector<std::string> contexts_of(const PipelineConfig& cfg) {
  require(cfg.context == "full" || cfg.context == "real" || cfg.context == "both",
          ErrorCategory::validation, "context must be full, real or both");
  if (cfg.context == "both") return {"full", "real"};
  return {cfg.context};
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "trials", "kappa", "visibility", "sigma_floor", "drift", "seed", "dims", "repetitions",
      "fraction", "tau", "context", "out", "jobs", "calib_trials", "calib_kappa",
      "restarts", "ap_iters", "al_iters",
  };
  return keys;
}

void apply_key(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (key == "trials") cfg.experiment.trials = static_cast<int>(std::stol(value));
    else if (key == "kappa") cfg.experiment.kappa = std::stod(value);
    else if (key == "visibility") cfg.experiment.visibility = std::stod(value);
    else if (key == "sigma_floor") cfg.experiment.sigma_floor = std::stod(value);
    else if (key == "drift") cfg.experiment.drift = std::stod(value);
    else if (key == "seed") cfg.experiment.seed = std::stoull(value);
    else if (key == "dims") cfg.dims = parse_dims(value);
    else if (key == "repetitions") cfg.repetitions = static_cast<int>(std::stol(value));
    else if (key == "fraction") cfg.fraction = std::stod(value);
    else if (key == "tau") cfg.tau = std::stod(value);
    else if (key == "context") cfg.context = value;
    else if (key == "out") cfg.out_dir = value;
    else if (key == "jobs") cfg.jobs = static_cast<int>(std::stol(value));
    else if (key == "calib_trials") cfg.calib_trials = static_cast<int>(std::stol(value));
    else if (key == "calib_kappa") cfg.calib_kappa = std::stod(value);
    else if (key == "restarts") cfg.fit.restarts = static_cast<int>(std::stol(value));
    else if (key == "ap_iters") cfg.secondary.ap_iters = static_cast<int>(std::stol(value));
    else if (key == "al_iters") cfg.secondary.al_iters = static_cast<int>(std::stol(value));
    else throw Error(ErrorCategory::validation, "unknown config key '" + key + "'");
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(ErrorCategory::validation, "bad value '" + value + "' for key '" + key + "'");
  }
}

PipelineConfig load_config(const std::string& path) {
  PipelineConfig cfg;
  for (const auto& [key, value] : read_key_values(path, config_keys()))
    apply_key(cfg, key, value);
  return cfg;
}

void save_config(const PipelineConfig& cfg, const std::string& path) {
  write_key_values(
      {
          {"trials", std::to_string(cfg.experiment.trials)},
          {"kappa", format_double(cfg.experiment.kappa)},
          {"visibility", format_double(cfg.experiment.visibility)},
          {"sigma_floor", format_double(cfg.experiment.sigma_floor)},
          {"drift", format_double(cfg.experiment.drift)},
          {"seed", std::to_string(cfg.experiment.seed)},
          {"dims", dims_to_string(cfg.dims)},
          {"repetitions", std::to_string(cfg.repetitions)},
          {"fraction", format_double(cfg.fraction)},
          {"tau", format_double(cfg.tau)},
          {"context", cfg.context},
          {"out", cfg.out_dir},
          {"jobs", std::to_string(cfg.jobs)},
          {"calib_trials", std::to_string(cfg.calib_trials)},
          {"calib_kappa", format_double(cfg.calib_kappa)},
          {"restarts", std::to_string(cfg.fit.restarts)},
          {"ap_iters", std::to_string(cfg.secondary.ap_iters)},
          {"al_iters", std::to_string(cfg.secondary.al_iters)},
      },
      path);
}

ContextReport analyze_context(const PipelineConfig& cfg, const Catalog& catalog,
                              const AngleTable& table, const DataMatrix& D,
                              const std::string& context, int dim2_override) {
  require(context == "full" || context == "real", ErrorCategory::validation,
          "context must be full or real");
  const DataMatrix Dc = context == "real" ? extract_real_submatrix(D, catalog) : D;
  const Rng base{cfg.experiment.seed};

  int dim2 = dim2_override > 0 ? dim2_override : cfg.dims[0];
  if (dim2_override <= 0 && cfg.dims.size() > 1) {
    const DimensionScan scan = dimension_scan(Dc, catalog, table, cfg.dims, cfg.repetitions,
                                              cfg.fraction, cfg.fit,
                                              base.child(0x5ca2, context == "real").state,
                                              cfg.jobs);
    dim2 = scan.selected_dim2;
  }
  const int d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim2))));
  require(d * d == dim2, ErrorCategory::validation, "dimension must be a perfect square");

  ContextReport rep;
  rep.context = context;
  const SplitPair split =
      split_counts(Dc, cfg.fraction, base.child(0xf17a1, context == "real").state);
  const ModelStructure st = ModelStructure::build(catalog, table, Dc.row_ids, Dc.col_ids, d);
  FitOptions fo = cfg.fit;
  fo.seed = base.child(0xf17b, context == "real").state;
  rep.fit = fit_model(split.train, &split.test, st, fo);
  require(rep.fit.converged, ErrorCategory::convergence,
          "final " + context + " fit did not converge");
  rep.model = extract_states_effects(rep.fit);
  rep.secondary = secondary_sets(rep.model, catalog, cfg.secondary, cfg.jobs);

  const Eigen::MatrixXd Dm = probability_matrix(rep.model.S, rep.model.E);
  const int ns = static_cast<int>(rep.secondary.states.size());
  const int ms = static_cast<int>(rep.secondary.effects.size());
  Eigen::MatrixXd St(ns, rep.model.d * rep.model.d), Et(rep.model.d * rep.model.d, ms);
  for (int i = 0; i < ns; ++i) St.row(i) = rep.secondary.states[i].secondary.transpose();
  for (int j = 0; j < ms; ++j) Et.col(j) = rep.secondary.effects[j].secondary;
  rep.primary_report = rank_report("pairing_" + context, Dm, cfg.tau);
  rep.secondary_report =
      rank_report("pairing_secondary_" + context, probability_matrix(St, Et), cfg.tau);
  rep.verdict = locality_verdict(context, rep.primary_report, rep.secondary_report);
  return rep;
}

void run_generate(const PipelineConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const SharedSetup s = make_setup(cfg);
  write_catalog_csv(s.catalog, path_join(cfg.out_dir, "catalog.csv"));
  write_data_matrix(s.ideal, path_join(cfg.out_dir, "ideal.csv"));
  write_data_matrix(s.sampled, path_join(cfg.out_dir, "data.csv"));
  save_config(cfg, path_join(cfg.out_dir, "config.txt"));
  write_manifest(cfg, "generate", {},
                 {"catalog.csv", "ideal.csv", "data.csv", "data_cells.csv", "config.txt"});
}

void run_fit(const PipelineConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const SharedSetup s = make_setup(cfg);
  const Rng base{cfg.experiment.seed};
  std::vector<std::string> artifacts;
  std::vector<std::pair<std::string, std::string>> extras;
  for (const std::string& context : contexts_of(cfg)) {
    const DataMatrix Dc =
        context == "real" ? extract_real_submatrix(s.sampled, s.catalog) : s.sampled;
    const DimensionScan scan =
        dimension_scan(Dc, s.catalog, s.table, cfg.dims, cfg.repetitions, cfg.fraction, cfg.fit,
                       base.child(0x5ca2, context == "real").state, cfg.jobs);
    write_scan_csv(scan, path_join(cfg.out_dir, "scan_" + context + ".csv"));
    write_selection_csv(scan, path_join(cfg.out_dir, "selection_" + context + ".csv"));
    extras.emplace_back("selected_" + context, std::to_string(scan.selected_dim2));
    extras.emplace_back("scan_warnings_" + context, std::to_string(scan.warnings));
    artifacts.push_back("scan_" + context + ".csv");
    artifacts.push_back("selection_" + context + ".csv");
  }
  save_config(cfg, path_join(cfg.out_dir, "config.txt"));
  artifacts.push_back("config.txt");
  write_manifest(cfg, "fit", extras, artifacts);
}

void run_locality(const PipelineConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const SharedSetup s = make_setup(cfg);
  std::vector<LocalityVerdict> verdicts;
  std::vector<std::string> artifacts;
  std::vector<std::pair<std::string, std::string>> extras;
  for (const std::string& context : contexts_of(cfg)) {
    const ContextReport rep = analyze_context(cfg, s.catalog, s.table, s.sampled, context);
    write_fit(rep.fit, path_join(cfg.out_dir, "fit_" + context + ".txt"));
    write_secondary_csv(rep.secondary, s.catalog,
                        path_join(cfg.out_dir, "secondary_" + context + ".csv"));
    write_spectra_csv({rep.primary_report, rep.secondary_report},
                      path_join(cfg.out_dir, "spectra_" + context + ".csv"));
    verdicts.push_back(rep.verdict);
    extras.emplace_back("verdict_" + context, rep.verdict.holds ? "holds" : "fails");
    extras.emplace_back("rank_primary_" + context,
                        std::to_string(rep.verdict.primary.effective_rank));
    extras.emplace_back("rank_secondary_" + context,
                        std::to_string(rep.verdict.secondary.effective_rank));
    artifacts.push_back("fit_" + context + ".txt");
    artifacts.push_back("secondary_" + context + ".csv");
    artifacts.push_back("spectra_" + context + ".csv");
  }
  write_verdicts_csv(verdicts, path_join(cfg.out_dir, "verdicts.csv"));
  save_config(cfg, path_join(cfg.out_dir, "config.txt"));
  artifacts.push_back("verdicts.csv");
  artifacts.push_back("config.txt");
  write_manifest(cfg, "locality", extras, artifacts);
}

void run_calibrate(const PipelineConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const SharedSetup s = make_setup(cfg);
  const NoiseEstimate est = noise_scale_estimate(s.sampled, s.catalog);
  const double kappa = cfg.calib_kappa >= 0.0 ? cfg.calib_kappa : est.kappa_hat;
  const CalibrationResult cal = threshold_calibration(
      kappa, cfg.calib_trials, Rng{cfg.experiment.seed}.child(0xca1).state, s.catalog, s.table,
      cfg.experiment, cfg.fit, cfg.secondary, cfg.jobs);
  write_calibration_csv(cal, path_join(cfg.out_dir, "calibration.csv"));
  save_config(cfg, path_join(cfg.out_dir, "config.txt"));
  write_manifest(cfg, "calibrate",
                 {
                     {"kappa_hat", format_double(est.kappa_hat)},
                     {"calibration_kappa", format_double(kappa)},
                     {"tau_recommended", format_double(cal.tau_recommended)},
                     {"min_survive", format_double(cal.min_survive)},
                     {"max_vanish", format_double(cal.max_vanish)},
                     {"calibration_failed", cal.failed ? "1" : "0"},
                 },
                 {"calibration.csv", "config.txt"});
  require(!cal.failed, ErrorCategory::inconclusive,
          "calibration bands overlap: no threshold separates surviving and vanishing "
          "singular values at kappa " +
              format_double(kappa));
}

void run_pipeline(const PipelineConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const SharedSetup s = make_setup(cfg);
  write_catalog_csv(s.catalog, path_join(cfg.out_dir, "catalog.csv"));
  write_data_matrix(s.ideal, path_join(cfg.out_dir, "ideal.csv"));
  write_data_matrix(s.sampled, path_join(cfg.out_dir, "data.csv"));
  save_config(cfg, path_join(cfg.out_dir, "config.txt"));

  const Rng base{cfg.experiment.seed};
  std::vector<LocalityVerdict> verdicts;
  std::vector<std::pair<std::string, std::string>> extras;
  std::vector<std::string> artifacts = {"catalog.csv", "ideal.csv", "data.csv",
                                        "data_cells.csv", "config.txt"};
  for (const std::string& context : contexts_of(cfg)) {
    int selected = cfg.dims[0];
    if (cfg.dims.size() > 1) {
      const DataMatrix Dc =
          context == "real" ? extract_real_submatrix(s.sampled, s.catalog) : s.sampled;
      const DimensionScan scan =
          dimension_scan(Dc, s.catalog, s.table, cfg.dims, cfg.repetitions, cfg.fraction,
                         cfg.fit, base.child(0x5ca2, context == "real").state, cfg.jobs);
      write_scan_csv(scan, path_join(cfg.out_dir, "scan_" + context + ".csv"));
      write_selection_csv(scan, path_join(cfg.out_dir, "selection_" + context + ".csv"));
      extras.emplace_back("selected_" + context, std::to_string(scan.selected_dim2));
      extras.emplace_back("scan_warnings_" + context, std::to_string(scan.warnings));
      selected = scan.selected_dim2;
    }
    const ContextReport rep =
        analyze_context(cfg, s.catalog, s.table, s.sampled, context, selected);
    write_fit(rep.fit, path_join(cfg.out_dir, "fit_" + context + ".txt"));
    write_secondary_csv(rep.secondary, s.catalog,
                        path_join(cfg.out_dir, "secondary_" + context + ".csv"));
    write_spectra_csv({rep.primary_report, rep.secondary_report},
                      path_join(cfg.out_dir, "spectra_" + context + ".csv"));
    verdicts.push_back(rep.verdict);
    extras.emplace_back("verdict_" + context, rep.verdict.holds ? "holds" : "fails");
    extras.emplace_back("rank_primary_" + context,
                        std::to_string(rep.verdict.primary.effective_rank));
    extras.emplace_back("rank_secondary_" + context,
                        std::to_string(rep.verdict.secondary.effective_rank));
    artifacts.push_back("fit_" + context + ".txt");
    artifacts.push_back("secondary_" + context + ".csv");
    artifacts.push_back("spectra_" + context + ".csv");
    if (cfg.dims.size() > 1) {
      artifacts.push_back("scan_" + context + ".csv");
      artifacts.push_back("selection_" + context + ".csv");
    }
  }
  write_verdicts_csv(verdicts, path_join(cfg.out_dir, "verdicts.csv"));
  artifacts.push_back("verdicts.csv");
  write_manifest(cfg, "pipeline", extras, artifacts);
}

}  // namespace tomoloc
