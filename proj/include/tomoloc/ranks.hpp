#pragma once

#include <string>

#include "tomoloc/secondary.hpp"
#include "tomoloc/synth.hpp"

namespace tomoloc {

/// Pairing matrix D_ij = s_i . e_j from stacked states (n x d2) and effects
/// (d2 x m).
Eigen::MatrixXd probability_matrix(const Eigen::MatrixXd& S, const Eigen::MatrixXd& E);

struct RankReport {
  std::string name;
  Eigen::VectorXd singular_values;  // descending
  double tau = 0.1;
  int effective_rank = 0;
  bool tau_near_boundary = false;  // a singular value lies within ~3x of tau
};

/// Number of singular values strictly above tau.
int effective_rank(const Eigen::MatrixXd& M, double tau);
RankReport rank_report(const std::string& name, const Eigen::MatrixXd& M, double tau);

struct LocalityVerdict {
  std::string context;   // "full" or "real"
  RankReport primary;    // pairing of the fitted states/effects
  RankReport secondary;  // pairing of the strictly factorizing objects
  bool holds = false;    // equal effective ranks
};

/// Tomographic locality holds iff both pairings have the same effective rank.
/// The two reports must have been computed at the same tau.
LocalityVerdict locality_verdict(const std::string& context, const RankReport& primary,
                                 const RankReport& secondary);

struct NoiseEstimate {
  double kappa_hat = 0.0;
  int cells_used = 0;
  int rows_used = 0;
};

/// Estimate the noise scale relative to counting statistics: per row, each
/// product-effect frequency is predicted by least squares from the other
/// product cells of that row using the ideal product-effect covectors as the
/// design, and kappa_hat is the RMS of the omitted-cell prediction deviations
/// over the RMS of the Poissonian sigmas. Needs a full-rank product-effect
/// design; unsampled matrices are normalized at the default trial count.
NoiseEstimate noise_scale_estimate(const DataMatrix& D, const Catalog& catalog);

struct CalibrationResult {
  double kappa = 0.0;
  int trials = 0;
  double tau_recommended = 0.0;
  double min_survive = 0.0, max_vanish = 0.0;
  bool failed = false;  // bands overlap: no threshold separates them
  std::vector<double> survive_real, vanish_real;          // per trial, 24 x 24 pairing
  std::vector<double> survive_realprod, vanish_realprod;  // per trial, secondary pairing
};

/// Synthetic-replay calibration of the rank threshold at a given noise scale:
/// each trial redraws the dataset, fits the real sector at d^2 = 16, extracts
/// secondary objects, and records the boundary singular values. The
/// recommendation is the geometric mean of the pooled band edges.
CalibrationResult threshold_calibration(double kappa, int trials, std::uint64_t seed,
                                        const Catalog& catalog, const AngleTable& table,
                                        const ExperimentConfig& base, const FitOptions& fit_opts,
                                        const SecondaryOptions& sec_opts, int jobs = 1);

}  // namespace tomoloc
