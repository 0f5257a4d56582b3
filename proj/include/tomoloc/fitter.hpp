#pragma once

#include <limits>

#include "tomoloc/model.hpp"

namespace tomoloc {

struct FitOptions {
  int restarts = 24;          // max basin-capture attempts
  int min_attempts = 6;       // attempts before the capture-impossible test may stop the loop
  int lbfgs_memory = 10;
  int warmup_iters = 2000;    // L-BFGS budget per attempt (uniform-weight stage)
  int gn_iters = 25;          // Gauss-Newton budget per attempt (uniform-weight stage)
  int ladder_iters = 25;      // Levenberg-Marquardt budget per refinement level
  double lambda = 1e3;        // out-of-range penalty weight during refinement
  double grad_tol = 1e-10;    // relative infinity-norm gradient tolerance (L-BFGS)
  double plateau_tol = 1e-10; // relative objective-change tolerance (L-BFGS)
  int plateau_span = 8;       // consecutive small changes that end the warmup
  int verbose = 0;            // if > 0, trace objective every N evaluations (stderr)
  std::uint64_t seed = 0;     // restart stream
};

struct FitResult {
  ModelStructure structure;
  Eigen::VectorXd theta;
  double chi2_train = 0.0;
  double chi2_test = std::numeric_limits<double>::quiet_NaN();
  double chi2_train_per_cell = 0.0;
  double chi2_test_per_cell = std::numeric_limits<double>::quiet_NaN();
  double ls_per_cell = 0.0;   // uniform-weight residual of the best attempt
  double grad_inf = 0.0;
  int iterations = 0;
  int attempts = 0;
  int best_restart = -1;
  bool captured = false;      // an attempt reached the noise-level basin
  bool converged = false;
  std::uint64_t seed = 0;
};

/// Per-cell 90/10 (or any fraction) split: every trial of a cell is assigned
/// to train independently with the given probability, so counts and trials of
/// the two halves sum exactly to the originals.
struct SplitPair {
  DataMatrix train, test;
};
SplitPair split_counts(const DataMatrix& D, double fraction, std::uint64_t seed);

/// Multi-restart structured fit of the training matrix.
///
/// The sigma weights span many orders of magnitude (near-deterministic cells
/// sit at the sigma floor), which riddles the chi^2 landscape with stiff
/// secondary minima. Each attempt therefore first solves the uniform-weight
/// frequency least squares: L-BFGS warmup, then damped Gauss-Newton, which
/// walks down the ill-conditioned valleys where L-BFGS stalls. The basin is
/// recognized by its residual scale (mean sigma^2 per cell); on capture the
/// restart loop stops early, and when the model is too small to ever reach
/// that scale the loop gives up after min_attempts. The best attempt is then
/// refined against the true sigmas in two Levenberg-Marquardt levels (softened
/// floor, then exact weights) with an out-of-range penalty on predictions.
///
/// test (if given) is only evaluated, never optimized. warm_start replaces the
/// random initialization of attempt 0; a warm start inside the basin captures
/// immediately, which is what makes dimension chaining cheap.
FitResult fit_model(const DataMatrix& train, const DataMatrix* test, const ModelStructure& st,
                    const FitOptions& opts, const Eigen::VectorXd* warm_start = nullptr);

struct DimensionScanRow {
  int dim2 = 0;
  double mean_train = 0.0, std_train = 0.0;
  double mean_test = 0.0, std_test = 0.0;
  int converged = 0, excluded = 0;
};

struct DimensionScan {
  std::vector<int> dims;                     // dim2 values, ascending
  std::vector<DimensionScanRow> rows;        // one per dim
  std::vector<std::vector<FitResult>> fits;  // [repetition][dim index]
  std::vector<int> selection;                // per-repetition selected dim2 (-1 if none)
  int selected_dim2 = 0;                     // argmin of mean test chi^2
  int warnings = 0;                          // non-converged fits excluded
};

/// Repeated train/test resampling of one dataset across model dimensions.
/// Within a repetition dimensions are fitted in ascending order; whenever a
/// fit captures the basin, the next dimension warm-starts from its embedded
/// solution, so train error keeps decreasing beyond the data rank instead of
/// depending on a fresh basin search.
DimensionScan dimension_scan(const DataMatrix& D, const Catalog& catalog,
                             const AngleTable& table, const std::vector<int>& dims2,
                             int repetitions, double fraction, const FitOptions& opts,
                             std::uint64_t seed, int jobs = 1);

/// Gauge-fixed states and effects of a fitted model. The gauge is the product
/// transformation Lambda_A (x) Lambda_B built from the rank-1 projection of
/// the least-squares unit-effect covector; afterwards every state's first
/// component is ~1 and the unit covector is the first coordinate vector.
struct GptModel {
  Eigen::MatrixXd S;  // n x d2 states (rows)
  Eigen::MatrixXd E;  // d2 x m effects (columns)
  std::vector<int> row_ids, col_ids;
  int d = 0;
  bool gauge_fixed = false;  // false if the fallback (raw vectors) was used
};
GptModel extract_states_effects(const FitResult& fit);

}  // namespace tomoloc
