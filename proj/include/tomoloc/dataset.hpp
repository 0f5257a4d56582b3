#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tomoloc/common.hpp"

namespace tomoloc {

/// Knobs of the synthetic prepare-and-measure run.
struct ExperimentConfig {
  int trials = 10000;          // repetitions per (preparation, measurement) cell
  double kappa = 5.0;          // noise scale relative to counting statistics
  double visibility = 0.94;    // interference visibility of entangled stages
  double sigma_floor = 1e-4;   // lower bound on per-cell uncertainties
  double drift = 0.95;         // fraction of excess-noise variance carried by a
                               // slow drift of the analyzer stage
  std::uint64_t seed = 1;
};

/// A frequency matrix with per-cell counts, trial numbers and uncertainties.
/// Rows are preparations, columns are measurement effects; row/col ids index
/// into the stabilizer catalog. Ideal (unsampled) tables carry empty counts.
struct DataMatrix {
  Eigen::MatrixXd freqs;
  Eigen::MatrixXd sigmas;
  Eigen::MatrixXi counts;   // empty for ideal tables
  Eigen::MatrixXi trials;   // empty for ideal tables
  Eigen::MatrixXd gpt_states;   // n x 16 Pauli coordinates of the targeted states
  Eigen::MatrixXd gpt_effects;  // m x 16 coordinates of the (visibility-damped) effects
  Eigen::MatrixXd meas_angles;  // m x 6 waveplate angles of each measurement chain
  std::vector<int> row_ids, col_ids;
  std::vector<std::string> row_labels, col_labels;
  double kappa = 0.0;
  double visibility = 1.0;
  double sigma_floor = 1e-4;
  double drift = 0.0;
  std::uint64_t seed = 0;
  bool sampled = false;

  int rows() const { return static_cast<int>(freqs.rows()); }
  int cols() const { return static_cast<int>(freqs.cols()); }
};

}  // namespace tomoloc
