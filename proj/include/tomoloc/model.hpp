#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tomoloc/common.hpp"
#include "tomoloc/dataset.hpp"
#include "tomoloc/stabilizer.hpp"
#include "tomoloc/waveplates.hpp"

namespace tomoloc {

/// One waveplate's fitted transformation family: a d x d parameter matrix per
/// occurring setting value.
struct PlateGroup {
  int plate = 0;                  // 2..6 (prep) or 7..11 (meas)
  std::vector<double> settings;   // distinct occurring values, ascending
  int find(double value) const;
};

/// Structured parameterization wiring for a data matrix: which initial-state
/// block, final-effect block and plate-setting matrices each row/column uses.
///
/// Row i:    s_i = (T3 T2) x (T6 T5 T4) . s_init(phi1)
/// Column j: e_j = e_fin(phi12) . (T8 T7) x (T11 T10 T9)
/// (the photon passes the lower-numbered plate first in both stages).
struct ModelStructure {
  int d = 4;                       // per-subsystem embedding dimension
  int n = 0, m = 0;
  std::vector<double> init_values; // distinct phi1 values, ascending
  std::vector<double> fin_values;  // distinct phi12 values, ascending
  std::array<PlateGroup, 5> prep;  // plates 2,3,4,5,6
  std::array<PlateGroup, 5> meas;  // plates 7,8,9,10,11
  std::vector<int> row_init;                      // n, index into init_values
  std::vector<std::array<int, 5>> row_setting;    // n, index into prep[g].settings
  std::vector<int> col_fin;                       // m
  std::vector<std::array<int, 5>> col_setting;    // m
  std::vector<int> row_ids, col_ids;              // catalog indices

  int d2() const { return d * d; }
  int num_params() const;

  // flat parameter vector layout
  int init_offset(int which) const;       // d2-1 free entries (component 0 pinned to 1)
  int fin_offset(int which) const;        // d2 entries
  int prep_offset(int g, int s) const;    // d2 entries, row-major d x d
  int meas_offset(int g, int s) const;

  static ModelStructure build(const Catalog& catalog, const AngleTable& table,
                              const std::vector<int>& row_ids,
                              const std::vector<int>& col_ids, int d);
};

/// Parameter-count formulas. "structured" is the chain parameterization above
/// for the full experiment (26 plate matrices + 2 initial states + 2 final
/// effects); "brute" treats every state and effect vector as free.
enum class ParamMode { structured, brute };
long parameter_count(int dim2, ParamMode mode, int n = 60, int m = 60);

/// Preallocated workspace for predict / gradient evaluation.
struct ModelWork {
  std::vector<std::vector<Eigen::MatrixXd>> Tprep, Tmeas;  // resolved plate matrices
  std::vector<Eigen::MatrixXd> S0, E0;        // reshaped initial / final blocks
  std::vector<Eigen::MatrixXd> A, B, P54;     // per-row composites (and T5*T4 cache)
  std::vector<Eigen::MatrixXd> MA, MB, P109;  // per-column composites (and T10*T9 cache)
  Eigen::MatrixXd SM, EM;                     // stacked s/e matrices, n x d2 and m x d2
  Eigen::MatrixXd P;                          // predictions n x m
  Eigen::MatrixXd C;                          // dObjective/dP
  Eigen::MatrixXd dSM, dEM;
  Eigen::MatrixXd dS, dE, dA, dB, dMA, dMB, t1;  // d x d scratch
  void resize(const ModelStructure& st);
};

/// Predicted probability matrix for the given flat parameter vector.
Eigen::MatrixXd predict(const ModelStructure& st, const Eigen::VectorXd& theta);

/// Forward pass into a workspace (leaves composites cached for the backward pass).
void predict_into(const ModelStructure& st, const Eigen::VectorXd& theta, ModelWork& w);

/// chi^2 = sum_ij ((D_ij - P_ij)/sigma_ij)^2. Throws on non-positive sigmas.
double chi_squared(const DataMatrix& D, const Eigen::MatrixXd& P);

/// Penalized objective chi^2 + lambda * sum_ij pen(P_ij), where pen penalizes
/// cells outside [0,1] quadratically. If grad is non-null the analytic
/// gradient is written there (finite-difference-validated).
double objective(const ModelStructure& st, const Eigen::VectorXd& theta, const DataMatrix& D,
                 double lambda, Eigen::VectorXd* grad, ModelWork& w);

/// Gradient of a single predicted cell w.r.t. theta (used by the LM polish).
void cell_gradient(const ModelStructure& st, const Eigen::VectorXd& theta, ModelWork& w,
                   int i, int j, Eigen::VectorXd& out);

/// Random initialization tailored to the chain structure: plate blocks are
/// unit-preserving orthogonal matrices 1 (+) O(d-1) plus a small jitter,
/// initial states / final effects are rank-1 with the scale of the data mean
/// pbar. This keeps signal propagation through the five-plate products close
/// to isometric, which is what lets the optimizer reach the global basin.
Eigen::VectorXd random_theta(const ModelStructure& st, std::uint64_t seed, double pbar = 0.25);

/// Ground-truth embedding of the quantum model (d must be 4): Pauli transfer
/// matrices of the waveplate chain and the (visibility-damped) final effects.
Eigen::VectorXd quantum_theta(const ModelStructure& st, double visibility = 1.0);

/// Embed a lower-dimensional parameter vector into a larger structure with the
/// same wiring (top-left block embedding; predictions are preserved).
Eigen::VectorXd embed_theta(const ModelStructure& small, const Eigen::VectorXd& theta_small,
                            const ModelStructure& big);

}  // namespace tomoloc
