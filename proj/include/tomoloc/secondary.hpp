#pragma once

#include "tomoloc/fitter.hpp"

namespace tomoloc {

/// Euclidean projection onto the probability simplex (sort-based, exact).
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

struct SimplexQp {
  Eigen::VectorXd w;
  double value = 0.0;
  double kkt_residual = 0.0;  // max_k (g.w - g_k); <= 0 certifies optimality
  int iterations = 0;
};

/// min_w 0.5 || G^T w - t ||^2 over the simplex via FISTA with adaptive
/// restart. G stores generators as rows (k x p).
SimplexQp simplex_projection_qp(const Eigen::MatrixXd& G, const Eigen::VectorXd& t,
                                const Eigen::VectorXd* warm = nullptr, int max_iters = 4000,
                                double tol = 1e-10);

struct Rank1 {
  Eigen::VectorXd a, b;  // kron(a, b) is the projection
  double error = 0.0;    // distance from x to the rank-1 set
  bool degenerate = false;
};

/// Nearest Kronecker-factorizing vector (row-major d x d reshape + SVD). The
/// sign is fixed so the first sizable component of a is positive.
Rank1 rank1_projection(const Eigen::VectorXd& x, int d);

struct SecondaryOptions {
  int ap_iters = 40;             // alternating-projection warmup sweeps
  int al_iters = 150;            // augmented-Lagrangian outer iterations
  double feasibility_tol = 1e-6;
  double mu0 = 1.0;
  double mu_growth = 5.0;
  double mu_max = 1e8;
  int qp_iters = 4000;
};

struct SecondarySolution {
  int target_id = -1;             // catalog index of the targeted primary object
  Eigen::VectorXd secondary;      // kron(factor_a, factor_b)
  Eigen::VectorXd factor_a, factor_b;
  Eigen::VectorXd weights;        // hull coefficients over the generators
  double residual = 0.0;          // || secondary - target ||
  double violation = 0.0;         // || hull point - secondary ||
  bool feasible = false;
  int iterations = 0;
  std::vector<double> ap_trace;   // warmup infeasibility, non-increasing
};

/// min || kron(a,b) - target || subject to kron(a,b) = G^T w, w in simplex.
/// Alternating projections between the hull and the rank-1 set seed an
/// augmented-Lagrangian refinement whose two subproblems (simplex QP and
/// shifted rank-1 projection) are solved exactly.
SecondarySolution nearest_factorizing_in_hull(const Eigen::VectorXd& target,
                                              const Eigen::MatrixXd& G, int d,
                                              const SecondaryOptions& opts = {});

struct SecondarySets {
  std::vector<SecondarySolution> states;   // one per product-state target
  std::vector<SecondarySolution> effects;  // one per product-effect target
  double median_state_residual = 0.0;
  double median_effect_residual = 0.0;
};

/// Secondary (strictly factorizing) states and effects for every product
/// target of a gauge-fixed model, searched inside the hull of the full fitted
/// family on the same side.
SecondarySets secondary_sets(const GptModel& gm, const Catalog& catalog,
                             const SecondaryOptions& opts = {}, int jobs = 1);

}  // namespace tomoloc
