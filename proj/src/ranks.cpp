#include "tomoloc/ranks.hpp"

#include <algorithm>
#include <cmath>

#include "tomoloc/parallel.hpp"
#include "tomoloc/rng.hpp"

namespace tomoloc {

Eigen::MatrixXd probability_matrix(const Eigen::MatrixXd& S, const Eigen::MatrixXd& E) {
  require(S.cols() == E.rows(), ErrorCategory::validation,
          "state/effect dimensions incompatible");
  return S * E;
}

int effective_rank(const Eigen::MatrixXd& M, double tau) {
  require(tau > 0.0, ErrorCategory::validation, "rank threshold must be positive");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  int r = 0;
  for (int k = 0; k < svd.singularValues().size(); ++k)
    if (svd.singularValues()[k] > tau) ++r;
  return r;
}

RankReport rank_report(const std::string& name, const Eigen::MatrixXd& M, double tau) {
  require(tau > 0.0, ErrorCategory::validation, "rank threshold must be positive");
  RankReport rep;
  rep.name = name;
  rep.tau = tau;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  rep.singular_values = svd.singularValues();
  for (int k = 0; k < rep.singular_values.size(); ++k) {
    const double sv = rep.singular_values[k];
    if (sv > tau) ++rep.effective_rank;
    if (sv > tau / 3.1622776601683795 && sv < tau * 3.1622776601683795)
      rep.tau_near_boundary = true;
  }
  return rep;
}

LocalityVerdict locality_verdict(const std::string& context, const RankReport& primary,
                                 const RankReport& secondary) {
  require(primary.tau == secondary.tau, ErrorCategory::validation,
          "verdict requires both rank reports at the same threshold");
  LocalityVerdict v;
  v.context = context;
  v.primary = primary;
  v.secondary = secondary;
  v.holds = primary.effective_rank == secondary.effective_rank;
  return v;
}

NoiseEstimate noise_scale_estimate(const DataMatrix& D, const Catalog& catalog) {
  std::vector<int> prod_cols;
  for (int j = 0; j < D.cols(); ++j)
    if (catalog.elements[D.col_ids[j]].is_product) prod_cols.push_back(j);
  const int P = static_cast<int>(prod_cols.size());
  const int p = 16;
  require(P > p, ErrorCategory::validation,
          "noise estimation needs an overcomplete product-effect sector");
  Eigen::MatrixXd X(P, p);
  for (int c = 0; c < P; ++c)
    X.row(c) = catalog.elements[D.col_ids[prod_cols[c]]].gpt_effect.transpose();
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(X.transpose() * X);
  require(ldlt.info() == Eigen::Success && ldlt.isPositive(), ErrorCategory::validation,
          "product-effect design is rank deficient");
  // Leverages of the shared design; omitting column c and predicting it from
  // the rest is the classic leave-one-out identity e_c / (1 - h_c).
  Eigen::VectorXd h(P);
  for (int c = 0; c < P; ++c) {
    h[c] = X.row(c) * ldlt.solve(X.row(c).transpose());
    require(h[c] < 1.0 - 1e-9, ErrorCategory::validation,
            "a product column is not predictable from the others");
  }

  const double fallback_trials = static_cast<double>(ExperimentConfig{}.trials);
  double dev_sq = 0.0, sig_sq = 0.0;
  for (int i = 0; i < D.rows(); ++i) {
    Eigen::VectorXd y(P);
    for (int c = 0; c < P; ++c) y[c] = D.freqs(i, prod_cols[c]);
    const Eigen::VectorXd e = y - X * ldlt.solve(X.transpose() * y);
    for (int c = 0; c < P; ++c) {
      const double delta = e[c] / std::sqrt(1.0 - h[c]);
      dev_sq += delta * delta;
      const double nn =
          D.trials.size() > 0 ? static_cast<double>(D.trials(i, prod_cols[c])) : fallback_trials;
      const double phat = std::clamp(y[c], 0.0, 1.0);
      sig_sq += phat * (1.0 - phat) / nn;
    }
  }
  require(sig_sq > 0.0, ErrorCategory::validation, "no usable cells for noise estimation");
  NoiseEstimate est;
  est.kappa_hat = std::sqrt(dev_sq / sig_sq);
  est.cells_used = D.rows() * P;
  est.rows_used = D.rows();
  return est;
}

CalibrationResult threshold_calibration(double kappa, int trials, std::uint64_t seed,
                                        const Catalog& catalog, const AngleTable& table,
                                        const ExperimentConfig& base, const FitOptions& fit_opts,
                                        const SecondaryOptions& sec_opts, int jobs) {
  require(kappa >= 0.0, ErrorCategory::validation, "kappa must be non-negative");
  require(trials >= 1, ErrorCategory::validation, "calibration needs at least one trial");
  CalibrationResult cal;
  cal.kappa = kappa;
  cal.trials = trials;
  cal.survive_real.resize(trials);
  cal.vanish_real.resize(trials);
  cal.survive_realprod.resize(trials);
  cal.vanish_realprod.resize(trials);

  const DataMatrix ideal = ideal_matrix(catalog, table, base.visibility);
  const Rng stream{seed};
  parallel_for(static_cast<std::size_t>(trials), jobs, [&](std::size_t t) {
    ExperimentConfig cfg = base;
    cfg.kappa = kappa;
    cfg.seed = stream.child(0xca11b, t).state;
    const DataMatrix D = sample_counts(ideal, cfg);
    const DataMatrix Dreal = extract_real_submatrix(D, catalog);
    const ModelStructure st =
        ModelStructure::build(catalog, table, Dreal.row_ids, Dreal.col_ids, 4);
    FitOptions fo = fit_opts;
    fo.seed = stream.child(0xf17ca1, t).state;
    const FitResult fit = fit_model(Dreal, nullptr, st, fo);
    const GptModel gm = extract_states_effects(fit);
    const Eigen::MatrixXd Dm = probability_matrix(gm.S, gm.E);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Dm);
    cal.survive_real[t] = svd.singularValues()[9];
    cal.vanish_real[t] = svd.singularValues()[10];

    const SecondarySets sets = secondary_sets(gm, catalog, sec_opts, 1);
    const int ns = static_cast<int>(sets.states.size());
    const int ms = static_cast<int>(sets.effects.size());
    Eigen::MatrixXd St(ns, gm.d * gm.d), Et(gm.d * gm.d, ms);
    for (int i = 0; i < ns; ++i) St.row(i) = sets.states[i].secondary.transpose();
    for (int j = 0; j < ms; ++j) Et.col(j) = sets.effects[j].secondary;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd2(probability_matrix(St, Et));
    cal.survive_realprod[t] = svd2.singularValues()[8];
    cal.vanish_realprod[t] = svd2.singularValues()[9];
  });

  cal.min_survive = std::min(*std::min_element(cal.survive_real.begin(), cal.survive_real.end()),
                             *std::min_element(cal.survive_realprod.begin(),
                                               cal.survive_realprod.end()));
  cal.max_vanish = std::max(*std::max_element(cal.vanish_real.begin(), cal.vanish_real.end()),
                            *std::max_element(cal.vanish_realprod.begin(),
                                              cal.vanish_realprod.end()));
  cal.failed = cal.max_vanish >= cal.min_survive;
  cal.tau_recommended = std::sqrt(std::max(cal.min_survive, 1e-300) *
                                  std::max(cal.max_vanish, 1e-300));
  return cal;
}

}  // namespace tomoloc
