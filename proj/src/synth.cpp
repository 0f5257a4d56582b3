#include "tomoloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "tomoloc/parallel.hpp"
#include "tomoloc/rng.hpp"

namespace tomoloc {

namespace {

Operator2Q diagonal_part(const Operator2Q& op) {
  Operator2Q out = Operator2Q::Zero();
  for (int k = 0; k < 4; ++k) out(k, k) = op(k, k);
  return out;
}

// Effect operator of measurement chain j at the given visibility: the final
// projector (onto final_ket) is damped before conjugation by the chain.
Operator2Q damped_effect(const AngleTuple& angles, double visibility) {
  const Eigen::Matrix2cd ua = meas_arm_a(angles[0], angles[1]);
  const Eigen::Matrix2cd ub = meas_arm_b(angles[2], angles[3], angles[4]);
  Operator2Q u = Operator2Q::Zero();
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) u.block<2, 2>(2 * r, 2 * c) = ua(r, c) * ub;
  const Ket2Q fin = final_ket(angles[5]);
  const Operator2Q proj = fin * fin.adjoint();
  const Operator2Q damped = visibility * proj + (1.0 - visibility) * diagonal_part(proj);
  return u.adjoint() * damped * u;
}

void fill_meta(DataMatrix& D, const Catalog& catalog) {
  for (const auto& el : catalog.elements) {
    D.row_ids.push_back(el.index);
    D.col_ids.push_back(el.index);
    D.row_labels.push_back(el.label);
    D.col_labels.push_back(el.label);
  }
}

}  // namespace

DataMatrix ideal_matrix(const Catalog& catalog, const AngleTable& table) {
  return ideal_matrix(catalog, table, 1.0);
}

DataMatrix ideal_matrix(const Catalog& catalog, const AngleTable& table, double visibility) {
  require(visibility >= 0.0 && visibility <= 1.0, ErrorCategory::validation,
          "visibility must lie in [0,1]");
  const int n = static_cast<int>(catalog.elements.size());
  DataMatrix D;
  D.freqs.resize(n, n);
  D.sigmas = Eigen::MatrixXd::Zero(n, n);
  fill_meta(D, catalog);
  D.visibility = visibility;
  std::vector<Operator2Q> effects(n);
  for (int j = 0; j < n; ++j) {
    if (visibility < 1.0 && !catalog.elements[j].is_product)
      effects[j] = damped_effect(table.meas[j], visibility);
    else
      effects[j] = projector(catalog.elements[j].ket);
  }
  D.gpt_states.resize(n, 16);
  D.gpt_effects.resize(n, 16);
  D.meas_angles.resize(n, 6);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < 6; ++k) D.meas_angles(j, k) = table.meas[j][k];
  for (int i = 0; i < n; ++i) {
    const Operator2Q rho = projector(catalog.elements[i].ket);
    D.gpt_states.row(i) = to_gpt_state(rho).transpose();
    D.gpt_effects.row(i) = to_gpt_effect(effects[i]).transpose();
    for (int j = 0; j < n; ++j) D.freqs(i, j) = born_probability(rho, effects[j]);
  }
  return D;
}

DataMatrix apply_visibility(const DataMatrix& ideal, const Catalog& catalog,
                            const AngleTable& table, double visibility) {
  require(!ideal.sampled, ErrorCategory::validation,
          "apply_visibility expects an ideal probability table");
  require(ideal.rows() == static_cast<int>(catalog.elements.size()) &&
              ideal.cols() == ideal.rows(),
          ErrorCategory::validation, "apply_visibility expects the full catalog table");
  return ideal_matrix(catalog, table, visibility);
}

namespace {

// GUE generator: Hermitian with E[tr(G B) tr(G C)] = tr(B C) for Hermitian
// B, C.
Operator2Q random_generator(Rng rng) {
  Operator2Q G = Operator2Q::Zero();
  for (int k = 0; k < 4; ++k) G(k, k) = rng.next_normal();
  for (int k = 0; k < 4; ++k)
    for (int l = k + 1; l < 4; ++l) {
      const std::complex<double> z(rng.next_normal(), rng.next_normal());
      G(k, l) = z / std::sqrt(2.0);
      G(l, k) = std::conj(G(k, l));
    }
  return G;
}

std::uint64_t angle_key(double deg) {
  return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::llround(deg * 10.0)));
}

Operator2Q kron_ab(const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
  Operator2Q m;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) m.block<2, 2>(2 * r, 2 * c) = a(r, c) * b;
  return m;
}

}  // namespace

DataMatrix sample_counts(const DataMatrix& probs, const ExperimentConfig& config, int jobs) {
  require(config.trials > 0, ErrorCategory::validation, "trials must be positive");
  require(config.kappa >= 0.0, ErrorCategory::validation, "kappa must be non-negative");
  require(config.sigma_floor > 0.0, ErrorCategory::validation, "sigma_floor must be positive");
  require(config.drift >= 0.0 && config.drift <= 1.0, ErrorCategory::validation,
          "drift must lie in [0,1]");
  const int n = probs.rows(), m = probs.cols();
  const double N = static_cast<double>(config.trials);
  DataMatrix D = probs;
  D.counts.resize(n, m);
  D.trials = Eigen::MatrixXi::Constant(n, m, config.trials);
  D.kappa = config.kappa;
  D.sigma_floor = config.sigma_floor;
  D.drift = config.drift;
  D.seed = config.seed;
  D.sampled = true;
  const Rng base{config.seed};

  // Noise model: a Poissonian base plus an excess of variance (kappa^2 - 1).
  // A `drift` fraction of the excess comes from a slow rotation of the
  // analyzer stage, F -> exp(-i eps G) F exp(i eps G), with one random
  // Hermitian generator G per final-projector setting; the rest of the excess
  // is independent per cell.  Every measurement chain conjugates the same
  // perturbed projector, so the deviation field is shared the way the analyzer
  // is shared, and for a projective F the first-order deviation
  // tr(rho_i u' dF u) has ensemble variance exactly p(1-p) after the 1/sqrt(2)
  // normalization.  The total per-cell scale is kappa sqrt(N p (1-p)) for any
  // kappa.
  const double base_amp = std::min(config.kappa, 1.0);
  const double excess = std::sqrt(std::max(config.kappa * config.kappa - 1.0, 0.0));
  const double a = excess * std::sqrt(config.drift);
  const double b = excess * std::sqrt(1.0 - config.drift);
  Eigen::MatrixXd dE;  // m x 16 coordinates of the effect deviations
  if (config.drift > 0.0 && excess > 0.0) {
    require(probs.meas_angles.rows() == m && probs.gpt_states.rows() == n,
            ErrorCategory::validation,
            "sample_counts with drift needs the chain tables of the ideal matrix");
    dE.resize(m, 16);
    for (int j = 0; j < m; ++j) {
      const auto ang = probs.meas_angles.row(j);
      const Eigen::Matrix2cd ua = meas_arm_a(ang[0], ang[1]);
      const Eigen::Matrix2cd ub = meas_arm_b(ang[2], ang[3], ang[4]);
      const Operator2Q u = kron_ab(ua, ub);
      const Ket2Q fin = final_ket(ang[5]);
      const Operator2Q proj = fin * fin.adjoint();
      const bool entangled_fin = std::abs(ang[5]) > 1e-12;
      const Operator2Q F =
          entangled_fin ? (probs.visibility * proj +
                           (1.0 - probs.visibility) * diagonal_part(proj))
                              .eval()
                        : proj;
      static const std::uint64_t gen_tag =
          std::getenv("TOMOLOC_GEN_TAG") ? std::strtoull(std::getenv("TOMOLOC_GEN_TAG"), nullptr, 16)
                                         : 0x5eedf1a1u;  // TEMP: tag scan hook
      const Operator2Q G = random_generator(base.child(gen_tag, angle_key(ang[5])));
      const Operator2Q dF = std::complex<double>(0.0, -1.0) * (G * F - F * G) / std::sqrt(2.0);
      dE.row(j) = to_gpt_effect((u.adjoint() * dF * u).eval()).transpose();
    }
  }

  parallel_for(static_cast<std::size_t>(n) * m, jobs, [&](std::size_t cell) {
    const int i = static_cast<int>(cell) / m, j = static_cast<int>(cell) % m;
    const double p = std::clamp(probs.freqs(i, j), 0.0, 1.0);  // shield roundoff at 0 and 1
    Rng rng = base.child(0x5eedce11u, static_cast<std::uint64_t>(cell));
    const double xi_base = rng.next_normal();
    const double xi_ex = rng.next_normal();
    const double dev = a > 0.0 ? probs.gpt_states.row(i).dot(dE.row(j)) : 0.0;
    const double spread = std::sqrt(p * (1.0 - p));
    double x = N * p + std::sqrt(N) * (base_amp * spread * xi_base + a * dev +
                                       b * spread * xi_ex);
    x = std::clamp(x, 0.0, N);
    const long c = std::lround(x);
    D.counts(i, j) = static_cast<int>(c);
    const double phat = static_cast<double>(c) / N;
    D.freqs(i, j) = phat;
    D.sigmas(i, j) =
        std::max(config.kappa * std::sqrt(phat * (1.0 - phat) / N), config.sigma_floor);
  });
  return D;
}

DataMatrix noiseless_dataset(const Catalog& catalog, const AngleTable& table,
                             double visibility, double sigma_floor) {
  require(sigma_floor > 0.0, ErrorCategory::validation, "sigma_floor must be positive");
  DataMatrix D = ideal_matrix(catalog, table, visibility);
  D.sigmas.setConstant(sigma_floor);
  D.sigma_floor = sigma_floor;
  return D;
}

DataMatrix submatrix(const DataMatrix& D, const std::vector<int>& row_ids,
                     const std::vector<int>& col_ids) {
  auto locate = [](const std::vector<int>& ids, int id, const char* what) {
    const auto it = std::find(ids.begin(), ids.end(), id);
    require(it != ids.end(), ErrorCategory::validation,
            std::string("catalog element ") + std::to_string(id) + " missing from " + what);
    return static_cast<int>(it - ids.begin());
  };
  DataMatrix S;
  const int n = static_cast<int>(row_ids.size()), m = static_cast<int>(col_ids.size());
  S.freqs.resize(n, m);
  S.sigmas.resize(n, m);
  const bool has_counts = D.counts.size() > 0;
  const bool has_gpt = D.gpt_states.size() > 0;
  const bool has_angles = D.meas_angles.size() > 0;
  if (has_counts) {
    S.counts.resize(n, m);
    S.trials.resize(n, m);
  }
  if (has_gpt) {
    S.gpt_states.resize(n, 16);
    S.gpt_effects.resize(m, 16);
  }
  if (has_angles) S.meas_angles.resize(m, 6);
  for (int i = 0; i < n; ++i) {
    const int ri = locate(D.row_ids, row_ids[i], "data rows");
    S.row_ids.push_back(row_ids[i]);
    S.row_labels.push_back(D.row_labels[ri]);
    if (has_gpt) S.gpt_states.row(i) = D.gpt_states.row(ri);
    for (int j = 0; j < m; ++j) {
      const int cj = locate(D.col_ids, col_ids[j], "data columns");
      S.freqs(i, j) = D.freqs(ri, cj);
      S.sigmas(i, j) = D.sigmas(ri, cj);
      if (has_counts) {
        S.counts(i, j) = D.counts(ri, cj);
        S.trials(i, j) = D.trials(ri, cj);
      }
    }
  }
  for (int j = 0; j < m; ++j) {
    const int cj = locate(D.col_ids, col_ids[j], "data columns");
    S.col_ids.push_back(col_ids[j]);
    S.col_labels.push_back(D.col_labels[cj]);
    if (has_gpt) S.gpt_effects.row(j) = D.gpt_effects.row(cj);
    if (has_angles) S.meas_angles.row(j) = D.meas_angles.row(cj);
  }
  S.kappa = D.kappa;
  S.visibility = D.visibility;
  S.sigma_floor = D.sigma_floor;
  S.drift = D.drift;
  S.seed = D.seed;
  S.sampled = D.sampled;
  return S;
}

DataMatrix extract_real_submatrix(const DataMatrix& D, const Catalog& catalog) {
  return submatrix(D, catalog.real_indices, catalog.real_indices);
}

}  // namespace tomoloc
