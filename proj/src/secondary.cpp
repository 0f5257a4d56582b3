#include "tomoloc/secondary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tomoloc/parallel.hpp"

namespace tomoloc {

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const int n = static_cast<int>(v.size());
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, tau = 0.0;
  int rho = 0;
  for (int j = 0; j < n; ++j) {
    css += u[j];
    const double t = (css - 1.0) / (j + 1);
    if (u[j] - t > 0.0) {
      rho = j + 1;
      tau = t;
    }
  }
  (void)rho;
  return (v.array() - tau).max(0.0);
}

SimplexQp simplex_projection_qp(const Eigen::MatrixXd& G, const Eigen::VectorXd& t,
                                const Eigen::VectorXd* warm, int max_iters, double tol) {
  const int k = static_cast<int>(G.rows());
  require(G.cols() == t.size(), ErrorCategory::validation, "qp target size mismatch");
  require(k > 0, ErrorCategory::validation, "qp needs at least one generator");
  const Eigen::MatrixXd H = G * G.transpose();
  const Eigen::VectorXd q = G * t;
  // Lipschitz constant = largest eigenvalue of H (power iteration)
  Eigen::VectorXd pv = Eigen::VectorXd::Ones(k).normalized();
  double L = 1.0;
  for (int it = 0; it < 30; ++it) {
    pv = H * pv;
    const double nrm = pv.norm();
    if (nrm < 1e-300) break;
    L = nrm;
    pv /= nrm;
  }
  L = std::max(L * 1.01, 1e-12);

  Eigen::VectorXd w = warm ? project_simplex(*warm)
                           : Eigen::VectorXd::Constant(k, 1.0 / k);
  Eigen::VectorXd y = w, wn(k), g(k);
  double theta = 1.0;
  SimplexQp out;
  int it = 0;
  for (; it < max_iters; ++it) {
    g.noalias() = H * y - q;
    wn = project_simplex(y - g / L);
    // adaptive restart on non-descent momentum
    if (g.dot(wn - w) > 0.0) {
      theta = 1.0;
      y = wn;
    } else {
      const double theta_n = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
      y = wn + ((theta - 1.0) / theta_n) * (wn - w);
      theta = theta_n;
    }
    w = wn;
    g.noalias() = H * w - q;
    const double kkt = w.dot(g) - g.minCoeff();
    if (kkt <= tol * (1.0 + g.cwiseAbs().maxCoeff())) break;
  }
  out.w = w;
  g.noalias() = H * w - q;
  out.kkt_residual = w.dot(g) - g.minCoeff();
  out.value = 0.5 * (G.transpose() * w - t).squaredNorm();
  out.iterations = it;
  return out;
}

Rank1 rank1_projection(const Eigen::VectorXd& x, int d) {
  require(static_cast<int>(x.size()) == d * d, ErrorCategory::validation,
          "rank1_projection size mismatch");
  Eigen::MatrixXd X(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) X(a, b) = x[a * d + b];
  Rank1 out;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double s1 = sv[0];
  if (s1 < 1e-300) {
    out.a = Eigen::VectorXd::Zero(d);
    out.b = Eigen::VectorXd::Zero(d);
    out.degenerate = true;
    out.error = x.norm();
    return out;
  }
  const double scale = std::sqrt(s1);
  out.a = scale * svd.matrixU().col(0);
  out.b = scale * svd.matrixV().col(0);
  double tail = 0.0;
  for (int i = 1; i < sv.size(); ++i) tail += sv[i] * sv[i];
  out.error = std::sqrt(tail);
  for (int i = 0; i < d; ++i) {
    if (std::abs(out.a[i]) > 1e-12) {
      if (out.a[i] < 0.0) {
        out.a = -out.a;
        out.b = -out.b;
      }
      break;
    }
  }
  return out;
}

namespace {
Eigen::VectorXd kron_vec(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const int d = static_cast<int>(a.size());
  Eigen::VectorXd v(d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) v[i * d + j] = a[i] * b[j];
  return v;
}
}  // namespace

SecondarySolution nearest_factorizing_in_hull(const Eigen::VectorXd& target,
                                              const Eigen::MatrixXd& G, int d,
                                              const SecondaryOptions& opts) {
  const int p = d * d;
  require(static_cast<int>(target.size()) == p && G.cols() == p, ErrorCategory::validation,
          "secondary target/generator dimensions inconsistent");
  SecondarySolution sol;
  sol.iterations = 0;

  // alternating projections between the hull and the rank-1 set, from target
  Eigen::VectorXd x = target, w;
  {
    const Rank1 r0 = rank1_projection(target, d);
    x = kron_vec(r0.a, r0.b);
  }
  Eigen::VectorXd hull = x, r1vec = x;
  for (int it = 0; it < opts.ap_iters; ++it) {
    SimplexQp qp = simplex_projection_qp(G, x, w.size() ? &w : nullptr, opts.qp_iters);
    w = qp.w;
    hull = G.transpose() * w;
    Rank1 r1 = rank1_projection(hull, d);
    r1vec = kron_vec(r1.a, r1.b);
    sol.ap_trace.push_back((hull - r1vec).norm());
    ++sol.iterations;
    x = r1vec;
    if (sol.ap_trace.back() < 1e-14) break;
  }

  // augmented Lagrangian: min ||p - target||^2  s.t.  p = G^T w, p rank-1
  Eigen::VectorXd y = Eigen::VectorXd::Zero(p);
  double mu = opts.mu0;
  Eigen::VectorXd pvec = r1vec, best_a, best_b, best_w;
  double best_res = std::numeric_limits<double>::infinity();
  double best_viol = std::numeric_limits<double>::infinity();
  double viol_prev = std::numeric_limits<double>::infinity();
  int feasible_stable = 0;
  for (int it = 0; it < opts.al_iters; ++it) {
    Eigen::VectorXd wt = pvec - y / mu;
    SimplexQp qp = simplex_projection_qp(G, wt, &w, opts.qp_iters);
    w = qp.w;
    hull = G.transpose() * w;
    const Eigen::VectorXd c = (target + 0.5 * y + 0.5 * mu * hull) / (1.0 + 0.5 * mu);
    Rank1 r1 = rank1_projection(c, d);
    pvec = kron_vec(r1.a, r1.b);
    const double viol = (hull - pvec).norm();
    y += mu * (hull - pvec);
    ++sol.iterations;
    const double res = (pvec - target).norm();
    if (viol < opts.feasibility_tol) {
      if (res < best_res - 1e-12) {
        best_res = res;
        best_viol = viol;
        best_a = r1.a;
        best_b = r1.b;
        best_w = w;
        feasible_stable = 0;
      } else {
        if (viol < best_viol) {
          best_viol = viol;
          best_a = r1.a;
          best_b = r1.b;
          best_w = w;
        }
        if (++feasible_stable >= 5) break;
      }
    } else if (viol > 0.7 * viol_prev) {
      mu = std::min(mu * opts.mu_growth, opts.mu_max);
    }
    viol_prev = viol;
  }
  if (best_res < std::numeric_limits<double>::infinity()) {
    sol.factor_a = best_a;
    sol.factor_b = best_b;
    sol.weights = best_w;
    sol.secondary = kron_vec(best_a, best_b);
    sol.residual = best_res;
    sol.violation = best_viol;
    sol.feasible = true;
  } else {
    Rank1 r1 = rank1_projection(pvec, d);
    sol.factor_a = r1.a;
    sol.factor_b = r1.b;
    sol.weights = w;
    sol.secondary = pvec;
    sol.residual = (pvec - target).norm();
    sol.violation = (G.transpose() * w - pvec).norm();
    sol.feasible = sol.violation < opts.feasibility_tol;
  }
  return sol;
}

SecondarySets secondary_sets(const GptModel& gm, const Catalog& catalog,
                             const SecondaryOptions& opts, int jobs) {
  SecondarySets sets;
  std::vector<int> state_targets, effect_targets;
  for (int i = 0; i < static_cast<int>(gm.row_ids.size()); ++i)
    if (catalog.elements[gm.row_ids[i]].is_product) state_targets.push_back(i);
  for (int j = 0; j < static_cast<int>(gm.col_ids.size()); ++j)
    if (catalog.elements[gm.col_ids[j]].is_product) effect_targets.push_back(j);
  require(!state_targets.empty() && !effect_targets.empty(), ErrorCategory::validation,
          "secondary extraction needs product targets");

  sets.states.resize(state_targets.size());
  sets.effects.resize(effect_targets.size());
  const Eigen::MatrixXd Et = gm.E.transpose();  // generators as rows
  const std::size_t ns = state_targets.size();
  parallel_for(ns + effect_targets.size(), jobs, [&](std::size_t k) {
    if (k < ns) {
      const int i = state_targets[k];
      sets.states[k] = nearest_factorizing_in_hull(gm.S.row(i).transpose(), gm.S, gm.d, opts);
      sets.states[k].target_id = gm.row_ids[i];
    } else {
      const int j = effect_targets[k - ns];
      sets.effects[k - ns] = nearest_factorizing_in_hull(Et.row(j).transpose(), Et, gm.d, opts);
      sets.effects[k - ns].target_id = gm.col_ids[j];
    }
  });

  auto median_residual = [](const std::vector<SecondarySolution>& sols) {
    std::vector<double> r;
    for (const auto& s : sols) r.push_back(s.residual);
    std::sort(r.begin(), r.end());
    const std::size_t n = r.size();
    return n == 0 ? 0.0 : (n % 2 ? r[n / 2] : 0.5 * (r[n / 2 - 1] + r[n / 2]));
  };
  sets.median_state_residual = median_residual(sets.states);
  sets.median_effect_residual = median_residual(sets.effects);
  return sets;
}

}  // namespace tomoloc
