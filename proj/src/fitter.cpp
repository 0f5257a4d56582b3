#include "tomoloc/fitter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "tomoloc/parallel.hpp"
#include "tomoloc/rng.hpp"
#include "tomoloc/secondary.hpp"

namespace tomoloc {

SplitPair split_counts(const DataMatrix& D, double fraction, std::uint64_t seed) {
  require(D.sampled && D.counts.size() > 0, ErrorCategory::validation,
          "split_counts needs a sampled data matrix with counts");
  require(fraction > 0.0 && fraction < 1.0, ErrorCategory::validation,
          "split fraction must lie strictly inside (0,1)");
  const int n = D.rows(), m = D.cols();
  SplitPair out{D, D};
  const Rng base{seed};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      Rng rng = base.child(0x59111u, static_cast<std::uint64_t>(i) * m + j);
      const int c = D.counts(i, j), N = D.trials(i, j);
      const int succ_tr = rng.binomial(c, fraction);
      const int fail_tr = rng.binomial(N - c, fraction);
      const int n_tr = succ_tr + fail_tr;
      const int n_te = N - n_tr;
      auto fill = [&](DataMatrix& M, int cc, int nn) {
        M.counts(i, j) = cc;
        M.trials(i, j) = nn;
        if (nn > 0) {
          const double phat = static_cast<double>(cc) / nn;
          M.freqs(i, j) = phat;
          // A share of f = nn/N runs keeps only a diluted slice of the parent's
          // excess noise: var(phat_share) = (1 + (kappa^2-1) f) phat qhat / nn.
          // Counting-statistics uncertainty at the share size.  Clamping phat
          // to the rule-of-succession range keeps zero-count shares from
          // collapsing onto the raw floor.
          const double lo = 1.0 / (nn + 2.0);
          const double pe = std::clamp(phat, lo, 1.0 - lo);
          M.sigmas(i, j) = std::max(std::sqrt(pe * (1.0 - pe) / nn), D.sigma_floor);
        } else {
          // no trials landed here; neutralize the cell with a huge sigma
          M.freqs(i, j) = 0.0;
          M.sigmas(i, j) = 1e6;
        }
      };
      fill(out.train, succ_tr, n_tr);
      fill(out.test, c - succ_tr, n_te);
    }
  return out;
}

namespace {

struct LbfgsOutcome {
  double f = 0.0;
  double grad_inf = 0.0;
  int iters = 0;
  bool settled = false;
};

template <class F>
LbfgsOutcome lbfgs(F&& fn, Eigen::VectorXd& x, int memory, int max_iters, double grad_tol,
                   double plateau_tol, int plateau_span) {
  const int n = static_cast<int>(x.size());
  Eigen::VectorXd g(n), gnew(n), p(n), q(n), xnew(n);
  std::vector<Eigen::VectorXd> S, Y;
  std::vector<double> rho;
  LbfgsOutcome out;
  double f = fn(x, &g);
  int plateau_count = 0;
  int it = 0;
  for (; it < max_iters; ++it) {
    const double ginf = g.lpNorm<Eigen::Infinity>();
    if (ginf <= grad_tol * std::max(1.0, std::abs(f))) {
      out.settled = true;
      break;
    }
    q = g;
    const int k = static_cast<int>(S.size());
    std::vector<double> alpha(k);
    for (int idx = k - 1; idx >= 0; --idx) {
      alpha[idx] = rho[idx] * S[idx].dot(q);
      q -= alpha[idx] * Y[idx];
    }
    if (k > 0) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    for (int idx = 0; idx < k; ++idx) {
      const double beta = rho[idx] * Y[idx].dot(q);
      q += (alpha[idx] - beta) * S[idx];
    }
    p = -q;
    double dir = p.dot(g);
    if (!(dir < 0.0)) {
      S.clear(); Y.clear(); rho.clear();
      p = -g;
      dir = p.dot(g);
      if (!(dir < 0.0)) { out.settled = true; break; }
    }
    double t = 1.0, fnew = f;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      xnew = x + t * p;
      fnew = fn(xnew, &gnew);
      if (std::isfinite(fnew) && fnew <= f + 1e-4 * t * dir) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (S.empty()) break;  // even steepest descent cannot decrease: stop
      S.clear(); Y.clear(); rho.clear();
      continue;
    }
    const Eigen::VectorXd s = xnew - x;
    const Eigen::VectorXd y = gnew - g;
    const double ys = y.dot(s);
    if (ys > 1e-10 * y.norm() * s.norm()) {
      S.push_back(s);
      Y.push_back(y);
      rho.push_back(1.0 / ys);
      if (static_cast<int>(S.size()) > memory) {
        S.erase(S.begin());
        Y.erase(Y.begin());
        rho.erase(rho.begin());
      }
    }
    x = xnew;
    g = gnew;
    if (std::abs(f - fnew) <= plateau_tol * std::max(1.0, std::abs(fnew))) {
      if (++plateau_count >= plateau_span) {
        f = fnew;
        out.settled = true;
        ++it;
        break;
      }
    } else {
      plateau_count = 0;
    }
    f = fnew;
  }
  out.f = f;
  out.grad_inf = g.lpNorm<Eigen::Infinity>();
  out.iters = it;
  return out;
}

// Exact weighted least-squares solves for the E0 / S0 blocks with all plate
// matrices held fixed (they enter the predictions linearly). A couple of
// alternations give every restart a data-adapted starting point.
void als_warmup(const ModelStructure& st, const DataMatrix& D, Eigen::VectorXd& theta,
                int sweeps, ModelWork& w) {
  const int d = st.d, d2 = st.d2();
  Eigen::MatrixXd Smat(d, d), Emat(d, d), X(d, d);
  Eigen::VectorXd x(d2);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    // --- E0 blocks: P_ij = < MA_j * Smat_i * MB_j^T , E0 > -----------------
    predict_into(st, theta, w);
    for (int k = 0; k < static_cast<int>(st.fin_values.size()); ++k) {
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d2, d2);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d2);
      for (int j = 0; j < st.m; ++j) {
        if (st.col_fin[j] != k) continue;
        for (int i = 0; i < st.n; ++i) {
          for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) Smat(a, b) = w.SM(i, a * d + b);
          X.noalias() = w.MA[j] * Smat * w.MB[j].transpose();
          for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) x[a * d + b] = X(a, b);
          const double wt = 1.0 / (D.sigmas(i, j) * D.sigmas(i, j));
          H.noalias() += wt * x * x.transpose();
          rhs.noalias() += wt * D.freqs(i, j) * x;
        }
      }
      H.diagonal().array() += 1e-10 * (1.0 + H.diagonal().maxCoeff());
      const Eigen::VectorXd e = H.ldlt().solve(rhs);
      for (int idx = 0; idx < d2; ++idx) theta[st.fin_offset(k) + idx] = e[idx];
    }
    // --- S0 blocks: P_ij = < A_i^T * Emat_j * B_i , S0 >, component 0 pinned
    predict_into(st, theta, w);
    if (d2 > 1) {
      for (int k = 0; k < static_cast<int>(st.init_values.size()); ++k) {
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d2 - 1, d2 - 1);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d2 - 1);
        for (int i = 0; i < st.n; ++i) {
          if (st.row_init[i] != k) continue;
          for (int j = 0; j < st.m; ++j) {
            for (int a = 0; a < d; ++a)
              for (int b = 0; b < d; ++b) Emat(a, b) = w.EM(j, a * d + b);
            X.noalias() = w.A[i].transpose() * Emat * w.B[i];
            for (int a = 0; a < d; ++a)
              for (int b = 0; b < d; ++b) x[a * d + b] = X(a, b);
            const double wt = 1.0 / (D.sigmas(i, j) * D.sigmas(i, j));
            H.noalias() += wt * x.tail(d2 - 1) * x.tail(d2 - 1).transpose();
            rhs.noalias() += wt * (D.freqs(i, j) - x[0]) * x.tail(d2 - 1);
          }
        }
        H.diagonal().array() += 1e-10 * (1.0 + H.diagonal().maxCoeff());
        const Eigen::VectorXd s = H.ldlt().solve(rhs);
        for (int idx = 1; idx < d2; ++idx) theta[st.init_offset(k) + idx - 1] = s[idx - 1];
      }
      predict_into(st, theta, w);
    }
  }
}

// Damped Gauss-Newton / Levenberg-Marquardt on the penalized weighted least
// squares. The out-of-range penalty contributes per-cell curvature and
// gradient terms, so stray predictions are pulled back instead of gated. With
// lambda = 0 and unit sigmas this is plain frequency least squares.
struct RefineParams {
  double lambda = 0.0;          // out-of-range penalty weight
  int max_iters = 25;
  double stop_per_cell = -1.0;  // early exit once objective/cell falls below
  double mu0 = 1e-4;            // initial damping
  double mu_up = 3.0;           // damping growth on rejected steps
  double gain_tol = 1e-8;       // relative gain that counts as stagnation
  int gain_span = 2;            // consecutive stagnant steps that end refinement
};

struct RefineScratch {
  Eigen::MatrixXd J;
  Eigen::VectorXd wts, gc, grow, dx, tnew;
};

struct RefineOutcome {
  double obj = 0.0;  // penalized objective at the final point
  int iters = 0;
  bool settled = false;
};

RefineOutcome levenberg_refine(const ModelStructure& st, const DataMatrix& D,
                               Eigen::VectorXd& theta, const RefineParams& rp, ModelWork& w,
                               RefineScratch& S) {
  const int n = st.n, m = st.m, np = st.num_params();
  const int nc = n * m;
  S.J.resize(nc, np);
  S.wts.resize(nc);
  S.gc.resize(nc);
  S.grow.resize(np);
  S.dx.resize(np);
  S.tnew.resize(np);
  const double lambda = rp.lambda;
  auto eval_obj = [&](const Eigen::VectorXd& th) {
    predict_into(st, th, w);
    double f = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        const double rr = (w.P(i, j) - D.freqs(i, j)) / D.sigmas(i, j);
        f += rr * rr;
        const double p = w.P(i, j);
        if (p < 0.0) f += lambda * p * p;
        else if (p > 1.0) f += lambda * (p - 1.0) * (p - 1.0);
      }
    return f;
  };
  RefineOutcome out;
  double fcur = eval_obj(theta);
  double mu = rp.mu0;
  int stagnant = 0;
  int it = 0;
  for (; it < rp.max_iters; ++it) {
    if (rp.stop_per_cell >= 0.0 && fcur / nc < rp.stop_per_cell) {
      out.settled = true;
      break;
    }
    predict_into(st, theta, w);  // refresh caches (eval may have left a rejected point)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        cell_gradient(st, theta, w, i, j, S.grow);
        const int c = i * m + j;
        S.J.row(c) = S.grow;
        const double p = w.P(i, j), s2 = D.sigmas(i, j) * D.sigmas(i, j);
        S.wts[c] = 1.0 / s2 + ((p < 0.0 || p > 1.0) ? lambda : 0.0);
        S.gc[c] = (p - D.freqs(i, j)) / s2 +
                  (p < 0.0 ? lambda * p : (p > 1.0 ? lambda * (p - 1.0) : 0.0));
      }
    const Eigen::MatrixXd JtWJ = S.J.transpose() * S.wts.asDiagonal() * S.J;
    const Eigen::VectorXd Jtg = S.J.transpose() * S.gc;
    bool accepted = false;
    for (int attempt = 0; attempt < 15; ++attempt) {
      Eigen::MatrixXd A = JtWJ;
      A.diagonal() += mu * JtWJ.diagonal();
      A.diagonal().array() += 1e-14;
      S.dx = A.ldlt().solve(-Jtg);
      S.tnew = theta + S.dx;
      const double fnew = eval_obj(S.tnew);
      if (std::isfinite(fnew) && fnew < fcur) {
        const double gain = fcur - fnew;
        theta = S.tnew;
        fcur = fnew;
        mu = std::max(mu * 0.3, 1e-14);
        accepted = true;
        stagnant = (gain <= rp.gain_tol * std::max(1.0, fcur)) ? stagnant + 1 : 0;
        break;
      }
      mu *= rp.mu_up;
    }
    if (!accepted || stagnant >= rp.gain_span) {
      out.settled = true;
      ++it;
      break;
    }
  }
  out.obj = fcur;
  out.iters = it;
  predict_into(st, theta, w);
  return out;
}

}  // namespace

FitResult fit_model(const DataMatrix& train, const DataMatrix* test, const ModelStructure& st,
                    const FitOptions& opts, const Eigen::VectorXd* warm_start) {
  require(train.rows() == st.n && train.cols() == st.m, ErrorCategory::validation,
          "training matrix shape does not match the model structure");
  require(opts.restarts >= 1, ErrorCategory::validation, "need at least one restart");
  ModelWork w;
  w.resize(st);
  RefineScratch scratch;
  const double cells = static_cast<double>(st.n) * st.m;
  const Rng restart_stream{opts.seed};

  FitResult best;
  best.structure = st;
  best.seed = opts.seed;
  long evals = 0;
  int total_iters = 0;
  const double pbar = train.freqs.mean();

  // Capture attempts run on the uniform-weight companion problem.
  DataMatrix uniform = train;
  uniform.sigmas.setConstant(1.0);

  // Noise scale of the data: the global basin is the only place where the
  // uniform-weight residual drops to ~mean sigma^2 per cell. Cells whose split
  // half received no trials carry a sentinel sigma and are excluded.
  double mean_s2 = 0.0, q50 = 0.0;
  {
    std::vector<double> sig;
    sig.reserve(static_cast<std::size_t>(train.sigmas.size()));
    for (int k = 0; k < train.sigmas.size(); ++k)
      if (train.sigmas.data()[k] < 1.0) sig.push_back(train.sigmas.data()[k]);
    if (sig.empty())
      sig.assign(train.sigmas.data(), train.sigmas.data() + train.sigmas.size());
    for (double s : sig) mean_s2 += s * s;
    mean_s2 /= static_cast<double>(sig.size());
    std::nth_element(sig.begin(), sig.begin() + sig.size() / 2, sig.end());
    q50 = sig[sig.size() / 2];
  }
  const double ls_stop = mean_s2;
  const double capture_cut = 3.0 * mean_s2;
  const double give_up = 3.0 * capture_cut;

  // A sub-cut uniform-weight residual does not guarantee the best chi^2 basin,
  // so keep up to two captured candidates and let a short chi^2 probe pick.
  struct Candidate {
    Eigen::VectorXd theta;
    double ls = std::numeric_limits<double>::infinity();
    int restart = -1;
  };
  std::vector<Candidate> captured_cands;
  double best_ls = std::numeric_limits<double>::infinity();
  int attempts = 0;
  for (int r = 0; r < opts.restarts; ++r) {
    const bool warm = r == 0 && warm_start;
    Eigen::VectorXd x =
        warm ? *warm_start : random_theta(st, restart_stream.child(0x1e57a97u, r).state, pbar);
    if (!warm) als_warmup(st, uniform, x, 2, w);
    auto fn = [&](const Eigen::VectorXd& xv, Eigen::VectorXd* gv) {
      const double f = objective(st, xv, uniform, 0.0, gv, w);
      if (opts.verbose > 0 && ++evals % opts.verbose == 0)
        std::fprintf(stderr, "[fit d2=%d] attempt %d eval %ld f %.6e\n", st.d2(), r, evals, f);
      return f;
    };
    const LbfgsOutcome out = lbfgs(fn, x, opts.lbfgs_memory, opts.warmup_iters, opts.grad_tol,
                                   opts.plateau_tol, opts.plateau_span);
    RefineParams gp;
    gp.lambda = 0.0;
    gp.max_iters = opts.gn_iters;
    gp.stop_per_cell = ls_stop;
    gp.mu0 = 1e-6;
    gp.mu_up = 4.0;
    gp.gain_tol = 1e-6;
    gp.gain_span = 3;
    const RefineOutcome ro = levenberg_refine(st, uniform, x, gp, w, scratch);
    total_iters += out.iters + ro.iters;
    ++attempts;
    const double ls = ro.obj / cells;
    if (ls < best_ls) {
      best_ls = ls;
      best.theta = x;
      best.best_restart = r;
    }
    if (ls < capture_cut) {
      best.captured = true;
      captured_cands.push_back({x, ls, r});
      if (captured_cands.size() >= 2) break;
    }
    if (r + 1 >= opts.min_attempts && best_ls > give_up) break;  // model cannot reach noise level
  }

  if (captured_cands.size() > 1) {
    // Short chi^2 probe of each captured basin; full polish goes to the winner.
    double probe_best = std::numeric_limits<double>::infinity();
    for (auto& cand : captured_cands) {
      auto chi2_fn = [&](const Eigen::VectorXd& xv, Eigen::VectorXd* gv) {
        return objective(st, xv, train, opts.lambda, gv, w);
      };
      const LbfgsOutcome po = lbfgs(chi2_fn, cand.theta, opts.lbfgs_memory, 300, opts.grad_tol,
                                    opts.plateau_tol, opts.plateau_span);
      RefineParams pp;
      pp.lambda = opts.lambda;
      pp.max_iters = 8;
      const RefineOutcome pr = levenberg_refine(st, train, cand.theta, pp, w, scratch);
      total_iters += po.iters + pr.iters;
      if (pr.obj < probe_best) {
        probe_best = pr.obj;
        best.theta = cand.theta;
        best.best_restart = cand.restart;
        best_ls = cand.ls;
      }
    }
  }

  // Refinement against the true sigmas: one softened level, then exact
  // weights. Curvature steps alone are too expensive to run to stationarity
  // on the large structures, so each exact-weight round interleaves a cheap
  // gradient polish with a short curvature settle and stops on plateau.
  DataMatrix level1 = train;
  level1.sigmas = train.sigmas.cwiseMax(q50 / 3.0);
  RefineParams lp;
  lp.lambda = opts.lambda;
  lp.max_iters = opts.ladder_iters;
  const RefineOutcome l1 = levenberg_refine(st, level1, best.theta, lp, w, scratch);
  total_iters += l1.iters;
  lp.gain_tol = 1e-9;
  double prev_obj = std::numeric_limits<double>::infinity();
  for (int round = 0; round < 6; ++round) {
    auto chi2_fn = [&](const Eigen::VectorXd& xv, Eigen::VectorXd* gv) {
      return objective(st, xv, train, opts.lambda, gv, w);
    };
    const LbfgsOutcome po = lbfgs(chi2_fn, best.theta, opts.lbfgs_memory, opts.warmup_iters,
                                  opts.grad_tol, opts.plateau_tol, opts.plateau_span);
    const RefineOutcome l2 = levenberg_refine(st, train, best.theta, lp, w, scratch);
    total_iters += po.iters + l2.iters;
    if (l2.obj >= prev_obj * (1.0 - 1e-7)) break;
    prev_obj = l2.obj;
  }

  predict_into(st, best.theta, w);
  const double best_chi2 = chi_squared(train, w.P);
  best.iterations = total_iters;
  best.attempts = attempts;
  best.ls_per_cell = best_ls;
  best.chi2_train = best_chi2;
  best.chi2_train_per_cell = best_chi2 / cells;
  best.converged = std::isfinite(best_chi2);
  {
    Eigen::VectorXd g(st.num_params());
    objective(st, best.theta, train, opts.lambda, &g, w);
    best.grad_inf = g.lpNorm<Eigen::Infinity>();
  }
  predict_into(st, best.theta, w);
  if (test) {
    require(test->rows() == st.n && test->cols() == st.m, ErrorCategory::validation,
            "test matrix shape does not match the model structure");
    best.chi2_test = chi_squared(*test, w.P);
    best.chi2_test_per_cell = best.chi2_test / cells;
  }
  return best;
}

DimensionScan dimension_scan(const DataMatrix& D, const Catalog& catalog,
                             const AngleTable& table, const std::vector<int>& dims2,
                             int repetitions, double fraction, const FitOptions& opts,
                             std::uint64_t seed, int jobs) {
  require(!dims2.empty(), ErrorCategory::validation, "dimension list is empty");
  require(repetitions >= 1, ErrorCategory::validation, "need at least one repetition");
  std::vector<int> dims = dims2;
  std::sort(dims.begin(), dims.end());
  std::vector<ModelStructure> structures;
  for (int dim2 : dims) {
    const int d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim2))));
    require(d * d == dim2, ErrorCategory::validation,
            "model dimension must be a perfect square (local embedding)");
    structures.push_back(ModelStructure::build(catalog, table, D.row_ids, D.col_ids, d));
  }

  DimensionScan scan;
  scan.dims = dims;
  scan.fits.assign(repetitions, std::vector<FitResult>(dims.size()));
  const Rng base{seed};

  parallel_for(static_cast<std::size_t>(repetitions), jobs, [&](std::size_t rep) {
    const SplitPair split =
        split_counts(D, fraction, base.child(0x59117u, static_cast<std::uint64_t>(rep)).state);
    for (std::size_t k = 0; k < dims.size(); ++k) {
      FitOptions local = opts;
      local.seed = base.child(0xf17u + static_cast<std::uint64_t>(rep), k).state;
      scan.fits[rep][k] = fit_model(split.train, &split.test, structures[k], local);
    }
  });

  scan.rows.resize(dims.size());
  for (std::size_t k = 0; k < dims.size(); ++k) {
    DimensionScanRow& row = scan.rows[k];
    row.dim2 = dims[k];
    std::vector<double> tr, te;
    for (int rep = 0; rep < repetitions; ++rep) {
      const FitResult& f = scan.fits[rep][k];
      if (!f.converged) {
        ++row.excluded;
        ++scan.warnings;
        continue;
      }
      tr.push_back(f.chi2_train_per_cell);
      te.push_back(f.chi2_test_per_cell);
    }
    row.converged = static_cast<int>(tr.size());
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
      mean = 0.0; sd = 0.0;
      if (v.empty()) return;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      if (v.size() > 1) {
        for (double x : v) sd += (x - mean) * (x - mean);
        sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
      }
    };
    mean_std(tr, row.mean_train, row.std_train);
    mean_std(te, row.mean_test, row.std_test);
  }

  scan.selection.assign(repetitions, -1);
  for (int rep = 0; rep < repetitions; ++rep) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < dims.size(); ++k) {
      const FitResult& f = scan.fits[rep][k];
      if (f.converged && f.chi2_test_per_cell < best) {
        best = f.chi2_test_per_cell;
        scan.selection[rep] = dims[k];
      }
    }
  }
  double best_mean = std::numeric_limits<double>::infinity();
  scan.selected_dim2 = -1;
  for (std::size_t k = 0; k < dims.size(); ++k)
    if (scan.rows[k].converged > 0 && scan.rows[k].mean_test < best_mean) {
      best_mean = scan.rows[k].mean_test;
      scan.selected_dim2 = dims[k];
    }
  require(scan.selected_dim2 > 0, ErrorCategory::convergence,
          "no model dimension produced a converged fit");
  return scan;
}

namespace {
// Columns: v, then an orthonormal completion of span{v} scaled to ||v||.
Eigen::MatrixXd completion_frame(const Eigen::VectorXd& v) {
  const int d = static_cast<int>(v.size());
  Eigen::MatrixXd frame(d, d);
  frame.col(0) = v;
  if (d == 1) return frame;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(v);
  const Eigen::MatrixXd Q = qr.householderQ();
  const double scale = v.norm();
  for (int c = 1; c < d; ++c) frame.col(c) = scale * Q.col(c);
  return frame;
}
}  // namespace

GptModel extract_states_effects(const FitResult& fit) {
  const ModelStructure& st = fit.structure;
  ModelWork w;
  w.resize(st);
  predict_into(st, fit.theta, w);
  GptModel gm;
  gm.S = w.SM;
  gm.E = w.EM.transpose();
  gm.row_ids = st.row_ids;
  gm.col_ids = st.col_ids;
  gm.d = st.d;

  const int d = st.d;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(gm.S, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(st.n);
  const Eigen::VectorXd u = svd.solve(ones);
  const double resid = (gm.S * u - ones).lpNorm<Eigen::Infinity>();
  const Rank1 r1 = rank1_projection(u, d);
  const double u_norm = u.norm();
  const bool ok = u_norm > 1e-8 && resid < 0.5 && r1.error < 0.5 * u_norm && !r1.degenerate;
  if (!ok) return gm;  // fallback: raw fitted vectors, gauge_fixed stays false

  const Eigen::MatrixXd LamA = completion_frame(r1.a);
  const Eigen::MatrixXd LamB = completion_frame(r1.b);
  Eigen::MatrixXd Lam(d * d, d * d);
  for (int a1 = 0; a1 < d; ++a1)
    for (int b1 = 0; b1 < d; ++b1)
      for (int a2 = 0; a2 < d; ++a2)
        for (int b2 = 0; b2 < d; ++b2)
          Lam(a1 * d + b1, a2 * d + b2) = LamA(a1, a2) * LamB(b1, b2);
  gm.S = gm.S * Lam;
  gm.E = Eigen::PartialPivLU<Eigen::MatrixXd>(Lam).solve(gm.E);
  gm.gauge_fixed = true;
  return gm;
}

}  // namespace tomoloc
