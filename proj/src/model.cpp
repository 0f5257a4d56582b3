#include "tomoloc/model.hpp"

#include <algorithm>
#include <cmath>

#include "tomoloc/rng.hpp"

namespace tomoloc {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Operator2Q diagonal_part(const Operator2Q& op) {
  Operator2Q out = Operator2Q::Zero();
  for (int k = 0; k < 4; ++k) out(k, k) = op(k, k);
  return out;
}
}  // namespace

int PlateGroup::find(double value) const {
  for (int k = 0; k < static_cast<int>(settings.size()); ++k)
    if (std::abs(settings[k] - value) < 1e-9) return k;
  throw Error(ErrorCategory::validation, "plate setting not in group");
}

int ModelStructure::num_params() const {
  int total = static_cast<int>(init_values.size()) * (d2() - 1) +
              static_cast<int>(fin_values.size()) * d2();
  for (const auto& g : prep) total += static_cast<int>(g.settings.size()) * d2();
  for (const auto& g : meas) total += static_cast<int>(g.settings.size()) * d2();
  return total;
}

int ModelStructure::init_offset(int which) const { return which * (d2() - 1); }

int ModelStructure::fin_offset(int which) const {
  return static_cast<int>(init_values.size()) * (d2() - 1) + which * d2();
}

int ModelStructure::prep_offset(int g, int s) const {
  int off = static_cast<int>(init_values.size()) * (d2() - 1) +
            static_cast<int>(fin_values.size()) * d2();
  for (int k = 0; k < g; ++k) off += static_cast<int>(prep[k].settings.size()) * d2();
  return off + s * d2();
}

int ModelStructure::meas_offset(int g, int s) const {
  int off = prep_offset(4, static_cast<int>(prep[4].settings.size()));
  for (int k = 0; k < g; ++k) off += static_cast<int>(meas[k].settings.size()) * d2();
  return off + s * d2();
}

ModelStructure ModelStructure::build(const Catalog& catalog, const AngleTable& table,
                                     const std::vector<int>& row_ids,
                                     const std::vector<int>& col_ids, int d) {
  require(d >= 1 && d <= 8, ErrorCategory::validation, "model dimension out of range");
  require(!row_ids.empty() && !col_ids.empty(), ErrorCategory::validation,
          "model needs at least one row and column");
  const int ncat = static_cast<int>(catalog.elements.size());
  for (int id : row_ids)
    require(id >= 0 && id < ncat, ErrorCategory::validation, "row id outside catalog");
  for (int id : col_ids)
    require(id >= 0 && id < ncat, ErrorCategory::validation, "col id outside catalog");

  ModelStructure st;
  st.d = d;
  st.n = static_cast<int>(row_ids.size());
  st.m = static_cast<int>(col_ids.size());
  st.row_ids = row_ids;
  st.col_ids = col_ids;

  auto collect = [](std::vector<double>& vals, double v) {
    for (double x : vals)
      if (std::abs(x - v) < 1e-9) return;
    vals.push_back(v);
  };
  for (int g = 0; g < 5; ++g) {
    st.prep[g].plate = 2 + g;
    st.meas[g].plate = 7 + g;
  }
  for (int id : row_ids) {
    const AngleTuple& t = table.prep[id];
    collect(st.init_values, t[0]);
    for (int g = 0; g < 5; ++g) collect(st.prep[g].settings, t[1 + g]);
  }
  for (int id : col_ids) {
    const AngleTuple& t = table.meas[id];
    collect(st.fin_values, t[5]);
    for (int g = 0; g < 5; ++g) collect(st.meas[g].settings, t[g]);
  }
  std::sort(st.init_values.begin(), st.init_values.end());
  std::sort(st.fin_values.begin(), st.fin_values.end());
  for (int g = 0; g < 5; ++g) {
    std::sort(st.prep[g].settings.begin(), st.prep[g].settings.end());
    std::sort(st.meas[g].settings.begin(), st.meas[g].settings.end());
  }

  auto value_index = [](const std::vector<double>& vals, double v) {
    for (int k = 0; k < static_cast<int>(vals.size()); ++k)
      if (std::abs(vals[k] - v) < 1e-9) return k;
    throw Error(ErrorCategory::validation, "setting lookup failed");
  };
  st.row_init.resize(st.n);
  st.row_setting.resize(st.n);
  for (int i = 0; i < st.n; ++i) {
    const AngleTuple& t = table.prep[row_ids[i]];
    st.row_init[i] = value_index(st.init_values, t[0]);
    for (int g = 0; g < 5; ++g) st.row_setting[i][g] = st.prep[g].find(t[1 + g]);
  }
  st.col_fin.resize(st.m);
  st.col_setting.resize(st.m);
  for (int j = 0; j < st.m; ++j) {
    const AngleTuple& t = table.meas[col_ids[j]];
    st.col_fin[j] = value_index(st.fin_values, t[5]);
    for (int g = 0; g < 5; ++g) st.col_setting[j][g] = st.meas[g].find(t[g]);
  }
  return st;
}

long parameter_count(int dim2, ParamMode mode, int n, int m) {
  require(dim2 >= 1, ErrorCategory::validation, "dimension must be positive");
  if (mode == ParamMode::structured) return 2L * (dim2 - 1) + 28L * dim2;
  return 2L * (dim2 - 1) + 2L * dim2 * n + 2L * dim2 * m + 2L * dim2;
}

void ModelWork::resize(const ModelStructure& st) {
  const int d = st.d, d2 = st.d2();
  auto mats = [&](std::size_t count) { return std::vector<Eigen::MatrixXd>(count, Eigen::MatrixXd(d, d)); };
  Tprep.assign(5, {});
  Tmeas.assign(5, {});
  for (int g = 0; g < 5; ++g) {
    Tprep[g] = mats(st.prep[g].settings.size());
    Tmeas[g] = mats(st.meas[g].settings.size());
  }
  S0 = mats(st.init_values.size());
  E0 = mats(st.fin_values.size());
  A = mats(st.n); B = mats(st.n); P54 = mats(st.n);
  MA = mats(st.m); MB = mats(st.m); P109 = mats(st.m);
  SM.resize(st.n, d2);
  EM.resize(st.m, d2);
  P.resize(st.n, st.m);
  C.resize(st.n, st.m);
  dSM.resize(st.n, d2);
  dEM.resize(st.m, d2);
  dS.resize(d, d); dE.resize(d, d); dA.resize(d, d); dB.resize(d, d);
  dMA.resize(d, d); dMB.resize(d, d); t1.resize(d, d);
}

void predict_into(const ModelStructure& st, const Eigen::VectorXd& theta, ModelWork& w) {
  const int d = st.d, d2 = st.d2();
  require(theta.size() == st.num_params(), ErrorCategory::validation,
          "parameter vector length mismatch");
  for (int g = 0; g < 5; ++g) {
    for (int s = 0; s < static_cast<int>(st.prep[g].settings.size()); ++s)
      w.Tprep[g][s] = ConstMap(theta.data() + st.prep_offset(g, s), d, d);
    for (int s = 0; s < static_cast<int>(st.meas[g].settings.size()); ++s)
      w.Tmeas[g][s] = ConstMap(theta.data() + st.meas_offset(g, s), d, d);
  }
  for (int k = 0; k < static_cast<int>(st.init_values.size()); ++k) {
    const double* block = theta.data() + st.init_offset(k);
    Eigen::MatrixXd& S0 = w.S0[k];
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        const int idx = a * d + b;
        S0(a, b) = (idx == 0) ? 1.0 : block[idx - 1];
      }
  }
  for (int k = 0; k < static_cast<int>(st.fin_values.size()); ++k)
    w.E0[k] = ConstMap(theta.data() + st.fin_offset(k), d, d);

  for (int i = 0; i < st.n; ++i) {
    const auto& s = st.row_setting[i];
    w.A[i].noalias() = w.Tprep[1][s[1]] * w.Tprep[0][s[0]];
    w.P54[i].noalias() = w.Tprep[3][s[3]] * w.Tprep[2][s[2]];
    w.B[i].noalias() = w.Tprep[4][s[4]] * w.P54[i];
    w.t1.noalias() = w.A[i] * w.S0[st.row_init[i]];
    w.dS.noalias() = w.t1 * w.B[i].transpose();
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) w.SM(i, a * d + b) = w.dS(a, b);
  }
  for (int j = 0; j < st.m; ++j) {
    const auto& s = st.col_setting[j];
    w.MA[j].noalias() = w.Tmeas[1][s[1]] * w.Tmeas[0][s[0]];
    w.P109[j].noalias() = w.Tmeas[3][s[3]] * w.Tmeas[2][s[2]];
    w.MB[j].noalias() = w.Tmeas[4][s[4]] * w.P109[j];
    w.t1.noalias() = w.MA[j].transpose() * w.E0[st.col_fin[j]];
    w.dE.noalias() = w.t1 * w.MB[j];
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) w.EM(j, a * d + b) = w.dE(a, b);
  }
  w.P.noalias() = w.SM * w.EM.transpose();
  (void)d2;
}

Eigen::MatrixXd predict(const ModelStructure& st, const Eigen::VectorXd& theta) {
  ModelWork w;
  w.resize(st);
  predict_into(st, theta, w);
  return w.P;
}

double chi_squared(const DataMatrix& D, const Eigen::MatrixXd& P) {
  require(D.freqs.rows() == P.rows() && D.freqs.cols() == P.cols(), ErrorCategory::validation,
          "data/prediction shape mismatch");
  require((D.sigmas.array() > 0.0).all(), ErrorCategory::validation,
          "chi_squared requires positive sigmas");
  return ((D.freqs - P).array() / D.sigmas.array()).square().sum();
}

namespace {

// Accumulate composite-level adjoints into the flat gradient for one row.
void backward_row(const ModelStructure& st, ModelWork& w, int i, Eigen::VectorXd& grad) {
  const int d = st.d;
  const auto& s = st.row_setting[i];
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) w.dS(a, b) = w.dSM(i, a * d + b);
  const Eigen::MatrixXd& S0 = w.S0[st.row_init[i]];
  w.dA.noalias() = w.dS * w.B[i] * S0.transpose();
  w.dB.noalias() = w.dS.transpose() * w.A[i] * S0;
  // initial-state block (component 0 pinned)
  w.t1.noalias() = w.A[i].transpose() * w.dS * w.B[i];
  double* ginit = grad.data() + st.init_offset(st.row_init[i]);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      const int idx = a * d + b;
      if (idx > 0) ginit[idx - 1] += w.t1(a, b);
    }
  MutMap(grad.data() + st.prep_offset(1, s[1]), d, d).noalias() +=
      w.dA * w.Tprep[0][s[0]].transpose();
  MutMap(grad.data() + st.prep_offset(0, s[0]), d, d).noalias() +=
      w.Tprep[1][s[1]].transpose() * w.dA;
  MutMap(grad.data() + st.prep_offset(4, s[4]), d, d).noalias() +=
      w.dB * w.P54[i].transpose();
  w.t1.noalias() = w.Tprep[4][s[4]].transpose() * w.dB;  // adjoint of T5*T4
  MutMap(grad.data() + st.prep_offset(3, s[3]), d, d).noalias() +=
      w.t1 * w.Tprep[2][s[2]].transpose();
  MutMap(grad.data() + st.prep_offset(2, s[2]), d, d).noalias() +=
      w.Tprep[3][s[3]].transpose() * w.t1;
}

void backward_col(const ModelStructure& st, ModelWork& w, int j, Eigen::VectorXd& grad) {
  const int d = st.d;
  const auto& s = st.col_setting[j];
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) w.dE(a, b) = w.dEM(j, a * d + b);
  const Eigen::MatrixXd& E0 = w.E0[st.col_fin[j]];
  w.dMA.noalias() = E0 * w.MB[j] * w.dE.transpose();
  w.dMB.noalias() = E0.transpose() * w.MA[j] * w.dE;
  MutMap(grad.data() + st.fin_offset(st.col_fin[j]), d, d).noalias() +=
      w.MA[j] * w.dE * w.MB[j].transpose();
  MutMap(grad.data() + st.meas_offset(1, s[1]), d, d).noalias() +=
      w.dMA * w.Tmeas[0][s[0]].transpose();
  MutMap(grad.data() + st.meas_offset(0, s[0]), d, d).noalias() +=
      w.Tmeas[1][s[1]].transpose() * w.dMA;
  MutMap(grad.data() + st.meas_offset(4, s[4]), d, d).noalias() +=
      w.dMB * w.P109[j].transpose();
  w.t1.noalias() = w.Tmeas[4][s[4]].transpose() * w.dMB;  // adjoint of T10*T9
  MutMap(grad.data() + st.meas_offset(3, s[3]), d, d).noalias() +=
      w.t1 * w.Tmeas[2][s[2]].transpose();
  MutMap(grad.data() + st.meas_offset(2, s[2]), d, d).noalias() +=
      w.Tmeas[3][s[3]].transpose() * w.t1;
}

}  // namespace

double objective(const ModelStructure& st, const Eigen::VectorXd& theta, const DataMatrix& D,
                 double lambda, Eigen::VectorXd* grad, ModelWork& w) {
  require(D.freqs.rows() == st.n && D.freqs.cols() == st.m, ErrorCategory::validation,
          "data shape does not match model structure");
  predict_into(st, theta, w);
  double value = 0.0;
  for (int i = 0; i < st.n; ++i)
    for (int j = 0; j < st.m; ++j) {
      const double sigma = D.sigmas(i, j);
      const double r = (D.freqs(i, j) - w.P(i, j)) / sigma;
      value += r * r;
      const double p = w.P(i, j);
      double pen = 0.0, dpen = 0.0;
      if (p < 0.0) {
        pen = p * p;
        dpen = 2.0 * p;
      } else if (p > 1.0) {
        pen = (p - 1.0) * (p - 1.0);
        dpen = 2.0 * (p - 1.0);
      }
      value += lambda * pen;
      if (grad) w.C(i, j) = -2.0 * r / sigma + lambda * dpen;
    }
  if (grad) {
    grad->setZero(st.num_params());
    w.dSM.noalias() = w.C * w.EM;
    w.dEM.noalias() = w.C.transpose() * w.SM;
    for (int i = 0; i < st.n; ++i) backward_row(st, w, i, *grad);
    for (int j = 0; j < st.m; ++j) backward_col(st, w, j, *grad);
  }
  return value;
}

void cell_gradient(const ModelStructure& st, const Eigen::VectorXd& theta, ModelWork& w,
                   int i, int j, Eigen::VectorXd& out) {
  // assumes predict_into(st, theta, w) has been called for this theta
  (void)theta;
  out.setZero(st.num_params());
  w.dSM.row(i) = w.EM.row(j);
  w.dEM.row(j) = w.SM.row(i);
  backward_row(st, w, i, out);
  backward_col(st, w, j, out);
}

namespace {
// Random orthogonal matrix (Haar-ish): QR of a Gaussian matrix, sign-fixed.
Eigen::MatrixXd random_orthogonal(int d, Rng& rng) {
  Eigen::MatrixXd G(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) G(a, b) = rng.next_normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ();
  const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < d; ++c)
    if (R(c, c) < 0) Q.col(c) = -Q.col(c);
  return Q;
}
}  // namespace

Eigen::VectorXd random_theta(const ModelStructure& st, std::uint64_t seed, double pbar) {
  Rng rng{seed};
  const int d = st.d;
  const double jitter = 0.30;  // diversifies restarts (essential at d = 1)
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(st.num_params());
  auto put_block = [&](int off) {
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(d, d);
    T(0, 0) = 1.0;
    if (d > 1) T.bottomRightCorner(d - 1, d - 1) = random_orthogonal(d - 1, rng);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        theta[off + a * d + b] = T(a, b) + jitter * rng.uniform(-1.0, 1.0);
  };
  for (int g = 0; g < 5; ++g) {
    for (int s = 0; s < static_cast<int>(st.prep[g].settings.size()); ++s)
      put_block(st.prep_offset(g, s));
    for (int s = 0; s < static_cast<int>(st.meas[g].settings.size()); ++s)
      put_block(st.meas_offset(g, s));
  }
  for (int k = 0; k < static_cast<int>(st.init_values.size()); ++k) {
    Eigen::VectorXd a(d), b(d);
    a[0] = 1.0;
    b[0] = 1.0;
    for (int i = 1; i < d; ++i) {
      a[i] = 0.7 * rng.uniform(-1.0, 1.0);
      b[i] = 0.7 * rng.uniform(-1.0, 1.0);
    }
    for (int ai = 0; ai < d; ++ai)
      for (int bi = 0; bi < d; ++bi) {
        const int idx = ai * d + bi;
        if (idx > 0) theta[st.init_offset(k) + idx - 1] = a[ai] * b[bi];
      }
  }
  for (int k = 0; k < static_cast<int>(st.fin_values.size()); ++k) {
    Eigen::VectorXd u(d), v(d);
    const double s0 = std::sqrt(std::max(pbar, 1e-3));
    u[0] = s0;
    v[0] = s0;
    for (int i = 1; i < d; ++i) {
      u[i] = 0.4 * rng.uniform(-1.0, 1.0);
      v[i] = 0.4 * rng.uniform(-1.0, 1.0);
    }
    for (int ui = 0; ui < d; ++ui)
      for (int vi = 0; vi < d; ++vi)
        theta[st.fin_offset(k) + ui * d + vi] = u[ui] * v[vi];
  }
  return theta;
}

Eigen::VectorXd quantum_theta(const ModelStructure& st, double visibility) {
  require(st.d == 4, ErrorCategory::validation, "quantum embedding requires d = 4");
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(st.num_params());
  const auto sigma = pauli_matrices();

  auto transfer = [&](const Eigen::Matrix2cd& u) {
    Eigen::MatrixXd T(4, 4);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        T(a, b) = 0.5 * (sigma[a] * u * sigma[b] * u.adjoint()).trace().real();
    return T;
  };
  for (int g = 0; g < 5; ++g) {
    for (int s = 0; s < static_cast<int>(st.prep[g].settings.size()); ++s) {
      const Eigen::MatrixXd T =
          transfer(waveplate(st.prep[g].settings[s], plate_retardance(st.prep[g].plate)));
      MutMap(theta.data() + st.prep_offset(g, s), 4, 4) = T;
    }
    for (int s = 0; s < static_cast<int>(st.meas[g].settings.size()); ++s) {
      const Eigen::MatrixXd T =
          transfer(waveplate(st.meas[g].settings[s], plate_retardance(st.meas[g].plate)));
      MutMap(theta.data() + st.meas_offset(g, s), 4, 4) = T;
    }
  }
  for (int k = 0; k < static_cast<int>(st.init_values.size()); ++k) {
    const Ket2Q ket = initial_ket(st.init_values[k]);
    const GptVec s = to_gpt_state(projector(ket));
    for (int idx = 1; idx < 16; ++idx) theta[st.init_offset(k) + idx - 1] = s[idx];
  }
  for (int k = 0; k < static_cast<int>(st.fin_values.size()); ++k) {
    const Ket2Q ket = final_ket(st.fin_values[k]);
    const Operator2Q proj = projector(ket);
    const bool entangled = std::abs(st.fin_values[k]) > 1e-12;
    const Operator2Q damped =
        entangled ? (visibility * proj + (1.0 - visibility) * diagonal_part(proj)).eval() : proj;
    const GptVec e = to_gpt_effect(damped);
    for (int idx = 0; idx < 16; ++idx) theta[st.fin_offset(k) + idx] = e[idx];
  }
  return theta;
}

Eigen::VectorXd embed_theta(const ModelStructure& small, const Eigen::VectorXd& theta_small,
                            const ModelStructure& big) {
  require(small.d <= big.d, ErrorCategory::validation, "embedding requires growing dimension");
  require(small.n == big.n && small.m == big.m &&
              small.init_values.size() == big.init_values.size() &&
              small.fin_values.size() == big.fin_values.size(),
          ErrorCategory::validation, "embedding requires identical wiring");
  const int ds = small.d, db = big.d;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(big.num_params());
  auto map_vec = [&](const double* src_full, double* dst_full) {
    // src/dst are full d2 vectors in row-major (a,b) order
    for (int a = 0; a < ds; ++a)
      for (int b = 0; b < ds; ++b) dst_full[a * db + b] = src_full[a * ds + b];
  };
  std::vector<double> buf_small(ds * ds), buf_big(db * db);
  for (int k = 0; k < static_cast<int>(small.init_values.size()); ++k) {
    buf_small[0] = 1.0;
    for (int idx = 1; idx < ds * ds; ++idx)
      buf_small[idx] = theta_small[small.init_offset(k) + idx - 1];
    std::fill(buf_big.begin(), buf_big.end(), 0.0);
    map_vec(buf_small.data(), buf_big.data());
    for (int idx = 1; idx < db * db; ++idx)
      theta[big.init_offset(k) + idx - 1] = buf_big[idx];
  }
  for (int k = 0; k < static_cast<int>(small.fin_values.size()); ++k)
    map_vec(theta_small.data() + small.fin_offset(k), theta.data() + big.fin_offset(k));
  for (int g = 0; g < 5; ++g) {
    require(small.prep[g].settings.size() == big.prep[g].settings.size() &&
                small.meas[g].settings.size() == big.meas[g].settings.size(),
            ErrorCategory::validation, "embedding requires identical wiring");
    for (int s = 0; s < static_cast<int>(small.prep[g].settings.size()); ++s)
      map_vec(theta_small.data() + small.prep_offset(g, s), theta.data() + big.prep_offset(g, s));
    for (int s = 0; s < static_cast<int>(small.meas[g].settings.size()); ++s)
      map_vec(theta_small.data() + small.meas_offset(g, s), theta.data() + big.meas_offset(g, s));
  }
  return theta;
}

}  // namespace tomoloc
