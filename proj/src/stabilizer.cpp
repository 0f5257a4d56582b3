#include "tomoloc/stabilizer.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace tomoloc {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
const Complex kI(0.0, 1.0);

Ket2Q kron2(const Eigen::Vector2cd& a, const Eigen::Vector2cd& b) {
  Ket2Q v;
  v << a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1];
  return v;
}

Operator2Q kron2(const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
  Operator2Q m;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      m.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return m;
}
}  // namespace

const char* const kSingleQubitLabels[6] = {"H", "V", "D", "A", "R", "L"};

std::array<Eigen::Vector2cd, 6> single_qubit_states() {
  std::array<Eigen::Vector2cd, 6> s;
  s[0] << 1, 0;                                   // H
  s[1] << 0, 1;                                   // V
  s[2] << kInvSqrt2, kInvSqrt2;                   // D
  s[3] << kInvSqrt2, -kInvSqrt2;                  // A
  s[4] << kInvSqrt2, kI * kInvSqrt2;              // R
  s[5] << kInvSqrt2, -kI * kInvSqrt2;             // L
  return s;
}

template <class Vec>
static Vec phase_fix_impl(const Vec& v) {
  for (int i = 0; i < v.size(); ++i) {
    double a = std::abs(v[i]);
    if (a > 1e-9) return v * (std::conj(v[i]) / a);
  }
  return v;
}

Ket2Q phase_fix(const Ket2Q& v) { return phase_fix_impl(v); }
Eigen::Vector2cd phase_fix(const Eigen::Vector2cd& v) { return phase_fix_impl(v); }

bool same_ket(const Ket2Q& a, const Ket2Q& b, double tol) {
  return std::abs(std::abs(a.dot(b)) - 1.0) < tol;  // Eigen dot conjugates the first arg
}

std::array<Eigen::Matrix2cd, 4> pauli_matrices() {
  std::array<Eigen::Matrix2cd, 4> p;
  p[0] << 1, 0, 0, 1;
  p[1] << 0, 1, 1, 0;
  p[2] << 0, -kI, kI, 0;
  p[3] << 1, 0, 0, -1;
  return p;
}

std::array<Operator2Q, 16> pauli_products() {
  auto p = pauli_matrices();
  std::array<Operator2Q, 16> pp;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      pp[4 * a + b] = kron2(p[a], p[b]);
  return pp;
}

Operator2Q projector(const Ket2Q& ket) { return ket * ket.adjoint(); }

static void require_hermitian(const Operator2Q& op, const char* what) {
  require((op - op.adjoint()).cwiseAbs().maxCoeff() < 1e-10, ErrorCategory::validation,
          std::string(what) + " is not Hermitian");
}

double born_probability(const Operator2Q& state, const Operator2Q& effect) {
  require_hermitian(state, "state operator");
  require_hermitian(effect, "effect operator");
  return (effect * state).trace().real();
}

GptVec to_gpt_state(const Operator2Q& rho) {
  static const auto pp = pauli_products();
  GptVec v;
  for (int k = 0; k < 16; ++k) v[k] = (rho * pp[k]).trace().real();
  return v;
}

GptVec to_gpt_effect(const Operator2Q& effect) {
  static const auto pp = pauli_products();
  GptVec v;
  for (int k = 0; k < 16; ++k) v[k] = 0.25 * (effect * pp[k]).trace().real();
  return v;
}

static bool ket_is_real(const Ket2Q& ket) {
  for (int i = 0; i < 4; ++i)
    if (std::abs(ket[i].imag()) > 1e-12) return false;
  return true;
}

Catalog build_catalog() {
  auto sq = single_qubit_states();
  // index of the orthogonal partner within the H,V,D,A,R,L order
  constexpr int perp[6] = {1, 0, 3, 2, 5, 4};

  Catalog cat;
  auto add = [&cat](const std::string& label, const Ket2Q& raw, bool is_product) {
    StabilizerElement e;
    e.index = (int)cat.elements.size();
    e.label = label;
    e.ket = phase_fix(raw);
    require(std::abs(e.ket.norm() - 1.0) < 1e-12, ErrorCategory::validation,
            "catalog ket not normalized: " + label);
    e.is_product = is_product;
    e.is_real = ket_is_real(e.ket);
    Operator2Q p = projector(e.ket);
    e.gpt_state = to_gpt_state(p);
    e.gpt_effect = to_gpt_effect(p);
    cat.elements.push_back(std::move(e));
  };

  for (int j = 0; j < 6; ++j)
    for (int k = 0; k < 6; ++k) {
      Ket2Q v = kron2(sq[j], sq[k]);
      add(std::string(kSingleQubitLabels[j]) + kSingleQubitLabels[k], v, true);
    }

  const Complex phases[4] = {1.0, -1.0, kI, -kI};
  const char* const phase_names[4] = {"p1", "m1", "pi", "mi"};
  for (int j = 0; j < 6; ++j)
    for (int l = 0; l < 4; ++l) {
      Ket2Q v = (kron2(sq[0], sq[j]) + phases[l] * kron2(sq[1], sq[perp[j]])) * kInvSqrt2;
      add(std::string("ent[") + kSingleQubitLabels[j] + phase_names[l] + "]", v, false);
    }

  // delete global-phase duplicates (none are expected; assert the survivor count)
  for (size_t a = 0; a < cat.elements.size(); ++a)
    for (size_t b = a + 1; b < cat.elements.size(); ++b)
      require(!same_ket(cat.elements[a].ket, cat.elements[b].ket), ErrorCategory::validation,
              "catalog duplicate: " + cat.elements[a].label + " == " + cat.elements[b].label);
  require(cat.elements.size() == 60, ErrorCategory::validation, "catalog size != 60");

  for (const auto& e : cat.elements) {
    if (e.is_product) cat.product_indices.push_back(e.index);
    else cat.entangled_indices.push_back(e.index);
    if (e.is_real) {
      cat.real_indices.push_back(e.index);
      if (e.is_product) cat.real_product_indices.push_back(e.index);
    }
  }
  require(cat.product_indices.size() == 36 && cat.entangled_indices.size() == 24,
          ErrorCategory::validation, "catalog product/entangled split incorrect");
  require(cat.real_indices.size() == 24 && cat.real_product_indices.size() == 16,
          ErrorCategory::validation, "catalog real sector sizes incorrect");
  return cat;
}

int span_rank(const std::vector<GptVec>& vecs, double rel_tol) {
  if (vecs.empty()) return 0;
  Eigen::MatrixXd m((int)vecs.size(), 16);
  for (int i = 0; i < (int)vecs.size(); ++i) m.row(i) = vecs[i].transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > rel_tol * sv[0]) ++r;
  return r;
}

Operator2Q rho_plus() {
  auto pp = pauli_products();
  return 0.25 * (pp[0] + pp[10]);
}

Operator2Q rho_minus() {
  auto pp = pauli_products();
  return 0.25 * (pp[0] - pp[10]);
}

Operator2Q yy_eigenspace_effect() {
  auto pp = pauli_products();
  return 0.5 * (pp[0] + pp[10]);
}

}  // namespace tomoloc
