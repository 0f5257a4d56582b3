#pragma once

#include <array>
#include <string>
#include <vector>

#include "tomoloc/common.hpp"

namespace tomoloc {

/// One catalog element. The same ket serves as a state (rank-1 density
/// operator) and as an effect (projector onto the ket); gpt_state and
/// gpt_effect are the two Pauli-basis encodings.
struct StabilizerElement {
  int index = 0;              // position in catalog order (0-based)
  std::string label;          // e.g. "HH", "ent[Dm1]"
  Ket2Q ket;                  // normalized, global phase fixed
  bool is_product = false;
  bool is_real = false;       // all amplitudes real after phase fixing
  GptVec gpt_state;
  GptVec gpt_effect;
};

struct Catalog {
  std::vector<StabilizerElement> elements;        // 60, product block first
  std::vector<int> product_indices;               // 36
  std::vector<int> entangled_indices;             // 24
  std::vector<int> real_indices;                  // 24 (16 product + 8 entangled)
  std::vector<int> real_product_indices;          // 16
};

/// The six single-qubit stabilizer states in order H, V, D, A, R, L.
std::array<Eigen::Vector2cd, 6> single_qubit_states();
extern const char* const kSingleQubitLabels[6];

/// Fix global phase: first component with |c| > 1e-9 made real positive.
Ket2Q phase_fix(const Ket2Q& v);
Eigen::Vector2cd phase_fix(const Eigen::Vector2cd& v);

/// Full two-qubit catalog: 36 product states (row-major over the 6x6 grid)
/// followed by 24 entangled states (|H>|psi_j> + e^{i phi_l}|V>|psi_j-perp>)/sqrt2,
/// phases +1, -1, +i, -i. Asserts pairwise distinctness up to global phase.
Catalog build_catalog();

/// Pauli matrices in order I, X, Y, Z and their two-qubit products.
std::array<Eigen::Matrix2cd, 4> pauli_matrices();
std::array<Operator2Q, 16> pauli_products();

/// tr(E rho); validates Hermiticity of both arguments.
double born_probability(const Operator2Q& state, const Operator2Q& effect);

/// Pauli-component encodings: s_ab = tr(rho sigma_a x sigma_b),
/// e_ab = tr(E sigma_a x sigma_b)/4, so that e . s = tr(E rho).
GptVec to_gpt_state(const Operator2Q& rho);
GptVec to_gpt_effect(const Operator2Q& effect);

Operator2Q projector(const Ket2Q& ket);

/// True when two kets agree up to a global phase.
bool same_ket(const Ket2Q& a, const Ket2Q& b, double tol = 1e-9);

/// Numerical rank of the span of the given GPT vectors (rows), with relative
/// singular-value cutoff.
int span_rank(const std::vector<GptVec>& vecs, double rel_tol = 1e-10);

/// rho_pm = (II +- YY)/4 and the Y x Y eigenspace effect (II + YY)/2, used by
/// the real-sector indistinguishability check.
Operator2Q rho_plus();
Operator2Q rho_minus();
Operator2Q yy_eigenspace_effect();

}  // namespace tomoloc
