#include "tomoloc/waveplates.hpp"

#include <cmath>

namespace tomoloc {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kInvSqrt2 = 0.70710678118654752440;

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

const std::vector<double>& angle_set(int plate) {
  static const std::vector<double> sets[13] = {
      {},                         // unused
      {0.0, 22.5},                // S1
      {-22.5, 0.0, 22.5, 45.0},   // S2
      {0.0, 45.0},                // S3
      {-22.5, 0.0, 22.5},         // S4
      {-45.0, 45.0},              // S5
      {0.0, 22.5},                // S6
      {0.0, 45.0},                // S7
      {-22.5, 0.0, 22.5, 45.0},   // S8
      {0.0, 22.5},                // S9
      {-45.0, 45.0},              // S10
      {-22.5, 0.0, 22.5},         // S11
      {0.0, 22.5},                // S12
  };
  require(plate >= 1 && plate <= 12, ErrorCategory::validation, "plate index out of range");
  return sets[plate];
}

Eigen::Matrix2cd waveplate(double theta_deg, double gamma) {
  double t = theta_deg * kPi / 180.0;
  double c = std::cos(t), s = std::sin(t);
  Eigen::Matrix2cd rot, ret;
  rot << c, -s, s, c;
  ret << 1.0, 0.0, 0.0, std::exp(Complex(0.0, gamma));
  return rot * ret * rot.transpose();
}

Eigen::Matrix2cd half_wave(double theta_deg) { return waveplate(theta_deg, kPi); }
Eigen::Matrix2cd quarter_wave(double theta_deg) { return waveplate(theta_deg, kPi / 2.0); }

double plate_retardance(int plate) {
  switch (plate) {
    case 2: case 4: case 6: case 8: case 9: case 11:
      return kPi;        // half-wave (magnitude / Hadamard-type plates)
    case 3: case 5: case 7: case 10:
      return kPi / 2.0;  // quarter-wave (phase plates)
    default:
      throw Error(ErrorCategory::validation, "no retardance for plate");
  }
}

Eigen::Matrix2cd prep_arm_a(double phi2, double phi3) {
  return waveplate(phi3, plate_retardance(3)) * waveplate(phi2, plate_retardance(2));
}

Eigen::Matrix2cd prep_arm_b(double phi4, double phi5, double phi6) {
  return waveplate(phi6, plate_retardance(6)) * waveplate(phi5, plate_retardance(5)) *
         waveplate(phi4, plate_retardance(4));
}

Eigen::Matrix2cd meas_arm_a(double phi7, double phi8) {
  return waveplate(phi8, plate_retardance(8)) * waveplate(phi7, plate_retardance(7));
}

Eigen::Matrix2cd meas_arm_b(double phi9, double phi10, double phi11) {
  return waveplate(phi11, plate_retardance(11)) * waveplate(phi10, plate_retardance(10)) *
         waveplate(phi9, plate_retardance(9));
}

Ket2Q initial_ket(double phi1) {
  Ket2Q hh; hh << 1, 0, 0, 0;
  if (phi1 == 0.0) return hh;
  Ket2Q phip; phip << kInvSqrt2, 0, 0, kInvSqrt2;
  return phip;
}

Ket2Q final_ket(double phi12) { return initial_ket(phi12); }

Ket2Q prepared_ket(const AngleTuple& p) {
  Operator2Q u = kron2(prep_arm_a(p[1], p[2]), prep_arm_b(p[3], p[4], p[5]));
  return phase_fix((u * initial_ket(p[0])).eval());
}

Ket2Q effect_ket(const AngleTuple& m) {
  Operator2Q u = kron2(meas_arm_a(m[0], m[1]), meas_arm_b(m[2], m[3], m[4]));
  return phase_fix((u.adjoint() * final_ket(m[5])).eval());
}

int prep_grid_size() {
  int n = 1;
  for (int plate = 1; plate <= 6; ++plate) n *= (int)angle_set(plate).size();
  return n;
}

int meas_grid_size() {
  int n = 1;
  for (int plate = 7; plate <= 12; ++plate) n *= (int)angle_set(plate).size();
  return n;
}

namespace {
std::vector<AngleTuple> full_grid(int first_plate) {
  std::vector<AngleTuple> grid;
  std::array<const std::vector<double>*, 6> sets;
  for (int k = 0; k < 6; ++k) sets[k] = &angle_set(first_plate + k);
  AngleTuple t{};
  for (double a0 : *sets[0])
    for (double a1 : *sets[1])
      for (double a2 : *sets[2])
        for (double a3 : *sets[3])
          for (double a4 : *sets[4])
            for (double a5 : *sets[5]) {
              t = {a0, a1, a2, a3, a4, a5};
              grid.push_back(t);
            }
  return grid;
}
}  // namespace

AngleTable angle_table(const Catalog& catalog) {
  AngleTable tab;
  tab.prep.resize(catalog.elements.size());
  tab.meas.resize(catalog.elements.size());

  const double kFidelityTol = 1e-9;
  auto assign = [&](const std::vector<AngleTuple>& grid, bool prep_stage) {
    std::vector<bool> covered(catalog.elements.size(), false);
    for (const auto& tuple : grid) {
      Ket2Q k = prep_stage ? prepared_ket(tuple) : effect_ket(tuple);
      for (const auto& e : catalog.elements) {
        if (covered[e.index]) continue;
        double fid = std::norm(e.ket.dot(k));
        if (fid >= 1.0 - kFidelityTol) {
          covered[e.index] = true;
          (prep_stage ? tab.prep : tab.meas)[e.index] = tuple;
        }
      }
    }
    std::string missing;
    for (const auto& e : catalog.elements)
      if (!covered[e.index]) missing += (missing.empty() ? "" : ", ") + e.label;
    require(missing.empty(), ErrorCategory::validation,
            std::string(prep_stage ? "prep" : "meas") + " grid fails to cover: " + missing);
  };

  assign(full_grid(1), true);
  assign(full_grid(7), false);
  return tab;
}

}  // namespace tomoloc
