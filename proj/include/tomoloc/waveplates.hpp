#pragma once

#include <array>
#include <vector>

#include "tomoloc/common.hpp"
#include "tomoloc/stabilizer.hpp"

namespace tomoloc {

/// One row of the angle table: the six plate settings of a stage, in degrees.
/// Preparation stage: (phi1, ..., phi6); measurement stage: (phi7, ..., phi12).
using AngleTuple = std::array<double, 6>;

/// Allowed settings per plate, S1..S12 (index 0 unused).
const std::vector<double>& angle_set(int plate);

/// Jones matrix of a waveplate with retardance gamma, fast axis at theta degrees.
Eigen::Matrix2cd waveplate(double theta_deg, double gamma);
Eigen::Matrix2cd half_wave(double theta_deg);
Eigen::Matrix2cd quarter_wave(double theta_deg);

/// Retardance assigned to plates WP2..WP11 (HWP for the 4-setting magnitude
/// plates and for WP6/WP9, QWP for the phase plates); used by both the state
/// generator and the angle-table search.
double plate_retardance(int plate);

/// Unitary of the preparation chain acting on mode A / mode B. The photon
/// passes the lower-numbered plate first in every arm and stage.
Eigen::Matrix2cd prep_arm_a(double phi2, double phi3);
Eigen::Matrix2cd prep_arm_b(double phi4, double phi5, double phi6);
Eigen::Matrix2cd meas_arm_a(double phi7, double phi8);
Eigen::Matrix2cd meas_arm_b(double phi9, double phi10, double phi11);

/// Initial two-qubit states selected by phi1, and final projector kets
/// selected by phi12: 0 -> |HH>, 22.5 -> (|HH>+|VV>)/sqrt2.
Ket2Q initial_ket(double phi1);
Ket2Q final_ket(double phi12);

/// Ket prepared by a full tuple, and the effect ket realized by a measurement
/// tuple: the chain unitary pulled back through the final projector.
Ket2Q prepared_ket(const AngleTuple& prep);
Ket2Q effect_ket(const AngleTuple& meas);

struct AngleTable {
  std::vector<AngleTuple> prep;  // one per catalog state, catalog order
  std::vector<AngleTuple> meas;  // one per catalog effect
};

/// Exhaustive search over the full setting grids (192 tuples each) for the
/// first tuple reproducing each catalog element with fidelity >= 1 - 1e-9.
/// Throws a validation error naming any uncovered target.
AngleTable angle_table(const Catalog& catalog);

/// Number of tuples in the prep / meas grids (both 192).
int prep_grid_size();
int meas_grid_size();

}  // namespace tomoloc
