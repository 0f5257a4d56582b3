#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace tomoloc {

using Complex = std::complex<double>;
using Ket2Q = Eigen::Vector4cd;        // two-qubit ket, basis order HH, HV, VH, VV
using Operator2Q = Eigen::Matrix4cd;   // Hermitian operator on the same basis
using GptVec = Eigen::Matrix<double, 16, 1>;  // Pauli components, index (a,b) -> 4a+b

/// Error taxonomy mapped onto process exit codes.
enum class ErrorCategory {
  validation = 2,     // bad inputs / malformed config
  convergence = 3,    // optimizer failed to converge
  inconclusive = 4,   // calibration overlap or infeasible secondary fraction
  io = 5,             // file read/write problems
};

class Error : public std::runtime_error {
public:
  Error(ErrorCategory cat, const std::string& msg) : std::runtime_error(msg), category(cat) {}
  ErrorCategory category;
};

inline void require(bool cond, ErrorCategory cat, const std::string& msg) {
  if (!cond) throw Error(cat, msg);
}

}  // namespace tomoloc
