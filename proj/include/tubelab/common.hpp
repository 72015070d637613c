#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace tubelab {

inline constexpr int kStateDim = 8;
inline constexpr int kInputDim = 3;
inline constexpr int kOtherDim = 6;

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// [p_x, p_y, p_z, v_x, v_y, v_z, roll, pitch]
using State = Eigen::Matrix<double, kStateDim, 1>;
// [roll_cmd, pitch_cmd, thrust]
using Action = Eigen::Matrix<double, kInputDim, 1>;
// [p_z, v_x, v_y, v_z, roll, pitch]
using OtherVec = Eigen::Matrix<double, kOtherDim, 1>;

enum class ErrorCode {
  InvalidParameter,
  DimensionMismatch,
  EmptyInput,
  Synthesis,
  Instability,
  TubeTooLarge,
  UnsupportedConfiguration,
  Infeasible,
  Convergence,
  DegeneratePose,
  Augmentation,
  Training,
  Config,
  Io,
  Controller,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

using Rng = std::mt19937_64;

// Independent, reproducible stream for (seed, a, b, c). Streams for different
// tuples are decorrelated through splitmix64 mixing.
Rng make_stream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0, std::uint64_t c = 0);

std::uint64_t splitmix64(std::uint64_t x);

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double sigma) {
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

bool all_finite(const Eigen::Ref<const Mat>& m);

}  // namespace tubelab
