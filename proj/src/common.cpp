#include "tubelab/common.hpp"

namespace tubelab {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidParameter: return "invalid-parameter";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::EmptyInput: return "empty-input";
    case ErrorCode::Synthesis: return "synthesis";
    case ErrorCode::Instability: return "instability";
    case ErrorCode::TubeTooLarge: return "tube-too-large";
    case ErrorCode::UnsupportedConfiguration: return "unsupported-configuration";
    case ErrorCode::Infeasible: return "infeasible";
    case ErrorCode::Convergence: return "convergence";
    case ErrorCode::DegeneratePose: return "degenerate-pose";
    case ErrorCode::Augmentation: return "augmentation";
    case ErrorCode::Training: return "training";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
    case ErrorCode::Controller: return "controller";
  }
  return "unknown";
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ (c + 0x85157af5ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(a)};
  return Rng(seq);
}

bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

}  // namespace tubelab
