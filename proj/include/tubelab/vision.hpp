#pragma once

#include "tubelab/common.hpp"
#include "tubelab/controller.hpp"
#include "tubelab/image.hpp"
#include "tubelab/setops.hpp"

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace tubelab {

// Rigid transform mapping points from frame b into frame a: p_a = R p_b + t.
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  RigidTransform operator*(const RigidTransform& o) const { return {R * o.R, R * o.t + t}; }
  RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
};

struct CameraRig {
  int width = 32;
  int height = 32;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  RigidTransform T_BC;  // camera-to-body

  void validate() const;
};

// Pinhole camera looking forward, pitched `tilt_deg` below the body x axis.
// Camera axes: x right, y down, z optical.
CameraRig make_camera_rig(int width, int height, double fov_deg, double tilt_deg);

// Procedural ground intensity field on the plane z = 0: a sum of sinusoids
// whose headings and phases depend on the seed. Pure function of (x, y, seed).
class GroundTexture {
 public:
  explicit GroundTexture(std::uint64_t seed = 7);
  double operator()(double x, double y) const;

 private:
  struct Wave {
    double kx, ky, phase, amplitude;
  };
  std::vector<Wave> waves_;
};

// T_IC (camera-to-world). Rays that do not hit the ground render as 0.5.
Image render(const RigidTransform& T_IC, const CameraRig& rig, const GroundTexture& texture);

struct ExtrinsicPerturbation {
  double rot_rad = 0.0;  // per-axis bound
  double trans = 0.0;    // per-axis bound, m
};

// T_BC composed with a random small rotation / translation.
RigidTransform perturb_extrinsics(const RigidTransform& T_BC, const ExtrinsicPerturbation& p, Rng& rng);

RigidTransform body_pose(const State& x);  // T_IB, yaw = 0

// T_IC = T_IB(x) T̂_BC; nominal chain when `perturb` is empty.
RigidTransform pose_from_state(const State& x, const CameraRig& rig, const std::optional<ExtrinsicPerturbation>& perturb,
                               Rng& rng);

struct RandomizationConfig {
  double p_brightness = 0.0, brightness_min = 1.0, brightness_max = 1.0;
  double p_gamma = 0.0, gamma_min = 1.0, gamma_max = 1.0;
  double p_noise = 0.0, noise_sigma_max = 0.0;
  double p_blur = 0.0, blur_sigma_max = 0.0;
  double p_erase = 0.0, erase_max_frac = 0.0;
};

Image randomize_image(const Image& img, const RandomizationConfig& cfg, Rng& rng);

Image gaussian_blur(const Image& img, double sigma);
Image erase_rect(const Image& img, int row0, int col0, int rows, int cols);

enum class VisualStress { GaussianNoise, GaussianBlur };
const char* to_string(VisualStress kind);
VisualStress parse_visual_stress(const std::string& name);

// PSNR in dB against the clean image; +inf when unchanged.
double psnr(const Image& clean, const Image& noisy);

std::pair<Image, double> apply_visual_stress(const Image& img, VisualStress kind, double magnitude, Rng& rng);

struct DbEntry {
  State x_hat;
  Observation obs;
};

// Real observations indexed by the estimated state at which they were taken.
class ObservationDatabase {
 public:
  void add(const State& x_hat, const Observation& obs);
  std::size_t size() const { return entries_.size(); }
  const DbEntry& operator[](std::size_t i) const { return entries_[i]; }

  // Indices of entries with x_hat in center ⊕ Z (linear scan).
  std::vector<std::size_t> matches(const Vec& center, const Box& Z) const;

  // Up to max_count matching entries, uniformly without replacement.
  std::vector<const DbEntry*> query_tube(const Vec& center, const Box& Z, int max_count, Rng& rng) const;

  // Directory of PGM images plus index.csv; a non-empty header becomes the
  // first line of the index.
  void save(const std::filesystem::path& dir, const std::string& header = {}) const;
  static ObservationDatabase load(const std::filesystem::path& dir);

 private:
  std::vector<DbEntry> entries_;
};

}  // namespace tubelab
