#include "tubelab/vision.hpp"

#include "tubelab/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace tubelab {

void CameraRig::validate() const {
  if (width < 1 || height < 1) throw Error(ErrorCode::InvalidParameter, "camera image size must be positive");
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::InvalidParameter, "camera focal lengths must be positive");
  if ((T_BC.R.transpose() * T_BC.R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw Error(ErrorCode::InvalidParameter, "camera extrinsic rotation is not orthonormal");
}

CameraRig make_camera_rig(int width, int height, double fov_deg, double tilt_deg) {
  CameraRig rig;
  rig.width = width;
  rig.height = height;
  rig.fx = 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  rig.fy = rig.fx;
  rig.cx = 0.5 * width;
  rig.cy = 0.5 * height;
  const double a = tilt_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a);
  const double s = std::sin(a);
  // Columns: camera x, y, z expressed in the body frame (x forward, y left, z up).
  rig.T_BC.R.col(0) = Vec3(0.0, -1.0, 0.0);
  rig.T_BC.R.col(1) = Vec3(-s, 0.0, -c);
  rig.T_BC.R.col(2) = Vec3(c, 0.0, -s);
  rig.T_BC.t = Vec3(0.05, 0.0, -0.02);
  rig.validate();
  return rig;
}

GroundTexture::GroundTexture(std::uint64_t seed) {
  Rng rng = make_stream(seed, 0x746578);
  // Two long waves, roughly monotonic across the flight area along x and y,
  // give coarse absolute position; the shorter pair gives fine position.
  struct Spec {
    double lambda, heading, amplitude;
  };
  const Spec specs[] = {{64.0, 0.0, 0.16}, {44.0, 0.5 * std::numbers::pi, 0.16}, {9.0, -1.0, 0.12}, {6.5, 1.0, 0.12}};
  for (const auto& sp : specs) {
    const double dir = sp.heading + uniform(rng, -0.2, 0.2);
    const double k = 2.0 * std::numbers::pi / sp.lambda;
    const double phase = sp.lambda > 20.0 ? uniform(rng, -0.2, 0.2) : uniform(rng, 0.0, 2.0 * std::numbers::pi);
    waves_.push_back({k * std::cos(dir), k * std::sin(dir), phase, sp.amplitude});
  }
}

double GroundTexture::operator()(double x, double y) const {
  double v = 0.5;
  for (const auto& w : waves_) v += w.amplitude * std::sin(w.kx * x + w.ky * y + w.phase);
  return std::clamp(v, 0.0, 1.0);
}

Image render(const RigidTransform& T_IC, const CameraRig& rig, const GroundTexture& texture) {
  if (!(T_IC.t.z() > 0.05))
    throw Error(ErrorCode::DegeneratePose, "render: camera must be above the ground (z > 0.05 m)");
  Image img(rig.width, rig.height, 0.5f);
  for (int r = 0; r < rig.height; ++r) {
    for (int c = 0; c < rig.width; ++c) {
      const Vec3 ray_c((c + 0.5 - rig.cx) / rig.fx, (r + 0.5 - rig.cy) / rig.fy, 1.0);
      const Vec3 d = T_IC.R * ray_c;
      if (d.z() > -1e-9) continue;
      const double s = -T_IC.t.z() / d.z();
      const Vec3 hit = T_IC.t + s * d;
      img.at(r, c) = static_cast<float>(texture(hit.x(), hit.y()));
    }
  }
  return img;
}

RigidTransform perturb_extrinsics(const RigidTransform& T_BC, const ExtrinsicPerturbation& p, Rng& rng) {
  const double rx = uniform(rng, -p.rot_rad, p.rot_rad);
  const double ry = uniform(rng, -p.rot_rad, p.rot_rad);
  const double rz = uniform(rng, -p.rot_rad, p.rot_rad);
  RigidTransform delta;
  delta.R = (Eigen::AngleAxisd(rz, Vec3::UnitZ()) * Eigen::AngleAxisd(ry, Vec3::UnitY()) *
             Eigen::AngleAxisd(rx, Vec3::UnitX()))
                .toRotationMatrix();
  delta.t = Vec3(uniform(rng, -p.trans, p.trans), uniform(rng, -p.trans, p.trans), uniform(rng, -p.trans, p.trans));
  // Perturbation expressed in the body frame.
  return delta * T_BC;
}

RigidTransform body_pose(const State& x) { return {body_rotation(x(6), x(7)), x.head<3>()}; }

RigidTransform pose_from_state(const State& x, const CameraRig& rig, const std::optional<ExtrinsicPerturbation>& perturb,
                               Rng& rng) {
  if (!x.allFinite()) throw Error(ErrorCode::InvalidParameter, "pose_from_state: non-finite state");
  const RigidTransform T_BC = perturb ? perturb_extrinsics(rig.T_BC, *perturb, rng) : rig.T_BC;
  return body_pose(x) * T_BC;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double sum = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (double& k : kernel) k /= sum;
  auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
  Image tmp(img.width, img.height);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * img.at(r, clampi(c + i, img.width));
      tmp.at(r, c) = static_cast<float>(acc);
    }
  Image out(img.width, img.height);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.at(clampi(r + i, img.height), c);
      out.at(r, c) = static_cast<float>(acc);
    }
  return out;
}

Image erase_rect(const Image& img, int row0, int col0, int rows, int cols) {
  Image out = img;
  for (int r = std::max(0, row0); r < std::min(img.height, row0 + rows); ++r)
    for (int c = std::max(0, col0); c < std::min(img.width, col0 + cols); ++c) out.at(r, c) = 0.5f;
  return out;
}

Image randomize_image(const Image& img, const RandomizationConfig& cfg, Rng& rng) {
  Image out = img;
  auto coin = [&](double p) { return p > 0.0 && uniform(rng, 0.0, 1.0) < p; };
  if (coin(cfg.p_brightness)) {
    const double b = uniform(rng, cfg.brightness_min, cfg.brightness_max);
    for (float& v : out.pixels) v = static_cast<float>(v * b);
    out.clamp01();
  }
  if (coin(cfg.p_gamma)) {
    const double g = uniform(rng, cfg.gamma_min, cfg.gamma_max);
    for (float& v : out.pixels) v = static_cast<float>(std::pow(std::max(0.0f, v), g));
  }
  if (coin(cfg.p_noise)) {
    const double s = uniform(rng, 0.0, cfg.noise_sigma_max);
    for (float& v : out.pixels) v = static_cast<float>(v + gaussian(rng, s));
    out.clamp01();
  }
  if (coin(cfg.p_blur)) out = gaussian_blur(out, uniform(rng, 0.0, cfg.blur_sigma_max));
  if (coin(cfg.p_erase)) {
    const int rows = static_cast<int>(std::round(uniform(rng, 0.0, cfg.erase_max_frac) * out.height));
    const int cols = static_cast<int>(std::round(uniform(rng, 0.0, cfg.erase_max_frac) * out.width));
    const int r0 = static_cast<int>(uniform(rng, 0.0, out.height - rows + 1.0));
    const int c0 = static_cast<int>(uniform(rng, 0.0, out.width - cols + 1.0));
    out = erase_rect(out, r0, c0, rows, cols);
  }
  out.clamp01();
  return out;
}

const char* to_string(VisualStress kind) {
  return kind == VisualStress::GaussianNoise ? "gaussian_noise" : "gaussian_blur";
}

VisualStress parse_visual_stress(const std::string& name) {
  if (name == "gaussian_noise") return VisualStress::GaussianNoise;
  if (name == "gaussian_blur") return VisualStress::GaussianBlur;
  throw Error(ErrorCode::InvalidParameter, "unknown visual stress '" + name + "'");
}

double psnr(const Image& clean, const Image& noisy) {
  if (clean.size() != noisy.size() || clean.empty())
    throw Error(ErrorCode::DimensionMismatch, "psnr: image sizes differ");
  double mse = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double d = static_cast<double>(clean.pixels[i]) - noisy.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(clean.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

std::pair<Image, double> apply_visual_stress(const Image& img, VisualStress kind, double magnitude, Rng& rng) {
  if (magnitude < 0.0) throw Error(ErrorCode::InvalidParameter, "visual stress magnitude must be >= 0");
  Image out = img;
  if (magnitude > 0.0) {
    if (kind == VisualStress::GaussianNoise) {
      for (float& v : out.pixels) v = static_cast<float>(v + gaussian(rng, magnitude));
      out.clamp01();
    } else {
      out = gaussian_blur(img, magnitude);
    }
  }
  const double p = psnr(img, out);
  return {std::move(out), p};
}

void ObservationDatabase::add(const State& x_hat, const Observation& obs) {
  if (!x_hat.allFinite() || !obs.other.allFinite())
    throw Error(ErrorCode::InvalidParameter, "ObservationDatabase::add: non-finite entry");
  entries_.push_back({x_hat, obs});
}

std::vector<std::size_t> ObservationDatabase::matches(const Vec& center, const Box& Z) const {
  const Box tube = translate(Z, center);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (contains(tube, entries_[i].x_hat)) idx.push_back(i);
  return idx;
}

std::vector<const DbEntry*> ObservationDatabase::query_tube(const Vec& center, const Box& Z, int max_count,
                                                            Rng& rng) const {
  if (max_count < 0) throw Error(ErrorCode::InvalidParameter, "query_tube: max_count must be >= 0");
  std::vector<std::size_t> idx = matches(center, Z);
  const std::size_t k = std::min(idx.size(), static_cast<std::size_t>(max_count));
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + std::uniform_int_distribution<std::size_t>(0, idx.size() - 1 - i)(rng);
    std::swap(idx[i], idx[j]);
  }
  std::vector<const DbEntry*> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(&entries_[idx[i]]);
  return out;
}

void ObservationDatabase::save(const std::filesystem::path& dir, const std::string& header) const {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index.csv");
  if (!index) throw Error(ErrorCode::Io, "cannot write " + (dir / "index.csv").string());
  index << std::setprecision(17);
  if (!header.empty()) index << header << "\n";
  index << "id,image";
  for (int i = 0; i < kStateDim; ++i) index << ",xhat" << i;
  for (int i = 0; i < kOtherDim; ++i) index << ",other" << i;
  index << "\n";
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    std::ostringstream name;
    name << "img_" << std::setw(6) << std::setfill('0') << k << ".pgm";
    write_pgm(dir / name.str(), entries_[k].obs.image);
    index << k << "," << name.str();
    for (int i = 0; i < kStateDim; ++i) index << "," << entries_[k].x_hat(i);
    for (int i = 0; i < kOtherDim; ++i) index << "," << entries_[k].obs.other(i);
    index << "\n";
  }
}

ObservationDatabase ObservationDatabase::load(const std::filesystem::path& dir) {
  std::ifstream index(dir / "index.csv");
  if (!index) throw Error(ErrorCode::Io, "cannot read " + (dir / "index.csv").string());
  ObservationDatabase db;
  std::string line;
  do {
    if (!std::getline(index, line)) throw Error(ErrorCode::Io, "empty database index");
  } while (!line.empty() && line.front() == '#');
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    std::string image;
    std::getline(ss, image, ',');
    DbEntry e;
    try {
      for (int i = 0; i < kStateDim; ++i) {
        std::getline(ss, field, ',');
        e.x_hat(i) = std::stod(field);
      }
      for (int i = 0; i < kOtherDim; ++i) {
        std::getline(ss, field, ',');
        e.obs.other(i) = std::stod(field);
      }
    } catch (const std::exception&) {
      throw Error(ErrorCode::Io, "malformed database index line: " + line);
    }
    e.obs.image = read_pgm(dir / image);
    db.entries_.push_back(std::move(e));
  }
  return db;
}

}  // namespace tubelab
