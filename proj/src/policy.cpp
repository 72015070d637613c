#include "tubelab/policy.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace tubelab {

namespace {

constexpr char kMagic[8] = {'T', 'L', 'P', 'O', 'L', 'I', 'C', 'Y'};
constexpr std::uint32_t kFormatVersion = 1;

using MapMat = Eigen::Map<const Mat>;
using MapVec = Eigen::Map<const Vec>;

MapMat weights(const Vec& theta, const LayerView& l) { return MapMat(theta.data() + l.offset, l.out, l.in); }
MapVec bias(const Vec& theta, const LayerView& l) {
  return MapVec(theta.data() + l.offset + static_cast<std::size_t>(l.in) * l.out, l.out);
}
Eigen::Map<Mat> weights(Vec& g, const LayerView& l) { return Eigen::Map<Mat>(g.data() + l.offset, l.out, l.in); }
Eigen::Map<Vec> bias(Vec& g, const LayerView& l) {
  return Eigen::Map<Vec>(g.data() + l.offset + static_cast<std::size_t>(l.in) * l.out, l.out);
}

Mat affine(const Vec& theta, const LayerView& l, const Mat& in) {
  Mat out = weights(theta, l) * in;
  out.colwise() += bias(theta, l);
  return out;
}

struct Batch {
  Mat image;  // pixels x B
  Mat other;  // normalized
  Mat ref;
  Mat action;  // normalized targets
  Mat state;
};

Batch assemble(const PolicyParams& p, std::span<const TrainingSample* const> samples) {
  const PolicyShape& s = p.shape();
  const Normalizer& n = p.normalizer();
  const auto B = static_cast<Eigen::Index>(samples.size());
  Batch b;
  b.image.resize(s.image_pixels, B);
  b.other.resize(s.other_dim, B);
  b.ref.resize(s.ref_dim, B);
  b.action.resize(s.action_dim, B);
  b.state.resize(s.state_dim, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const TrainingSample& t = *samples[static_cast<std::size_t>(j)];
    if (s.image_pixels > 0) {
      if (static_cast<int>(t.image.size()) != s.image_pixels)
        throw Error(ErrorCode::DimensionMismatch, "training sample image size does not match the policy");
      for (int i = 0; i < s.image_pixels; ++i) b.image(i, j) = t.image.pixels[static_cast<std::size_t>(i)] - n.image_offset;
    }
    if (t.ref.size() != s.ref_dim) throw Error(ErrorCode::DimensionMismatch, "reference size does not match the policy");
    b.other.col(j) = (t.other.head(s.other_dim) - n.other_center).cwiseQuotient(n.other_scale);
    b.ref.col(j) = (t.ref - n.ref_center).cwiseQuotient(n.ref_scale);
    b.action.col(j) = (t.action_target.head(s.action_dim) - n.action_center).cwiseQuotient(n.action_scale);
    b.state.col(j) = (t.state_target.head(s.state_dim) - n.state_center).cwiseQuotient(n.state_scale);
  }
  return b;
}

struct Activations {
  std::vector<Mat> image;   // post-tanh per image layer
  Mat fusion_in;
  std::vector<Mat> fusion;  // post-tanh per fusion layer
  Mat action;               // normalized
  Mat state;
};

Activations forward(const PolicyParams& p, const Mat& image, const Mat& other, const Mat& ref) {
  const Vec& th = p.theta();
  Activations a;
  const Mat* in = &image;
  for (const auto& l : p.image_layers()) {
    a.image.push_back(affine(th, l, *in).array().tanh().matrix());
    in = &a.image.back();
  }
  const Eigen::Index B = other.cols();
  const int emb = p.shape().embedding_dim();
  a.fusion_in.resize(p.shape().fusion_input_dim(), B);
  if (emb > 0) a.fusion_in.topRows(emb) = a.image.back();
  a.fusion_in.middleRows(emb, other.rows()) = other;
  a.fusion_in.bottomRows(ref.rows()) = ref;
  in = &a.fusion_in;
  for (const auto& l : p.fusion_layers()) {
    a.fusion.push_back(affine(th, l, *in).array().tanh().matrix());
    in = &a.fusion.back();
  }
  a.action = affine(th, p.action_head(), *in);
  a.state = affine(th, p.state_head(), *in);
  return a;
}

void check_layer_sizes(const std::vector<int>& sizes) {
  for (int h : sizes)
    if (h < 1) throw Error(ErrorCode::InvalidParameter, "hidden layer sizes must be positive");
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }
Vec from_std(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

Vec subsample_reference(std::span<const State> window) {
  if (window.empty()) throw Error(ErrorCode::EmptyInput, "subsample_reference: empty window");
  Vec out(kRefCount * kStateDim);
  for (int k = 0; k < kRefCount; ++k) {
    const std::size_t idx = std::min(static_cast<std::size_t>(kRefIndices[k]), window.size() - 1);
    out.segment(k * kStateDim, kStateDim) = window[idx];
  }
  return out;
}

Normalizer Normalizer::identity(const PolicyShape& s) {
  Normalizer n;
  n.other_center = Vec::Zero(s.other_dim);
  n.other_scale = Vec::Ones(s.other_dim);
  n.ref_center = Vec::Zero(s.ref_dim);
  n.ref_scale = Vec::Ones(s.ref_dim);
  n.action_center = Vec::Zero(s.action_dim);
  n.action_scale = Vec::Ones(s.action_dim);
  n.state_center = Vec::Zero(s.state_dim);
  n.state_scale = Vec::Ones(s.state_dim);
  return n;
}

Normalizer Normalizer::from_constraints(const PolicyShape& s, const Box& X, const Box& U_abs) {
  if (X.dim() != kStateDim || U_abs.dim() != kInputDim || s.state_dim != kStateDim || s.action_dim != kInputDim ||
      s.other_dim != kOtherDim || s.ref_dim % kStateDim != 0)
    throw Error(ErrorCode::DimensionMismatch, "Normalizer::from_constraints: unexpected shape");
  const Vec xc = X.center();
  const Vec xs = X.half_width().cwiseMax(1e-9);
  Normalizer n;
  n.other_center = xc.segment(2, kOtherDim);
  n.other_scale = xs.segment(2, kOtherDim);
  n.ref_center = xc.replicate(s.ref_dim / kStateDim, 1);
  n.ref_scale = xs.replicate(s.ref_dim / kStateDim, 1);
  n.action_center = U_abs.center();
  n.action_scale = U_abs.half_width().cwiseMax(1e-9);
  n.state_center = xc;
  n.state_scale = xs;
  n.image_offset = 0.5;
  return n;
}

PolicyParams::PolicyParams(PolicyShape shape, Normalizer norm) : shape_(std::move(shape)), norm_(std::move(norm)) {
  if (shape_.image_pixels < 0 || shape_.other_dim < 0 || shape_.ref_dim < 0 || shape_.action_dim < 1 ||
      shape_.state_dim < 1)
    throw Error(ErrorCode::InvalidParameter, "invalid policy shape");
  if (shape_.image_pixels > 0) {
    if (shape_.image_hidden.empty()) throw Error(ErrorCode::InvalidParameter, "image trunk needs at least one layer");
    check_layer_sizes(shape_.image_hidden);
  }
  if (shape_.fusion_hidden.empty()) throw Error(ErrorCode::InvalidParameter, "fusion trunk needs at least one layer");
  check_layer_sizes(shape_.fusion_hidden);
  if (norm_.other_scale.size() != shape_.other_dim || norm_.ref_scale.size() != shape_.ref_dim ||
      norm_.action_scale.size() != shape_.action_dim || norm_.state_scale.size() != shape_.state_dim)
    throw Error(ErrorCode::DimensionMismatch, "normalizer does not match the policy shape");

  std::size_t offset = 0;
  auto add = [&](int in, int out) {
    LayerView l{in, out, offset};
    offset += static_cast<std::size_t>(in) * out + static_cast<std::size_t>(out);
    return l;
  };
  int in = shape_.image_pixels;
  if (shape_.image_pixels > 0) {
    for (int h : shape_.image_hidden) {
      image_.push_back(add(in, h));
      in = h;
    }
  }
  in = shape_.fusion_input_dim();
  for (int h : shape_.fusion_hidden) {
    fusion_.push_back(add(in, h));
    in = h;
  }
  action_ = add(in, shape_.action_dim);
  state_ = add(in, shape_.state_dim);
  theta_ = Vec::Zero(static_cast<Eigen::Index>(offset));
}

void PolicyParams::initialize(Rng& rng) {
  theta_.setZero();
  auto init = [&](const LayerView& l) {
    const double lim = std::sqrt(6.0 / (l.in + l.out));
    auto W = weights(theta_, l);
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = uniform(rng, -lim, lim);
  };
  for (const auto& l : image_) init(l);
  for (const auto& l : fusion_) init(l);
  init(action_);
  init(state_);
}

void PolicyParams::save(const std::filesystem::path& path) const {
  static_assert(std::endian::native == std::endian::little, "policy files are little-endian");
  nlohmann::json h;
  h["image_pixels"] = shape_.image_pixels;
  h["image_hidden"] = shape_.image_hidden;
  h["other_dim"] = shape_.other_dim;
  h["ref_dim"] = shape_.ref_dim;
  h["fusion_hidden"] = shape_.fusion_hidden;
  h["action_dim"] = shape_.action_dim;
  h["state_dim"] = shape_.state_dim;
  h["num_params"] = theta_.size();
  nlohmann::json n;
  n["other_center"] = to_std(norm_.other_center);
  n["other_scale"] = to_std(norm_.other_scale);
  n["ref_center"] = to_std(norm_.ref_center);
  n["ref_scale"] = to_std(norm_.ref_scale);
  n["action_center"] = to_std(norm_.action_center);
  n["action_scale"] = to_std(norm_.action_scale);
  n["state_center"] = to_std(norm_.state_center);
  n["state_scale"] = to_std(norm_.state_scale);
  n["image_offset"] = norm_.image_offset;
  h["normalizer"] = n;
  const std::string header = h.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write policy file " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kFormatVersion;
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(theta_.data()), static_cast<std::streamsize>(theta_.size() * sizeof(double)));
  if (!out) throw Error(ErrorCode::Io, "failed writing policy file " + path.string());
}

PolicyParams PolicyParams::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open policy file " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorCode::Io, path.string() + " is not a policy file");
  if (version != kFormatVersion)
    throw Error(ErrorCode::Io, "unsupported policy file version " + std::to_string(version));
  if (len > (1u << 26)) throw Error(ErrorCode::Io, "policy header too large");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
    PolicyShape s;
    s.image_pixels = h.at("image_pixels");
    s.image_hidden = h.at("image_hidden").get<std::vector<int>>();
    s.other_dim = h.at("other_dim");
    s.ref_dim = h.at("ref_dim");
    s.fusion_hidden = h.at("fusion_hidden").get<std::vector<int>>();
    s.action_dim = h.at("action_dim");
    s.state_dim = h.at("state_dim");
    const auto& n = h.at("normalizer");
    Normalizer norm;
    norm.other_center = from_std(n.at("other_center"));
    norm.other_scale = from_std(n.at("other_scale"));
    norm.ref_center = from_std(n.at("ref_center"));
    norm.ref_scale = from_std(n.at("ref_scale"));
    norm.action_center = from_std(n.at("action_center"));
    norm.action_scale = from_std(n.at("action_scale"));
    norm.state_center = from_std(n.at("state_center"));
    norm.state_scale = from_std(n.at("state_scale"));
    norm.image_offset = n.at("image_offset");
    PolicyParams p(s, norm);
    const std::size_t count = h.at("num_params");
    if (count != p.size()) throw Error(ErrorCode::Io, "policy parameter count does not match its shape");
    in.read(reinterpret_cast<char*>(p.theta_.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw Error(ErrorCode::Io, "truncated policy file " + path.string());
    if (!p.theta_.allFinite()) throw Error(ErrorCode::Io, "policy file contains non-finite weights");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, std::string("malformed policy header: ") + e.what());
  }
}

PolicyOutput policy_forward(const PolicyParams& p, const PolicyInput& input) {
  const PolicyShape& s = p.shape();
  const Normalizer& n = p.normalizer();
  Mat image(s.image_pixels, 1);
  if (s.image_pixels > 0) {
    if (!input.image || static_cast<int>(input.image->size()) != s.image_pixels)
      throw Error(ErrorCode::DimensionMismatch, "policy_forward: image size does not match the policy");
    for (int i = 0; i < s.image_pixels; ++i) image(i, 0) = input.image->pixels[static_cast<std::size_t>(i)] - n.image_offset;
  }
  if (input.ref.size() != s.ref_dim) throw Error(ErrorCode::DimensionMismatch, "policy_forward: reference size");
  const Mat other = (input.other.head(s.other_dim) - n.other_center).cwiseQuotient(n.other_scale);
  const Mat ref = (input.ref - n.ref_center).cwiseQuotient(n.ref_scale);
  const Activations a = forward(p, image, other, ref);
  PolicyOutput out;
  out.u = Action::Zero();
  out.x_hat = State::Zero();
  out.u.head(s.action_dim) = n.action_center + n.action_scale.cwiseProduct(a.action.col(0));
  out.x_hat.head(s.state_dim) = n.state_center + n.state_scale.cwiseProduct(a.state.col(0));
  return out;
}

const char* to_string(TrainingSample::Origin origin) {
  switch (origin) {
    case TrainingSample::Origin::Demo: return "demo";
    case TrainingSample::Origin::Synthetic: return "synthetic";
    case TrainingSample::Origin::RealDb: return "real_db";
  }
  return "?";
}

double policy_loss(const PolicyParams& p, std::span<const TrainingSample* const> samples, double lambda_aux,
                   Vec* grad) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "policy_loss: empty batch");
  const Batch b = assemble(p, samples);
  const Activations a = forward(p, b.image, b.other, b.ref);
  const double B = static_cast<double>(samples.size());
  const Mat ea = a.action - b.action;
  const Mat es = a.state - b.state;
  const double na = static_cast<double>(ea.rows());
  const double ns = static_cast<double>(es.rows());
  const double loss = ea.squaredNorm() / (B * na) + lambda_aux * es.squaredNorm() / (B * ns);
  if (!grad) return loss;

  const Vec& th = p.theta();
  grad->setZero(th.size());
  const Mat dA = (2.0 / (B * na)) * ea;
  const Mat dS = (2.0 * lambda_aux / (B * ns)) * es;
  const Mat& top = p.fusion_layers().empty() ? a.fusion_in : a.fusion.back();
  weights(*grad, p.action_head()) = dA * top.transpose();
  bias(*grad, p.action_head()) = dA.rowwise().sum();
  weights(*grad, p.state_head()) = dS * top.transpose();
  bias(*grad, p.state_head()) = dS.rowwise().sum();
  Mat d = weights(th, p.action_head()).transpose() * dA + weights(th, p.state_head()).transpose() * dS;

  const auto& fl = p.fusion_layers();
  for (int k = static_cast<int>(fl.size()) - 1; k >= 0; --k) {
    const Mat dz = d.cwiseProduct((1.0 - a.fusion[k].array().square()).matrix());
    const Mat& in = k == 0 ? a.fusion_in : a.fusion[k - 1];
    weights(*grad, fl[k]) = dz * in.transpose();
    bias(*grad, fl[k]) = dz.rowwise().sum();
    d = weights(th, fl[k]).transpose() * dz;
  }
  const int emb = p.shape().embedding_dim();
  if (emb == 0) return loss;
  d = d.topRows(emb).eval();
  const auto& il = p.image_layers();
  for (int k = static_cast<int>(il.size()) - 1; k >= 0; --k) {
    const Mat dz = d.cwiseProduct((1.0 - a.image[k].array().square()).matrix());
    const Mat& in = k == 0 ? b.image : a.image[k - 1];
    weights(*grad, il[k]).noalias() = dz * in.transpose();
    bias(*grad, il[k]) = dz.rowwise().sum();
    if (k > 0) d = weights(th, il[k]).transpose() * dz;
  }
  return loss;
}

namespace {

double dataset_loss(const PolicyParams& p, std::span<const TrainingSample> data, double lambda_aux) {
  constexpr std::size_t chunk = 512;
  double total = 0.0;
  std::vector<const TrainingSample*> ptrs;
  for (std::size_t i = 0; i < data.size(); i += chunk) {
    ptrs.clear();
    for (std::size_t j = i; j < std::min(data.size(), i + chunk); ++j) ptrs.push_back(&data[j]);
    total += policy_loss(p, ptrs, lambda_aux) * static_cast<double>(ptrs.size());
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

PolicyParams train_policy(const PolicyParams& init, std::span<const TrainingSample> data, const TrainHyper& hyper,
                          TrainReport* report) {
  if (data.empty()) throw Error(ErrorCode::Training, "train_policy: empty dataset");
  if (!(hyper.learning_rate > 0.0) || hyper.batch_size < 1 || hyper.epochs < 1 || hyper.patience < 1)
    throw Error(ErrorCode::Training, "train_policy: invalid hyperparameters");
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;

  PolicyParams params = init;
  PolicyParams best = init;
  TrainReport rep;
  rep.initial_loss = dataset_loss(params, data, hyper.lambda_aux);
  if (!std::isfinite(rep.initial_loss)) throw Error(ErrorCode::Training, "train_policy: initial loss is not finite");
  rep.best_loss = rep.initial_loss;

  const Eigen::Index P = params.theta().size();
  Vec m = Vec::Zero(P);
  Vec v = Vec::Zero(P);
  Vec g(P);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const TrainingSample*> batch;
  long long step = 0;
  int since_best = 0;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    Rng rng = make_stream(hyper.seed, 0x7472616e, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(hyper.batch_size)) {
      batch.clear();
      for (std::size_t j = i; j < std::min(order.size(), i + hyper.batch_size); ++j) batch.push_back(&data[order[j]]);
      policy_loss(params, batch, hyper.lambda_aux, &g);
      ++step;
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      params.theta().array() -= hyper.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
    const double loss = dataset_loss(params, data, hyper.lambda_aux);
    if (!std::isfinite(loss) || !params.theta().allFinite())
      throw Error(ErrorCode::Training, "train_policy: loss diverged in epoch " + std::to_string(epoch));
    rep.epoch_losses.push_back(loss);
    rep.epochs_run = epoch;
    if (loss < rep.best_loss) {
      rep.best_loss = loss;
      rep.best_epoch = epoch;
      best = params;
      since_best = 0;
    } else if (++since_best >= hyper.patience) {
      break;
    }
  }
  if (report) *report = rep;
  return best;
}

Action PolicyController::act(const SensorFrame& frame, std::span<const State> ref_window) {
  PolicyInput in;
  in.image = &frame.obs.image;
  in.other = frame.obs.other;
  in.ref = subsample_reference(ref_window);
  const PolicyOutput out = policy_forward(params_, in);
  info_ = {};
  info_.x_hat = out.x_hat;
  return out.u;
}

}  // namespace tubelab
