#pragma once

#include "tubelab/common.hpp"
#include "tubelab/controller.hpp"
#include "tubelab/setops.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace tubelab {

// Horizon indices of the reference window fed to the network.
inline constexpr int kRefIndices[] = {0, 2, 4, 8, 16, 29};
inline constexpr int kRefCount = 6;

// Concatenate the selected window states (clamped to the window length).
Vec subsample_reference(std::span<const State> window);

struct PolicyShape {
  int image_pixels = 1024;  // 0 disables the image trunk
  std::vector<int> image_hidden = {128, 64};
  int other_dim = kOtherDim;
  int ref_dim = kRefCount * kStateDim;
  std::vector<int> fusion_hidden = {128, 64};
  int action_dim = kInputDim;
  int state_dim = kStateDim;

  int embedding_dim() const { return image_pixels > 0 ? image_hidden.back() : 0; }
  int fusion_input_dim() const { return embedding_dim() + other_dim + ref_dim; }
  bool operator==(const PolicyShape&) const = default;
};

// Affine maps between physical units and network units: n = (v - center) / scale.
struct Normalizer {
  Vec other_center, other_scale;
  Vec ref_center, ref_scale;
  Vec action_center, action_scale;
  Vec state_center, state_scale;
  double image_offset = 0.0;

  static Normalizer identity(const PolicyShape& shape);
  // Scales from the state constraint box and the absolute input box.
  static Normalizer from_constraints(const PolicyShape& shape, const Box& X, const Box& U_abs);
};

struct LayerView {
  int in = 0;
  int out = 0;
  std::size_t offset = 0;  // W (out x in, column-major) followed by b (out)
};

// All weights live in one flat vector so the optimizer and gradient checks
// can treat them uniformly.
class PolicyParams {
 public:
  PolicyParams() = default;
  PolicyParams(PolicyShape shape, Normalizer norm);

  const PolicyShape& shape() const { return shape_; }
  const Normalizer& normalizer() const { return norm_; }
  Vec& theta() { return theta_; }
  const Vec& theta() const { return theta_; }
  std::size_t size() const { return static_cast<std::size_t>(theta_.size()); }

  const std::vector<LayerView>& image_layers() const { return image_; }
  const std::vector<LayerView>& fusion_layers() const { return fusion_; }
  const LayerView& action_head() const { return action_; }
  const LayerView& state_head() const { return state_; }

  // Glorot-uniform weights, zero biases.
  void initialize(Rng& rng);

  void save(const std::filesystem::path& path) const;
  static PolicyParams load(const std::filesystem::path& path);

 private:
  PolicyShape shape_;
  Normalizer norm_;
  std::vector<LayerView> image_;
  std::vector<LayerView> fusion_;
  LayerView action_;
  LayerView state_;
  Vec theta_;
};

struct PolicyInput {
  const Image* image = nullptr;  // may be null when the image trunk is disabled
  OtherVec other = OtherVec::Zero();
  Vec ref;  // subsampled reference, ref_dim values
};

struct PolicyOutput {
  Action u;
  State x_hat;
};

PolicyOutput policy_forward(const PolicyParams& params, const PolicyInput& input);

struct TrainingSample {
  enum class Origin { Demo, Synthetic, RealDb };
  Image image;
  OtherVec other = OtherVec::Zero();
  Vec ref;
  Action action_target = Action::Zero();
  State state_target = State::Zero();
  Origin origin = Origin::Demo;
};

const char* to_string(TrainingSample::Origin origin);

// Mean squared error in normalized units:
//   mean_{batch,dims}(u - u*)^2 + lambda_aux * mean_{batch,dims}(x - x*)^2
double policy_loss(const PolicyParams& params, std::span<const TrainingSample* const> batch, double lambda_aux,
                   Vec* grad = nullptr);

struct TrainHyper {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 50;
  int patience = 7;
  double lambda_aux = 0.1;
  std::uint64_t seed = 0;
};

struct TrainReport {
  double initial_loss = 0.0;
  double best_loss = 0.0;
  int epochs_run = 0;
  int best_epoch = 0;
  std::vector<double> epoch_losses;
};

// Adam with early stopping on the full training-set loss; returns the best
// parameters seen (the initial ones count).
PolicyParams train_policy(const PolicyParams& init, std::span<const TrainingSample> data, const TrainHyper& hyper,
                          TrainReport* report = nullptr);

class PolicyController final : public Controller {
 public:
  explicit PolicyController(PolicyParams params) : params_(std::move(params)) {}
  Action act(const SensorFrame& frame, std::span<const State> ref_window) override;
  bool needs_image() const override { return params_.shape().image_pixels > 0; }
  StepInfo info() const override { return info_; }
  const PolicyParams& params() const { return params_; }

 private:
  PolicyParams params_;
  StepInfo info_;
};

}  // namespace tubelab
