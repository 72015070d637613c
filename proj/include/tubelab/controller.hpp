#pragma once

#include "tubelab/common.hpp"
#include "tubelab/image.hpp"

#include <optional>
#include <span>

namespace tubelab {

// Policy-facing observation o_t = (I_t, o_other,t).
struct Observation {
  Image image;
  OtherVec other = OtherVec::Zero();
};

// Everything the sensors produce at one step. The expert consumes the full
// noisy state measurement; learned policies only see `obs`.
struct SensorFrame {
  Observation obs;
  State full = State::Zero();
};

struct StepInfo {
  std::optional<State> x_hat;
  std::optional<State> x_bar;
  std::optional<Action> u_bar;
  std::optional<Action> expert_action;  // expert label at the visited state, when available
  bool flagged = false;
  int qp_iterations = 0;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual Action act(const SensorFrame& frame, std::span<const State> ref_window) = 0;
  // Action actually executed on the plant after saturation / mixing.
  virtual void on_applied(const Action& /*u*/) {}
  virtual void reset() {}
  virtual bool needs_image() const { return false; }
  virtual StepInfo info() const { return {}; }
};

}  // namespace tubelab
