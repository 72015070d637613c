#include "tubelab/tubelab.h"

#include "tubelab/app.hpp"

#include <cstring>
#include <mutex>
#include <string>

struct tl_session {
  tubelab::RunConfig cfg;
};

struct tl_synthesis {
  tubelab::SynthesisResult syn;
};

struct tl_policy {
  tubelab::PolicyParams params;
};

namespace {

thread_local std::string g_last_error;

std::mutex g_log_mutex;
tl_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

void log_message(tubelab::LogLevel level, const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  if (g_log_fn) g_log_fn(static_cast<tl_log_level>(level), msg.c_str(), g_log_user);
}

const tubelab::LogSink kSink = [](tubelab::LogLevel level, const std::string& msg) { log_message(level, msg); };

tl_status map_code(tubelab::ErrorCode code) {
  using tubelab::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidParameter:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::EmptyInput:
      return TL_ERR_INVALID_ARGUMENT;
    case ErrorCode::Config:
    case ErrorCode::UnsupportedConfiguration:
      return TL_ERR_CONFIG;
    case ErrorCode::Io:
      return TL_ERR_IO;
    case ErrorCode::TubeTooLarge:
      return TL_ERR_TUBE_TOO_LARGE;
    case ErrorCode::Infeasible:
      return TL_ERR_INFEASIBLE;
    case ErrorCode::Synthesis:
    case ErrorCode::Instability:
    case ErrorCode::Convergence:
    case ErrorCode::DegeneratePose:
    case ErrorCode::Controller:
      return TL_ERR_NUMERIC;
    case ErrorCode::Augmentation:
    case ErrorCode::Training:
      return TL_ERR_TRAINING;
  }
  return TL_ERR_INTERNAL;
}

tl_status fail(tl_status status, const std::string& msg) {
  g_last_error = msg;
  log_message(tubelab::LogLevel::Error, msg);
  return status;
}

template <class F>
tl_status guarded(F&& body) {
  g_last_error.clear();
  try {
    return body();
  } catch (const tubelab::Error& e) {
    return fail(map_code(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(TL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(TL_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(TL_ERR_INTERNAL, "unknown exception");
  }
}

std::filesystem::path require_dir(const char* out_dir) {
  if (!out_dir || !*out_dir) throw tubelab::Error(tubelab::ErrorCode::InvalidParameter, "out_dir must be given");
  return out_dir;
}

}  // namespace

extern "C" {

const char* tl_version(void) { return "0.1.0"; }

const char* tl_last_error(void) { return g_last_error.c_str(); }

void tl_set_log_callback(tl_log_fn fn, void* user) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

tl_status tl_session_create(const char* config_path, tl_session** out) {
  return guarded([&] {
    if (!out) return fail(TL_ERR_INVALID_ARGUMENT, "out must not be NULL");
    *out = nullptr;
    auto s = std::make_unique<tl_session>();
    if (config_path && *config_path) s->cfg = tubelab::load_config(config_path);
    *out = s.release();
    return TL_OK;
  });
}

void tl_session_destroy(tl_session* session) { delete session; }

tl_status tl_session_set_seed(tl_session* session, uint64_t seed) {
  if (!session) return fail(TL_ERR_INVALID_ARGUMENT, "session must not be NULL");
  session->cfg.seed = seed;
  return TL_OK;
}

tl_status tl_session_set_full_scale(tl_session* session, int enabled) {
  if (!session) return fail(TL_ERR_INVALID_ARGUMENT, "session must not be NULL");
  if (enabled) tubelab::apply_full_scale(session->cfg);
  return TL_OK;
}

tl_status tl_session_config_hash(const tl_session* session, char out[17]) {
  return guarded([&] {
    if (!session || !out) return fail(TL_ERR_INVALID_ARGUMENT, "session and out must not be NULL");
    const std::string h = tubelab::hash_hex(tubelab::config_hash(session->cfg));
    std::memcpy(out, h.c_str(), 17);
    return TL_OK;
  });
}

tl_status tl_cmd_synth(tl_session* session, const char* out_dir) {
  return guarded([&] {
    if (!session) return fail(TL_ERR_INVALID_ARGUMENT, "session must not be NULL");
    tubelab::cmd_synth(session->cfg, require_dir(out_dir), kSink);
    return TL_OK;
  });
}

tl_status tl_cmd_demo(tl_session* session, const char* out_dir) {
  return guarded([&] {
    if (!session) return fail(TL_ERR_INVALID_ARGUMENT, "session must not be NULL");
    tubelab::cmd_demo(session->cfg, require_dir(out_dir), kSink);
    return TL_OK;
  });
}

tl_status tl_cmd_train(tl_session* session, const char* out_dir) {
  return guarded([&] {
    if (!session) return fail(TL_ERR_INVALID_ARGUMENT, "session must not be NULL");
    tubelab::cmd_train(session->cfg, require_dir(out_dir), kSink);
    return TL_OK;
  });
}

tl_status tl_cmd_eval(tl_session* session, const char* policy_path, const char* out_dir) {
  return guarded([&] {
    if (!session) return fail(TL_ERR_INVALID_ARGUMENT, "session must not be NULL");
    const std::filesystem::path policy = policy_path ? policy_path : "";
    tubelab::cmd_eval(session->cfg, policy, require_dir(out_dir), kSink);
    return TL_OK;
  });
}

tl_status tl_cmd_experiment(tl_session* session, const char* out_dir) {
  return guarded([&] {
    if (!session) return fail(TL_ERR_INVALID_ARGUMENT, "session must not be NULL");
    const auto summary = tubelab::cmd_experiment(session->cfg, require_dir(out_dir), kSink);
    if (summary.failed_cells > 0)
      return fail(TL_ERR_PARTIAL, std::to_string(summary.failed_cells) + " experiment cell(s) failed");
    return TL_OK;
  });
}

tl_status tl_cmd_noise_sweep(tl_session* session, const char* policy_path, const char* out_dir) {
  return guarded([&] {
    if (!session) return fail(TL_ERR_INVALID_ARGUMENT, "session must not be NULL");
    const std::filesystem::path policy = (policy_path && *policy_path) ? policy_path : session->cfg.sweep.policy;
    tubelab::cmd_noise_sweep(session->cfg, policy, require_dir(out_dir), kSink);
    return TL_OK;
  });
}

tl_status tl_synthesize(tl_session* session, tl_synthesis** out) {
  return guarded([&] {
    if (!session || !out) return fail(TL_ERR_INVALID_ARGUMENT, "session and out must not be NULL");
    *out = nullptr;
    auto s = std::make_unique<tl_synthesis>();
    s->syn = tubelab::synthesize(tubelab::make_synthesis_inputs(session->cfg));
    *out = s.release();
    return TL_OK;
  });
}

void tl_synthesis_destroy(tl_synthesis* syn) { delete syn; }

tl_status tl_synthesis_box(const tl_synthesis* syn, tl_box_id which, double* lo, double* hi, size_t capacity,
                           size_t* dim) {
  return guarded([&] {
    if (!syn || !dim) return fail(TL_ERR_INVALID_ARGUMENT, "syn and dim must not be NULL");
    const tubelab::Box* b = nullptr;
    switch (which) {
      case TL_BOX_Z: b = &syn->syn.Z; break;
      case TL_BOX_S: b = &syn->syn.S; break;
      case TL_BOX_S_CTRL: b = &syn->syn.S_ctrl; break;
      case TL_BOX_X_BAR: b = &syn->syn.X_bar; break;
      case TL_BOX_U_BAR: b = &syn->syn.U_bar; break;
      default: return fail(TL_ERR_INVALID_ARGUMENT, "unknown box id");
    }
    *dim = static_cast<size_t>(b->dim());
    for (size_t i = 0; i < *dim && i < capacity; ++i) {
      if (lo) lo[i] = b->lo()(static_cast<Eigen::Index>(i));
      if (hi) hi[i] = b->hi()(static_cast<Eigen::Index>(i));
    }
    return TL_OK;
  });
}

tl_status tl_synthesis_gain(const tl_synthesis* syn, double* k, size_t capacity, size_t* rows, size_t* cols) {
  return guarded([&] {
    if (!syn || !rows || !cols) return fail(TL_ERR_INVALID_ARGUMENT, "syn, rows and cols must not be NULL");
    const auto& K = syn->syn.K;
    *rows = static_cast<size_t>(K.rows());
    *cols = static_cast<size_t>(K.cols());
    size_t n = 0;
    for (Eigen::Index r = 0; r < K.rows(); ++r)
      for (Eigen::Index c = 0; c < K.cols(); ++c, ++n)
        if (k && n < capacity) k[n] = K(r, c);
    return TL_OK;
  });
}

tl_status tl_policy_load(const char* path, tl_policy** out) {
  return guarded([&] {
    if (!path || !out) return fail(TL_ERR_INVALID_ARGUMENT, "path and out must not be NULL");
    *out = nullptr;
    auto p = std::make_unique<tl_policy>();
    p->params = tubelab::PolicyParams::load(path);
    *out = p.release();
    return TL_OK;
  });
}

void tl_policy_destroy(tl_policy* policy) { delete policy; }

tl_status tl_policy_parameter_count(const tl_policy* policy, size_t* count) {
  if (!policy || !count) return fail(TL_ERR_INVALID_ARGUMENT, "policy and count must not be NULL");
  *count = policy->params.size();
  return TL_OK;
}

tl_status tl_policy_forward(const tl_policy* policy, const float* image, size_t image_pixels, const double* other,
                            const double* ref, double* action, double* state) {
  return guarded([&] {
    if (!policy || !other || !ref || !action)
      return fail(TL_ERR_INVALID_ARGUMENT, "policy, other, ref and action must not be NULL");
    const auto& shape = policy->params.shape();
    tubelab::Image img;
    tubelab::PolicyInput in;
    if (shape.image_pixels > 0) {
      if (!image || image_pixels != static_cast<size_t>(shape.image_pixels))
        return fail(TL_ERR_INVALID_ARGUMENT, "image must hold " + std::to_string(shape.image_pixels) + " pixels");
      img = tubelab::Image(shape.image_pixels, 1);
      std::memcpy(img.pixels.data(), image, image_pixels * sizeof(float));
      in.image = &img;
    }
    in.other = Eigen::Map<const tubelab::OtherVec>(other);
    in.ref = Eigen::Map<const tubelab::Vec>(ref, shape.ref_dim);
    const auto outp = tubelab::policy_forward(policy->params, in);
    for (int i = 0; i < tubelab::kInputDim; ++i) action[i] = outp.u(i);
    if (state)
      for (int i = 0; i < tubelab::kStateDim; ++i) state[i] = outp.x_hat(i);
    return TL_OK;
  });
}

}  // extern "C"
