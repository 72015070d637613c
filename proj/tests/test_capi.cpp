#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tubelab/tubelab.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const std::string kSmoke = std::string(TUBELAB_SOURCE_DIR) + "/configs/smoke.toml";

void count_logs(tl_log_level, const char*, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST_CASE("version and error reporting") {
  CHECK(std::string(tl_version()) == "0.1.0");
  tl_session* s = nullptr;
  CHECK(tl_session_create("/nonexistent/config.toml", &s) == TL_ERR_IO);
  CHECK(s == nullptr);
  CHECK(std::strlen(tl_last_error()) > 0);
  CHECK(tl_session_create(nullptr, nullptr) == TL_ERR_INVALID_ARGUMENT);

  const fs::path bad = fs::temp_directory_path() / "tubelab_capi_bad.toml";
  std::FILE* f = std::fopen(bad.c_str(), "w");
  std::fputs("[mpc]\nhorizn = 1\n", f);
  std::fclose(f);
  CHECK(tl_session_create(bad.c_str(), &s) == TL_ERR_CONFIG);
  fs::remove(bad);
}

TEST_CASE("session, synthesis and hashing") {
  tl_session* s = nullptr;
  REQUIRE(tl_session_create(kSmoke.c_str(), &s) == TL_OK);
  char h1[17], h2[17];
  REQUIRE(tl_session_config_hash(s, h1) == TL_OK);
  CHECK(std::strlen(h1) == 16);
  tl_session_set_seed(s, 42);
  tl_session_config_hash(s, h2);
  CHECK(std::string(h1) != std::string(h2));
  tl_session_set_seed(s, 0);

  tl_synthesis* syn = nullptr;
  REQUIRE(tl_synthesize(s, &syn) == TL_OK);
  size_t dim = 0;
  double lo[8], hi[8];
  REQUIRE(tl_synthesis_box(syn, TL_BOX_Z, lo, hi, 8, &dim) == TL_OK);
  CHECK(dim == 8);
  for (size_t i = 0; i < dim; ++i) CHECK(hi[i] >= lo[i]);
  REQUIRE(tl_synthesis_box(syn, TL_BOX_U_BAR, lo, hi, 8, &dim) == TL_OK);
  CHECK(dim == 3);
  CHECK(tl_synthesis_box(syn, static_cast<tl_box_id>(42), lo, hi, 8, &dim) == TL_ERR_INVALID_ARGUMENT);
  size_t rows = 0, cols = 0;
  std::vector<double> k(24);
  REQUIRE(tl_synthesis_gain(syn, k.data(), k.size(), &rows, &cols) == TL_OK);
  CHECK(rows == 3);
  CHECK(cols == 8);
  tl_synthesis_destroy(syn);
  tl_session_destroy(s);
}

TEST_CASE("commands through the C interface") {
  tl_session* s = nullptr;
  REQUIRE(tl_session_create(kSmoke.c_str(), &s) == TL_OK);
  int logs = 0;
  tl_set_log_callback(count_logs, &logs);
  const fs::path out = fs::temp_directory_path() / "tubelab_capi_out";
  fs::remove_all(out);
  REQUIRE(tl_cmd_synth(s, out.c_str()) == TL_OK);
  CHECK(fs::exists(out / "synthesis.json"));
  CHECK(logs > 0);
  CHECK(tl_cmd_synth(s, nullptr) == TL_ERR_INVALID_ARGUMENT);
  CHECK(tl_cmd_eval(s, (out / "missing.tlp").c_str(), out.c_str()) == TL_ERR_IO);
  tl_set_log_callback(nullptr, nullptr);

  REQUIRE(tl_cmd_train(s, out.c_str()) == TL_OK);
  tl_policy* p = nullptr;
  REQUIRE(tl_policy_load((out / "policy.tlp").c_str(), &p) == TL_OK);
  size_t n = 0;
  tl_policy_parameter_count(p, &n);
  CHECK(n > 0);
  std::vector<float> img(16 * 16, 0.5f);
  double other[6] = {2.5, 0, 0, 0, 0, 0};
  double ref[48] = {};
  double action[3], state[8];
  REQUIRE(tl_policy_forward(p, img.data(), img.size(), other, ref, action, state) == TL_OK);
  for (double a : action) CHECK(std::isfinite(a));
  CHECK(tl_policy_forward(p, img.data(), 10, other, ref, action, nullptr) == TL_ERR_INVALID_ARGUMENT);
  tl_policy_destroy(p);
  tl_session_destroy(s);
  fs::remove_all(out);
}
