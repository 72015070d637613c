#include <doctest.h>

#include "tubelab/experiment.hpp"

#include <cmath>

using namespace tubelab;

namespace {

PolicyShape tiny_shape(int pixels) {
  PolicyShape s;
  s.image_pixels = pixels;
  s.image_hidden = {3};
  s.ref_dim = 4;
  s.fusion_hidden = {5};
  return s;
}

TrainingSample random_sample(const PolicyShape& shape, Rng& rng) {
  TrainingSample s;
  if (shape.image_pixels > 0) {
    s.image = Image(shape.image_pixels, 1);
    for (float& p : s.image.pixels) p = static_cast<float>(uniform(rng, 0, 1));
  }
  for (int i = 0; i < kOtherDim; ++i) s.other(i) = uniform(rng, -1, 1);
  s.ref = Vec(shape.ref_dim);
  for (int i = 0; i < shape.ref_dim; ++i) s.ref(i) = uniform(rng, -1, 1);
  for (int i = 0; i < kInputDim; ++i) s.action_target(i) = uniform(rng, -1, 1);
  for (int i = 0; i < kStateDim; ++i) s.state_target(i) = uniform(rng, -1, 1);
  return s;
}

PolicyInput input_of(const TrainingSample& s) {
  PolicyInput in;
  in.image = s.image.empty() ? nullptr : &s.image;
  in.other = s.other;
  in.ref = s.ref;
  return in;
}

double max_rel_grad_error(const PolicyParams& base, const std::vector<TrainingSample>& data, double lambda) {
  std::vector<const TrainingSample*> batch;
  for (const auto& s : data) batch.push_back(&s);
  PolicyParams p = base;
  Vec grad;
  policy_loss(p, batch, lambda, &grad);
  double worst = 0.0;
  const double eps = 1e-5;
  for (Eigen::Index i = 0; i < p.theta().size(); ++i) {
    const double keep = p.theta()(i);
    p.theta()(i) = keep + eps;
    const double up = policy_loss(p, batch, lambda);
    p.theta()(i) = keep - eps;
    const double down = policy_loss(p, batch, lambda);
    p.theta()(i) = keep;
    const double fd = (up - down) / (2 * eps);
    const double denom = std::max({std::abs(fd), std::abs(grad(i)), 1e-6});
    worst = std::max(worst, std::abs(fd - grad(i)) / denom);
  }
  return worst;
}

const Lab& lab() {
  static const Lab l = make_lab(RunConfig{});
  return l;
}

struct ConstantLearner final : Controller {
  Action u;
  explicit ConstantLearner(Action a) : u(std::move(a)) {}
  Action act(const SensorFrame&, std::span<const State>) override { return u; }
};

DemoStep demo_step_at(const Lab& l, int t) {
  DemoStep s;
  s.t = t;
  s.x_bar = l.ref.at(static_cast<std::size_t>(t));
  s.x_hat = s.x_bar;
  s.u_bar = l.inputs.sys.u_eq;
  s.obs.image = l.camera(s.x_bar);
  s.obs.other = select_other(s.x_bar);
  s.ref = subsample_reference(l.ref.window(static_cast<std::size_t>(t), l.expert.horizon));
  return s;
}

}  // namespace

TEST_CASE("forward pass with zero weights returns the head biases") {
  const PolicyShape shape = tiny_shape(4);
  PolicyParams p(shape, Normalizer::identity(shape));
  p.theta().setZero();
  const LayerView& a = p.action_head();
  const LayerView& x = p.state_head();
  for (int i = 0; i < a.out; ++i) p.theta()(static_cast<Eigen::Index>(a.offset) + a.out * a.in + i) = 0.1 * (i + 1);
  for (int i = 0; i < x.out; ++i) p.theta()(static_cast<Eigen::Index>(x.offset) + x.out * x.in + i) = -0.2 * i;
  Rng rng(1);
  const TrainingSample s = random_sample(shape, rng);
  const auto out = policy_forward(p, input_of(s));
  for (int i = 0; i < kInputDim; ++i) CHECK(out.u(i) == doctest::Approx(0.1 * (i + 1)).epsilon(1e-15));
  for (int i = 0; i < kStateDim; ++i) CHECK(out.x_hat(i) == doctest::Approx(-0.2 * i).epsilon(1e-15));

  // Hand-computed loss for the same single sample.
  const TrainingSample* batch[] = {&s};
  double au = 0.0, ax = 0.0;
  for (int i = 0; i < kInputDim; ++i) au += std::pow(0.1 * (i + 1) - s.action_target(i), 2);
  for (int i = 0; i < kStateDim; ++i) ax += std::pow(-0.2 * i - s.state_target(i), 2);
  const double lambda = 0.3;
  CHECK(std::abs(policy_loss(p, batch, lambda) - (au / kInputDim + lambda * ax / kStateDim)) < 1e-12);
  CHECK(std::abs(policy_loss(p, batch, 0.0) - au / kInputDim) < 1e-12);
}

TEST_CASE("forward pass is deterministic and loss vanishes at the targets") {
  const PolicyShape shape = tiny_shape(4);
  PolicyParams p(shape, Normalizer::identity(shape));
  Rng rng(2);
  p.initialize(rng);
  TrainingSample s = random_sample(shape, rng);
  const auto a = policy_forward(p, input_of(s));
  const auto b = policy_forward(p, input_of(s));
  CHECK(a.u == b.u);
  CHECK(a.x_hat == b.x_hat);
  s.action_target = a.u;
  s.state_target = a.x_hat;
  const TrainingSample* batch[] = {&s};
  CHECK(policy_loss(p, batch, 0.1) == 0.0);

  PolicyInput bad = input_of(s);
  bad.ref = Vec::Zero(3);
  CHECK_THROWS_AS(policy_forward(p, bad), Error);
}

TEST_CASE("analytic gradient matches finite differences") {
  for (int pixels : {0, 4}) {
    const PolicyShape shape = tiny_shape(pixels);
    Rng rng(3 + pixels);
    std::vector<TrainingSample> data;
    for (int k = 0; k < 3; ++k) data.push_back(random_sample(shape, rng));
    for (int point = 0; point < 5; ++point) {
      PolicyParams p(shape, Normalizer::identity(shape));
      p.initialize(rng);
      for (Eigen::Index i = 0; i < p.theta().size(); ++i) p.theta()(i) += uniform(rng, -0.1, 0.1);
      CHECK(max_rel_grad_error(p, data, 0.1) < 1e-4);
    }
  }
}

TEST_CASE("training memorizes a single sample and is reproducible") {
  const PolicyShape shape = tiny_shape(0);
  Rng rng(4);
  std::vector<TrainingSample> data{random_sample(shape, rng)};
  for (int i = 0; i < kInputDim; ++i) data[0].action_target(i) *= 0.5;
  for (int i = 0; i < kStateDim; ++i) data[0].state_target(i) *= 0.5;
  PolicyParams init(shape, Normalizer::identity(shape));
  init.initialize(rng);
  TrainHyper h;
  h.learning_rate = 1e-2;
  h.epochs = 3000;
  h.patience = 3000;
  TrainReport rep;
  const PolicyParams fit = train_policy(init, data, h, &rep);
  CHECK(rep.best_loss < 1e-6);
  CHECK(rep.best_loss <= rep.initial_loss);
  const PolicyParams again = train_policy(init, data, h);
  CHECK(fit.theta() == again.theta());
}

TEST_CASE("training fits a linear map of the non-image inputs") {
  PolicyShape shape = tiny_shape(0);
  shape.fusion_hidden = {32};
  Rng rng(5);
  Mat M(kInputDim, kOtherDim);
  for (int i = 0; i < M.size(); ++i) M.data()[i] = uniform(rng, -0.3, 0.3);
  std::vector<TrainingSample> data;
  for (int k = 0; k < 200; ++k) {
    TrainingSample s = random_sample(shape, rng);
    s.action_target = M * s.other;
    s.state_target.setZero();
    data.push_back(std::move(s));
  }
  PolicyParams init(shape, Normalizer::identity(shape));
  init.initialize(rng);
  TrainHyper h;
  h.learning_rate = 3e-3;
  h.epochs = 400;
  h.patience = 400;
  TrainReport rep;
  train_policy(init, data, h, &rep);
  CHECK(rep.best_loss < 1e-3);
}

TEST_CASE("policy files round-trip") {
  const PolicyShape shape = tiny_shape(4);
  PolicyParams p(shape, Normalizer::identity(shape));
  Rng rng(6);
  p.initialize(rng);
  const auto path = std::filesystem::temp_directory_path() / "tubelab_policy_test.tlp";
  p.save(path);
  const PolicyParams q = PolicyParams::load(path);
  CHECK(q.shape() == p.shape());
  CHECK(q.theta() == p.theta());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(PolicyParams::load(path), Error);
}

TEST_CASE("augmented samples stay in the tube and follow the ancillary law") {
  const Lab& l = lab();
  const DemoStep step = demo_step_at(l, 40);
  CHECK(ancillary(step.x_bar, step.x_bar, step.u_bar, l.syn.K) == Vec(step.u_bar));

  AugmentConfig da = l.da;
  da.epsilon_bar = 0.0;
  da.n_samples = 10000;
  Rng rng(7);
  const auto res = augment_timestep(step, l.syn, l.U_abs, nullptr, da, l.camera, rng);
  CHECK(res.n_synthetic == 10000);
  CHECK(res.n_real == 0);
  Vec lo = Vec::Constant(kStateDim, 1e9), hi = Vec::Constant(kStateDim, -1e9);
  for (const auto& s : res.samples) {
    const Vec d = s.state_target - step.x_bar;
    CHECK(contains(l.syn.Z, d, 1e-12));
    lo = lo.cwiseMin(d);
    hi = hi.cwiseMax(d);
    const Vec expect = saturate(ancillary(s.state_target, step.x_bar, step.u_bar, l.syn.K), l.U_abs);
    CHECK(Vec(s.action_target) == expect);
    CHECK(contains(l.U_abs, Vec(s.action_target)));
    CHECK(s.origin == TrainingSample::Origin::Synthetic);
  }
  const Vec w = l.syn.Z.hi() - l.syn.Z.lo();
  for (int i = 0; i < kStateDim; ++i) {
    CHECK(lo(i) - l.syn.Z.lo()(i) <= 0.05 * w(i));
    CHECK(l.syn.Z.hi()(i) - hi(i) <= 0.05 * w(i));
  }
}

TEST_CASE("real observations are capped by the ratio") {
  const Lab& l = lab();
  const DemoStep step = demo_step_at(l, 10);
  ObservationDatabase db;
  Rng rng(8);
  for (int k = 0; k < 200; ++k) {
    const State x = (step.x_bar + 0.5 * sample_uniform(Box(l.syn.Z.lo(), l.syn.Z.hi()), rng)).eval();
    Observation o;
    o.image = l.camera(x);
    o.other = select_other(x);
    db.add(x, o);
  }
  AugmentConfig da = l.da;
  da.n_samples = 100;
  da.epsilon_bar = 0.5;
  const auto res = augment_timestep(step, l.syn, l.U_abs, &db, da, l.camera, rng);
  CHECK(res.n_real == 50);
  CHECK(res.n_synthetic == 50);
  CHECK(res.samples.size() == 100);
  for (const auto& s : res.samples) {
    if (s.origin != TrainingSample::Origin::RealDb) continue;
    CHECK(Vec(s.action_target) == saturate(ancillary(s.state_target, step.x_bar, step.u_bar, l.syn.K), l.U_abs));
  }

  da.epsilon_bar = 0.0;
  const auto none = augment_timestep(step, l.syn, l.U_abs, &db, da, l.camera, rng);
  CHECK(none.n_real == 0);
  CHECK(none.n_synthetic == 100);

  SynthesisResult broken = l.syn;
  broken.Z = Box();
  CHECK_THROWS_AS(augment_timestep(step, broken, l.U_abs, &db, da, l.camera, rng), Error);
}

TEST_CASE("expert demonstrations") {
  const Lab& l = lab();
  ExpertController expert(l.inputs.sys, l.inputs.cost, l.syn, l.U_abs, l.expert);
  const auto [dist, x0] = episode_setup(l, "source", 0x64656d6fULL, 0);
  ObservationDatabase db1, db2;
  const Demonstration a = collect_demonstration(expert, l.ref, dist, x0, l.episode, l.expert.horizon, {}, &db1);
  const Demonstration b = collect_demonstration(expert, l.ref, dist, x0, l.episode, l.expert.horizon, {}, &db2);
  REQUIRE_FALSE(a.rejected);
  CHECK(a.success);
  CHECK(a.steps.size() == 300);
  CHECK(db1.size() == static_cast<std::size_t>(a.episode_length));
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t k = 0; k < a.steps.size(); ++k) {
    CHECK((a.steps[k].u_label - b.steps[k].u_label).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(a.steps[k].u_executed == a.steps[k].u_label);
    CHECK(contains(l.U_abs, Vec(a.steps[k].u_executed)));
  }

  // TN-100 on one demonstration: 100 augmented samples per step plus the step itself.
  const MethodSpec tn = parse_method("bc_tn100", l.cfg);
  CHECK(tn.demos_per_round == 1);
  const auto data = build_dataset(l, tn, {a}, db1, 0);
  CHECK(data.size() == 100 * 300 + 300);
  for (const auto& s : data) CHECK(contains(l.U_abs, Vec(s.action_target)));
}

TEST_CASE("expert and learner mixing") {
  const Lab& l = lab();
  ExpertController expert(l.inputs.sys, l.inputs.cost, l.syn, l.U_abs, l.expert);
  ConstantLearner learner(Action(0.01, -0.01, 9.0));
  const auto [dist, x0] = episode_setup(l, "source", 0x64656d6fULL, 1);
  EpisodeOptions opts = l.episode;
  opts.t_max = 30;

  CollectOptions dagger;
  dagger.beta = 0.0;
  dagger.learner = &learner;
  const Demonstration d = collect_demonstration(expert, l.ref, dist, x0, opts, l.expert.horizon, dagger, nullptr);
  REQUIRE_FALSE(d.steps.empty());
  bool labels_differ = false;
  for (const auto& s : d.steps) {
    CHECK(s.u_executed == learner.u);
    labels_differ = labels_differ || s.u_label != s.u_executed;
  }
  CHECK(labels_differ);

  const MethodSpec bc = parse_method("bc", l.cfg);
  const MethodSpec dg = parse_method("dagger", l.cfg);
  CHECK_FALSE(bc.dagger);
  CHECK(dg.dagger);
  CHECK(bc.demos_per_round == l.cfg.experiment.demos_per_round_baseline);
  CHECK(parse_method("dagger_tn50", l.cfg).n_samples == 50);
  CHECK(parse_method("bc_dr", l.cfg).domain_randomization);
  CHECK_THROWS_AS(parse_method("bc_tn", l.cfg), Error);
}
