#include "uniada/attack.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace uniada;

namespace {

const std::vector<std::size_t> kShape{3, 32, 32};

std::vector<ObjectiveSpec> both_objectives() {
  return {{"steering", +1}, {"acceleration", +1}};
}

} // namespace

TEST_CASE("objective_loss: scalar suite against independent evaluation") {
  CHECK(objective_loss(0.7, 0.7, +1, 2.0) == 0.5);
  CHECK(objective_loss(0.7, 0.7, -1, 2.0) == 0.5);
  CHECK(objective_loss(2.0, 0.0, +1, 2.0) == doctest::Approx(0.5 * std::exp(-1.0)).epsilon(1e-9));
  CHECK(objective_loss(2.0, 0.0, -1, 2.0) == doctest::Approx(0.5 * std::exp(1.0)).epsilon(1e-9));
  CHECK_THROWS_AS(objective_loss(0.0, 0.0, +1, 0.0), std::invalid_argument);
}

TEST_CASE("objective_loss: strictly decreasing in d * diff, overflow guarded") {
  double prev = objective_loss(-5.0, 0.0, +1, 2.0);
  for (double diff = -4.5; diff <= 5.0; diff += 0.5) {
    const double cur = objective_loss(diff, 0.0, +1, 2.0);
    CHECK(cur < prev);
    prev = cur;
  }
  // exponent clamp keeps extreme differences finite
  CHECK(std::isfinite(objective_loss(-1e6, 0.0, +1, 2.0)));
  CHECK(std::isfinite(objective_loss(1e6, 0.0, -1, 2.0)));
}

TEST_CASE("multi_objective_loss") {
  CHECK(multi_objective_loss({0.5, 0.5}, {0.5, 0.5}) == doctest::Approx(0.5));
  CHECK(multi_objective_loss({0.2, 1.0}, {1.0, 0.0}) == doctest::Approx(0.2));
  CHECK(multi_objective_loss({0.1839, 1.3591}, {0.25, 0.75}) ==
        doctest::Approx(1.0653).epsilon(1e-9));
  CHECK_THROWS_AS(multi_objective_loss({0.5}, {0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("joint_loss: 1/beta per objective at tau=0, matches brute force") {
  const auto [video, labels] = synth_video(0, 3, kShape, Scenario::Stop);
  const VictimModel model = build_toy_cnn(0, kShape);
  const auto objectives = both_objectives();
  const std::vector<double> weights{0.5, 0.5};

  // tau = 0: every per-frame loss is exactly 1/beta
  const Video same = process_images(video, Tensor::zeros(kShape));
  CHECK(joint_loss(video, same, model, objectives, weights, 2.0) ==
        doctest::Approx(3.0 * 0.5).epsilon(1e-12));

  // random small tau: sum of independently recomputed per-frame losses
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> dt(-1.5f, 1.5f);
  Tensor tau = Tensor::zeros(kShape);
  for (float &v : tau.data())
    v = dt(rng);
  const Video adv = process_images(video, tau);

  double expected = 0.0;
  for (std::size_t n = 0; n < video.size(); ++n) {
    const auto po = predict(model, video.frames[n]);
    const auto pa = predict(model, adv.frames[n]);
    double frame = 0.0;
    for (std::size_t i = 0; i < objectives.size(); ++i) {
      const std::size_t h = model.head_index(objectives[i].id);
      frame += weights[i] * objective_loss(pa[h], po[h], objectives[i].direction, 2.0);
    }
    expected += frame;
  }
  CHECK(joint_loss(video, adv, model, objectives, weights, 2.0) ==
        doctest::Approx(expected).epsilon(1e-12));

  // single frame: equals the frame's weighted loss
  Video one{{video.frames[0]}, {0}};
  Video one_adv{{adv.frames[0]}, {0}};
  const auto po = predict(model, one.frames[0]);
  const auto pa = predict(model, one_adv.frames[0]);
  std::vector<double> losses;
  for (const auto &obj : objectives)
    losses.push_back(
        objective_loss(pa[model.head_index(obj.id)], po[model.head_index(obj.id)], obj.direction, 2.0));
  CHECK(joint_loss(one, one_adv, model, objectives, weights, 2.0) ==
        doctest::Approx(multi_objective_loss(losses, weights)).epsilon(1e-12));
}

TEST_CASE("batch_gradient_proposal: batch of one, duplicates, linear closed form") {
  const VictimModel linear = build_linear_victim(2, kShape);
  const auto [video, labels] = synth_video(2, 2, kShape, Scenario::Straight);
  const auto orig0 = predict(linear, video.frames[0]);

  const std::vector<ObjectiveSpec> steer_only{{"steering", +1}};
  const std::vector<double> w1{1.0};

  const auto single = batch_gradient_proposal(linear, {&video.frames[0]}, {&orig0}, steer_only,
                                              w1, 2.0);
  // closed form at tau=0: dL/dx = -(d/beta) * (1/beta) * w = -0.25 * w
  const Tensor &w = linear.graph.ops[linear.graph.heads[0]].weight;
  for (std::size_t k = 0; k < w.numel(); ++k)
    CHECK(single.mean_gradient[k] == doctest::Approx(-0.25 * w[k]).epsilon(1e-6));

  double expected_norm = 0.0;
  for (std::size_t k = 0; k < w.numel(); ++k)
    expected_norm += 0.0625 * static_cast<double>(w[k]) * w[k];
  CHECK(single.grad_norms[0][0] == doctest::Approx(std::sqrt(expected_norm)).epsilon(1e-6));

  // duplicated frame: identical mean gradient
  const auto dup = batch_gradient_proposal(linear, {&video.frames[0], &video.frames[0]},
                                           {&orig0, &orig0}, steer_only, w1, 2.0);
  CHECK(dup.mean_gradient.data() == single.mean_gradient.data());

  CHECK_THROWS_AS(batch_gradient_proposal(linear, {}, {}, steer_only, w1, 2.0),
                  std::invalid_argument);
}

TEST_CASE("conditional_rescale") {
  // norm 0.15 below theta 0.3: rescaled to norm theta, direction preserved
  Tensor g({3}, {0.09f, 0.0f, -0.12f}); // norm 0.15
  const Tensor scaled = conditional_rescale(g, 0.3);
  CHECK(l2_norm(scaled) == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(scaled[0] == doctest::Approx(0.18).epsilon(1e-6));
  CHECK(scaled[1] == 0.0f);
  CHECK(scaled[2] == doctest::Approx(-0.24).epsilon(1e-6));

  // norm above theta: untouched
  Tensor big({2}, {0.3f, 0.4f}); // norm 0.5
  CHECK(conditional_rescale(big, 0.3).data() == big.data());

  // zero gradient passes through
  const Tensor zero = Tensor::zeros({4});
  CHECK(conditional_rescale(zero, 0.3).data() == zero.data());

  CHECK_THROWS_AS(conditional_rescale(zero, 0.0), std::invalid_argument);
}

TEST_CASE("clip_perturbation") {
  const Tensor t({3}, {-3.0f, 0.0f, 3.0f});
  const Tensor c = clip_perturbation(t, 2.0);
  CHECK(c[0] == -2.0f);
  CHECK(c[1] == 0.0f);
  CHECK(c[2] == 2.0f);

  const Tensor inside({3}, {-1.0f, 0.5f, 1.9f});
  CHECK(clip_perturbation(inside, 2.0).data() == inside.data());

  // property: result matches a scalar clamp oracle, in-range values untouched
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> val(-6.0f, 6.0f);
  std::vector<float> data(128);
  for (float &v : data)
    v = val(rng);
  const Tensor random({128}, data);
  const Tensor clipped = clip_perturbation(random, 2.0);
  CHECK(linf_norm(clipped) <= 2.0f);
  for (std::size_t k = 0; k < random.numel(); ++k) {
    const float expect = std::min(2.0f, std::max(-2.0f, random[k]));
    CHECK(clipped[k] == expect);
    if (std::fabs(random[k]) <= 2.0f)
      CHECK(clipped[k] == random[k]);
  }
}

TEST_CASE("process_images: identity at tau=0 and pixel clamping") {
  const auto [video, labels] = synth_video(3, 2, kShape, Scenario::Straight);
  const Video same = process_images(video, Tensor::zeros(kShape));
  for (std::size_t n = 0; n < video.size(); ++n)
    CHECK(same.frames[n].data() == video.frames[n].data());

  Tensor frame = Tensor::full(kShape, 254.0f);
  frame[0] = 1.0f;
  Video tiny{{frame}, {0}};
  Tensor tau = Tensor::full(kShape, 2.0f);
  tau[0] = -2.0f;
  const Video adv = process_images(tiny, tau);
  CHECK(adv.frames[0][0] == 0.0f);   // 1 - 2 clamps to 0
  CHECK(adv.frames[0][1] == 255.0f); // 254 + 2 clamps to 255
  CHECK(tau[0] == -2.0f);            // tau untouched
}

TEST_CASE("lr_schedule") {
  auto [lr0, lg0] = lr_schedule(0, 0.2, 0.005);
  CHECK(lr0 == 0.2);
  CHECK(lg0 == 0.005);
  auto [lr49, lg49] = lr_schedule(49, 0.2, 0.005);
  CHECK(lr49 == 0.2);
  CHECK(lg49 == 0.005);
  auto [lr100, lg100] = lr_schedule(100, 0.2, 0.005);
  CHECK(lr100 == doctest::Approx(0.128).epsilon(1e-12));
  CHECK(lg100 == doctest::Approx(0.0032).epsilon(1e-12));
}

TEST_CASE("config validation rejects out-of-range values") {
  AttackConfig cfg;
  CHECK_NOTHROW(validate_config(cfg));
  AttackConfig bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
  bad = cfg;
  bad.beta = 0.0;
  CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
  bad = cfg;
  bad.decay_factor = 1.5;
  CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
  bad = cfg;
  bad.epsilon = -1.0;
  CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
}

TEST_CASE("objective validation") {
  const VictimModel model = build_toy_cnn(0, kShape);
  CHECK_THROWS_AS(validate_objectives({}, model), std::invalid_argument);
  CHECK_THROWS_AS(validate_objectives({{"steering", 2}}, model), std::invalid_argument);
  CHECK_THROWS_AS(validate_objectives({{"steering", 1}, {"steering", 1}}, model),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate_objectives({{"yaw", 1}}, model), std::invalid_argument);
  CHECK_NOTHROW(validate_objectives(both_objectives(), model));
}

TEST_CASE("run_attack: zero epochs returns an all-zero perturbation") {
  const auto [video, labels] = synth_video(4, 4, kShape, Scenario::Stop);
  const VictimModel model = build_toy_cnn(4, kShape);
  AttackConfig cfg;
  cfg.epochs = 0;
  const AttackResult res = run_attack(video, model, both_objectives(), cfg, true);
  for (float v : res.tau.data())
    CHECK(v == 0.0f);
  CHECK(res.trace.empty());
}

TEST_CASE("run_attack: initial losses are exactly 1/beta") {
  const auto [video, labels] = synth_video(4, 4, kShape, Scenario::Stop);
  const VictimModel model = build_toy_cnn(4, kShape);
  AttackConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  const AttackResult res = run_attack(video, model, both_objectives(), cfg, true);
  REQUIRE(res.initial_losses.size() == 2);
  CHECK(res.initial_losses[0] == 0.5);
  CHECK(res.initial_losses[1] == 0.5);
}

TEST_CASE("run_attack: equal-weights mode pins weights and is deterministic") {
  const auto [video, labels] = synth_video(5, 6, kShape, Scenario::Stop);
  const VictimModel model = build_toy_cnn(5, kShape);
  AttackConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.seed = 42;

  const AttackResult a = run_attack(video, model, both_objectives(), cfg, false);
  for (const StepTrace &st : a.trace) {
    CHECK(st.weights[0] == 0.5);
    CHECK(st.weights[1] == 0.5);
  }

  const AttackResult b = run_attack(video, model, both_objectives(), cfg, false);
  CHECK(a.tau.data() == b.tau.data());

  AttackConfig other = cfg;
  other.seed = 43;
  const AttackResult c = run_attack(video, model, both_objectives(), other, false);
  CHECK(a.tau.data() != c.tau.data());
}

TEST_CASE("run_attack: adaptive run is seed-reproducible and keeps invariants") {
  const auto [video, labels] = synth_video(6, 6, kShape, Scenario::Stop);
  const VictimModel model = build_toy_cnn(6, kShape);
  AttackConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 4;
  cfg.seed = 7;

  const AttackResult a = run_attack(video, model, both_objectives(), cfg, true);
  const AttackResult b = run_attack(video, model, both_objectives(), cfg, true);
  CHECK(a.tau.data() == b.tau.data());

  for (const StepTrace &st : a.trace) {
    CHECK(st.tau_linf <= cfg.epsilon);
    CHECK(st.pixel_min >= 0.0);
    CHECK(st.pixel_max <= 255.0);
    CHECK(std::fabs(st.weight_sum - 1.0) <= 1e-9);
    for (double w : st.weights)
      CHECK(w > 0.0);
  }
}

TEST_CASE("run_attack: single-objective adaptive updates are no-ops") {
  // With one objective the relative rate is pinned at 1 and the specific norm
  // equals its own average, so the weight update has zero pressure and the
  // adaptive run must match the equal-weights run bit for bit.
  const auto [video, labels] = synth_video(7, 5, kShape, Scenario::Stop);
  const VictimModel model = build_toy_cnn(7, kShape);
  const std::vector<ObjectiveSpec> steer_only{{"steering", +1}};
  AttackConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 2;
  cfg.seed = 3;

  const AttackResult adaptive = run_attack(video, model, steer_only, cfg, true);
  const AttackResult equal = run_attack(video, model, steer_only, cfg, false);
  CHECK(adaptive.tau.data() == equal.tau.data());
  for (const StepTrace &st : adaptive.trace)
    CHECK(st.weights[0] == 1.0);
}

TEST_CASE("run_attack: trace is consistent with an independent recomputation") {
  const auto [video, labels] = synth_video(8, 5, kShape, Scenario::Stop);
  const VictimModel model = build_toy_cnn(8, kShape);
  AttackConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.record_tau = true;
  cfg.trace_stride = 1;

  const AttackResult res = run_attack(video, model, both_objectives(), cfg, true);
  REQUIRE_FALSE(res.trace.empty());
  for (std::size_t i = 0; i < res.trace.size(); i += 3) {
    const StepTrace &st = res.trace[i];
    REQUIRE(st.full_video_recorded);
    const Video adv = process_images(video, st.tau);
    const double recomputed =
        joint_loss(video, adv, model, both_objectives(), st.weights, cfg.beta);
    CHECK(st.joint == doctest::Approx(recomputed).epsilon(1e-5));
  }
}

TEST_CASE("run_attack: one linear-victim step strictly decreases the loss") {
  const auto [video, labels] = synth_video(9, 6, kShape, Scenario::Straight);
  const VictimModel model = build_linear_victim(9, kShape);
  const std::vector<ObjectiveSpec> steer_only{{"steering", +1}};
  AttackConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = static_cast<int>(video.size()); // one step over the full video
  const AttackResult res = run_attack(video, model, steer_only, cfg, true);
  REQUIRE(res.trace.size() == 1);
  CHECK(res.trace[0].full_video_recorded);
  const double initial_joint = static_cast<double>(video.size()) / cfg.beta;
  CHECK(res.trace[0].joint < initial_joint);
  // step small enough that the budget clamp stayed inactive
  CHECK(res.trace[0].tau_linf < cfg.epsilon);
}

TEST_CASE("run_attack: rejects invalid setups before running") {
  const auto [video, labels] = synth_video(10, 3, kShape, Scenario::Stop);
  const VictimModel model = build_toy_cnn(10, kShape);
  AttackConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(run_attack(Video{}, model, both_objectives(), cfg, true),
                  std::invalid_argument);
  AttackConfig bad = cfg;
  bad.batch_size = -1;
  CHECK_THROWS_AS(run_attack(video, model, both_objectives(), bad, true), std::invalid_argument);
}

TEST_CASE("run_attack: non-finite evaluation aborts with the step index") {
  // Two huge dense layers sit just below the 32-bit ceiling on the original
  // frame; once the first step raises the pixels the forward pass overflows.
  VictimModel model;
  model.kind = "linear";
  model.graph.input_shape = {1, 4, 4};
  GraphOp layer1{OpKind::Dense, "amp", kInputNode};
  layer1.weight = Tensor::full({16, 16}, 1.6e17f);
  layer1.bias = Tensor::zeros({16});
  model.graph.ops.push_back(std::move(layer1));
  GraphOp head{OpKind::Dense, "head_steering", 0};
  head.weight = Tensor::full({1, 16}, 1.6e17f);
  head.bias = Tensor::zeros({1});
  model.graph.ops.push_back(std::move(head));
  model.graph.heads = {1};
  model.graph.head_names = {"steering"};
  validate_graph(model.graph);

  Video video;
  video.frames.push_back(Tensor::full({1, 4, 4}, 50.0f));
  video.ids.push_back(0);

  AttackConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 1;
  CHECK_THROWS_WITH_AS(run_attack(video, model, {{"steering", +1}}, cfg, false),
                       doctest::Contains("step"), std::runtime_error);
}
