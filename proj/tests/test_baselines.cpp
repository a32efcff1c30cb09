#include "uniada/baselines.hpp"

#include <doctest.h>

#include <cmath>

using namespace uniada;

namespace {

const std::vector<std::size_t> kShape{3, 32, 32};

double equal_weight_frame_loss(const VictimModel &model, const Tensor &orig, const Tensor &tau,
                               const std::vector<ObjectiveSpec> &objectives, double beta) {
  Tensor adv = orig;
  for (std::size_t k = 0; k < adv.numel(); ++k)
    adv[k] = std::clamp(adv[k] + tau[k], 0.0f, 255.0f);
  const auto po = predict(model, orig);
  const auto pa = predict(model, adv);
  double acc = 0.0;
  for (const auto &obj : objectives) {
    const std::size_t h = model.head_index(obj.id);
    acc += objective_loss(pa[h], po[h], obj.direction, beta) /
           static_cast<double>(objectives.size());
  }
  return acc;
}

} // namespace

TEST_CASE("fgsm on the linear victim: +epsilon * sign(w) for a single positive objective") {
  const VictimModel model = build_linear_victim(0, kShape);
  const auto [video, labels] = synth_video(0, 2, kShape, Scenario::Straight);
  const std::vector<ObjectiveSpec> steer_only{{"steering", +1}};

  const PerFramePerturbation p = fgsm_attack(video, model, steer_only, 2.0, 2.0);
  REQUIRE(p.size() == video.size());
  const Tensor &w = model.graph.ops[model.graph.heads[0]].weight;
  for (const Tensor &tau : p.taus)
    for (std::size_t k = 0; k < tau.numel(); ++k) {
      const float expect = w[k] > 0.0f ? 2.0f : (w[k] < 0.0f ? -2.0f : 0.0f);
      CHECK(tau[k] == expect);
    }
}

TEST_CASE("fgsm entries live in {-eps, 0, +eps}; zero eps gives zero perturbations") {
  const VictimModel model = build_toy_cnn(1, kShape);
  const auto [video, labels] = synth_video(1, 3, kShape, Scenario::Stop);
  const std::vector<ObjectiveSpec> objectives{{"steering", +1}, {"acceleration", +1}};

  const PerFramePerturbation p = fgsm_attack(video, model, objectives, 2.0, 2.0);
  for (const Tensor &tau : p.taus)
    for (float v : tau.data())
      CHECK((v == 2.0f || v == 0.0f || v == -2.0f));

  const PerFramePerturbation zero = fgsm_attack(video, model, objectives, 0.0, 2.0);
  for (const Tensor &tau : zero.taus)
    for (float v : tau.data())
      CHECK(v == 0.0f);
}

TEST_CASE("baselines are image-specific: distinct frames get distinct perturbations") {
  const VictimModel model = build_toy_cnn(2, kShape);
  const auto [video, labels] = synth_video(2, 4, kShape, Scenario::Stop);
  const std::vector<ObjectiveSpec> objectives{{"steering", +1}, {"acceleration", +1}};

  const PerFramePerturbation p = fgsm_attack(video, model, objectives, 2.0, 2.0);
  bool any_differ = false;
  for (std::size_t a = 0; a < p.size() && !any_differ; ++a)
    for (std::size_t b = a + 1; b < p.size() && !any_differ; ++b)
      any_differ = p.taus[a].data() != p.taus[b].data();
  CHECK(any_differ);
}

TEST_CASE("pa: argument validation") {
  const VictimModel model = build_linear_victim(3, kShape);
  const auto [video, labels] = synth_video(3, 2, kShape, Scenario::Straight);
  const std::vector<ObjectiveSpec> objectives{{"steering", +1}};
  CHECK_THROWS_AS(pa_attack(video, model, objectives, 2.0, 0, 0.2, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(pa_attack(video, model, objectives, 2.0, 10, 0.0, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(pa_attack(video, model, objectives, 0.0, 10, 0.2, 2.0), std::invalid_argument);
}

TEST_CASE("pa with one saturating step coincides with fgsm on the linear victim") {
  const VictimModel model = build_linear_victim(4, kShape);
  const auto [video, labels] = synth_video(4, 2, kShape, Scenario::Straight);
  const std::vector<ObjectiveSpec> objectives{{"steering", +1}, {"acceleration", -1}};

  const PerFramePerturbation fgsm = fgsm_attack(video, model, objectives, 2.0, 2.0);
  // enormous step: every nonzero gradient coordinate saturates the clip
  const PerFramePerturbation pa = pa_attack(video, model, objectives, 2.0, 1, 1e12, 2.0);
  REQUIRE(fgsm.size() == pa.size());
  for (std::size_t n = 0; n < fgsm.size(); ++n)
    CHECK(fgsm.taus[n].data() == pa.taus[n].data());
}

TEST_CASE("pa steps never increase the frame loss on the linear victim") {
  const VictimModel model = build_linear_victim(5, kShape);
  const auto [video, labels] = synth_video(5, 2, kShape, Scenario::Straight);
  const std::vector<ObjectiveSpec> objectives{{"steering", +1}, {"acceleration", +1}};

  double prev = equal_weight_frame_loss(model, video.frames[0], Tensor::zeros(kShape), objectives,
                                        2.0);
  for (int steps = 1; steps <= 6; ++steps) {
    const PerFramePerturbation p = pa_attack(video, model, objectives, 2.0, steps, 0.2, 2.0);
    const double loss =
        equal_weight_frame_loss(model, video.frames[0], p.taus[0], objectives, 2.0);
    CHECK(loss <= prev + 1e-9);
    prev = loss;
  }
}

TEST_CASE("baseline perturbations respect the budget and pixel bounds") {
  const VictimModel model = build_toy_cnn(6, kShape);
  const auto [video, labels] = synth_video(6, 3, kShape, Scenario::Stop);
  const std::vector<ObjectiveSpec> objectives{{"steering", +1}, {"acceleration", +1}};

  for (const auto &p : {fgsm_attack(video, model, objectives, 2.0, 2.0),
                        pa_attack(video, model, objectives, 2.0, 10, 0.2, 2.0)}) {
    for (std::size_t n = 0; n < p.size(); ++n) {
      CHECK(linf_norm(p.taus[n]) <= 2.0f);
      Tensor adv = video.frames[n];
      for (std::size_t k = 0; k < adv.numel(); ++k) {
        adv[k] = std::clamp(adv[k] + p.taus[n][k], 0.0f, 255.0f);
        CHECK(adv[k] >= 0.0f);
        CHECK(adv[k] <= 255.0f);
      }
    }
  }
}
