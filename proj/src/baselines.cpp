#include "uniada/baselines.hpp"

#include <cmath>
#include <stdexcept>

namespace uniada {

namespace {

// dO/dx with equal weights, evaluated at `frame` against the original
// predictions.
Tensor equal_weight_gradient(const VictimModel &model, const Tensor &frame,
                             const std::vector<float> &orig,
                             const std::vector<ObjectiveSpec> &objectives, double beta,
                             std::vector<double> *losses_out) {
  const std::size_t C = objectives.size();
  const double w = 1.0 / static_cast<double>(C);
  const ForwardResult fwd = forward_eval(model.graph, frame);

  std::vector<double> acc(frame.numel(), 0.0);
  for (std::size_t i = 0; i < C; ++i) {
    const std::size_t h = model.head_index(objectives[i].id);
    const double loss = objective_loss(fwd.heads[h], orig[h], objectives[i].direction, beta);
    if (losses_out)
      (*losses_out)[i] = loss;
    const double loss_to_pred = -(static_cast<double>(objectives[i].direction) / beta) * loss;
    const Tensor head_grad = backward_eval(fwd.trace, h);
    for (std::size_t k = 0; k < acc.size(); ++k)
      acc[k] += w * loss_to_pred * static_cast<double>(head_grad[k]);
  }
  std::vector<float> g(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k)
    g[k] = static_cast<float>(acc[k]);
  return Tensor(frame.shape(), std::move(g));
}

} // namespace

PerFramePerturbation fgsm_attack(const Video &video, const VictimModel &model,
                                 const std::vector<ObjectiveSpec> &objectives, double epsilon,
                                 double beta) {
  if (!(epsilon >= 0.0))
    throw std::invalid_argument("fgsm_attack: epsilon must be nonnegative");
  validate_objectives(objectives, model);
  if (video.size() == 0)
    throw std::invalid_argument("fgsm_attack: empty video");

  PerFramePerturbation out;
  out.taus.reserve(video.size());
  for (std::size_t n = 0; n < video.size(); ++n) {
    const auto orig = predict(model, video.frames[n]);
    const Tensor g = equal_weight_gradient(model, video.frames[n], orig, objectives, beta, nullptr);
    Tensor tau = Tensor::zeros(g.shape());
    const float eps = static_cast<float>(epsilon);
    for (std::size_t k = 0; k < g.numel(); ++k)
      tau[k] = g[k] > 0.0f ? -eps : (g[k] < 0.0f ? eps : 0.0f);
    out.taus.push_back(std::move(tau));
  }
  return out;
}

PerFramePerturbation pa_attack(const Video &video, const VictimModel &model,
                               const std::vector<ObjectiveSpec> &objectives, double epsilon,
                               int steps, double step_size, double beta) {
  if (!(epsilon > 0.0))
    throw std::invalid_argument("pa_attack: epsilon must be positive");
  if (steps < 1)
    throw std::invalid_argument("pa_attack: steps must be >= 1");
  if (!(step_size > 0.0))
    throw std::invalid_argument("pa_attack: step size must be positive");
  validate_objectives(objectives, model);
  if (video.size() == 0)
    throw std::invalid_argument("pa_attack: empty video");

  PerFramePerturbation out;
  out.taus.reserve(video.size());
  std::vector<double> losses(objectives.size());
  for (std::size_t n = 0; n < video.size(); ++n) {
    const Tensor &frame = video.frames[n];
    const auto orig = predict(model, frame);
    Tensor tau = Tensor::zeros(frame.shape());

    for (int s = 0; s < steps; ++s) {
      Tensor adv = frame;
      for (std::size_t k = 0; k < adv.numel(); ++k)
        adv[k] = std::clamp(adv[k] + tau[k], 0.0f, 255.0f);
      const Tensor g = equal_weight_gradient(model, adv, orig, objectives, beta, &losses);
      for (double l : losses)
        if (!std::isfinite(l))
          throw std::runtime_error("pa_attack: non-finite loss at frame " + std::to_string(n) +
                                   ", step " + std::to_string(s));
      for (std::size_t k = 0; k < tau.numel(); ++k)
        tau[k] = static_cast<float>(static_cast<double>(tau[k]) -
                                    step_size * static_cast<double>(g[k]));
      tau = clip_perturbation(tau, epsilon);
    }
    out.taus.push_back(std::move(tau));
  }
  return out;
}

} // namespace uniada
