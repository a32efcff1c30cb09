#pragma once

#include "uniada/attack.hpp"

#include <vector>

namespace uniada {

/// Image-specific perturbations, one per frame id.
struct PerFramePerturbation {
  std::vector<Tensor> taus; // indexed by frame id

  std::size_t size() const { return taus.size(); }
};

/// One-step sign attack with the equal-weighted multi-objective loss:
/// tau_n = -epsilon * sign(dO/dx) at the original frame, sign(0) = 0.
PerFramePerturbation fgsm_attack(const Video &video, const VictimModel &model,
                                 const std::vector<ObjectiveSpec> &objectives, double epsilon,
                                 double beta);

/// Iterative whole-image attack: per frame, gradient descent on the
/// equal-weighted loss with a per-step clamp of tau to [-epsilon, epsilon] and
/// of pixels to [0,255].
PerFramePerturbation pa_attack(const Video &video, const VictimModel &model,
                               const std::vector<ObjectiveSpec> &objectives, double epsilon,
                               int steps, double step_size, double beta);

} // namespace uniada
