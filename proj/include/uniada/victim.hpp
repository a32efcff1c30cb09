#pragma once

#include "uniada/graph.hpp"
#include "uniada/video.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace uniada {

/// Differentiable multi-output regressor. Heads are ordered (steering,
/// acceleration); steering is reported in radians, acceleration in [0,1].
struct VictimModel {
  std::string kind; // "toy-cnn" | "linear"
  ModelGraph graph;

  const std::vector<std::string> &head_names() const { return graph.head_names; }
  std::size_t head_count() const { return graph.heads.size(); }
  std::size_t head_index(const std::string &id) const;

  /// Named parameter view over the trainable and frozen layer tensors.
  std::vector<std::pair<std::string, const Tensor *>> named_params() const;
  std::vector<std::pair<std::string, Tensor *>> named_params();
};

std::vector<float> predict(const VictimModel &model, const Tensor &frame);

/// Two 3x3/stride-2 conv layers (8 then 16 filters, ReLU), global mean-pool,
/// dense(32, ReLU), and two scalar heads: tanh scaled to [-pi/2,pi/2] for
/// steering and a sigmoid for acceleration. Parameters are deterministic in
/// the seed.
VictimModel build_toy_cnn(std::uint64_t seed, const std::vector<std::size_t> &input_shape);

/// One dense layer per head over the flattened image, weights scaled so the
/// declared head ranges hold for any input in [0,255]. Input gradients are the
/// constant weight vectors, which makes attack steps checkable in closed form.
VictimModel build_linear_victim(std::uint64_t seed, const std::vector<std::size_t> &input_shape);

/// Full-batch gradient descent on the mean squared error over both heads.
/// The recorded per-epoch MSE is non-increasing: an epoch whose step would
/// regress is discarded and the step size halved instead.
VictimModel quick_train(const VictimModel &model, const Video &data, const Labels &labels,
                        int epochs, double step_size = 0.05);

/// Training-set MSE averaged over frames and heads.
double training_mse(const VictimModel &model, const Video &data, const Labels &labels);

} // namespace uniada
