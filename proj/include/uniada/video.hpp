#pragma once

#include "uniada/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace uniada {

/// Ordered frame sequence with pixel values in [0,255]. `ids` keeps the
/// original ordering indices so per-frame artifacts stay addressable after
/// shuffling elsewhere.
struct Video {
  std::vector<Tensor> frames;
  std::vector<std::size_t> ids;

  std::size_t size() const { return frames.size(); }
};

enum class Scenario { Straight, Curve, Stop };

Scenario scenario_from_string(const std::string &s);
std::string scenario_to_string(Scenario s);

/// Per-frame ground truth: steering in radians, acceleration in [0,1].
using Labels = std::vector<std::array<double, 2>>;

/// Renders a road scene with a lane marker whose lateral offset evolves by
/// scenario, plus an obstacle that grows as the vehicle brakes. Pixels are
/// quantized to whole values so image files round-trip exactly.
/// noise_amplitude is clamped to [0,5] pixel-units.
std::pair<Video, Labels> synth_video(std::uint64_t seed, std::size_t n_frames,
                                     const std::vector<std::size_t> &input_shape, Scenario scenario,
                                     double noise_amplitude = 5.0);

} // namespace uniada
