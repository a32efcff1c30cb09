#include "uniada/video.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace uniada {

Scenario scenario_from_string(const std::string &s) {
  if (s == "straight")
    return Scenario::Straight;
  if (s == "curve")
    return Scenario::Curve;
  if (s == "stop")
    return Scenario::Stop;
  throw std::invalid_argument("unknown scenario '" + s + "' (expected straight|curve|stop)");
}

std::string scenario_to_string(Scenario s) {
  switch (s) {
  case Scenario::Straight: return "straight";
  case Scenario::Curve: return "curve";
  case Scenario::Stop: return "stop";
  }
  return "?";
}

namespace {

struct Rgb {
  double r, g, b;
};

// Palette kept away from 0/255 so small perturbations rarely hit the pixel
// clamp.
constexpr Rgb kSky{118.0, 138.0, 162.0};
constexpr Rgb kGround{72.0, 74.0, 68.0};
constexpr Rgb kRoad{46.0, 46.0, 50.0};
constexpr Rgb kMarker{228.0, 222.0, 176.0};
constexpr Rgb kObstacle{186.0, 62.0, 54.0};

void put(std::vector<float> &px, std::size_t h, std::size_t w, std::size_t y, std::size_t x,
         const Rgb &c) {
  px[(0 * h + y) * w + x] = static_cast<float>(c.r);
  px[(1 * h + y) * w + x] = static_cast<float>(c.g);
  px[(2 * h + y) * w + x] = static_cast<float>(c.b);
}

} // namespace

std::pair<Video, Labels> synth_video(std::uint64_t seed, std::size_t n_frames,
                                     const std::vector<std::size_t> &input_shape, Scenario scenario,
                                     double noise_amplitude) {
  if (n_frames < 1)
    throw std::invalid_argument("synth_video: need at least one frame");
  if (input_shape.size() != 3 || input_shape[0] != 3)
    throw std::invalid_argument("synth_video: input shape must be (3,H,W), got " +
                                shape_to_string(input_shape));
  const std::size_t H = input_shape[1], W = input_shape[2];
  if (H < 16 || W < 16)
    throw std::invalid_argument("synth_video: frames must be at least 16x16");
  const double amp = std::clamp(noise_amplitude, 0.0, 5.0);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-amp, amp);

  const std::size_t horizon = H * 2 / 5;
  const double cx = (W - 1) / 2.0;

  Video video;
  Labels labels;
  for (std::size_t n = 0; n < n_frames; ++n) {
    const double progress = n_frames > 1 ? static_cast<double>(n) / (n_frames - 1) : 0.0;

    // Lateral marker offset as a fraction of the usable half-width.
    double offset_frac = 0.0;
    if (scenario == Scenario::Curve)
      offset_frac = 0.8 * progress;

    double accel = 0.6;
    if (scenario == Scenario::Stop)
      accel = 0.6 * (1.0 - progress); // exactly 0 on the last frame
    const double steering = 0.5 * offset_frac; // radians

    std::vector<float> px(3 * H * W, 0.0f);
    for (std::size_t y = 0; y < H; ++y) {
      const bool below = y >= horizon;
      const double depth = below ? static_cast<double>(y - horizon) /
                                       static_cast<double>(H - 1 - horizon)
                                 : 0.0;
      const double road_half = below ? 2.0 + depth * (0.45 * W - 2.0) : 0.0;
      const double marker_x = cx + offset_frac * 0.4 * W * depth;
      for (std::size_t x = 0; x < W; ++x) {
        Rgb c = below ? kGround : kSky;
        if (below && std::fabs(static_cast<double>(x) - cx) <= road_half) {
          c = kRoad;
          if (std::fabs(static_cast<double>(x) - marker_x) <= 1.0)
            c = kMarker;
        }
        put(px, H, W, y, x, c);
      }
    }

    if (scenario == Scenario::Stop) {
      // An obstacle that grows as the vehicle brakes gives the acceleration
      // label a visual cue.
      const double grow = 1.0 - accel / 0.6;
      const std::size_t ow = static_cast<std::size_t>((0.06 + 0.30 * grow) * W);
      const std::size_t oh = static_cast<std::size_t>((0.06 + 0.30 * grow) * H);
      const std::size_t oy = horizon > oh ? horizon - oh : 0;
      for (std::size_t y = oy; y < oy + oh && y < H; ++y)
        for (std::size_t x = static_cast<std::size_t>(cx) - ow / 2;
             x <= static_cast<std::size_t>(cx) + ow / 2 && x < W; ++x)
          put(px, H, W, y, x, kObstacle);
    }

    for (float &v : px) {
      const double noisy = static_cast<double>(v) + noise(rng);
      v = static_cast<float>(std::lround(std::clamp(noisy, 0.0, 255.0)));
    }

    video.frames.emplace_back(input_shape, std::move(px));
    video.ids.push_back(n);
    labels.push_back({steering, accel});
  }
  return {std::move(video), std::move(labels)};
}

} // namespace uniada
