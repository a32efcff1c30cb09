#pragma once

#include "uniada/aws.hpp"
#include "uniada/tensor.hpp"
#include "uniada/victim.hpp"
#include "uniada/video.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace uniada {

/// One attacked control: a model head id plus the attack direction. d = +1
/// drives the adversarial prediction above the original, -1 below.
struct ObjectiveSpec {
  std::string id;
  int direction = +1;
};

void validate_objectives(const std::vector<ObjectiveSpec> &objectives, const VictimModel &model);

struct AttackConfig {
  double lr = 0.2;        // perturbation searching learning rate
  double lr_grad = 0.005; // adaptive-weighting learning rate
  int batch_size = 5;
  double beta = 2.0;   // sharpness of the directional loss
  int epochs = 250;
  double gamma = 10.0; // rebalance strength
  double theta = 0.3;  // gradient rescale threshold
  double epsilon = 2.0; // max perturbation per channel value
  std::uint64_t seed = 0;

  double decay_factor = 0.8; // lr and lr_grad decay
  int decay_interval = 50;   // in epochs

  // Trace controls: full-video loss/error entries are recorded every
  // `trace_stride` steps (0 = only the final step). Budget fields are recorded
  // every step regardless. `record_tau` additionally snapshots tau per step.
  int trace_stride = 1;
  bool record_tau = false;
};

void validate_config(const AttackConfig &cfg);

/// Directional loss (1/beta) * exp(-(diff * d) / beta) with the exponent
/// clamped to +-50 against overflow. Strictly decreasing in d * diff.
double objective_loss(double pred_adv, double pred_orig, int direction, double beta);

/// Weighted sum of per-objective losses.
double multi_objective_loss(const std::vector<double> &losses, const std::vector<double> &weights);

/// Sum of the weighted multi-objective loss over all frames; monitoring only,
/// the search itself descends per mini-batch.
double joint_loss(const Video &original, const Video &adversarial, const VictimModel &model,
                  const std::vector<ObjectiveSpec> &objectives, const std::vector<double> &weights,
                  double beta);

struct BatchGradient {
  Tensor mean_gradient;                        // mean over the batch of dO/dx
  std::vector<std::vector<double>> losses;     // [frame][objective]
  std::vector<std::vector<double>> grad_norms; // [frame][objective], unweighted ||dL_i/dx||_2
};

/// Per-image losses, per-image unweighted gradient norms, and the averaged
/// weighted gradient proposal for one mini-batch.
BatchGradient batch_gradient_proposal(const VictimModel &model,
                                      const std::vector<const Tensor *> &adv_frames,
                                      const std::vector<const std::vector<float> *> &orig_preds,
                                      const std::vector<ObjectiveSpec> &objectives,
                                      const std::vector<double> &weights, double beta);

/// Rescales to norm theta when 0 < ||g||_2 < theta; zero and large gradients
/// pass through unchanged.
Tensor conditional_rescale(const Tensor &g, double theta);

/// Elementwise clamp to [-epsilon, +epsilon].
Tensor clip_perturbation(const Tensor &tau, double epsilon);

/// Adversarial frames clamp(x + tau, 0, 255); tau itself is not modified.
Video process_images(const Video &original, const Tensor &tau);

/// lr * factor^(epoch / interval) for both rates.
std::pair<double, double> lr_schedule(int epoch, double base_lr, double base_lr_grad,
                                      double factor = 0.8, int interval = 50);

struct StepTrace {
  int step = 0;
  int epoch = 0;
  double lr = 0.0;
  double lr_grad = 0.0;
  std::vector<double> weights;         // after this step's update
  std::vector<double> batch_mean_loss; // mini-batch mean per objective
  double tau_linf = 0.0;
  double pixel_min = 0.0;
  double pixel_max = 0.0;
  double weight_sum = 0.0;
  // Full-video fields, NaN when not recorded at this step.
  double joint = 0.0;
  std::vector<double> mean_error_raw; // per objective, raw model units
  bool full_video_recorded = false;
  Tensor tau; // empty unless record_tau
};

struct AttackResult {
  Tensor tau;
  std::vector<StepTrace> trace;
  std::vector<double> final_weights;
  std::vector<double> initial_losses;
};

/// The universal perturbation search: seeded shuffle, rate decay, per-batch
/// gradient proposal, conditional rescale, clipped tau update, pixel
/// processing, and (optionally) the adaptive weight update. With
/// aws_enabled=false the weights stay fixed at 1/C, which is the equal-weights
/// variant used as an ablation.
AttackResult run_attack(const Video &video, const VictimModel &model,
                        const std::vector<ObjectiveSpec> &objectives, const AttackConfig &cfg,
                        bool aws_enabled);

} // namespace uniada
