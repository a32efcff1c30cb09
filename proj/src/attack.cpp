#include "uniada/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace uniada {

void validate_objectives(const std::vector<ObjectiveSpec> &objectives, const VictimModel &model) {
  if (objectives.empty() || objectives.size() > 2)
    throw std::invalid_argument("attack: need 1 or 2 objectives, got " +
                                std::to_string(objectives.size()));
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    if (objectives[i].direction != 1 && objectives[i].direction != -1)
      throw std::invalid_argument("attack: objective '" + objectives[i].id +
                                  "' direction must be +1 or -1");
    model.head_index(objectives[i].id);
    for (std::size_t j = i + 1; j < objectives.size(); ++j)
      if (objectives[i].id == objectives[j].id)
        throw std::invalid_argument("attack: duplicate objective '" + objectives[i].id + "'");
  }
}

void validate_config(const AttackConfig &cfg) {
  if (!(cfg.lr > 0.0))
    throw std::invalid_argument("config: lr must be positive");
  if (!(cfg.lr_grad > 0.0))
    throw std::invalid_argument("config: lr_grad must be positive");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("config: bs must be >= 1");
  if (!(cfg.beta > 0.0))
    throw std::invalid_argument("config: beta must be positive");
  if (cfg.epochs < 0)
    throw std::invalid_argument("config: epochs must be >= 0");
  if (cfg.gamma < 0.0)
    throw std::invalid_argument("config: gamma must be >= 0");
  if (!(cfg.theta > 0.0))
    throw std::invalid_argument("config: theta must be positive");
  if (!(cfg.epsilon > 0.0))
    throw std::invalid_argument("config: epsilon must be positive");
  if (!(cfg.decay_factor > 0.0 && cfg.decay_factor <= 1.0))
    throw std::invalid_argument("config: decay factor must be in (0,1]");
  if (cfg.decay_interval < 1)
    throw std::invalid_argument("config: decay interval must be >= 1");
  if (cfg.trace_stride < 0)
    throw std::invalid_argument("config: trace stride must be >= 0");
}

double objective_loss(double pred_adv, double pred_orig, int direction, double beta) {
  if (!(beta > 0.0))
    throw std::invalid_argument("objective_loss: beta must be positive");
  const double arg = std::clamp(-(pred_adv - pred_orig) * direction / beta, -50.0, 50.0);
  return std::exp(arg) / beta;
}

double multi_objective_loss(const std::vector<double> &losses, const std::vector<double> &weights) {
  if (losses.size() != weights.size())
    throw std::invalid_argument("multi_objective_loss: " + std::to_string(losses.size()) +
                                " losses vs " + std::to_string(weights.size()) + " weights");
  double acc = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i)
    acc += weights[i] * losses[i];
  return acc;
}

double joint_loss(const Video &original, const Video &adversarial, const VictimModel &model,
                  const std::vector<ObjectiveSpec> &objectives, const std::vector<double> &weights,
                  double beta) {
  if (original.size() == 0 || original.size() != adversarial.size())
    throw std::invalid_argument("joint_loss: original and adversarial videos must be nonempty and parallel");
  double acc = 0.0;
  for (std::size_t n = 0; n < original.size(); ++n) {
    const auto orig = predict(model, original.frames[n]);
    const auto adv = predict(model, adversarial.frames[n]);
    std::vector<double> losses(objectives.size());
    for (std::size_t i = 0; i < objectives.size(); ++i) {
      const std::size_t h = model.head_index(objectives[i].id);
      losses[i] = objective_loss(adv[h], orig[h], objectives[i].direction, beta);
    }
    acc += multi_objective_loss(losses, weights);
  }
  return acc;
}

BatchGradient batch_gradient_proposal(const VictimModel &model,
                                      const std::vector<const Tensor *> &adv_frames,
                                      const std::vector<const std::vector<float> *> &orig_preds,
                                      const std::vector<ObjectiveSpec> &objectives,
                                      const std::vector<double> &weights, double beta) {
  if (adv_frames.empty())
    throw std::invalid_argument("batch_gradient_proposal: empty batch");
  if (adv_frames.size() != orig_preds.size())
    throw std::invalid_argument("batch_gradient_proposal: frames and original predictions must be parallel");
  if (weights.size() != objectives.size())
    throw std::invalid_argument("batch_gradient_proposal: weights and objectives must be parallel");

  const std::size_t C = objectives.size();
  BatchGradient out;
  out.losses.resize(adv_frames.size());
  out.grad_norms.resize(adv_frames.size());

  std::vector<double> mean(adv_frames[0]->numel(), 0.0);
  for (std::size_t b = 0; b < adv_frames.size(); ++b) {
    const ForwardResult fwd = forward_eval(model.graph, *adv_frames[b]);
    out.losses[b].resize(C);
    out.grad_norms[b].resize(C);
    for (std::size_t i = 0; i < C; ++i) {
      const std::size_t h = model.head_index(objectives[i].id);
      const double loss =
          objective_loss(fwd.heads[h], (*orig_preds[b])[h], objectives[i].direction, beta);
      out.losses[b][i] = loss;
      // dL_i/dpred is the scalar -(d_i/beta) * L_i; the head backward pass
      // supplies dpred/dx.
      const double loss_to_pred = -(static_cast<double>(objectives[i].direction) / beta) * loss;
      const Tensor head_grad = backward_eval(fwd.trace, h);
      double norm_acc = 0.0;
      for (std::size_t k = 0; k < head_grad.numel(); ++k) {
        const double g = loss_to_pred * static_cast<double>(head_grad[k]);
        norm_acc += g * g;
        mean[k] += weights[i] * g;
      }
      out.grad_norms[b][i] = std::sqrt(norm_acc);
    }
  }

  std::vector<float> g(mean.size());
  const double inv = 1.0 / static_cast<double>(adv_frames.size());
  for (std::size_t k = 0; k < mean.size(); ++k)
    g[k] = static_cast<float>(mean[k] * inv);
  out.mean_gradient = Tensor(adv_frames[0]->shape(), std::move(g));
  return out;
}

Tensor conditional_rescale(const Tensor &g, double theta) {
  if (!(theta > 0.0))
    throw std::invalid_argument("conditional_rescale: theta must be positive");
  const double norm = l2_norm(g);
  if (norm == 0.0 || norm >= theta)
    return g;
  const double scale = theta / norm;
  Tensor out = g;
  for (float &v : out.data())
    v = static_cast<float>(static_cast<double>(v) * scale);
  return out;
}

Tensor clip_perturbation(const Tensor &tau, double epsilon) {
  if (!(epsilon > 0.0))
    throw std::invalid_argument("clip_perturbation: epsilon must be positive");
  const float lo = static_cast<float>(-epsilon), hi = static_cast<float>(epsilon);
  Tensor out = tau;
  for (float &v : out.data())
    v = std::clamp(v, lo, hi);
  return out;
}

Video process_images(const Video &original, const Tensor &tau) {
  Video out;
  out.ids = original.ids;
  out.frames.reserve(original.size());
  for (const Tensor &frame : original.frames) {
    if (!frame.same_shape(tau))
      throw std::invalid_argument("process_images: tau shape " + shape_to_string(tau.shape()) +
                                  " does not match frame shape " + shape_to_string(frame.shape()));
    Tensor adv = frame;
    for (std::size_t k = 0; k < adv.numel(); ++k)
      adv[k] = std::clamp(adv[k] + tau[k], 0.0f, 255.0f);
    out.frames.push_back(std::move(adv));
  }
  return out;
}

std::pair<double, double> lr_schedule(int epoch, double base_lr, double base_lr_grad, double factor,
                                      int interval) {
  if (epoch < 0)
    throw std::invalid_argument("lr_schedule: negative epoch");
  const double scale = std::pow(factor, epoch / interval);
  return {base_lr * scale, base_lr_grad * scale};
}

AttackResult run_attack(const Video &video, const VictimModel &model,
                        const std::vector<ObjectiveSpec> &objectives, const AttackConfig &cfg,
                        bool aws_enabled) {
  validate_config(cfg);
  validate_objectives(objectives, model);
  if (video.size() == 0)
    throw std::invalid_argument("run_attack: empty video");
  for (const Tensor &frame : video.frames)
    if (frame.shape() != model.graph.input_shape)
      throw std::invalid_argument("run_attack: frame shape " + shape_to_string(frame.shape()) +
                                  " does not match model input " +
                                  shape_to_string(model.graph.input_shape));

  const std::size_t N = video.size(), C = objectives.size();
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::vector<float>> orig_preds(N);
  for (std::size_t n = 0; n < N; ++n)
    orig_preds[n] = predict(model, video.frames[n]);

  // Initial losses: the directional loss of the unperturbed predictions,
  // averaged over the whole video (1/beta per objective in exact arithmetic).
  std::vector<double> initial_losses(C, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < C; ++i) {
      const std::size_t h = model.head_index(objectives[i].id);
      initial_losses[i] +=
          objective_loss(orig_preds[n][h], orig_preds[n][h], objectives[i].direction, cfg.beta);
    }
  for (double &v : initial_losses)
    v /= static_cast<double>(N);

  AwsState aws(std::vector<double>(C, 1.0 / static_cast<double>(C)), initial_losses, cfg.gamma);

  Tensor tau = Tensor::zeros(model.graph.input_shape);
  Video adversarial = process_images(video, tau);

  AttackResult result;
  result.initial_losses = initial_losses;

  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);

  int t = 0;
  const int steps_per_epoch = static_cast<int>((N + cfg.batch_size - 1) / cfg.batch_size);
  const int total_steps = cfg.epochs * steps_per_epoch;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto [lr, lr_grad] =
        lr_schedule(epoch, cfg.lr, cfg.lr_grad, cfg.decay_factor, cfg.decay_interval);

    for (std::size_t start = 0; start < N; start += cfg.batch_size) {
      const std::size_t end = std::min(N, start + cfg.batch_size);
      std::vector<const Tensor *> batch;
      std::vector<const std::vector<float> *> batch_orig;
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(&adversarial.frames[order[k]]);
        batch_orig.push_back(&orig_preds[order[k]]);
      }

      BatchGradient bg;
      try {
        bg = batch_gradient_proposal(model, batch, batch_orig, objectives, aws.weights, cfg.beta);
      } catch (const std::exception &e) {
        throw std::runtime_error("run_attack: step " + std::to_string(t) + ": " + e.what());
      }
      for (const auto &frame_losses : bg.losses)
        for (double l : frame_losses)
          if (!std::isfinite(l))
            throw std::runtime_error("run_attack: non-finite loss at step " + std::to_string(t));
      for (float v : bg.mean_gradient.data())
        if (!std::isfinite(v))
          throw std::runtime_error("run_attack: non-finite gradient at step " + std::to_string(t));

      const Tensor g = conditional_rescale(bg.mean_gradient, cfg.theta);

      Tensor updated = tau;
      for (std::size_t k = 0; k < updated.numel(); ++k)
        updated[k] = static_cast<float>(static_cast<double>(updated[k]) -
                                        lr * static_cast<double>(g[k]));
      tau = clip_perturbation(updated, cfg.epsilon);
      adversarial = process_images(video, tau);

      AwsBatchStats stats;
      stats.mean_loss.assign(C, 0.0);
      stats.mean_grad_norm.assign(C, 0.0);
      for (std::size_t b = 0; b < bg.losses.size(); ++b)
        for (std::size_t i = 0; i < C; ++i) {
          stats.mean_loss[i] += bg.losses[b][i];
          stats.mean_grad_norm[i] += bg.grad_norms[b][i];
        }
      for (std::size_t i = 0; i < C; ++i) {
        stats.mean_loss[i] /= static_cast<double>(bg.losses.size());
        stats.mean_grad_norm[i] /= static_cast<double>(bg.losses.size());
      }
      if (aws_enabled)
        aws_step(aws, stats, lr_grad);

      ++t;

      StepTrace st;
      st.step = t;
      st.epoch = epoch;
      st.lr = lr;
      st.lr_grad = lr_grad;
      st.weights = aws.weights;
      st.batch_mean_loss = stats.mean_loss;
      st.tau_linf = linf_norm(tau);
      float pmin = std::numeric_limits<float>::max(), pmax = std::numeric_limits<float>::lowest();
      for (const Tensor &frame : adversarial.frames)
        for (float v : frame.data()) {
          pmin = std::min(pmin, v);
          pmax = std::max(pmax, v);
        }
      st.pixel_min = pmin;
      st.pixel_max = pmax;
      st.weight_sum = std::accumulate(aws.weights.begin(), aws.weights.end(), 0.0);

      const bool record_full = (cfg.trace_stride > 0 && t % cfg.trace_stride == 0) ||
                               t == total_steps;
      if (record_full) {
        // One pass over the video: joint loss and raw mean errors from the
        // cached original predictions.
        try {
          st.joint = 0.0;
          st.mean_error_raw.assign(C, 0.0);
          for (std::size_t n = 0; n < N; ++n) {
            const auto adv = predict(model, adversarial.frames[n]);
            std::vector<double> losses(C);
            for (std::size_t i = 0; i < C; ++i) {
              const std::size_t h = model.head_index(objectives[i].id);
              losses[i] =
                  objective_loss(adv[h], orig_preds[n][h], objectives[i].direction, cfg.beta);
              st.mean_error_raw[i] +=
                  objectives[i].direction *
                  (static_cast<double>(adv[h]) - static_cast<double>(orig_preds[n][h]));
            }
            st.joint += multi_objective_loss(losses, aws.weights);
          }
          for (double &v : st.mean_error_raw)
            v /= static_cast<double>(N);
        } catch (const std::exception &e) {
          throw std::runtime_error("run_attack: step " + std::to_string(t - 1) + ": " + e.what());
        }
        st.full_video_recorded = true;
      } else {
        st.joint = std::numeric_limits<double>::quiet_NaN();
        st.mean_error_raw.assign(C, std::numeric_limits<double>::quiet_NaN());
      }
      if (cfg.record_tau)
        st.tau = tau;
      result.trace.push_back(std::move(st));
    }
  }

  result.tau = std::move(tau);
  result.final_weights = aws.weights;
  return result;
}

} // namespace uniada
