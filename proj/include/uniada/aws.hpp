#pragma once

#include <vector>

namespace uniada {

/// Adaptive weighting state for one attack run. Weights always sum to 1 and
/// stay strictly positive; initial losses are strictly positive.
struct AwsState {
  std::vector<double> weights;
  std::vector<double> initial_losses;
  double gamma = 10.0;

  AwsState() = default;
  AwsState(std::vector<double> weights, std::vector<double> initial_losses, double gamma);

  std::size_t objective_count() const { return weights.size(); }
  void check_invariants() const;
};

/// Batch-mean statistics feeding one weight update: per-objective mean loss
/// and per-objective mean unweighted input-gradient norm over the mini-batch.
struct AwsBatchStats {
  std::vector<double> mean_loss;
  std::vector<double> mean_grad_norm;
};

/// N^i: weighted per-objective gradient norm, a_i * E[||dL_i/dx||_2].
std::vector<double> objective_specific_norm(const AwsBatchStats &stats,
                                            const std::vector<double> &weights);

/// Mean of the objective-specific norms across objectives.
double objective_average_norm(const std::vector<double> &norms);

/// l_i = E[L_i] / L0_i, the inverse training rate (1 means no progress).
std::vector<double> loss_ratio(const std::vector<double> &mean_losses,
                               const std::vector<double> &initial_losses);

/// q_i = l_i / mean(l): relative inverse training rate, mean 1 by construction.
std::vector<double> relative_inverse_rate(const std::vector<double> &ratios);

/// f_i = |N^i - Nbar * q_i^gamma|.
std::vector<double> aws_loss(const std::vector<double> &norms, double average_norm,
                             const std::vector<double> &rates, double gamma);

/// f_i^grad = sign(N^i - Nbar * q_i^gamma) * E[||dL_i/dx||_2], with the target
/// term held constant and sign(0) = 0.
std::vector<double> aws_gradient(const std::vector<double> &norms, double average_norm,
                                 const std::vector<double> &rates, double gamma,
                                 const std::vector<double> &raw_norms);

/// Applies a_i <- a_i - lr_grad * f_i^grad per objective, keeping the old
/// weight whenever the candidate is not strictly positive, then renormalizes.
void update_weights(AwsState &state, const std::vector<double> &gradient, double lr_grad);

/// One full Alg-style update from batch statistics.
void aws_step(AwsState &state, const AwsBatchStats &stats, double lr_grad);

} // namespace uniada
