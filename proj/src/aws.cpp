#include "uniada/aws.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace uniada {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char *what) {
  if (a != b)
    throw std::invalid_argument(std::string(what) + ": size mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
}

} // namespace

AwsState::AwsState(std::vector<double> w, std::vector<double> l0, double g)
    : weights(std::move(w)), initial_losses(std::move(l0)), gamma(g) {
  check_invariants();
}

void AwsState::check_invariants() const {
  if (weights.empty() || weights.size() != initial_losses.size())
    throw std::invalid_argument("aws state: weights and initial losses must be nonempty and parallel");
  if (gamma < 0.0)
    throw std::invalid_argument("aws state: gamma must be >= 0");
  double sum = 0.0;
  for (double a : weights) {
    if (!(a > 0.0))
      throw std::invalid_argument("aws state: weights must be strictly positive");
    sum += a;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("aws state: weights must sum to 1, got " + std::to_string(sum));
  for (double l : initial_losses)
    if (!(l > 0.0))
      throw std::invalid_argument("aws state: initial losses must be strictly positive");
}

std::vector<double> objective_specific_norm(const AwsBatchStats &stats,
                                            const std::vector<double> &weights) {
  require_same_size(stats.mean_grad_norm.size(), weights.size(), "objective_specific_norm");
  std::vector<double> out(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0))
      throw std::invalid_argument("objective_specific_norm: weights must be strictly positive");
    out[i] = weights[i] * stats.mean_grad_norm[i];
  }
  return out;
}

double objective_average_norm(const std::vector<double> &norms) {
  if (norms.empty())
    throw std::invalid_argument("objective_average_norm: empty input");
  double acc = 0.0;
  for (double n : norms)
    acc += n;
  return acc / static_cast<double>(norms.size());
}

std::vector<double> loss_ratio(const std::vector<double> &mean_losses,
                               const std::vector<double> &initial_losses) {
  require_same_size(mean_losses.size(), initial_losses.size(), "loss_ratio");
  std::vector<double> out(mean_losses.size());
  for (std::size_t i = 0; i < mean_losses.size(); ++i) {
    if (!(initial_losses[i] > 0.0))
      throw std::invalid_argument("loss_ratio: initial loss for objective " + std::to_string(i) +
                                  " must be strictly positive");
    out[i] = mean_losses[i] / initial_losses[i];
  }
  return out;
}

std::vector<double> relative_inverse_rate(const std::vector<double> &ratios) {
  if (ratios.empty())
    throw std::invalid_argument("relative_inverse_rate: empty input");
  double mean = 0.0;
  for (double l : ratios)
    mean += l;
  mean /= static_cast<double>(ratios.size());
  if (!(mean > 0.0))
    throw std::invalid_argument("relative_inverse_rate: mean loss ratio is zero, rate undefined");
  std::vector<double> out(ratios.size());
  for (std::size_t i = 0; i < ratios.size(); ++i)
    out[i] = ratios[i] / mean;
  return out;
}

std::vector<double> aws_loss(const std::vector<double> &norms, double average_norm,
                             const std::vector<double> &rates, double gamma) {
  require_same_size(norms.size(), rates.size(), "aws_loss");
  std::vector<double> out(norms.size());
  for (std::size_t i = 0; i < norms.size(); ++i)
    out[i] = std::fabs(norms[i] - average_norm * std::pow(rates[i], gamma));
  return out;
}

std::vector<double> aws_gradient(const std::vector<double> &norms, double average_norm,
                                 const std::vector<double> &rates, double gamma,
                                 const std::vector<double> &raw_norms) {
  require_same_size(norms.size(), rates.size(), "aws_gradient");
  require_same_size(norms.size(), raw_norms.size(), "aws_gradient");
  std::vector<double> out(norms.size());
  for (std::size_t i = 0; i < norms.size(); ++i) {
    const double u = norms[i] - average_norm * std::pow(rates[i], gamma);
    const double sign = u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
    out[i] = sign * raw_norms[i];
  }
  return out;
}

void update_weights(AwsState &state, const std::vector<double> &gradient, double lr_grad) {
  require_same_size(gradient.size(), state.weights.size(), "update_weights");
  std::vector<double> next(state.weights);
  for (std::size_t i = 0; i < next.size(); ++i) {
    const double candidate = state.weights[i] - lr_grad * gradient[i];
    if (candidate > 0.0)
      next[i] = candidate;
  }
  double sum = 0.0;
  for (double a : next)
    sum += a;
  for (double &a : next)
    a /= sum;
  state.weights = std::move(next);
  state.check_invariants();
}

void aws_step(AwsState &state, const AwsBatchStats &stats, double lr_grad) {
  const auto norms = objective_specific_norm(stats, state.weights);
  const double average = objective_average_norm(norms);
  const auto ratios = loss_ratio(stats.mean_loss, state.initial_losses);
  const auto rates = relative_inverse_rate(ratios);
  const auto gradient = aws_gradient(norms, average, rates, state.gamma, stats.mean_grad_norm);
  update_weights(state, gradient, lr_grad);
}

} // namespace uniada
