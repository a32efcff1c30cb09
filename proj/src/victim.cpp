#include "uniada/victim.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace uniada {

std::size_t VictimModel::head_index(const std::string &id) const {
  for (std::size_t i = 0; i < graph.head_names.size(); ++i)
    if (graph.head_names[i] == id)
      return i;
  std::string known;
  for (const auto &n : graph.head_names)
    known += (known.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown objective '" + id + "' (model heads: " + known + ")");
}

std::vector<std::pair<std::string, const Tensor *>> VictimModel::named_params() const {
  std::vector<std::pair<std::string, const Tensor *>> out;
  for (const GraphOp &op : graph.ops) {
    if (!op.has_params())
      continue;
    out.emplace_back(op.name + ".weight", &op.weight);
    out.emplace_back(op.name + ".bias", &op.bias);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor *>> VictimModel::named_params() {
  std::vector<std::pair<std::string, Tensor *>> out;
  for (GraphOp &op : graph.ops) {
    if (!op.has_params())
      continue;
    out.emplace_back(op.name + ".weight", &op.weight);
    out.emplace_back(op.name + ".bias", &op.bias);
  }
  return out;
}

std::vector<float> predict(const VictimModel &model, const Tensor &frame) {
  return forward_eval(model.graph, frame).heads;
}

namespace {

Tensor gaussian_tensor(std::mt19937_64 &rng, std::vector<std::size_t> shape, double sigma) {
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<float> v(shape_numel(shape));
  for (float &x : v)
    x = static_cast<float>(dist(rng));
  return Tensor(std::move(shape), std::move(v));
}

int push_op(ModelGraph &g, GraphOp op) {
  g.ops.push_back(std::move(op));
  return static_cast<int>(g.ops.size() - 1);
}

} // namespace

VictimModel build_toy_cnn(std::uint64_t seed, const std::vector<std::size_t> &input_shape) {
  if (input_shape.size() != 3 || input_shape[0] != 3)
    throw std::invalid_argument("build_toy_cnn: input shape must be (3,H,W), got " +
                                shape_to_string(input_shape));
  if (input_shape[1] < 16 || input_shape[2] < 16)
    throw std::invalid_argument("build_toy_cnn: input " + shape_to_string(input_shape) +
                                " too small, need height and width >= 16");

  std::mt19937_64 rng(seed);
  VictimModel m;
  m.kind = "toy-cnn";
  ModelGraph &g = m.graph;
  g.input_shape = input_shape;

  // The first layer's init absorbs the 0..255 pixel scale so activations and
  // head pre-activations stay O(1).
  GraphOp conv1{OpKind::Conv2d, "conv1", kInputNode};
  conv1.weight = gaussian_tensor(rng, {8, 3, 3, 3}, std::sqrt(2.0 / 27.0) / 255.0);
  conv1.bias = Tensor::zeros({8});
  conv1.stride = 2;
  int node = push_op(g, std::move(conv1));
  node = push_op(g, GraphOp{OpKind::Relu, "relu1", node});

  GraphOp conv2{OpKind::Conv2d, "conv2", node};
  conv2.weight = gaussian_tensor(rng, {16, 8, 3, 3}, std::sqrt(2.0 / 72.0));
  conv2.bias = Tensor::zeros({16});
  conv2.stride = 2;
  node = push_op(g, std::move(conv2));
  node = push_op(g, GraphOp{OpKind::Relu, "relu2", node});

  GraphOp pool{OpKind::MeanPool, "pool", node};
  pool.per_channel = true;
  node = push_op(g, std::move(pool));

  GraphOp trunk{OpKind::Dense, "trunk", node};
  trunk.weight = gaussian_tensor(rng, {32, 16}, std::sqrt(2.0 / 16.0));
  trunk.bias = Tensor::zeros({32});
  node = push_op(g, std::move(trunk));
  const int trunk_out = push_op(g, GraphOp{OpKind::Relu, "relu3", node});

  GraphOp head_s{OpKind::Dense, "head_steering", trunk_out};
  head_s.weight = gaussian_tensor(rng, {1, 32}, std::sqrt(1.0 / 32.0));
  head_s.bias = Tensor::zeros({1});
  int s_node = push_op(g, std::move(head_s));
  s_node = push_op(g, GraphOp{OpKind::Tanh, "tanh_steering", s_node});
  // Frozen 1x1 dense scales tanh output to [-pi/2, pi/2].
  GraphOp scale_s{OpKind::Dense, "steering_scale", s_node};
  scale_s.weight = Tensor({1, 1}, {static_cast<float>(std::numbers::pi / 2.0)});
  scale_s.bias = Tensor::zeros({1});
  scale_s.trainable = false;
  s_node = push_op(g, std::move(scale_s));

  GraphOp head_a{OpKind::Dense, "head_accel", trunk_out};
  head_a.weight = gaussian_tensor(rng, {1, 32}, std::sqrt(1.0 / 32.0));
  head_a.bias = Tensor::zeros({1});
  int a_node = push_op(g, std::move(head_a));
  a_node = push_op(g, GraphOp{OpKind::Sigmoid, "sigmoid_accel", a_node});

  g.heads = {s_node, a_node};
  g.head_names = {"steering", "acceleration"};
  validate_graph(g);
  return m;
}

VictimModel build_linear_victim(std::uint64_t seed, const std::vector<std::size_t> &input_shape) {
  if (input_shape.empty())
    throw std::invalid_argument("build_linear_victim: empty input shape");
  const std::size_t n = shape_numel(input_shape);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  // Rescale so the head stays inside its declared range for any image in
  // [0,255]: sum(|w|)*255 == budget.
  auto scaled_weights = [&](double budget) {
    std::vector<double> raw(n);
    double abs_sum = 0.0;
    for (double &v : raw) {
      v = unit(rng);
      abs_sum += std::fabs(v);
    }
    const double scale = budget / (255.0 * abs_sum);
    std::vector<float> w(n);
    for (std::size_t i = 0; i < n; ++i)
      w[i] = static_cast<float>(raw[i] * scale);
    return w;
  };

  VictimModel m;
  m.kind = "linear";
  ModelGraph &g = m.graph;
  g.input_shape = input_shape;

  GraphOp head_s{OpKind::Dense, "head_steering", kInputNode};
  head_s.weight = Tensor({1, n}, scaled_weights(1.2));
  head_s.bias = Tensor::zeros({1});
  const int s_node = push_op(g, std::move(head_s));

  GraphOp head_a{OpKind::Dense, "head_accel", kInputNode};
  head_a.weight = Tensor({1, n}, scaled_weights(0.45));
  head_a.bias = Tensor({1}, {0.5f});
  const int a_node = push_op(g, std::move(head_a));

  g.heads = {s_node, a_node};
  g.head_names = {"steering", "acceleration"};
  validate_graph(g);
  return m;
}

double training_mse(const VictimModel &model, const Video &data, const Labels &labels) {
  if (data.size() == 0)
    throw std::invalid_argument("training_mse: empty data");
  if (labels.size() != data.size())
    throw std::invalid_argument("training_mse: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(data.size()) + " frames");
  const std::size_t C = model.head_count();
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto preds = predict(model, data.frames[i]);
    for (std::size_t h = 0; h < C; ++h) {
      const double e = static_cast<double>(preds[h]) - labels[i][h];
      acc += e * e;
    }
  }
  return acc / static_cast<double>(data.size() * C);
}

VictimModel quick_train(const VictimModel &model, const Video &data, const Labels &labels,
                        int epochs, double step_size) {
  if (data.size() == 0)
    throw std::invalid_argument("quick_train: empty data");
  if (labels.size() != data.size())
    throw std::invalid_argument("quick_train: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(data.size()) + " frames");
  constexpr double half_pi = std::numbers::pi / 2.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!(std::fabs(labels[i][0]) <= half_pi) || !(labels[i][1] >= 0.0 && labels[i][1] <= 1.0))
      throw std::invalid_argument("quick_train: frame " + std::to_string(i) +
                                  " label outside head semantics");
  }
  if (epochs < 0)
    throw std::invalid_argument("quick_train: negative epoch count");

  VictimModel m = model;
  if (epochs == 0)
    return m;

  const std::size_t N = data.size(), C = m.head_count();
  double step = step_size;
  double prev_mse = training_mse(m, data, labels);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    ParamGrads grads = ParamGrads::zeros_like(m.graph);
    for (std::size_t i = 0; i < N; ++i) {
      ForwardResult fwd = forward_eval(m.graph, data.frames[i]);
      for (std::size_t h = 0; h < C; ++h) {
        const double factor =
            2.0 * (static_cast<double>(fwd.heads[h]) - labels[i][h]) / static_cast<double>(N * C);
        backward_eval_with_params(fwd.trace, h, grads, factor);
      }
    }

    VictimModel candidate = m;
    bool finite = true;
    for (std::size_t op = 0; op < candidate.graph.ops.size() && finite; ++op) {
      GraphOp &o = candidate.graph.ops[op];
      if (!o.has_params() || !o.trainable)
        continue;
      for (std::size_t k = 0; k < o.weight.numel() && finite; ++k) {
        const double v = static_cast<double>(o.weight[k]) - step * grads.weight[op][k];
        finite = std::isfinite(v);
        o.weight[k] = static_cast<float>(v);
      }
      for (std::size_t k = 0; k < o.bias.numel() && finite; ++k) {
        const double v = static_cast<double>(o.bias[k]) - step * grads.bias[op][k];
        finite = std::isfinite(v);
        o.bias[k] = static_cast<float>(v);
      }
    }

    const double cand_mse = finite ? training_mse(candidate, data, labels) : prev_mse + 1.0;
    if (finite && cand_mse <= prev_mse) {
      m = std::move(candidate);
      prev_mse = cand_mse;
    } else {
      step *= 0.5; // epoch discarded, MSE stays non-increasing
    }
  }
  return m;
}

} // namespace uniada
