#include "uniada/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace uniada {

namespace {

std::string op_label(const ModelGraph &g, std::size_t i) {
  const GraphOp &op = g.ops[i];
  std::string s = "op " + std::to_string(i) + " (" + op_kind_name(op.kind);
  if (!op.name.empty())
    s += " '" + op.name + "'";
  return s + ")";
}

std::vector<std::size_t> conv_output_shape(const ModelGraph &g, std::size_t i,
                                           const std::vector<std::size_t> &in) {
  const GraphOp &op = g.ops[i];
  if (in.size() != 3)
    throw std::invalid_argument(op_label(g, i) + ": expects a (C,H,W) input, got " +
                                shape_to_string(in));
  if (op.weight.shape().size() != 4)
    throw std::invalid_argument(op_label(g, i) + ": weight must be (out,in,kh,kw)");
  const std::size_t co = op.weight.shape()[0], ci = op.weight.shape()[1];
  const std::size_t kh = op.weight.shape()[2], kw = op.weight.shape()[3];
  if (ci != in[0])
    throw std::invalid_argument(op_label(g, i) + ": weight expects " + std::to_string(ci) +
                                " input channels, input has " + std::to_string(in[0]));
  if (op.bias.numel() != co)
    throw std::invalid_argument(op_label(g, i) + ": bias size mismatch");
  if (op.stride < 1)
    throw std::invalid_argument(op_label(g, i) + ": stride must be >= 1");
  if (op.pad < 0)
    throw std::invalid_argument(op_label(g, i) + ": padding must be >= 0");
  const long h = static_cast<long>(in[1]) + 2 * op.pad - static_cast<long>(kh);
  const long w = static_cast<long>(in[2]) + 2 * op.pad - static_cast<long>(kw);
  if (h < 0 || w < 0)
    throw std::invalid_argument(op_label(g, i) + ": kernel larger than padded input " +
                                shape_to_string(in));
  return {co, static_cast<std::size_t>(h / op.stride + 1), static_cast<std::size_t>(w / op.stride + 1)};
}

} // namespace

std::string op_kind_name(OpKind k) {
  switch (k) {
  case OpKind::Conv2d: return "conv2d";
  case OpKind::Dense: return "dense";
  case OpKind::Relu: return "relu";
  case OpKind::Tanh: return "tanh";
  case OpKind::Sigmoid: return "sigmoid";
  case OpKind::MeanPool: return "mean-pool";
  }
  return "unknown";
}

std::vector<std::size_t> op_output_shape(const ModelGraph &g, std::size_t i,
                                         const std::vector<std::size_t> &in) {
  const GraphOp &op = g.ops[i];
  switch (op.kind) {
  case OpKind::Conv2d:
    return conv_output_shape(g, i, in);
  case OpKind::Dense: {
    if (op.weight.shape().size() != 2)
      throw std::invalid_argument(op_label(g, i) + ": weight must be (out,in)");
    const std::size_t out = op.weight.shape()[0], n_in = op.weight.shape()[1];
    if (n_in != shape_numel(in))
      throw std::invalid_argument(op_label(g, i) + ": expects " + std::to_string(n_in) +
                                  " input values, got " + std::to_string(shape_numel(in)));
    if (op.bias.numel() != out)
      throw std::invalid_argument(op_label(g, i) + ": bias size mismatch");
    return {out};
  }
  case OpKind::Relu:
  case OpKind::Tanh:
  case OpKind::Sigmoid:
    return in;
  case OpKind::MeanPool:
    if (op.per_channel) {
      if (in.size() != 3)
        throw std::invalid_argument(op_label(g, i) + ": per-channel pool expects (C,H,W), got " +
                                    shape_to_string(in));
      return {in[0]};
    }
    return {1};
  }
  throw std::invalid_argument(op_label(g, i) + ": unknown kind");
}

void validate_graph(const ModelGraph &g) {
  if (g.input_shape.empty())
    throw std::invalid_argument("graph has no input shape");
  std::vector<std::vector<std::size_t>> shapes(g.ops.size());
  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    const int src = g.ops[i].input;
    if (src != kInputNode && (src < 0 || static_cast<std::size_t>(src) >= i))
      throw std::invalid_argument(op_label(g, i) + ": input reference " + std::to_string(src) +
                                  " breaks topological order");
    const auto &in = src == kInputNode ? g.input_shape : shapes[src];
    shapes[i] = op_output_shape(g, i, in);
  }
  if (g.heads.empty() || g.heads.size() != g.head_names.size())
    throw std::invalid_argument("graph heads and head names must be nonempty and parallel");
  for (std::size_t h = 0; h < g.heads.size(); ++h) {
    const int idx = g.heads[h];
    if (idx < 0 || static_cast<std::size_t>(idx) >= g.ops.size())
      throw std::invalid_argument("head '" + g.head_names[h] + "' references missing op " +
                                  std::to_string(idx));
    if (shape_numel(shapes[idx]) != 1)
      throw std::invalid_argument("head '" + g.head_names[h] + "' output is not scalar: " +
                                  shape_to_string(shapes[idx]));
  }
}

namespace {

// Forward pass with storage type S; reductions always accumulate in 64-bit.
template <typename S>
std::vector<std::vector<S>> forward_buffers(const ModelGraph &g, const std::vector<float> &input) {
  std::vector<std::vector<S>> out(g.ops.size());
  std::vector<S> input_s(input.begin(), input.end());
  std::vector<std::vector<std::size_t>> shapes(g.ops.size());

  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    const GraphOp &op = g.ops[i];
    const std::vector<S> &x = op.input == kInputNode ? input_s : out[op.input];
    const std::vector<std::size_t> &xs = op.input == kInputNode ? g.input_shape : shapes[op.input];
    shapes[i] = op_output_shape(g, i, xs);
    std::vector<S> &y = out[i];
    y.resize(shape_numel(shapes[i]));

    switch (op.kind) {
    case OpKind::Conv2d: {
      const std::size_t C = xs[0], H = xs[1], W = xs[2];
      const std::size_t O = op.weight.shape()[0], KH = op.weight.shape()[2], KW = op.weight.shape()[3];
      const std::size_t OH = shapes[i][1], OW = shapes[i][2];
      const int s = op.stride, p = op.pad;
      for (std::size_t o = 0; o < O; ++o) {
        for (std::size_t oh = 0; oh < OH; ++oh) {
          for (std::size_t ow = 0; ow < OW; ++ow) {
            double acc = op.bias[o];
            for (std::size_t c = 0; c < C; ++c) {
              for (std::size_t kh = 0; kh < KH; ++kh) {
                const long ih = static_cast<long>(oh) * s + static_cast<long>(kh) - p;
                if (ih < 0 || ih >= static_cast<long>(H))
                  continue;
                for (std::size_t kw = 0; kw < KW; ++kw) {
                  const long iw = static_cast<long>(ow) * s + static_cast<long>(kw) - p;
                  if (iw < 0 || iw >= static_cast<long>(W))
                    continue;
                  acc += static_cast<double>(op.weight[((o * C + c) * KH + kh) * KW + kw]) *
                         static_cast<double>(x[(c * H + ih) * W + iw]);
                }
              }
            }
            y[(o * OH + oh) * OW + ow] = static_cast<S>(acc);
          }
        }
      }
      break;
    }
    case OpKind::Dense: {
      const std::size_t O = op.weight.shape()[0], N = op.weight.shape()[1];
      for (std::size_t j = 0; j < O; ++j) {
        double acc = op.bias[j];
        for (std::size_t k = 0; k < N; ++k)
          acc += static_cast<double>(op.weight[j * N + k]) * static_cast<double>(x[k]);
        y[j] = static_cast<S>(acc);
      }
      break;
    }
    case OpKind::Relu:
      for (std::size_t k = 0; k < x.size(); ++k)
        y[k] = x[k] > S(0) ? x[k] : S(0);
      break;
    case OpKind::Tanh:
      for (std::size_t k = 0; k < x.size(); ++k)
        y[k] = static_cast<S>(std::tanh(static_cast<double>(x[k])));
      break;
    case OpKind::Sigmoid:
      for (std::size_t k = 0; k < x.size(); ++k)
        y[k] = static_cast<S>(1.0 / (1.0 + std::exp(-static_cast<double>(x[k]))));
      break;
    case OpKind::MeanPool: {
      if (op.per_channel) {
        const std::size_t C = xs[0], HW = xs[1] * xs[2];
        for (std::size_t c = 0; c < C; ++c) {
          double acc = 0.0;
          for (std::size_t k = 0; k < HW; ++k)
            acc += static_cast<double>(x[c * HW + k]);
          y[c] = static_cast<S>(acc / static_cast<double>(HW));
        }
      } else {
        double acc = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k)
          acc += static_cast<double>(x[k]);
        y[0] = static_cast<S>(acc / static_cast<double>(x.size()));
      }
      break;
    }
    }
  }
  return out;
}

void check_input_shape(const ModelGraph &g, const Tensor &input) {
  if (input.shape() != g.input_shape)
    throw std::invalid_argument("graph input: expected shape " + shape_to_string(g.input_shape) +
                                ", got " + shape_to_string(input.shape()));
}

// Shared adjoint walk. Accumulates scale * d(head)/d(input) into the returned
// buffer and, when `grads` is non-null, the parameter gradients as well.
std::vector<double> backward_core(const ComputeTrace &trace, std::size_t head, double scale,
                                  ParamGrads *grads) {
  const ModelGraph &g = *trace.graph;
  if (head >= g.heads.size())
    throw std::invalid_argument("backward: unknown head " + std::to_string(head) + " (model has " +
                                std::to_string(g.heads.size()) + ")");
  if (trace.outputs.size() != g.ops.size())
    throw std::invalid_argument("backward: trace does not match graph");

  std::vector<std::vector<double>> adj(g.ops.size());
  std::vector<double> input_adj(trace.input.numel(), 0.0);
  const int head_op = g.heads[head];
  adj[head_op].assign(trace.outputs[head_op].numel(), 0.0);
  adj[head_op][0] = scale;

  for (int i = head_op; i >= 0; --i) {
    if (adj[i].empty())
      continue;
    const GraphOp &op = g.ops[i];
    const std::vector<double> &dy = adj[i];
    const Tensor &x = op.input == kInputNode ? trace.input : trace.outputs[op.input];
    std::vector<double> &dx = op.input == kInputNode ? input_adj : adj[op.input];
    if (op.input != kInputNode && dx.empty())
      dx.assign(x.numel(), 0.0);

    switch (op.kind) {
    case OpKind::Conv2d: {
      const auto &xs = x.shape();
      const std::size_t C = xs[0], H = xs[1], W = xs[2];
      const std::size_t O = op.weight.shape()[0], KH = op.weight.shape()[2], KW = op.weight.shape()[3];
      const auto &ys = trace.outputs[i].shape();
      const std::size_t OH = ys[1], OW = ys[2];
      const int s = op.stride, p = op.pad;
      for (std::size_t o = 0; o < O; ++o) {
        for (std::size_t oh = 0; oh < OH; ++oh) {
          for (std::size_t ow = 0; ow < OW; ++ow) {
            const double d = dy[(o * OH + oh) * OW + ow];
            if (d == 0.0)
              continue;
            if (grads)
              grads->bias[i][o] += d;
            for (std::size_t c = 0; c < C; ++c) {
              for (std::size_t kh = 0; kh < KH; ++kh) {
                const long ih = static_cast<long>(oh) * s + static_cast<long>(kh) - p;
                if (ih < 0 || ih >= static_cast<long>(H))
                  continue;
                for (std::size_t kw = 0; kw < KW; ++kw) {
                  const long iw = static_cast<long>(ow) * s + static_cast<long>(kw) - p;
                  if (iw < 0 || iw >= static_cast<long>(W))
                    continue;
                  const std::size_t wi = ((o * C + c) * KH + kh) * KW + kw;
                  const std::size_t xi = (c * H + ih) * W + iw;
                  dx[xi] += static_cast<double>(op.weight[wi]) * d;
                  if (grads)
                    grads->weight[i][wi] += d * static_cast<double>(x[xi]);
                }
              }
            }
          }
        }
      }
      break;
    }
    case OpKind::Dense: {
      const std::size_t O = op.weight.shape()[0], N = op.weight.shape()[1];
      for (std::size_t j = 0; j < O; ++j) {
        const double d = dy[j];
        if (d == 0.0)
          continue;
        if (grads) {
          grads->bias[i][j] += d;
          for (std::size_t k = 0; k < N; ++k)
            grads->weight[i][j * N + k] += d * static_cast<double>(x[k]);
        }
        for (std::size_t k = 0; k < N; ++k)
          dx[k] += static_cast<double>(op.weight[j * N + k]) * d;
      }
      break;
    }
    case OpKind::Relu:
      // Subgradient at 0 is 0.
      for (std::size_t k = 0; k < dy.size(); ++k)
        if (x[k] > 0.0f)
          dx[k] += dy[k];
      break;
    case OpKind::Tanh: {
      const Tensor &y = trace.outputs[i];
      for (std::size_t k = 0; k < dy.size(); ++k) {
        const double t = y[k];
        dx[k] += dy[k] * (1.0 - t * t);
      }
      break;
    }
    case OpKind::Sigmoid: {
      const Tensor &y = trace.outputs[i];
      for (std::size_t k = 0; k < dy.size(); ++k) {
        const double sg = y[k];
        dx[k] += dy[k] * sg * (1.0 - sg);
      }
      break;
    }
    case OpKind::MeanPool: {
      if (op.per_channel) {
        const auto &xs = x.shape();
        const std::size_t C = xs[0], HW = xs[1] * xs[2];
        for (std::size_t c = 0; c < C; ++c) {
          const double d = dy[c] / static_cast<double>(HW);
          for (std::size_t k = 0; k < HW; ++k)
            dx[c * HW + k] += d;
        }
      } else {
        const double d = dy[0] / static_cast<double>(x.numel());
        for (std::size_t k = 0; k < x.numel(); ++k)
          dx[k] += d;
      }
      break;
    }
    }
  }
  return input_adj;
}

Tensor round_to_tensor(const std::vector<double> &buf, const std::vector<std::size_t> &shape) {
  std::vector<float> v(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    v[i] = static_cast<float>(buf[i]);
  return Tensor(shape, std::move(v));
}

} // namespace

ForwardResult forward_eval(const ModelGraph &g, const Tensor &input) {
  check_input_shape(g, input);
  auto buffers = forward_buffers<float>(g, input.data());

  ForwardResult res;
  res.trace.graph = &g;
  res.trace.input = input;
  res.trace.outputs.reserve(g.ops.size());
  std::vector<std::vector<std::size_t>> shapes(g.ops.size());
  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    const auto &in = g.ops[i].input == kInputNode ? g.input_shape : shapes[g.ops[i].input];
    shapes[i] = op_output_shape(g, i, in);
    res.trace.outputs.emplace_back(shapes[i], std::move(buffers[i]));
  }
  res.heads.reserve(g.heads.size());
  for (int h : g.heads)
    res.heads.push_back(res.trace.outputs[h][0]);
  return res;
}

Tensor backward_eval(const ComputeTrace &trace, std::size_t head) {
  auto buf = backward_core(trace, head, 1.0, nullptr);
  return round_to_tensor(buf, trace.input.shape());
}

ParamGrads ParamGrads::zeros_like(const ModelGraph &g) {
  ParamGrads pg;
  pg.weight.resize(g.ops.size());
  pg.bias.resize(g.ops.size());
  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    if (g.ops[i].has_params()) {
      pg.weight[i].assign(g.ops[i].weight.numel(), 0.0);
      pg.bias[i].assign(g.ops[i].bias.numel(), 0.0);
    }
  }
  return pg;
}

Tensor backward_eval_with_params(const ComputeTrace &trace, std::size_t head, ParamGrads &grads,
                                 double scale) {
  auto buf = backward_core(trace, head, scale, &grads);
  return round_to_tensor(buf, trace.input.shape());
}

double eval_head_ref(const ModelGraph &g, const Tensor &input, std::size_t head) {
  check_input_shape(g, input);
  if (head >= g.heads.size())
    throw std::invalid_argument("eval_head_ref: unknown head " + std::to_string(head));
  auto buffers = forward_buffers<double>(g, input.data());
  return buffers[g.heads[head]][0];
}

namespace {

double central_difference(const std::function<double(const Tensor &)> &f, const Tensor &x,
                          std::size_t k, double h) {
  Tensor xp = x, xm = x;
  xp[k] = static_cast<float>(static_cast<double>(x[k]) + h);
  xm[k] = static_cast<float>(static_cast<double>(x[k]) - h);
  // The float-rounded step can differ from h near large coordinates; divide by
  // the realized spacing.
  const double denom = static_cast<double>(xp[k]) - static_cast<double>(xm[k]);
  return (f(xp) - f(xm)) / denom;
}

} // namespace

Tensor finite_diff_gradient(const std::function<double(const Tensor &)> &f, const Tensor &x,
                            double h) {
  if (!(h > 0.0))
    throw std::invalid_argument("finite_diff_gradient: h must be positive");
  std::vector<float> g(x.numel());
  for (std::size_t k = 0; k < x.numel(); ++k)
    g[k] = static_cast<float>(central_difference(f, x, k, h));
  return Tensor(x.shape(), std::move(g));
}

std::vector<double> finite_diff_gradient_at(const std::function<double(const Tensor &)> &f,
                                            const Tensor &x, const std::vector<std::size_t> &coords,
                                            double h) {
  if (!(h > 0.0))
    throw std::invalid_argument("finite_diff_gradient: h must be positive");
  std::vector<double> g;
  g.reserve(coords.size());
  for (std::size_t k : coords) {
    if (k >= x.numel())
      throw std::invalid_argument("finite_diff_gradient: coordinate " + std::to_string(k) +
                                  " out of range");
    g.push_back(central_difference(f, x, k, h));
  }
  return g;
}

} // namespace uniada
