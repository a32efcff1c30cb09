#pragma once

#include "uniada/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace uniada {

/// Fixed operator set: 2-D convolution, fully connected layer, ReLU, tanh,
/// sigmoid, global mean-pool. Every operator has a hand-written adjoint.
enum class OpKind { Conv2d, Dense, Relu, Tanh, Sigmoid, MeanPool };

std::string op_kind_name(OpKind k);

constexpr int kInputNode = -1;

struct GraphOp {
  OpKind kind = OpKind::Relu;
  std::string name;     // parameter name prefix ("conv1", "head_steering", ...)
  int input = kInputNode; // producing op index, or kInputNode for the graph input

  // Conv2d: weight (out,in,kh,kw), bias (out). Dense: weight (out,in), bias (out).
  Tensor weight;
  Tensor bias;
  int stride = 1;
  int pad = 0;

  // MeanPool: true pools (C,H,W) -> (C); false pools everything to a scalar.
  bool per_channel = true;

  // Dense/Conv2d layers with fixed parameters are skipped by training.
  bool trainable = true;

  bool has_params() const { return kind == OpKind::Conv2d || kind == OpKind::Dense; }
};

struct ModelGraph {
  std::vector<std::size_t> input_shape; // (channels, height, width)
  std::vector<GraphOp> ops;             // topological: ops[i].input < i
  std::vector<int> heads;               // op index producing each scalar head
  std::vector<std::string> head_names;  // parallel to heads
};

/// Validates topology, shapes, and scalar heads. Throws naming the offending
/// operator id.
void validate_graph(const ModelGraph &g);

std::vector<std::size_t> op_output_shape(const ModelGraph &g, std::size_t op_index,
                                         const std::vector<std::size_t> &in_shape);

/// Ordered record of one forward pass: the input plus every operator's saved
/// activation, sufficient to run backward_eval. Borrows the graph it was
/// produced from.
struct ComputeTrace {
  const ModelGraph *graph = nullptr;
  Tensor input;
  std::vector<Tensor> outputs; // one per op, in graph order
};

struct ForwardResult {
  std::vector<float> heads; // one scalar per head
  ComputeTrace trace;
};

/// Evaluates every head. Intermediate reductions accumulate in 64-bit;
/// activations are stored in 32-bit.
ForwardResult forward_eval(const ModelGraph &g, const Tensor &input);

/// Gradient of the selected scalar head with respect to the input image.
Tensor backward_eval(const ComputeTrace &trace, std::size_t head);

/// Parameter-gradient accumulators for training, kept in 64-bit until applied.
struct ParamGrads {
  std::vector<std::vector<double>> weight; // per op, flat, empty for param-free ops
  std::vector<std::vector<double>> bias;

  static ParamGrads zeros_like(const ModelGraph &g);
};

/// Accumulates scale * d(head)/d(params) into `grads` and returns the input
/// gradient scaled the same way.
Tensor backward_eval_with_params(const ComputeTrace &trace, std::size_t head, ParamGrads &grads,
                                 double scale);

/// Reference forward pass carried end to end in 64-bit. Used as the target
/// function for finite-difference checks, where 32-bit storage noise would
/// drown the tolerances.
double eval_head_ref(const ModelGraph &g, const Tensor &input, std::size_t head);

/// Central-difference estimate (f(x+h e_k) - f(x-h e_k)) / (2h) per coordinate.
Tensor finite_diff_gradient(const std::function<double(const Tensor &)> &f, const Tensor &x,
                            double h);

/// Same estimate restricted to a coordinate subset (flat indices).
std::vector<double> finite_diff_gradient_at(const std::function<double(const Tensor &)> &f,
                                            const Tensor &x, const std::vector<std::size_t> &coords,
                                            double h);

} // namespace uniada
