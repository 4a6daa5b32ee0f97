#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>

#include "satv2x/nn/tensor.hpp"

namespace satv2x::nn {

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense tensors. Nodes are recorded in topological
// order by construction; backward() walks them once in reverse and
// accumulates into Parameter gradients at the leaves.
class Tape {
 public:
  Var input(Tensor t);            // constant leaf
  Var input(std::span<const double> v);
  Var scalar(double v);
  Var param(Parameter& p);        // differentiable leaf, cached per tape

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);          // elementwise
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var matvec(Var w, Var x);       // W [m x n] * x [n] -> [m]
  Var matvec_t(Var m, Var x);     // M [n x m]^T * x [n] -> [m]
  Var dot(Var a, Var b);          // -> scalar
  Var sigmoid(Var a);
  Var tanh_(Var a);
  Var relu(Var a);
  Var softmax(Var a);             // max-subtracted, vector
  Var log_softmax(Var a);
  Var concat(std::span<const Var> parts);
  Var stack_rows(std::span<const Var> rows);  // n vectors [d] -> [n x d]
  Var sum(Var a);                 // -> scalar
  Var mean(Var a);                // -> scalar
  Var pick(Var a, int index);     // vector element -> scalar
  // Inverted dropout; identity when training is false.
  Var dropout(Var a, double rate, bool training, Rng& rng);

  const Tensor& value(Var v) const;
  int size() const { return static_cast<int>(nodes_.size()); }

  // loss must be scalar; accumulates d loss / d p into every Parameter
  // reached by the graph. One backward per recorded graph.
  void backward(Var loss);

  void reset();
  std::uint64_t flops() const { return flops_; }

 private:
  enum class Op : std::uint8_t {
    kInput, kParam, kAdd, kSub, kMul, kScale, kAddConst, kMatVec, kMatVecT,
    kDot, kSigmoid, kTanh, kRelu, kSoftmax, kLogSoftmax, kConcat, kStackRows,
    kSum, kMean, kPick, kDropout,
  };

  struct Node {
    Op op;
    Tensor value;
    Tensor grad;                 // allocated during backward
    std::vector<int> inputs;
    double scalar = 0.0;         // scale factor / added constant
    int index = 0;               // pick index
    Tensor aux;                  // dropout mask
    Parameter* parameter = nullptr;
  };

  Var push(Node n);
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
  const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  Tensor& grad_of(int id);
  static void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_cache_;
  std::uint64_t flops_ = 0;
  bool backward_done_ = false;
};

}  // namespace satv2x::nn
