#include "satv2x/nn/tape.hpp"

#include <cassert>
#include <cmath>

namespace satv2x::nn {

namespace {

void assert_finite(const Tensor& t) {
#ifndef NDEBUG
  assert(t.all_finite() && "tape op produced a non-finite value");
#else
  (void)t;
#endif
}

}  // namespace

Var Tape::push(Node n) {
  assert_finite(n.value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Tensor& Tape::grad_of(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

Var Tape::input(Tensor t) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(t);
  return push(std::move(n));
}

Var Tape::input(std::span<const double> v) {
  return input(Tensor::vec(std::vector<double>(v.begin(), v.end())));
}

Var Tape::scalar(double v) { return input(Tensor{{1}, {v}}); }

Var Tape::param(Parameter& p) {
  auto it = param_cache_.find(&p);
  if (it != param_cache_.end()) return Var{it->second};
  Node n;
  n.op = Op::kParam;
  n.value = p.value;
  n.parameter = &p;
  Var v = push(std::move(n));
  param_cache_.emplace(&p, v.id);
  return v;
}

Var Tape::add(Var a, Var b) {
  check_same_shape(val(a.id), val(b.id), "add");
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a.id, b.id};
  n.value = val(a.id);
  for (int i = 0; i < n.value.numel(); ++i) n.value[i] += val(b.id)[i];
  flops_ += static_cast<std::uint64_t>(n.value.numel());
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(val(a.id), val(b.id), "sub");
  Node n;
  n.op = Op::kSub;
  n.inputs = {a.id, b.id};
  n.value = val(a.id);
  for (int i = 0; i < n.value.numel(); ++i) n.value[i] -= val(b.id)[i];
  flops_ += static_cast<std::uint64_t>(n.value.numel());
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(val(a.id), val(b.id), "mul");
  Node n;
  n.op = Op::kMul;
  n.inputs = {a.id, b.id};
  n.value = val(a.id);
  for (int i = 0; i < n.value.numel(); ++i) n.value[i] *= val(b.id)[i];
  flops_ += static_cast<std::uint64_t>(n.value.numel());
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  Node n;
  n.op = Op::kScale;
  n.inputs = {a.id};
  n.scalar = c;
  n.value = val(a.id);
  for (double& x : n.value.data) x *= c;
  flops_ += static_cast<std::uint64_t>(n.value.numel());
  return push(std::move(n));
}

Var Tape::add_const(Var a, double c) {
  Node n;
  n.op = Op::kAddConst;
  n.inputs = {a.id};
  n.scalar = c;
  n.value = val(a.id);
  for (double& x : n.value.data) x += c;
  flops_ += static_cast<std::uint64_t>(n.value.numel());
  return push(std::move(n));
}

Var Tape::matvec(Var w, Var x) {
  const Tensor& W = val(w.id);
  const Tensor& X = val(x.id);
  if (W.rank() != 2 || X.rank() != 1 || W.cols() != X.numel())
    throw std::invalid_argument("matvec: shape mismatch");
  Node n;
  n.op = Op::kMatVec;
  n.inputs = {w.id, x.id};
  n.value = Tensor::zeros({W.rows()});
  for (int r = 0; r < W.rows(); ++r) {
    double acc = 0.0;
    const double* row = &W.data[static_cast<std::size_t>(r) * W.cols()];
    for (int c = 0; c < W.cols(); ++c) acc += row[c] * X[c];
    n.value[r] = acc;
  }
  flops_ += static_cast<std::uint64_t>(W.rows()) * W.cols();
  return push(std::move(n));
}

Var Tape::matvec_t(Var m, Var x) {
  const Tensor& M = val(m.id);
  const Tensor& X = val(x.id);
  if (M.rank() != 2 || X.rank() != 1 || M.rows() != X.numel())
    throw std::invalid_argument("matvec_t: shape mismatch");
  Node n;
  n.op = Op::kMatVecT;
  n.inputs = {m.id, x.id};
  n.value = Tensor::zeros({M.cols()});
  for (int r = 0; r < M.rows(); ++r) {
    const double* row = &M.data[static_cast<std::size_t>(r) * M.cols()];
    const double xr = X[r];
    for (int c = 0; c < M.cols(); ++c) n.value[c] += row[c] * xr;
  }
  flops_ += static_cast<std::uint64_t>(M.rows()) * M.cols();
  return push(std::move(n));
}

Var Tape::dot(Var a, Var b) {
  check_same_shape(val(a.id), val(b.id), "dot");
  Node n;
  n.op = Op::kDot;
  n.inputs = {a.id, b.id};
  double acc = 0.0;
  for (int i = 0; i < val(a.id).numel(); ++i) acc += val(a.id)[i] * val(b.id)[i];
  n.value = Tensor{{1}, {acc}};
  flops_ += static_cast<std::uint64_t>(val(a.id).numel());
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Node n;
  n.op = Op::kSigmoid;
  n.inputs = {a.id};
  n.value = val(a.id);
  for (double& x : n.value.data) x = 1.0 / (1.0 + std::exp(-x));
  flops_ += static_cast<std::uint64_t>(n.value.numel()) * 4;
  return push(std::move(n));
}

Var Tape::tanh_(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.inputs = {a.id};
  n.value = val(a.id);
  for (double& x : n.value.data) x = std::tanh(x);
  flops_ += static_cast<std::uint64_t>(n.value.numel()) * 4;
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  Node n;
  n.op = Op::kRelu;
  n.inputs = {a.id};
  n.value = val(a.id);
  for (double& x : n.value.data) x = x > 0.0 ? x : 0.0;
  flops_ += static_cast<std::uint64_t>(n.value.numel());
  return push(std::move(n));
}

Var Tape::softmax(Var a) {
  const Tensor& x = val(a.id);
  if (x.rank() != 1 || x.numel() < 1) throw std::invalid_argument("softmax: needs a nonempty vector");
  Node n;
  n.op = Op::kSoftmax;
  n.inputs = {a.id};
  n.value = x;
  double mx = x[0];
  for (int i = 1; i < x.numel(); ++i) mx = std::max(mx, x[i]);
  double denom = 0.0;
  for (double& v : n.value.data) {
    v = std::exp(v - mx);
    denom += v;
  }
  for (double& v : n.value.data) v /= denom;
  flops_ += static_cast<std::uint64_t>(x.numel()) * 4;
  return push(std::move(n));
}

Var Tape::log_softmax(Var a) {
  const Tensor& x = val(a.id);
  if (x.rank() != 1 || x.numel() < 1) throw std::invalid_argument("log_softmax: needs a nonempty vector");
  Node n;
  n.op = Op::kLogSoftmax;
  n.inputs = {a.id};
  n.value = x;
  double mx = x[0];
  for (int i = 1; i < x.numel(); ++i) mx = std::max(mx, x[i]);
  double denom = 0.0;
  for (double v : x.data) denom += std::exp(v - mx);
  const double lse = mx + std::log(denom);
  for (double& v : n.value.data) v -= lse;
  flops_ += static_cast<std::uint64_t>(x.numel()) * 4;
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: empty input list");
  Node n;
  n.op = Op::kConcat;
  int total = 0;
  for (Var p : parts) {
    n.inputs.push_back(p.id);
    total += val(p.id).numel();
  }
  n.value = Tensor::zeros({total});
  int off = 0;
  for (Var p : parts) {
    const Tensor& t = val(p.id);
    std::copy(t.data.begin(), t.data.end(), n.value.data.begin() + off);
    off += t.numel();
  }
  return push(std::move(n));
}

Var Tape::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty input list");
  const int d = val(rows[0].id).numel();
  Node n;
  n.op = Op::kStackRows;
  for (Var r : rows) {
    if (val(r.id).numel() != d) throw std::invalid_argument("stack_rows: row length mismatch");
    n.inputs.push_back(r.id);
  }
  n.value = Tensor::zeros({static_cast<int>(rows.size()), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& t = val(rows[r].id);
    std::copy(t.data.begin(), t.data.end(), n.value.data.begin() + static_cast<long>(r) * d);
  }
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::kSum;
  n.inputs = {a.id};
  double acc = 0.0;
  for (double v : val(a.id).data) acc += v;
  n.value = Tensor{{1}, {acc}};
  flops_ += static_cast<std::uint64_t>(val(a.id).numel());
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  Node n;
  n.op = Op::kMean;
  n.inputs = {a.id};
  double acc = 0.0;
  for (double v : val(a.id).data) acc += v;
  n.value = Tensor{{1}, {acc / val(a.id).numel()}};
  flops_ += static_cast<std::uint64_t>(val(a.id).numel());
  return push(std::move(n));
}

Var Tape::pick(Var a, int index) {
  const Tensor& x = val(a.id);
  if (index < 0 || index >= x.numel()) throw std::invalid_argument("pick: index out of range");
  Node n;
  n.op = Op::kPick;
  n.inputs = {a.id};
  n.index = index;
  n.value = Tensor{{1}, {x[index]}};
  return push(std::move(n));
}

Var Tape::dropout(Var a, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  Node n;
  n.op = Op::kDropout;
  n.inputs = {a.id};
  n.value = val(a.id);
  if (!training || rate == 0.0) {
    n.aux = Tensor::full(n.value.shape, 1.0);
  } else {
    n.aux = Tensor::zeros(n.value.shape);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep = 1.0 - rate;
    for (int i = 0; i < n.value.numel(); ++i) {
      n.aux[i] = u(rng) < keep ? 1.0 / keep : 0.0;
      n.value[i] *= n.aux[i];
    }
  }
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  if (!v.valid() || v.id >= size()) throw std::invalid_argument("tape: invalid var");
  return node(v).value;
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.id >= size()) throw std::invalid_argument("backward: invalid var");
  if (node(loss).value.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  if (backward_done_) throw std::logic_error("backward: tape already consumed; reset first");
  backward_done_ = true;

  grad_of(loss.id)[0] = 1.0;

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) continue;  // not on a path to the loss
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kParam:
        for (int i = 0; i < g.numel(); ++i) n.parameter->grad[i] += g[i];
        break;
      case Op::kAdd: {
        Tensor& ga = grad_of(n.inputs[0]);
        Tensor& gb = grad_of(n.inputs[1]);
        for (int i = 0; i < g.numel(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        Tensor& ga = grad_of(n.inputs[0]);
        Tensor& gb = grad_of(n.inputs[1]);
        for (int i = 0; i < g.numel(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::kMul: {
        const Tensor& a = val(n.inputs[0]);
        const Tensor& b = val(n.inputs[1]);
        Tensor& ga = grad_of(n.inputs[0]);
        Tensor& gb = grad_of(n.inputs[1]);
        for (int i = 0; i < g.numel(); ++i) {
          ga[i] += g[i] * b[i];
          gb[i] += g[i] * a[i];
        }
        break;
      }
      case Op::kScale: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (int i = 0; i < g.numel(); ++i) ga[i] += g[i] * n.scalar;
        break;
      }
      case Op::kAddConst: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (int i = 0; i < g.numel(); ++i) ga[i] += g[i];
        break;
      }
      case Op::kMatVec: {
        const Tensor& W = val(n.inputs[0]);
        const Tensor& x = val(n.inputs[1]);
        Tensor& gW = grad_of(n.inputs[0]);
        Tensor& gx = grad_of(n.inputs[1]);
        for (int r = 0; r < W.rows(); ++r) {
          const double gr = g[r];
          double* gWrow = &gW.data[static_cast<std::size_t>(r) * W.cols()];
          const double* Wrow = &W.data[static_cast<std::size_t>(r) * W.cols()];
          for (int c = 0; c < W.cols(); ++c) {
            gWrow[c] += gr * x[c];
            gx[c] += gr * Wrow[c];
          }
        }
        break;
      }
      case Op::kMatVecT: {
        // y = M^T x,  M [n x m], x [n]
        const Tensor& M = val(n.inputs[0]);
        const Tensor& x = val(n.inputs[1]);
        Tensor& gM = grad_of(n.inputs[0]);
        Tensor& gx = grad_of(n.inputs[1]);
        for (int r = 0; r < M.rows(); ++r) {
          const double xr = x[r];
          double acc = 0.0;
          double* gMrow = &gM.data[static_cast<std::size_t>(r) * M.cols()];
          const double* Mrow = &M.data[static_cast<std::size_t>(r) * M.cols()];
          for (int c = 0; c < M.cols(); ++c) {
            gMrow[c] += xr * g[c];
            acc += Mrow[c] * g[c];
          }
          gx[r] += acc;
        }
        break;
      }
      case Op::kDot: {
        const Tensor& a = val(n.inputs[0]);
        const Tensor& b = val(n.inputs[1]);
        Tensor& ga = grad_of(n.inputs[0]);
        Tensor& gb = grad_of(n.inputs[1]);
        const double gs = g[0];
        for (int i = 0; i < a.numel(); ++i) {
          ga[i] += gs * b[i];
          gb[i] += gs * a[i];
        }
        break;
      }
      case Op::kSigmoid: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (int i = 0; i < g.numel(); ++i) {
          const double y = n.value[i];
          ga[i] += g[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::kTanh: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (int i = 0; i < g.numel(); ++i) {
          const double y = n.value[i];
          ga[i] += g[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::kRelu: {
        const Tensor& x = val(n.inputs[0]);
        Tensor& ga = grad_of(n.inputs[0]);
        for (int i = 0; i < g.numel(); ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
        break;
      }
      case Op::kSoftmax: {
        Tensor& ga = grad_of(n.inputs[0]);
        double dotgy = 0.0;
        for (int i = 0; i < g.numel(); ++i) dotgy += g[i] * n.value[i];
        for (int i = 0; i < g.numel(); ++i) ga[i] += n.value[i] * (g[i] - dotgy);
        break;
      }
      case Op::kLogSoftmax: {
        Tensor& ga = grad_of(n.inputs[0]);
        double gsum = 0.0;
        for (int i = 0; i < g.numel(); ++i) gsum += g[i];
        for (int i = 0; i < g.numel(); ++i) ga[i] += g[i] - std::exp(n.value[i]) * gsum;
        break;
      }
      case Op::kConcat: {
        int off = 0;
        for (int in : n.inputs) {
          Tensor& gi = grad_of(in);
          for (int i = 0; i < gi.numel(); ++i) gi[i] += g[off + i];
          off += gi.numel();
        }
        break;
      }
      case Op::kStackRows: {
        const int d = n.value.cols();
        for (std::size_t r = 0; r < n.inputs.size(); ++r) {
          Tensor& gi = grad_of(n.inputs[r]);
          for (int c = 0; c < d; ++c) gi[c] += g.at2(static_cast<int>(r), c);
        }
        break;
      }
      case Op::kSum: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (int i = 0; i < ga.numel(); ++i) ga[i] += g[0];
        break;
      }
      case Op::kMean: {
        Tensor& ga = grad_of(n.inputs[0]);
        const double s = g[0] / ga.numel();
        for (int i = 0; i < ga.numel(); ++i) ga[i] += s;
        break;
      }
      case Op::kPick: {
        grad_of(n.inputs[0])[n.index] += g[0];
        break;
      }
      case Op::kDropout: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (int i = 0; i < g.numel(); ++i) ga[i] += g[i] * n.aux[i];
        break;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  param_cache_.clear();
  backward_done_ = false;
  // flops_ intentionally survives reset so callers can meter several graphs
}

}  // namespace satv2x::nn
