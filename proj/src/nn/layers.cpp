#include "satv2x/nn/layers.hpp"

#include <cmath>

namespace satv2x::nn {

Var affine(Tape& tape, Var x, Var w, Var b) {
  return tape.add(tape.matvec(w, x), b);
}

Dense Dense::create(ParameterSet& ps, const std::string& name, int in, int out) {
  Dense d;
  d.w = &ps.add(name + ".w", {out, in});
  d.b = &ps.add(name + ".b", {out});
  return d;
}

Var Dense::operator()(Tape& tape, Var x) const {
  return affine(tape, x, tape.param(*w), tape.param(*b));
}

GruCell GruCell::create(ParameterSet& ps, const std::string& name, int input_dim, int hidden_dim) {
  GruCell g;
  g.input_dim = input_dim;
  g.hidden_dim = hidden_dim;
  g.wz = &ps.add(name + ".wz", {hidden_dim, input_dim});
  g.uz = &ps.add(name + ".uz", {hidden_dim, hidden_dim});
  g.bz = &ps.add(name + ".bz", {hidden_dim});
  g.wr = &ps.add(name + ".wr", {hidden_dim, input_dim});
  g.ur = &ps.add(name + ".ur", {hidden_dim, hidden_dim});
  g.br = &ps.add(name + ".br", {hidden_dim});
  g.wh = &ps.add(name + ".wh", {hidden_dim, input_dim});
  g.uh = &ps.add(name + ".uh", {hidden_dim, hidden_dim});
  g.bh = &ps.add(name + ".bh", {hidden_dim});
  return g;
}

Var GruCell::operator()(Tape& tape, Var x, Var h_prev) const {
  Var z = tape.sigmoid(tape.add(affine(tape, x, tape.param(*wz), tape.param(*bz)),
                                tape.matvec(tape.param(*uz), h_prev)));
  Var r = tape.sigmoid(tape.add(affine(tape, x, tape.param(*wr), tape.param(*br)),
                                tape.matvec(tape.param(*ur), h_prev)));
  Var hc = tape.tanh_(tape.add(affine(tape, x, tape.param(*wh), tape.param(*bh)),
                               tape.matvec(tape.param(*uh), tape.mul(r, h_prev))));
  // h' = (1-z)*h + z*hc
  Var one_minus_z = tape.add_const(tape.scale(z, -1.0), 1.0);
  return tape.add(tape.mul(one_minus_z, h_prev), tape.mul(z, hc));
}

MultiHeadAttention MultiHeadAttention::create(ParameterSet& ps, const std::string& name,
                                              int query_dim, int model_dim, int heads) {
  if (heads < 1 || model_dim % heads != 0)
    throw std::invalid_argument("attention: model_dim must be divisible by heads");
  MultiHeadAttention m;
  m.heads = heads;
  m.query_dim = query_dim;
  m.model_dim = model_dim;
  m.head_dim = model_dim / heads;
  for (int h = 0; h < heads; ++h) {
    const std::string hs = name + ".h" + std::to_string(h);
    m.wq.push_back(&ps.add(hs + ".wq", {m.head_dim, query_dim}));
    m.wk.push_back(&ps.add(hs + ".wk", {m.head_dim, query_dim}));
    m.wv.push_back(&ps.add(hs + ".wv", {m.head_dim, query_dim}));
  }
  m.wo = &ps.add(name + ".wo", {model_dim, heads * m.head_dim});
  m.bo = &ps.add(name + ".bo", {model_dim});
  return m;
}

MultiHeadAttention::Result MultiHeadAttention::operator()(
    Tape& tape, Var query_state, std::span<const Var> neighbor_states) const {
  if (neighbor_states.empty())
    throw std::invalid_argument("attention: empty neighbor list");
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Result res;
  std::vector<Var> head_contexts;
  head_contexts.reserve(static_cast<std::size_t>(heads));
  std::vector<Var> keys(neighbor_states.size());
  std::vector<Var> values(neighbor_states.size());
  for (int h = 0; h < heads; ++h) {
    Var q = tape.matvec(tape.param(*wq[h]), query_state);
    for (std::size_t j = 0; j < neighbor_states.size(); ++j) {
      keys[j] = tape.matvec(tape.param(*wk[h]), neighbor_states[j]);
      values[j] = tape.matvec(tape.param(*wv[h]), neighbor_states[j]);
    }
    Var K = tape.stack_rows(keys);
    Var logits = tape.scale(tape.matvec(K, q), inv_sqrt_dk);
    Var alpha = tape.softmax(logits);
    Var V = tape.stack_rows(values);
    head_contexts.push_back(tape.matvec_t(V, alpha));
    res.alpha.push_back(tape.value(alpha));
  }
  Var cat = tape.concat(head_contexts);
  res.context = affine(tape, cat, tape.param(*wo), tape.param(*bo));
  return res;
}

}  // namespace satv2x::nn
