#pragma once

#include <span>
#include <string>

#include "satv2x/nn/tape.hpp"

namespace satv2x::nn {

Var affine(Tape& tape, Var x, Var w, Var b);

// Fully connected layer; parameters live in a ParameterSet.
struct Dense {
  Parameter* w = nullptr;  // [out x in]
  Parameter* b = nullptr;  // [out]

  static Dense create(ParameterSet& ps, const std::string& name, int in, int out);
  Var operator()(Tape& tape, Var x) const;
  int out_dim() const { return w->value.rows(); }
  int in_dim() const { return w->value.cols(); }
};

// Gated recurrent unit:
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   hc = tanh(Wh x + Uh (r*h) + bh)
//   h' = (1-z)*h + z*hc
struct GruCell {
  Parameter *wz, *uz, *bz;
  Parameter *wr, *ur, *br;
  Parameter *wh, *uh, *bh;
  int input_dim = 0;
  int hidden_dim = 0;

  static GruCell create(ParameterSet& ps, const std::string& name, int input_dim, int hidden_dim);
  Var operator()(Tape& tape, Var x, Var h_prev) const;
};

// Scaled dot-product attention over a variable-length neighbor set.
// Per head h: q = Wq[h] query, k_j = Wk[h] n_j, v_j = Wv[h] n_j,
// alpha = softmax(q.k_j / sqrt(d_k)), c_h = sum_j alpha_j v_j.
// Heads are concatenated and projected: out = Wo concat(c_1..c_H) + bo.
// d_k = model_dim / heads; query/neighbor vectors have dim query_dim.
struct MultiHeadAttention {
  std::vector<Parameter*> wq, wk, wv;  // per head, [d_k x query_dim]
  Parameter* wo = nullptr;             // [model_dim x heads*d_k]
  Parameter* bo = nullptr;             // [model_dim]
  int heads = 0;
  int query_dim = 0;
  int model_dim = 0;
  int head_dim = 0;

  static MultiHeadAttention create(ParameterSet& ps, const std::string& name,
                                   int query_dim, int model_dim, int heads);

  struct Result {
    Var context;                      // [model_dim]
    std::vector<Tensor> alpha;        // per head, attention weights over neighbors
  };
  // Throws std::invalid_argument on an empty neighbor list; callers decide
  // what stands in for the context when nobody is heard.
  Result operator()(Tape& tape, Var query_state, std::span<const Var> neighbor_states) const;
};

}  // namespace satv2x::nn
