#include "satv2x/gradcheck.hpp"

#include <cmath>

#include "satv2x/agent.hpp"
#include "satv2x/nn/layers.hpp"
#include "satv2x/rng_util.hpp"

namespace satv2x {

using nn::ParameterSet;
using nn::Tape;
using nn::Tensor;
using nn::Var;

GradCheckReport check_gradients(const GradCheckCase& c, double fd_step, double tolerance) {
  GradCheckReport rep;
  rep.name = c.name;

  c.params->zero_grad();
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Var loss = c.build(tape);
    tape.backward(loss);
  }
  for (std::size_t i = 0; i < c.params->size(); ++i)
    analytic.push_back(c.params->at(i).grad);

  auto eval = [&]() {
    Tape tape;
    return tape.value(c.build(tape))[0];
  };

  double max_rel = 0.0;
  for (std::size_t i = 0; i < c.params->size(); ++i) {
    nn::Parameter& p = c.params->at(i);
    for (int j = 0; j < p.value.numel(); ++j) {
      const double original = p.value[j];
      p.value[j] = original + fd_step;
      const double f_plus = eval();
      p.value[j] = original - fd_step;
      const double f_minus = eval();
      p.value[j] = original;
      const double numeric = (f_plus - f_minus) / (2.0 * fd_step);
      const double a = analytic[i][j];
      const double rel = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  c.params->zero_grad();
  rep.max_rel_err = max_rel;
  rep.pass = max_rel <= tolerance;
  return rep;
}

namespace {

double urand(nn::Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

int irand(nn::Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  return d(rng);
}

void randomize(Tensor& t, nn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (double& v : t.data) v = urand(rng, lo, hi);
}

Tensor random_tensor(std::vector<int> shape, nn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  randomize(t, rng, lo, hi);
  return t;
}

// Scalarizes a vector output with fixed random weights so every output
// coordinate feeds the loss.
Var weighted(Tape& tape, Var out, const Tensor& weights) {
  return tape.dot(out, tape.input(weights));
}

struct CaseBuilder {
  std::vector<GradCheckCase>& cases;
  nn::Rng& rng;

  void add(const std::string& base, int instance,
           std::shared_ptr<ParameterSet> ps, std::function<Var(Tape&)> build) {
    cases.push_back({base + "[" + std::to_string(instance) + "]", std::move(ps),
                     std::move(build)});
  }
};

}  // namespace

std::vector<GradCheckCase> builtin_gradient_cases(std::uint64_t seed, int instances_per_op) {
  std::vector<GradCheckCase> cases;
  nn::Rng rng(seed);
  CaseBuilder cb{cases, rng};

  for (int inst = 0; inst < instances_per_op; ++inst) {
    const int n = irand(rng, 1, 8);
    const int m = irand(rng, 1, 8);

    // elementwise pair ops
    {
      auto ps = std::make_shared<ParameterSet>();
      nn::Parameter* a = &ps->add("a", {n});
      nn::Parameter* b = &ps->add("b", {n});
      randomize(a->value, rng);
      randomize(b->value, rng);
      const Tensor w = random_tensor({n}, rng);
      const double c = urand(rng, -2.0, 2.0);
      cb.add("elementwise", inst, ps, [a, b, w, c](Tape& t) {
        Var va = t.param(*a), vb = t.param(*b);
        Var out = t.add(t.mul(va, vb), t.sub(t.scale(va, c), t.add_const(vb, c)));
        return weighted(t, out, w);
      });
    }
    {
      auto ps = std::make_shared<ParameterSet>();
      nn::Parameter* w_mat = &ps->add("w", {m, n});
      nn::Parameter* x = &ps->add("x", {n});
      nn::Parameter* b = &ps->add("b", {m});
      randomize(w_mat->value, rng);
      randomize(x->value, rng);
      randomize(b->value, rng);
      const Tensor w = random_tensor({m}, rng);
      cb.add("affine", inst, ps, [w_mat, x, b, w](Tape& t) {
        return weighted(t, nn::affine(t, t.param(*x), t.param(*w_mat), t.param(*b)), w);
      });
    }
    {
      auto ps = std::make_shared<ParameterSet>();
      nn::Parameter* m_mat = &ps->add("m", {n, m});
      nn::Parameter* x = &ps->add("x", {n});
      randomize(m_mat->value, rng);
      randomize(x->value, rng);
      const Tensor w = random_tensor({m}, rng);
      cb.add("matvec_t", inst, ps, [m_mat, x, w](Tape& t) {
        return weighted(t, t.matvec_t(t.param(*m_mat), t.param(*x)), w);
      });
    }
    {
      auto ps = std::make_shared<ParameterSet>();
      nn::Parameter* a = &ps->add("a", {n});
      nn::Parameter* b = &ps->add("b", {n});
      randomize(a->value, rng);
      randomize(b->value, rng);
      const double c = urand(rng, -2.0, 2.0);
      cb.add("dot", inst, ps, [a, b, c](Tape& t) {
        return t.scale(t.dot(t.param(*a), t.param(*b)), c);
      });
    }
    {
      auto ps = std::make_shared<ParameterSet>();
      nn::Parameter* x = &ps->add("x", {n});
      randomize(x->value, rng);
      const Tensor w = random_tensor({n}, rng);
      cb.add("sigmoid", inst, ps, [x, w](Tape& t) {
        return weighted(t, t.sigmoid(t.param(*x)), w);
      });
      cb.add("tanh", inst, ps, [x, w](Tape& t) {
        return weighted(t, t.tanh_(t.param(*x)), w);
      });
    }
    {
      // keep inputs away from the kink so central differences stay valid
      auto ps = std::make_shared<ParameterSet>();
      nn::Parameter* x = &ps->add("x", {n});
      for (double& v : x->value.data) {
        v = urand(rng, 0.05, 1.0);
        if (urand(rng, -1.0, 1.0) < 0.0) v = -v;
      }
      const Tensor w = random_tensor({n}, rng);
      cb.add("relu", inst, ps, [x, w](Tape& t) {
        return weighted(t, t.relu(t.param(*x)), w);
      });
    }
    {
      auto ps = std::make_shared<ParameterSet>();
      nn::Parameter* x = &ps->add("x", {n});
      randomize(x->value, rng, -2.0, 2.0);
      const Tensor w = random_tensor({n}, rng);
      cb.add("softmax", inst, ps, [x, w](Tape& t) {
        return weighted(t, t.softmax(t.param(*x)), w);
      });
      cb.add("log_softmax", inst, ps, [x, w](Tape& t) {
        return weighted(t, t.log_softmax(t.param(*x)), w);
      });
      cb.add("entropy", inst, ps, [x](Tape& t) {
        return categorical_entropy(t, t.param(*x));
      });
    }
    {
      auto ps = std::make_shared<ParameterSet>();
      nn::Parameter* a = &ps->add("a", {n});
      nn::Parameter* b = &ps->add("b", {m});
      randomize(a->value, rng);
      randomize(b->value, rng);
      const Tensor w = random_tensor({n + m}, rng);
      const int pick_idx = irand(rng, 0, n - 1);
      cb.add("concat_sum_mean_pick", inst, ps, [a, b, w, pick_idx](Tape& t) {
        const Var parts[] = {t.param(*a), t.param(*b)};
        Var cat = t.concat(parts);
        Var s = t.add(t.sum(cat), t.mean(cat));
        s = t.add(s, t.pick(t.param(*a), pick_idx));
        return t.add(s, weighted(t, cat, w));
      });
    }
    {
      const int rows = irand(rng, 1, 5);
      auto ps = std::make_shared<ParameterSet>();
      std::vector<nn::Parameter*> row_params;
      for (int r = 0; r < rows; ++r) {
        row_params.push_back(&ps->add("r" + std::to_string(r), {n}));
        randomize(row_params.back()->value, rng);
      }
      nn::Parameter* x = &ps->add("x", {rows});
      randomize(x->value, rng);
      const Tensor w = random_tensor({n}, rng);
      cb.add("stack_rows", inst, ps, [row_params, x, w](Tape& t) {
        std::vector<Var> rows_v;
        for (nn::Parameter* p : row_params) rows_v.push_back(t.param(*p));
        return weighted(t, t.matvec_t(t.stack_rows(rows_v), t.param(*x)), w);
      });
    }
    {
      auto ps = std::make_shared<ParameterSet>();
      nn::Parameter* x = &ps->add("x", {n});
      randomize(x->value, rng);
      const Tensor w = random_tensor({n}, rng);
      const std::uint64_t mask_seed = rng();
      cb.add("dropout", inst, ps, [x, w, mask_seed](Tape& t) {
        nn::Rng mask_rng(mask_seed);  // identical mask on every rebuild
        return weighted(t, t.dropout(t.param(*x), 0.4, true, mask_rng), w);
      });
    }
    {
      const int d_in = irand(rng, 1, 5);
      const int d_h = irand(rng, 1, 6);
      auto ps = std::make_shared<ParameterSet>();
      auto gru = std::make_shared<nn::GruCell>(nn::GruCell::create(*ps, "gru", d_in, d_h));
      nn::Parameter* x = &ps->add("x", {d_in});
      nn::Parameter* h = &ps->add("h", {d_h});
      nn::Rng init(seed + static_cast<std::uint64_t>(inst) * 77 + 5);
      ps->init_xavier(init);
      randomize(x->value, rng);
      randomize(h->value, rng);
      const Tensor w = random_tensor({d_h}, rng);
      cb.add("gru_cell", inst, ps, [gru, x, h, w](Tape& t) {
        return weighted(t, (*gru)(t, t.param(*x), t.param(*h)), w);
      });
    }
    {
      const int heads = irand(rng, 1, 3);
      const int d_model = heads * irand(rng, 1, 3);
      const int d_q = irand(rng, 2, 6);
      const int neighbors = irand(rng, 1, 5);
      auto ps = std::make_shared<ParameterSet>();
      auto mha = std::make_shared<nn::MultiHeadAttention>(
          nn::MultiHeadAttention::create(*ps, "mha", d_q, d_model, heads));
      nn::Parameter* q = &ps->add("q", {d_q});
      std::vector<nn::Parameter*> neigh;
      for (int j = 0; j < neighbors; ++j)
        neigh.push_back(&ps->add("n" + std::to_string(j), {d_q}));
      nn::Rng init(seed + static_cast<std::uint64_t>(inst) * 131 + 9);
      ps->init_xavier(init);
      randomize(q->value, rng);
      for (nn::Parameter* p : neigh) randomize(p->value, rng);
      const Tensor w = random_tensor({d_model}, rng);
      cb.add("multi_head_attention", inst, ps, [mha, q, neigh, w](Tape& t) {
        std::vector<Var> states;
        for (nn::Parameter* p : neigh) states.push_back(t.param(*p));
        return weighted(t, (*mha)(t, t.param(*q), states).context, w);
      });
    }
  }

  // training-loss composites over a miniature model
  for (int inst = 0; inst < instances_per_op; ++inst) {
    LearnerSection lc;
    lc.gru_hidden = 4;
    lc.attention_dim = 4;
    lc.heads = 2;
    lc.actor_hidden = 6;
    lc.critic_hidden = 5;
    lc.est_hidden = 4;
    lc.est_max_neighbors = 2;
    lc.dropout = 0.2;
    ActionSpace space;
    space.terrestrial_channels = 2;
    space.satellite_channels = 2;
    space.power_dbm[static_cast<int>(Mode::kV2I)] = {23.0};
    space.power_dbm[static_cast<int>(Mode::kV2S)] = {33.5};
    space.power_dbm[static_cast<int>(Mode::kV2V)] = {23.0, 10.0};

    auto model = std::make_shared<PolicyModel>(lc, space, VariantToggles{},
                                               seed + static_cast<std::uint64_t>(inst) * 997);
    auto ps = std::shared_ptr<ParameterSet>(model, &model->params());

    const int batch = irand(rng, 1, 3);
    struct Sample {
      Tensor o_hat;
      Action action;
      double a_plus, target, advantage;
    };
    auto samples = std::make_shared<std::vector<Sample>>();
    for (int b = 0; b < batch; ++b) {
      Sample s;
      s.o_hat = random_tensor({model->enhanced_dim()}, rng);
      s.action.mode = static_cast<Mode>(irand(rng, 0, kModeCount - 1));
      s.action.subchannel = s.action.mode == Mode::kV2S
                                ? space.terrestrial_channels + irand(rng, 0, 1)
                                : irand(rng, 0, 1);
      s.action.power_level = irand(rng, 0, space.power_levels(s.action.mode) - 1);
      s.a_plus = std::max(0.0, urand(rng, -1.0, 1.0));  // detached clipped advantage
      s.target = urand(rng, -1.0, 1.0);                 // detached TD target
      s.advantage = urand(rng, -1.0, 1.0);
      samples->push_back(std::move(s));
    }
    const double beta = 0.058;
    cb.add("sil_losses", inst, ps, [model, samples, beta](Tape& t) {
      const ActionSpace& sp = model->space();
      Var pol = t.scalar(0.0), ent = t.scalar(0.0), val = t.scalar(0.0);
      for (const Sample& s : *samples) {
        auto heads = model->heads(t, t.input(s.o_hat));
        pol = t.add(pol, t.scale(action_log_prob(t, sp, heads, s.action), -s.a_plus));
        ent = t.add(ent, action_entropy(t, sp, heads, s.action.mode));
        Var a = t.sub(t.scalar(s.target), heads.value);
        val = t.add(val, t.mul(a, a));
      }
      const double inv_m = 1.0 / static_cast<double>(samples->size());
      return t.add(t.add(t.scale(pol, inv_m), t.scale(ent, -beta * inv_m)),
                   t.scale(val, inv_m));
    });

    // actor-critic composite with the estimator rebuilt in training mode
    auto inputs = std::make_shared<StateEstimator::StepInputs>();
    inputs->features = random_tensor({kObsFeatures}, rng, 0.0, 1.0);
    inputs->h_prev = random_tensor({lc.gru_hidden}, rng);
    const int n_neigh = irand(rng, 0, 3);
    for (int j = 0; j < n_neigh; ++j)
      inputs->neighbor_hiddens.push_back(random_tensor({lc.gru_hidden}, rng));
    inputs->fingerprint = Fingerprint{0.3, 0.7};
    auto est_target = std::make_shared<Tensor>(random_tensor({model->est_target_dim()}, rng));
    auto sample0 = std::make_shared<Sample>((*samples)[0]);
    const std::uint64_t mask_seed = rng();
    cb.add("a2c_composite", inst, ps,
           [model, inputs, est_target, sample0, beta, mask_seed](Tape& t) {
             nn::Rng drop_rng(mask_seed);
             Var o_hat = rebuild_enhanced(*model, t, *inputs, /*training=*/true, drop_rng);
             auto heads = model->heads(t, o_hat);
             Var lp = action_log_prob(t, model->space(), heads, sample0->action);
             Var actor = t.add(t.scale(lp, -sample0->advantage),
                               t.scale(action_entropy(t, model->space(), heads,
                                                      sample0->action.mode), -beta));
             Var diff = t.sub(heads.value, t.scalar(sample0->target));
             Var critic = t.mul(diff, diff);
             Var est_diff = t.sub(model->estimation_head(t, o_hat), t.input(*est_target));
             Var est = t.mean(t.mul(est_diff, est_diff));
             return t.add(t.add(actor, critic), t.scale(est, 0.5));
           });
  }

  return cases;
}

std::vector<GradCheckReport> run_builtin_gradient_checks(std::uint64_t seed,
                                                         int instances_per_op,
                                                         double fd_step, double tolerance) {
  std::vector<GradCheckReport> reports;
  for (const GradCheckCase& c : builtin_gradient_cases(seed, instances_per_op))
    reports.push_back(check_gradients(c, fd_step, tolerance));
  return reports;
}

}  // namespace satv2x
