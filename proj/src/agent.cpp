#include "satv2x/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "satv2x/rng_util.hpp"

namespace satv2x {

using nn::Tape;
using nn::Tensor;
using nn::Var;

nn::Tensor featurize(const Observation& obs) {
  // log2(1 + SINR) / 30 keeps realistic spectral efficiencies near [0,1]
  std::vector<double> f(static_cast<std::size_t>(kObsFeatures), 0.0);
  for (int m = 0; m < kModeCount; ++m) {
    f[static_cast<std::size_t>(m)] = std::log2(1.0 + obs.sinr_prev[static_cast<std::size_t>(m)]) / 30.0;
    f[static_cast<std::size_t>(kModeCount + m)] =
        obs.load_bits > 0.0 ? obs.remaining_bits[static_cast<std::size_t>(m)] / obs.load_bits : 0.0;
  }
  return Tensor::vec(std::move(f));
}

PolicyModel::PolicyModel(const LearnerSection& lc, const ActionSpace& space,
                         const VariantToggles& toggles, std::uint64_t init_seed)
    : lc_(lc), space_(space), toggles_(toggles) {
  gru_ = nn::GruCell::create(params_, "est.gru", kObsFeatures, lc_.gru_hidden);
  if (toggles_.attention)
    mha_ = nn::MultiHeadAttention::create(params_, "est.mha", lc_.gru_hidden, lc_.attention_dim,
                                          lc_.heads);
  empty_context_ = &params_.add("est.defctx", {context_dim()});

  const int d_hat = enhanced_dim();
  actor_trunk_ = nn::Dense::create(params_, "actor.trunk", d_hat, lc_.actor_hidden);
  mode_head_ = nn::Dense::create(params_, "actor.mode", lc_.actor_hidden, kModeCount);
  chan_head_ = nn::Dense::create(params_, "actor.chan", lc_.actor_hidden, space_.total_channels());
  power_head_ = nn::Dense::create(params_, "actor.power", lc_.actor_hidden, space_.max_power_levels());
  critic_trunk_ = nn::Dense::create(params_, "critic.trunk", d_hat, lc_.critic_hidden);
  value_head_ = nn::Dense::create(params_, "critic.value", lc_.critic_hidden, 1);
  est_trunk_ = nn::Dense::create(params_, "dec.trunk", d_hat, lc_.est_hidden);
  est_head_ = nn::Dense::create(params_, "dec.head", lc_.est_hidden, est_target_dim());

  nn::Rng rng(init_seed);
  params_.init_xavier(rng);
}

Var PolicyModel::gru_step(Tape& tape, Var x, Var h_prev) const {
  return gru_(tape, x, h_prev);
}

PolicyModel::ContextOut PolicyModel::context(Tape& tape, Var h,
                                             std::span<const Var> neighbor_hiddens,
                                             bool training, nn::Rng* dropout_rng) const {
  ContextOut out;
  if (neighbor_hiddens.empty()) {
    out.context = tape.param(*empty_context_);
  } else if (toggles_.attention) {
    auto res = mha_(tape, h, neighbor_hiddens);
    out.context = res.context;
    out.alpha = std::move(res.alpha);
  } else {
    const int n = static_cast<int>(neighbor_hiddens.size());
    Var stacked = tape.stack_rows(neighbor_hiddens);
    Var ones = tape.input(Tensor::full({n}, 1.0));
    out.context = tape.scale(tape.matvec_t(stacked, ones), 1.0 / n);
  }
  if (training && lc_.dropout > 0.0) {
    if (!dropout_rng) throw std::invalid_argument("context: training mode needs an rng");
    out.context = tape.dropout(out.context, lc_.dropout, true, *dropout_rng);
  }
  return out;
}

Var PolicyModel::enhanced(Tape& tape, Var h, Var ctx, const Fingerprint& fp) const {
  if (!toggles_.fingerprint) {
    const Var parts[] = {h, ctx};
    return tape.concat(parts);
  }
  Var f = tape.input(Tensor::vec({fp.train_progress, fp.exploration}));
  const Var parts[] = {h, ctx, f};
  return tape.concat(parts);
}

PolicyModel::Heads PolicyModel::heads(Tape& tape, Var enhanced) const {
  Heads out;
  Var trunk = tape.tanh_(actor_trunk_(tape, enhanced));
  out.mode_logits = mode_head_(tape, trunk);
  out.chan_logits = chan_head_(tape, trunk);
  out.power_logits = power_head_(tape, trunk);
  out.value = value_head(tape, enhanced);
  return out;
}

Var PolicyModel::value_head(Tape& tape, Var enhanced) const {
  return value_head_(tape, tape.tanh_(critic_trunk_(tape, enhanced)));
}

Var PolicyModel::estimation_head(Tape& tape, Var enhanced) const {
  return est_head_(tape, tape.tanh_(est_trunk_(tape, enhanced)));
}

std::vector<nn::Parameter*> PolicyModel::group_with_prefix(const std::string& prefix) {
  std::vector<nn::Parameter*> out;
  for (nn::Parameter* p : params_.all())
    if (p->name.rfind(prefix, 0) == 0) out.push_back(p);
  return out;
}

std::vector<nn::Parameter*> PolicyModel::actor_group() { return group_with_prefix("actor."); }
std::vector<nn::Parameter*> PolicyModel::critic_group() { return group_with_prefix("critic."); }
std::vector<nn::Parameter*> PolicyModel::estimator_group() {
  auto out = group_with_prefix("est.");
  for (nn::Parameter* p : group_with_prefix("dec.")) out.push_back(p);
  return out;
}

StateEstimator::StateEstimator(const PolicyModel& model, int agent_count) : model_(&model) {
  own_hidden_.assign(static_cast<std::size_t>(agent_count), Tensor{});
  neigh_hidden_.assign(static_cast<std::size_t>(agent_count),
                       std::vector<Tensor>(static_cast<std::size_t>(agent_count)));
  reset();
}

void StateEstimator::reset() {
  const int d = model_->learner().gru_hidden;
  for (auto& h : own_hidden_) h = Tensor::zeros({d});
  for (auto& row : neigh_hidden_)
    for (auto& h : row) h = Tensor::zeros({d});
}

Tensor StateEstimator::estimate(int agent, const Observation& own,
                                std::span<const std::pair<int, Observation>> shared,
                                const Fingerprint& fp, StepInputs* save) {
  tape_.reset();
  const Tensor h_prev_value = own_hidden_[static_cast<std::size_t>(agent)];
  Var x = tape_.input(featurize(own));
  Var h = model_->gru_step(tape_, x, tape_.input(h_prev_value));

  std::vector<Var> neigh;
  neigh.reserve(shared.size());
  for (const auto& [j, obs] : shared) {
    if (j == agent) continue;
    auto& held = neigh_hidden_[static_cast<std::size_t>(agent)][static_cast<std::size_t>(j)];
    Var nh = model_->gru_step(tape_, tape_.input(featurize(obs)), tape_.input(held));
    held = tape_.value(nh);
    neigh.push_back(nh);
  }

  auto ctx = model_->context(tape_, h, neigh, /*training=*/false, nullptr);
  Var o_hat = model_->enhanced(tape_, h, ctx.context, fp);
  own_hidden_[static_cast<std::size_t>(agent)] = tape_.value(h);

  if (save) {
    save->features = tape_.value(x);
    save->h_prev = h_prev_value;
    save->neighbor_hiddens.clear();
    for (Var v : neigh) save->neighbor_hiddens.push_back(tape_.value(v));
    save->fingerprint = fp;
  }
  return tape_.value(o_hat);
}

Var rebuild_enhanced(const PolicyModel& model, Tape& tape,
                     const StateEstimator::StepInputs& in, bool training, nn::Rng& dropout_rng) {
  Var x = tape.input(in.features);
  Var h = model.gru_step(tape, x, tape.input(in.h_prev));
  std::vector<Var> neigh;
  neigh.reserve(in.neighbor_hiddens.size());
  for (const Tensor& t : in.neighbor_hiddens) neigh.push_back(tape.input(t));
  auto ctx = model.context(tape, h, neigh, training, &dropout_rng);
  return model.enhanced(tape, h, ctx.context, in.fingerprint);
}

namespace {

std::vector<double> masked_softmax(const std::vector<double>& logits,
                                   const std::vector<double>* mask) {
  std::vector<double> p(logits);
  if (mask) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += (*mask)[i];
  }
  double mx = p[0];
  for (double v : p) mx = std::max(mx, v);
  double denom = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    denom += v;
  }
  for (double& v : p) v /= denom;
  return p;
}

int sample_index(const std::vector<double>& probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return static_cast<int>(i);
  }
  // numerical remainder: last entry with nonzero mass
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return static_cast<int>(i);
  return 0;
}

int argmax_index(const std::vector<double>& v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

}  // namespace

ActResult act(const PolicyModel& model, const Tensor& enhanced, Rng& rng, bool explore) {
  Tape tape;
  auto H = model.heads(tape, tape.input(enhanced));
  const ActionSpace& space = model.space();

  ActResult out;
  const std::vector<double> mode_probs = masked_softmax(tape.value(H.mode_logits).data, nullptr);
  const int mode_idx = explore ? sample_index(mode_probs, rng) : argmax_index(mode_probs);
  out.action.mode = static_cast<Mode>(mode_idx);
  out.log_prob = std::log(mode_probs[static_cast<std::size_t>(mode_idx)]);

  const auto chan_mask = space.channel_mask(out.action.mode);
  const std::vector<double> chan_probs = masked_softmax(tape.value(H.chan_logits).data, &chan_mask);
  out.action.subchannel = explore ? sample_index(chan_probs, rng) : argmax_index(chan_probs);
  out.log_prob += std::log(chan_probs[static_cast<std::size_t>(out.action.subchannel)]);

  const auto pow_mask = space.power_mask(out.action.mode);
  const std::vector<double> pow_probs = masked_softmax(tape.value(H.power_logits).data, &pow_mask);
  out.action.power_level = explore ? sample_index(pow_probs, rng) : argmax_index(pow_probs);
  out.log_prob += std::log(pow_probs[static_cast<std::size_t>(out.action.power_level)]);
  return out;
}

double td_advantage(double reward, double v_current, double v_next, bool terminal,
                    double discount) {
  if (discount < 0.0 || discount > 1.0)
    throw std::domain_error("td_advantage: discount must be in [0,1]");
  return reward + discount * v_next * (terminal ? 0.0 : 1.0) - v_current;
}

double critic_value(const PolicyModel& model, const Tensor& o_hat) {
  Tape tape;
  return tape.value(model.value_head(tape, tape.input(o_hat)))[0];
}

double td_advantage(const PolicyModel& critic, double reward, const Tensor& o_hat,
                    const Tensor& o_hat_next, bool terminal, double discount) {
  const double v_next = terminal ? 0.0 : critic_value(critic, o_hat_next);
  return td_advantage(reward, critic_value(critic, o_hat), v_next, terminal, discount);
}

PrioritizedReplay::PrioritizedReplay(std::size_t capacity, double priority_floor)
    : capacity_(capacity), floor_(priority_floor) {
  if (capacity_ == 0) throw std::invalid_argument("replay: capacity must be > 0");
  if (!(floor_ > 0.0)) throw std::invalid_argument("replay: priority floor must be > 0");
}

void PrioritizedReplay::push(ReplayEntry e) {
  e.seq = next_seq_++;
  e.priority = std::max(e.priority, floor_);
  if (entries_.size() < capacity_) {
    entries_.push_back(std::move(e));
    return;
  }
  std::size_t worst = 0;
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    const ReplayEntry& a = entries_[i];
    const ReplayEntry& b = entries_[worst];
    if (a.priority < b.priority || (a.priority == b.priority && a.seq < b.seq)) worst = i;
  }
  entries_[worst] = std::move(e);
}

std::vector<std::size_t> PrioritizedReplay::sample(std::size_t count, Rng& rng) const {
  if (entries_.empty()) throw std::logic_error("replay: sampling from an empty buffer");
  std::vector<double> prefix(entries_.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    acc += entries_[i].priority;
    prefix[i] = acc;
  }
  std::uniform_real_distribution<double> u(0.0, acc);
  std::vector<std::size_t> out(count);
  for (std::size_t m = 0; m < count; ++m) {
    const double r = u(rng);
    out[m] = static_cast<std::size_t>(
        std::lower_bound(prefix.begin(), prefix.end(), r) - prefix.begin());
    if (out[m] >= entries_.size()) out[m] = entries_.size() - 1;
  }
  return out;
}

void PrioritizedReplay::set_priority(std::size_t i, double priority) {
  entries_[i].priority = std::max(priority, floor_);
}

Var action_log_prob(Tape& tape, const ActionSpace& space, const PolicyModel::Heads& heads,
                    const Action& a) {
  Var lp = tape.pick(tape.log_softmax(heads.mode_logits), static_cast<int>(a.mode));
  Var chan_lp = tape.log_softmax(
      tape.add(heads.chan_logits, tape.input(Tensor::vec(space.channel_mask(a.mode)))));
  lp = tape.add(lp, tape.pick(chan_lp, a.subchannel));
  Var pow_lp = tape.log_softmax(
      tape.add(heads.power_logits, tape.input(Tensor::vec(space.power_mask(a.mode)))));
  return tape.add(lp, tape.pick(pow_lp, a.power_level));
}

Var categorical_entropy(Tape& tape, Var logits) {
  Var p = tape.softmax(logits);
  Var lp = tape.log_softmax(logits);
  return tape.scale(tape.sum(tape.mul(p, lp)), -1.0);
}

Var action_entropy(Tape& tape, const ActionSpace& space, const PolicyModel::Heads& heads,
                   Mode mode) {
  Var e = categorical_entropy(tape, heads.mode_logits);
  e = tape.add(e, categorical_entropy(
                      tape, tape.add(heads.chan_logits,
                                     tape.input(Tensor::vec(space.channel_mask(mode))))));
  return tape.add(e, categorical_entropy(
                         tape, tape.add(heads.power_logits,
                                        tape.input(Tensor::vec(space.power_mask(mode))))));
}

namespace {

Var masked_estimation_loss(Tape& tape, const PolicyModel& model, Var enhanced,
                           const Tensor& target, const std::vector<double>& slot_mask) {
  Var pred = model.estimation_head(tape, enhanced);
  std::vector<double> entry_mask(static_cast<std::size_t>(target.numel()), 0.0);
  int present = 0;
  for (std::size_t s = 0; s < slot_mask.size(); ++s) {
    if (slot_mask[s] <= 0.0) continue;
    ++present;
    for (int f = 0; f < kObsFeatures; ++f)
      entry_mask[s * static_cast<std::size_t>(kObsFeatures) + static_cast<std::size_t>(f)] = 1.0;
  }
  Var diff = tape.mul(tape.sub(pred, tape.input(target)), tape.input(Tensor::vec(entry_mask)));
  const int denom = std::max(1, present * kObsFeatures);
  return tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / denom);
}

}  // namespace

A2cStats a2c_update(PolicyModel& model, OptimizerBundle& opt,
                    std::span<TransitionRecord*> batch, nn::Rng& dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("a2c_update: empty batch");
  const LearnerSection& lc = model.learner();
  Tape tape;
  Var actor_acc = tape.scalar(0.0);
  Var ent_acc = tape.scalar(0.0);
  Var critic_acc = tape.scalar(0.0);
  Var est_acc = tape.scalar(0.0);

  for (TransitionRecord* tr : batch) {
    Var o_hat = rebuild_enhanced(model, tape, tr->inputs, /*training=*/true, dropout_rng);
    auto heads = model.heads(tape, o_hat);
    Var lp = action_log_prob(tape, model.space(), heads, tr->action);
    actor_acc = tape.add(actor_acc, tape.scale(lp, -tr->advantage));
    ent_acc = tape.add(ent_acc, action_entropy(tape, model.space(), heads, tr->action.mode));
    Var diff = tape.sub(heads.value, tape.scalar(tr->td_target));
    critic_acc = tape.add(critic_acc, tape.mul(diff, diff));
    est_acc = tape.add(est_acc, masked_estimation_loss(tape, model, o_hat, tr->est_target,
                                                       tr->est_mask));
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Var actor_loss = tape.add(tape.scale(actor_acc, inv_b),
                            tape.scale(ent_acc, -lc.entropy_coeff * inv_b));
  Var critic_loss = tape.scale(critic_acc, inv_b);
  Var est_loss = tape.scale(est_acc, inv_b);
  Var total = tape.add(tape.add(actor_loss, critic_loss), tape.scale(est_loss, lc.lambda_est));
  tape.backward(total);

  opt.actor.step();
  opt.critic.step();
  opt.estimator.step();
  model.params().zero_grad();

  A2cStats stats;
  stats.actor_loss = tape.value(actor_loss)[0];
  stats.critic_loss = tape.value(critic_loss)[0];
  stats.entropy = tape.value(ent_acc)[0] * inv_b;
  stats.est_loss = tape.value(est_loss)[0];
  stats.batches = 1;
  return stats;
}

SilStats sil_update(PolicyModel& model, OptimizerBundle& opt, PrioritizedReplay& buffer,
                    int samples, Rng& rng) {
  SilStats stats;
  if (buffer.size() < static_cast<std::size_t>(samples)) {
    stats.skipped = true;
    return stats;
  }
  const LearnerSection& lc = model.learner();
  const auto idx = buffer.sample(static_cast<std::size_t>(samples), rng);

  // TD advantages under the current critic; targets are detached
  std::vector<double> target(idx.size()), advantage(idx.size());
  for (std::size_t m = 0; m < idx.size(); ++m) {
    const ReplayEntry& e = buffer.at(idx[m]);
    const double v_next = e.terminal ? 0.0 : critic_value(model, e.o_hat_next);
    target[m] = e.reward + lc.discount * v_next * (e.terminal ? 0.0 : 1.0);
    advantage[m] = target[m] - critic_value(model, e.o_hat);
  }

  Tape tape;
  Var pol_acc = tape.scalar(0.0);
  Var ent_acc = tape.scalar(0.0);
  Var val_acc = tape.scalar(0.0);
  for (std::size_t m = 0; m < idx.size(); ++m) {
    const ReplayEntry& e = buffer.at(idx[m]);
    Var o_hat = tape.input(e.o_hat);
    auto heads = model.heads(tape, o_hat);
    const double a_plus = std::max(0.0, advantage[m]);
    Var lp = action_log_prob(tape, model.space(), heads, e.action);
    pol_acc = tape.add(pol_acc, tape.scale(lp, -a_plus));
    ent_acc = tape.add(ent_acc, action_entropy(tape, model.space(), heads, e.action.mode));
    Var a_var = tape.sub(tape.scalar(target[m]), heads.value);
    val_acc = tape.add(val_acc, tape.mul(a_var, a_var));
  }
  const double inv_m = 1.0 / static_cast<double>(samples);
  Var policy_term = tape.scale(pol_acc, inv_m);
  Var entropy_term = tape.scale(ent_acc, -lc.entropy_coeff * inv_m);
  Var value_loss = tape.scale(val_acc, inv_m);
  Var total = tape.add(tape.add(policy_term, entropy_term), value_loss);
  tape.backward(total);

  opt.actor.step();
  opt.critic.step();
  model.params().zero_grad();

  for (std::size_t m = 0; m < idx.size(); ++m)
    buffer.set_priority(idx[m], std::max(0.0, advantage[m]));

  stats.policy_term = tape.value(policy_term)[0];
  stats.entropy_term = tape.value(entropy_term)[0];
  stats.value_loss = tape.value(value_loss)[0];
  stats.sampled = samples;
  return stats;
}

Trainer::Trainer(const RunConfig& cfg, const VariantToggles& toggles, std::uint64_t seed)
    : cfg_(cfg),
      toggles_(toggles),
      seed_(seed),
      env_(cfg.scenario, cfg.link, derive_seed(seed, 0)),
      model_(cfg.learner, env_.action_space(), toggles, derive_seed(seed, 1)),
      estimator_(model_, env_.agent_count()),
      opt_(model_, cfg.learner),
      replay_(static_cast<std::size_t>(cfg.learner.replay_capacity), cfg.learner.priority_floor) {
  if (!toggles.learning)
    throw std::invalid_argument("Trainer: non-learning variants run through the baseline loop");
}

void Trainer::check_finite(double loss, const char* where, int episode) {
  if (std::isfinite(loss)) return;
  if (!diag_path_.empty()) {
    std::ofstream os(diag_path_);
    os << "{\"error\":\"non-finite loss\",\"stage\":\"" << where << "\",\"episode\":" << episode
       << "}\n";
  }
  throw std::runtime_error(std::string("training diverged: non-finite loss in ") + where +
                           " at episode " + std::to_string(episode));
}

TrainOutcome Trainer::run() {
  const LearnerSection& lc = cfg_.learner;
  const int T = cfg_.scenario.steps_per_episode;
  const int agents = env_.agent_count();
  const int window_start = std::max(0, lc.episodes - lc.metrics_window);
  const int k_est = lc.est_max_neighbors;

  Rng act_rng(derive_seed(seed_, 2));
  Rng share_rng(derive_seed(seed_, 3));
  nn::Rng dropout_rng(derive_seed(seed_, 4));
  Rng sil_rng(derive_seed(seed_, 5));

  TrainOutcome out;
  out.series.reserve(static_cast<std::size_t>(lc.episodes));

  std::vector<TransitionRecord> transitions;
  transitions.reserve(static_cast<std::size_t>(T) * agents);

  for (int ep = 0; ep < lc.episodes; ++ep) {
    const double progress = lc.episodes > 1 ? static_cast<double>(ep) / (lc.episodes - 1) : 1.0;
    const Fingerprint fp{progress, 1.0 - progress};
    const bool in_window = ep >= window_start;

    std::vector<Observation> obs = env_.reset(derive_seed(seed_, 1000 + static_cast<std::uint64_t>(ep)));
    estimator_.reset();
    transitions.clear();

    double reward_sum = 0.0;
    std::vector<Action> actions(static_cast<std::size_t>(agents));
    for (int t = 0; t < T; ++t) {
      const auto views = env_.neighbor_views(lc.sharing_level, share_rng);
      const CommGraph graph = env_.comm_graph();

      for (int i = 0; i < agents; ++i) {
        TransitionRecord tr;
        tr.agent = i;
        tr.t = t;
        tr.o_hat = estimator_.estimate(i, obs[static_cast<std::size_t>(i)],
                                       views[static_cast<std::size_t>(i)], fp, &tr.inputs);
        const ActResult ar = act(model_, tr.o_hat, act_rng, /*explore=*/true);
        actions[static_cast<std::size_t>(i)] = ar.action;
        tr.action = ar.action;

        // ground truth the sharing mask may have hidden: nearest-first
        // geometric neighbors in a fixed zero-padded layout
        tr.est_target = Tensor::zeros({model_.est_target_dim()});
        tr.est_mask.assign(static_cast<std::size_t>(k_est), 0.0);
        const auto& nbrs = graph.neighbors[static_cast<std::size_t>(i)];
        for (int s = 0; s < k_est && s < static_cast<int>(nbrs.size()); ++s) {
          const Tensor f = featurize(obs[static_cast<std::size_t>(nbrs[static_cast<std::size_t>(s)])]);
          std::copy(f.data.begin(), f.data.end(),
                    tr.est_target.data.begin() + static_cast<long>(s) * kObsFeatures);
          tr.est_mask[static_cast<std::size_t>(s)] = 1.0;
        }
        transitions.push_back(std::move(tr));
      }

      const StepResult sr = env_.step(actions);
      reward_sum += sr.global_reward;
      for (int i = 0; i < agents; ++i) {
        TransitionRecord& tr = transitions[static_cast<std::size_t>(t) * agents + i];
        tr.reward = sr.rewards[static_cast<std::size_t>(i)];
        tr.terminal = sr.done;
      }
      if (trace_sink_) {
        for (StepRecord rec : sr.records) {
          rec.t += ep * T;
          trace_sink_->push_back(rec);
        }
      }
      if (in_window)
        for (const Action& a : actions)
          ++out.window_mode_counts[static_cast<std::size_t>(static_cast<int>(a.mode))];
      obs = env_.observations();
    }

    // estimation pool for the final-window report (inference predictions)
    if (in_window) {
      Tape tape;
      for (const TransitionRecord& tr : transitions) {
        tape.reset();
        const Tensor pred =
            tape.value(model_.estimation_head(tape, tape.input(tr.o_hat)));
        for (int s = 0; s < k_est; ++s) {
          if (tr.est_mask[static_cast<std::size_t>(s)] <= 0.0) continue;
          for (int f = 0; f < kObsFeatures; ++f) {
            out.est_pred.push_back(pred[s * kObsFeatures + f]);
            out.est_tgt.push_back(tr.est_target[s * kObsFeatures + f]);
          }
        }
      }
    }

    // pass 1: values and TD targets along each agent's stream
    for (TransitionRecord& tr : transitions) tr.value = critic_value(model_, tr.o_hat);
    for (int i = 0; i < agents; ++i) {
      for (int t = 0; t < T; ++t) {
        TransitionRecord& tr = transitions[static_cast<std::size_t>(t) * agents + i];
        const double v_next =
            tr.terminal ? 0.0
                        : transitions[static_cast<std::size_t>(t + 1) * agents + i].value;
        tr.td_target = tr.reward + lc.discount * v_next * (tr.terminal ? 0.0 : 1.0);
        tr.advantage = tr.td_target - tr.value;
      }
    }

    // pass 2: per-agent minibatches in rollout order
    A2cStats a2c_sum;
    int a2c_batches = 0;
    std::vector<TransitionRecord*> chunk;
    for (int i = 0; i < agents; ++i) {
      for (int t0 = 0; t0 < T; t0 += lc.minibatch) {
        chunk.clear();
        for (int t = t0; t < std::min(T, t0 + lc.minibatch); ++t)
          chunk.push_back(&transitions[static_cast<std::size_t>(t) * agents + i]);
        const A2cStats s = a2c_update(model_, opt_, chunk, dropout_rng);
        a2c_sum.actor_loss += s.actor_loss;
        a2c_sum.critic_loss += s.critic_loss;
        a2c_sum.entropy += s.entropy;
        a2c_sum.est_loss += s.est_loss;
        ++a2c_batches;
      }
    }
    if (a2c_batches > 0) {
      a2c_sum.actor_loss /= a2c_batches;
      a2c_sum.critic_loss /= a2c_batches;
      a2c_sum.entropy /= a2c_batches;
      a2c_sum.est_loss /= a2c_batches;
    }
    check_finite(a2c_sum.actor_loss + a2c_sum.critic_loss + a2c_sum.est_loss, "a2c_update", ep);

    SilStats sil_sum;
    if (toggles_.sil) {
      for (int i = 0; i < agents; ++i) {
        for (int t = 0; t < T; ++t) {
          const TransitionRecord& tr = transitions[static_cast<std::size_t>(t) * agents + i];
          ReplayEntry e;
          e.o_hat = tr.o_hat;
          e.o_hat_next = tr.terminal
                             ? Tensor::zeros({model_.enhanced_dim()})
                             : transitions[static_cast<std::size_t>(t + 1) * agents + i].o_hat;
          e.action = tr.action;
          e.reward = tr.reward;
          e.terminal = tr.terminal;
          e.priority = std::max(tr.advantage, 0.0);
          replay_.push(std::move(e));
        }
      }
      for (int u = 0; u < lc.sil_updates_per_episode; ++u) {
        const SilStats s = sil_update(model_, opt_, replay_, lc.sil_samples, sil_rng);
        if (!s.skipped) {
          sil_sum.policy_term += s.policy_term;
          sil_sum.entropy_term += s.entropy_term;
          sil_sum.value_loss += s.value_loss;
          ++sil_sum.sampled;
        }
      }
      if (sil_sum.sampled > 0) {
        sil_sum.policy_term /= sil_sum.sampled;
        sil_sum.entropy_term /= sil_sum.sampled;
        sil_sum.value_loss /= sil_sum.sampled;
      }
      check_finite(sil_sum.policy_term + sil_sum.value_loss, "sil_update", ep);
    }

    double completed = 0.0;
    for (const VehicleState& v : env_.vehicles()) completed += v.completed ? 1.0 : 0.0;

    EpisodeMetrics row;
    row.episode = ep;
    row.mean_reward = reward_sum / T;
    row.utility = completed / agents;
    row.actor_loss = a2c_sum.actor_loss;
    row.critic_loss = a2c_sum.critic_loss;
    row.sil_loss = sil_sum.policy_term + sil_sum.entropy_term + sil_sum.value_loss;
    row.est_mse = a2c_sum.est_loss;
    out.series.push_back(row);
  }

  out.violations = env_.violation_count();
  out.contention_losses = env_.contention_loss_count();
  return out;
}

}  // namespace satv2x
