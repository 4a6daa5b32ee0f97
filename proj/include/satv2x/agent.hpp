#pragma once

#include <span>

#include "satv2x/env.hpp"
#include "satv2x/nn/adam.hpp"
#include "satv2x/nn/layers.hpp"

namespace satv2x {

// Which learner components are active. FULL has everything on; the
// ablations switch pieces off individually.
struct VariantToggles {
  bool fingerprint = true;
  bool sil = true;
  bool attention = true;  // off -> unweighted mean pool of neighbor encodings
  bool learning = true;   // off for the non-learning reference policies
};

struct Fingerprint {
  double train_progress = 0.0;  // episode index / total episodes
  double exploration = 1.0;     // annealed 1 -> 0 over training
};

constexpr int kObsFeatures = 2 * kModeCount;

// Squashes an observation into NN inputs: per-mode spectral efficiency of
// the previous step scaled to about [0,1], then per-mode normalized backlog.
nn::Tensor featurize(const Observation& obs);

// Networks and parameters for one variant. One shared parameter set serves
// every agent; per-agent state lives in StateEstimator.
class PolicyModel {
 public:
  PolicyModel(const LearnerSection& lc, const ActionSpace& space,
              const VariantToggles& toggles, std::uint64_t init_seed);

  int context_dim() const { return toggles_.attention ? lc_.attention_dim : lc_.gru_hidden; }
  int enhanced_dim() const {
    return lc_.gru_hidden + context_dim() + (toggles_.fingerprint ? 2 : 0);
  }
  int est_target_dim() const { return lc_.est_max_neighbors * kObsFeatures; }

  nn::Var gru_step(nn::Tape& tape, nn::Var x, nn::Var h_prev) const;

  struct ContextOut {
    nn::Var context;
    std::vector<nn::Tensor> alpha;  // attention weights per head (empty without MHA)
  };
  ContextOut context(nn::Tape& tape, nn::Var h,
                     std::span<const nn::Var> neighbor_hiddens,
                     bool training, nn::Rng* dropout_rng) const;
  nn::Var enhanced(nn::Tape& tape, nn::Var h, nn::Var ctx, const Fingerprint& fp) const;

  struct Heads {
    nn::Var mode_logits, chan_logits, power_logits, value;
  };
  Heads heads(nn::Tape& tape, nn::Var enhanced) const;
  nn::Var value_head(nn::Tape& tape, nn::Var enhanced) const;
  nn::Var estimation_head(nn::Tape& tape, nn::Var enhanced) const;

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  std::vector<nn::Parameter*> actor_group();
  std::vector<nn::Parameter*> critic_group();
  std::vector<nn::Parameter*> estimator_group();  // GRU + fusion + decoder

  const ActionSpace& space() const { return space_; }
  const VariantToggles& toggles() const { return toggles_; }
  const LearnerSection& learner() const { return lc_; }

 private:
  std::vector<nn::Parameter*> group_with_prefix(const std::string& prefix);

  LearnerSection lc_;
  ActionSpace space_;
  VariantToggles toggles_;
  nn::ParameterSet params_;
  nn::GruCell gru_;
  nn::MultiHeadAttention mha_;  // unused when attention is off
  nn::Parameter* empty_context_ = nullptr;
  nn::Dense actor_trunk_, mode_head_, chan_head_, power_head_;
  nn::Dense critic_trunk_, value_head_;
  nn::Dense est_trunk_, est_head_;
};

// Per-run recurrent state: the agent's own GRU stream plus one held stream
// per neighbor it hears from. Missing steps hold the last hidden.
class StateEstimator {
 public:
  StateEstimator(const PolicyModel& model, int agent_count);
  void reset();

  struct StepInputs {  // detached inputs for the training-time rebuild
    nn::Tensor features;
    nn::Tensor h_prev;
    std::vector<nn::Tensor> neighbor_hiddens;
    Fingerprint fingerprint;
  };

  // Inference mode (dropout off); deterministic for fixed inputs. `shared`
  // may contain the agent's own observation; it is used as the query stream.
  nn::Tensor estimate(int agent, const Observation& own,
                      std::span<const std::pair<int, Observation>> shared,
                      const Fingerprint& fp, StepInputs* save = nullptr);

  const nn::Tensor& own_hidden(int agent) const {
    return own_hidden_[static_cast<std::size_t>(agent)];
  }

  // cumulative op count across every estimate() call
  std::uint64_t flops() const { return tape_.flops(); }

 private:
  const PolicyModel* model_;
  std::vector<nn::Tensor> own_hidden_;
  std::vector<std::vector<nn::Tensor>> neigh_hidden_;
  nn::Tape tape_;
};

// Rebuilds the enhanced observation from recorded step inputs on a gradient
// tape (training mode applies dropout to the fused context).
nn::Var rebuild_enhanced(const PolicyModel& model, nn::Tape& tape,
                         const StateEstimator::StepInputs& in, bool training,
                         nn::Rng& dropout_rng);

// log pi(a | o_hat), summed over the three masked factors.
nn::Var action_log_prob(nn::Tape& tape, const ActionSpace& space,
                        const PolicyModel::Heads& heads, const Action& a);
// -sum p log p of one categorical given its logits.
nn::Var categorical_entropy(nn::Tape& tape, nn::Var logits);
// Factored policy entropy with the channel/power factors masked by `mode`.
nn::Var action_entropy(nn::Tape& tape, const ActionSpace& space,
                       const PolicyModel::Heads& heads, Mode mode);

struct ActResult {
  Action action;
  double log_prob = 0.0;
};

// Samples one action per factor from the masked categoricals, or takes the
// feasible argmax (ties to the lowest index) when not exploring.
ActResult act(const PolicyModel& model, const nn::Tensor& enhanced, Rng& rng, bool explore);

// r + discount * V(next) * (1 - terminal) - V(current)
double td_advantage(double reward, double v_current, double v_next, bool terminal,
                    double discount);
double td_advantage(const PolicyModel& critic, double reward, const nn::Tensor& o_hat,
                    const nn::Tensor& o_hat_next, bool terminal, double discount);

// V(o_hat) as a plain number.
double critic_value(const PolicyModel& model, const nn::Tensor& o_hat);

struct ReplayEntry {
  nn::Tensor o_hat, o_hat_next;
  Action action;
  double reward = 0.0;
  bool terminal = false;
  double priority = 0.0;
  std::uint64_t seq = 0;
};

// Bounded buffer; overflow evicts the lowest-priority entry (oldest on
// ties). Sampling is proportional to priority.
class PrioritizedReplay {
 public:
  PrioritizedReplay(std::size_t capacity, double priority_floor);
  void push(ReplayEntry e);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const ReplayEntry& at(std::size_t i) const { return entries_[i]; }
  std::vector<std::size_t> sample(std::size_t count, Rng& rng) const;
  void set_priority(std::size_t i, double priority);
  double priority_floor() const { return floor_; }

 private:
  std::size_t capacity_;
  double floor_;
  std::vector<ReplayEntry> entries_;
  std::uint64_t next_seq_ = 0;
};

// One on-policy transition, with everything needed to rebuild the
// estimator graph during the update.
struct TransitionRecord {
  int agent = 0;
  int t = 0;
  StateEstimator::StepInputs inputs;
  Action action;
  double reward = 0.0;
  bool terminal = false;
  nn::Tensor o_hat;      // rollout enhanced observation
  nn::Tensor est_target; // fixed-layout neighbor features
  std::vector<double> est_mask;  // presence per slot
  double value = 0.0;
  double td_target = 0.0;
  double advantage = 0.0;
};

struct A2cStats {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double est_loss = 0.0;
  int batches = 0;
};

struct SilStats {
  double policy_term = 0.0;
  double entropy_term = 0.0;
  double value_loss = 0.0;
  int sampled = 0;
  bool skipped = false;
};

struct OptimizerBundle {
  nn::Adam actor, critic, estimator;
  OptimizerBundle(PolicyModel& model, const LearnerSection& lc)
      : actor(model.actor_group(), lc.actor_lr),
        critic(model.critic_group(), lc.critic_lr),
        estimator(model.estimator_group(), lc.estimator_lr) {}
};

// Advantage-weighted policy gradient with entropy bonus, critic MSE on the
// TD target, and the auxiliary neighbor-estimation loss, over precomputed
// advantages. Applies gradients.
A2cStats a2c_update(PolicyModel& model, OptimizerBundle& opt,
                    std::span<TransitionRecord*> batch, nn::Rng& dropout_rng);

// Clipped-advantage self-imitation update from the replay buffer. Positive
// advantages weight the policy term; the value loss is the mean squared TD
// advantage. Refreshes priorities of the sampled entries. Skips (no-op)
// when the buffer holds fewer than `samples` entries.
SilStats sil_update(PolicyModel& model, OptimizerBundle& opt, PrioritizedReplay& buffer,
                    int samples, Rng& rng);

struct EpisodeMetrics {
  int episode = 0;
  double mean_reward = 0.0;
  double utility = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double sil_loss = 0.0;
  double est_mse = 0.0;
};

struct TrainOutcome {
  std::vector<EpisodeMetrics> series;
  std::array<long, kModeCount> window_mode_counts{};
  std::vector<double> est_pred, est_tgt;  // raw feature pools, final window
  long violations = 0;
  long contention_losses = 0;
};

// The full training loop: rollout, per-episode A2C update, then SIL.
// Deterministic given the seed. Throws on a non-finite loss after writing a
// diagnostic dump next to the output directory (when one is set).
class Trainer {
 public:
  Trainer(const RunConfig& cfg, const VariantToggles& toggles, std::uint64_t seed);

  TrainOutcome run();
  PolicyModel& model() { return model_; }
  Env& env() { return env_; }

  void set_diagnostics_path(const std::filesystem::path& p) { diag_path_ = p; }
  // When set, per-slot records are appended with t globalized across episodes.
  void set_trace_sink(std::vector<StepRecord>* sink) { trace_sink_ = sink; }

 private:
  void check_finite(double loss, const char* where, int episode);
  std::vector<StepRecord>* trace_sink_ = nullptr;

  RunConfig cfg_;
  VariantToggles toggles_;
  std::uint64_t seed_;
  Env env_;
  PolicyModel model_;
  StateEstimator estimator_;
  OptimizerBundle opt_;
  PrioritizedReplay replay_;
  std::filesystem::path diag_path_;
};

}  // namespace satv2x
