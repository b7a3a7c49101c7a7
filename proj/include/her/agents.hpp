#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string_view>
#include <vector>

#include "her/envs.hpp"
#include "her/nncore.hpp"
#include "her/normalize.hpp"
#include "her/replay.hpp"

namespace her {

/// Range that bootstrap targets are clipped to. For rewards in [r_min, r_max]
/// the return lies in [min(0, r_min) / (1 - gamma), max(0, r_max) / (1 - gamma)].
struct TargetClip {
    double low = -50.0;
    double high = 0.0;

    static TargetClip for_rewards(double min_reward, double max_reward, double gamma);
};

struct LossGrad {
    double loss = 0.0;
    double mean_q = 0.0;
    Vec grad;
};

struct UpdateStats {
    double critic_loss = 0.0;
    double mean_q = 0.0;
    double target_min = 0.0;
    double target_max = 0.0;
};

// ---------------------------------------------------------------- DQN pieces

/// y_i = clamp(r_i + gamma * max_a Q_target(x'_i, a), clip). No terminal masking.
Vec dqn_targets(const Network& q_target, const Mat& next_inputs, const Vec& rewards, double gamma, TargetClip clip);

/// Mean squared error between Q(x_i, a_i) and y_i; gradient flows only through the
/// taken action's output. `actions` holds action indices.
LossGrad dqn_loss_and_grad(const Network& q, const Mat& inputs, const Vec& actions, const Vec& targets);

/// Lowest index among the maximal entries.
int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& values);

/// With probability epsilon a uniform action, otherwise argmax_a Q(x, a).
int epsilon_greedy(const Network& q, const Vec& input, double epsilon, Rng& rng);

// ---------------------------------------------------------------- DDPG pieces

/// y_i = clamp(r_i + gamma * Q_target(x'_i, pi_target(x'_i)), clip).
/// The critic sees actions divided by `action_scale`.
Vec ddpg_critic_targets(const Network& actor_target, const Network& critic_target, const Mat& next_inputs,
                        const Vec& rewards, double gamma, TargetClip clip, const Vec& action_scale);

/// Rows of `critic_inputs` are [x, a / action_scale].
LossGrad critic_loss_and_grad(const Network& critic, const Mat& critic_inputs, const Vec& targets);

/// Actor loss -mean_i Q(x_i, pi(x_i)) + penalty on the actor's final preactivations,
/// differentiated through the (fixed) critic into the actor parameters.
LossGrad actor_loss_and_grad(const Network& actor, const Network& critic, const Mat& inputs,
                             const Vec& action_scale, double penalty_coefficient);

/// Exploration rule: with probability `random_action_prob` a uniform action from the
/// box; otherwise pi(x) plus N(0, (noise_std_fraction * (high - low))^2) per coordinate,
/// clamped to the box.
Vec behavioral_action(const Network& actor, const Vec& input, const ActionSpace& space, double noise_std_fraction,
                      double random_action_prob, Rng& rng);

// ---------------------------------------------------------------- count-based bonus

/// alpha / sqrt(N) for the N-th visit to the grid cell floor(x / beta).
class VisitCounter {
public:
    VisitCounter(double alpha, double beta);

    double intrinsic_bonus(const Vec& features);
    std::int64_t visits(const Vec& features) const;
    std::size_t cells() const { return counts_.size(); }

    double alpha() const { return alpha_; }
    double beta() const { return beta_; }

private:
    std::vector<std::int64_t> cell_of(const Vec& features) const;

    double alpha_;
    double beta_;
    std::map<std::vector<std::int64_t>, std::int64_t> counts_;
};

// ---------------------------------------------------------------- agents

enum class AgentKind { dqn, ddpg };

std::string_view to_string(AgentKind k);
AgentKind parse_agent_kind(std::string_view s);

struct AgentConfig {
    std::vector<int> hidden;  // empty -> 256 for DQN, 64,64,64 for DDPG
    double learning_rate = 1e-3;
    double gamma = 0.98;
    TargetClip clip{};
    double epsilon = 0.2;             // DQN
    double noise_std_fraction = 0.05; // DDPG
    double random_action_prob = 0.2;  // DDPG
    double penalty = 1.0;             // DDPG actor preactivation penalty
    double norm_clip = 5.0;
    double variance_floor = 1e-4;
};

/// Goal-conditioned off-policy learner. Network inputs are the normalized
/// concatenation state || goal.
class Agent {
public:
    virtual ~Agent() = default;

    virtual AgentKind kind() const = 0;
    virtual std::unique_ptr<Agent> clone() const = 0;

    /// Exploration policy used to generate training episodes.
    virtual Vec explore(const Vec& state, const Vec& goal, Rng& rng) const = 0;
    /// Noise-free action from the main (or target) network.
    virtual Vec act(const Vec& state, const Vec& goal, bool use_target) const = 0;

    /// One optimization step on a minibatch; the normalizer is not modified.
    virtual UpdateStats update(const Batch& batch) = 0;
    /// Polyak-averages every target network towards its main network.
    virtual void update_targets(double decay) = 0;

    /// Main networks first, then their targets, in a fixed order.
    virtual std::vector<Network*> networks() = 0;
    virtual std::vector<const Network*> networks() const = 0;
    virtual std::vector<AdamState*> optimizers() = 0;
    virtual std::vector<const AdamState*> optimizers() const = 0;
    virtual std::vector<std::string> network_names() const = 0;

    const AgentConfig& config() const { return config_; }
    RunningNormalizer& normalizer() { return normalizer_; }
    const RunningNormalizer& normalizer() const { return normalizer_; }

    /// normalize([states, goals]) row-wise.
    Mat inputs(const Mat& states, const Mat& goals) const;
    Vec input(const Vec& state, const Vec& goal) const;

protected:
    Agent(AgentConfig config, RunningNormalizer normalizer)
        : config_(std::move(config)), normalizer_(std::move(normalizer)) {}

    AgentConfig config_;
    RunningNormalizer normalizer_;
};

class DqnAgent final : public Agent {
public:
    /// Fresh agent for `env` (discrete action space required).
    DqnAgent(const Environment& env, AgentConfig config, std::uint64_t seed);
    DqnAgent(AgentConfig config, RunningNormalizer normalizer, Network q, Network q_target, AdamState adam);

    AgentKind kind() const override { return AgentKind::dqn; }
    std::unique_ptr<Agent> clone() const override { return std::make_unique<DqnAgent>(*this); }

    Vec explore(const Vec& state, const Vec& goal, Rng& rng) const override;
    Vec act(const Vec& state, const Vec& goal, bool use_target) const override;
    UpdateStats update(const Batch& batch) override;
    void update_targets(double decay) override;

    std::vector<Network*> networks() override { return {&q_, &q_target_}; }
    std::vector<const Network*> networks() const override { return {&q_, &q_target_}; }
    std::vector<AdamState*> optimizers() override { return {&adam_}; }
    std::vector<const AdamState*> optimizers() const override { return {&adam_}; }
    std::vector<std::string> network_names() const override { return {"q", "q_target"}; }

    const Network& q() const { return q_; }
    const Network& q_target() const { return q_target_; }
    Network& q() { return q_; }
    Network& q_target() { return q_target_; }
    const AdamState& adam() const { return adam_; }

private:
    Network q_;
    Network q_target_;
    AdamState adam_;
};

class DdpgAgent final : public Agent {
public:
    /// Fresh agent for `env` (symmetric box action space required).
    DdpgAgent(const Environment& env, AgentConfig config, std::uint64_t seed);
    DdpgAgent(AgentConfig config, RunningNormalizer normalizer, ActionSpace space, Network actor, Network critic,
              Network actor_target, Network critic_target, AdamState actor_adam, AdamState critic_adam);

    AgentKind kind() const override { return AgentKind::ddpg; }
    std::unique_ptr<Agent> clone() const override { return std::make_unique<DdpgAgent>(*this); }

    Vec explore(const Vec& state, const Vec& goal, Rng& rng) const override;
    Vec act(const Vec& state, const Vec& goal, bool use_target) const override;
    UpdateStats update(const Batch& batch) override;
    void update_targets(double decay) override;

    std::vector<Network*> networks() override { return {&actor_, &critic_, &actor_target_, &critic_target_}; }
    std::vector<const Network*> networks() const override {
        return {&actor_, &critic_, &actor_target_, &critic_target_};
    }
    std::vector<AdamState*> optimizers() override { return {&actor_adam_, &critic_adam_}; }
    std::vector<const AdamState*> optimizers() const override { return {&actor_adam_, &critic_adam_}; }
    std::vector<std::string> network_names() const override {
        return {"actor", "critic", "actor_target", "critic_target"};
    }

    const ActionSpace& action_space() const { return space_; }
    const Vec& action_scale() const { return space_.high; }
    const Network& actor() const { return actor_; }
    const Network& critic() const { return critic_; }
    Network& actor() { return actor_; }
    Network& critic() { return critic_; }
    const Network& actor_target() const { return actor_target_; }
    const Network& critic_target() const { return critic_target_; }

private:
    ActionSpace space_;
    Network actor_;
    Network critic_;
    Network actor_target_;
    Network critic_target_;
    AdamState actor_adam_;
    AdamState critic_adam_;
};

/// Fresh agent of the given kind; throws ConfigError when it does not fit the
/// environment's action space.
std::unique_ptr<Agent> make_agent(AgentKind kind, const Environment& env, const AgentConfig& config,
                                  std::uint64_t seed);

/// [inputs, actions / scale] row-wise.
Mat critic_inputs(const Mat& inputs, const Mat& actions, const Vec& action_scale);

}  // namespace her
