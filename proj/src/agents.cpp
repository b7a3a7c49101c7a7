#include "her/agents.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "her/errors.hpp"

namespace her {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Vec clamp_targets(Vec y, TargetClip clip) { return y.cwiseMax(clip.low).cwiseMin(clip.high); }

std::vector<int> hidden_or(const std::vector<int>& hidden, std::vector<int> fallback) {
    return hidden.empty() ? fallback : hidden;
}

UpdateStats stats_from(const LossGrad& critic, const Vec& y) {
    UpdateStats s;
    s.critic_loss = critic.loss;
    s.mean_q = critic.mean_q;
    s.target_min = y.minCoeff();
    s.target_max = y.maxCoeff();
    return s;
}

}  // namespace

TargetClip TargetClip::for_rewards(double min_reward, double max_reward, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    return {std::min(0.0, min_reward) / (1.0 - gamma), std::max(0.0, max_reward) / (1.0 - gamma)};
}

// ---------------------------------------------------------------- DQN pieces

Vec dqn_targets(const Network& q_target, const Mat& next_inputs, const Vec& rewards, double gamma, TargetClip clip) {
    if (next_inputs.rows() != rewards.size()) throw ShapeError("dqn_targets: batch size mismatch");
    const Mat q_next = predict(q_target, next_inputs);
    return clamp_targets(rewards + gamma * q_next.rowwise().maxCoeff(), clip);
}

LossGrad dqn_loss_and_grad(const Network& q, const Mat& inputs, const Vec& actions, const Vec& targets) {
    const Eigen::Index batch = inputs.rows();
    if (batch == 0) throw UsageError("dqn update on an empty batch");
    if (actions.size() != batch || targets.size() != batch) throw ShapeError("dqn loss: batch size mismatch");
    ForwardResult fw = forward(q, inputs);
    Mat d_out = Mat::Zero(batch, q.output_width());
    LossGrad r;
    for (Eigen::Index i = 0; i < batch; ++i) {
        const double a = actions[i];
        if (a < 0 || a >= q.output_width() || a != std::floor(a)) throw UsageError("dqn loss: invalid action index");
        const double qa = fw.outputs(i, Eigen::Index(a));
        const double diff = qa - targets[i];
        r.loss += diff * diff;
        r.mean_q += qa;
        d_out(i, Eigen::Index(a)) = 2.0 * diff / double(batch);
    }
    r.loss /= double(batch);
    r.mean_q /= double(batch);
    r.grad = backward(q, fw.cache, d_out).params;
    return r;
}

int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& values) {
    int best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = int(i);
    return best;
}

int epsilon_greedy(const Network& q, const Vec& input, double epsilon, Rng& rng) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) return std::uniform_int_distribution<int>(0, q.output_width() - 1)(rng);
    const Mat out = predict(q, input.transpose());
    return argmax_lowest(out.row(0));
}

// ---------------------------------------------------------------- DDPG pieces

Mat critic_inputs(const Mat& inputs, const Mat& actions, const Vec& action_scale) {
    if (inputs.rows() != actions.rows()) throw ShapeError("critic inputs: batch size mismatch");
    if (actions.cols() != action_scale.size()) throw ShapeError("critic inputs: action width mismatch");
    Mat out(inputs.rows(), inputs.cols() + actions.cols());
    out.leftCols(inputs.cols()) = inputs;
    out.rightCols(actions.cols()) = actions * action_scale.cwiseInverse().asDiagonal();
    return out;
}

Vec ddpg_critic_targets(const Network& actor_target, const Network& critic_target, const Mat& next_inputs,
                        const Vec& rewards, double gamma, TargetClip clip, const Vec& action_scale) {
    if (next_inputs.rows() != rewards.size()) throw ShapeError("ddpg targets: batch size mismatch");
    const Mat next_actions = predict(actor_target, next_inputs);
    const Mat q_next = predict(critic_target, critic_inputs(next_inputs, next_actions, action_scale));
    return clamp_targets(rewards + gamma * q_next.col(0), clip);
}

LossGrad critic_loss_and_grad(const Network& critic, const Mat& critic_inputs, const Vec& targets) {
    const Eigen::Index batch = critic_inputs.rows();
    if (batch == 0) throw UsageError("critic update on an empty batch");
    if (targets.size() != batch) throw ShapeError("critic loss: batch size mismatch");
    ForwardResult fw = forward(critic, critic_inputs);
    const Vec diff = fw.outputs.col(0) - targets;
    LossGrad r;
    r.loss = diff.squaredNorm() / double(batch);
    r.mean_q = fw.outputs.col(0).mean();
    const Mat d_out = (2.0 / double(batch)) * diff;
    r.grad = backward(critic, fw.cache, d_out).params;
    return r;
}

LossGrad actor_loss_and_grad(const Network& actor, const Network& critic, const Mat& inputs,
                             const Vec& action_scale, double penalty_coefficient) {
    const Eigen::Index batch = inputs.rows();
    if (batch == 0) throw UsageError("actor update on an empty batch");
    ForwardResult fa = forward(actor, inputs);
    ForwardResult fc = forward(critic, critic_inputs(inputs, fa.outputs, action_scale));
    LossGrad r;
    r.mean_q = fc.outputs.col(0).mean();
    r.loss = -r.mean_q;

    const Mat d_q = Mat::Constant(batch, 1, -1.0 / double(batch));
    const Gradients gc = backward(critic, fc.cache, d_q);
    const Eigen::Index action_dim = action_scale.size();
    const Mat d_actions = gc.inputs.rightCols(action_dim) * action_scale.cwiseInverse().asDiagonal();

    if (penalty_coefficient != 0.0) {
        const PenaltyResult pen = preactivation_penalty(actor, fa.cache, penalty_coefficient);
        r.loss += pen.loss;
        r.grad = backward(actor, fa.cache, d_actions, &pen.final_preactivation_grad).params;
    } else {
        r.grad = backward(actor, fa.cache, d_actions).params;
    }
    return r;
}

Vec behavioral_action(const Network& actor, const Vec& input, const ActionSpace& space, double noise_std_fraction,
                      double random_action_prob, Rng& rng) {
    if (space.discrete()) throw UsageError("behavioral_action needs a continuous action space");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const Eigen::Index dim = space.low.size();
    Vec a(dim);
    if (coin(rng) < random_action_prob) {
        for (Eigen::Index i = 0; i < dim; ++i)
            a[i] = std::uniform_real_distribution<double>(space.low[i], space.high[i])(rng);
        return a;
    }
    a = predict(actor, input.transpose()).row(0).transpose();
    if (noise_std_fraction > 0.0) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index i = 0; i < dim; ++i)
            a[i] += noise_std_fraction * (space.high[i] - space.low[i]) * normal(rng);
    }
    return a.cwiseMax(space.low).cwiseMin(space.high);
}

// ---------------------------------------------------------------- VisitCounter

VisitCounter::VisitCounter(double alpha, double beta) : alpha_(alpha), beta_(beta) {
    if (!(beta > 0.0)) throw ConfigError("count-based exploration needs beta > 0");
    if (alpha < 0.0) throw ConfigError("count-based exploration needs alpha >= 0");
}

std::vector<std::int64_t> VisitCounter::cell_of(const Vec& features) const {
    std::vector<std::int64_t> cell(std::size_t(features.size()));
    for (Eigen::Index i = 0; i < features.size(); ++i)
        cell[std::size_t(i)] = std::int64_t(std::floor(features[i] / beta_));
    return cell;
}

double VisitCounter::intrinsic_bonus(const Vec& features) {
    const std::int64_t n = ++counts_[cell_of(features)];
    return alpha_ / std::sqrt(double(n));
}

std::int64_t VisitCounter::visits(const Vec& features) const {
    auto it = counts_.find(cell_of(features));
    return it == counts_.end() ? 0 : it->second;
}

// ---------------------------------------------------------------- agents

std::string_view to_string(AgentKind k) { return k == AgentKind::dqn ? "dqn" : "ddpg"; }

AgentKind parse_agent_kind(std::string_view s) {
    if (s == "dqn") return AgentKind::dqn;
    if (s == "ddpg") return AgentKind::ddpg;
    throw ConfigError("unknown agent kind '" + std::string(s) + "'");
}

Mat Agent::inputs(const Mat& states, const Mat& goals) const {
    if (states.rows() != goals.rows()) throw ShapeError("agent inputs: batch size mismatch");
    Mat x(states.rows(), states.cols() + goals.cols());
    x.leftCols(states.cols()) = states;
    x.rightCols(goals.cols()) = goals;
    return normalizer_.normalize_rows(x);
}

Vec Agent::input(const Vec& state, const Vec& goal) const {
    Vec x(state.size() + goal.size());
    x << state, goal;
    return normalizer_.normalize(x);
}

DqnAgent::DqnAgent(const Environment& env, AgentConfig config, std::uint64_t seed)
    : Agent(std::move(config), RunningNormalizer(env.state_dim() + env.goal_dim())) {
    const ActionSpace space = env.action_space();
    if (!space.discrete()) throw ConfigError("dqn needs a discrete action space; " + env.name() + " is continuous");
    normalizer_ = RunningNormalizer(env.state_dim() + env.goal_dim(), config_.norm_clip, config_.variance_floor);
    const auto hidden = hidden_or(config_.hidden, {256});
    q_ = mlp_init(make_layers(env.state_dim() + env.goal_dim(), hidden, space.n, Activation::relu,
                              Activation::identity),
                  mix_seed(seed, 0));
    q_target_ = q_;
    adam_ = AdamState::zeros(q_.param_count(), config_.learning_rate);
}

DqnAgent::DqnAgent(AgentConfig config, RunningNormalizer normalizer, Network q, Network q_target, AdamState adam)
    : Agent(std::move(config), std::move(normalizer)),
      q_(std::move(q)),
      q_target_(std::move(q_target)),
      adam_(std::move(adam)) {
    if (!q_.same_architecture(q_target_)) throw ConfigError("dqn: target network differs from main network");
    if (q_.input_width() != normalizer_.dim()) throw ConfigError("dqn: normalizer width differs from network input");
}

Vec DqnAgent::explore(const Vec& state, const Vec& goal, Rng& rng) const {
    return Vec::Constant(1, epsilon_greedy(q_, input(state, goal), config_.epsilon, rng));
}

Vec DqnAgent::act(const Vec& state, const Vec& goal, bool use_target) const {
    const Mat out = predict(use_target ? q_target_ : q_, input(state, goal).transpose());
    return Vec::Constant(1, argmax_lowest(out.row(0)));
}

UpdateStats DqnAgent::update(const Batch& batch) {
    const Mat x = inputs(batch.states, batch.goals);
    const Mat xn = inputs(batch.next_states, batch.goals);
    const Vec y = dqn_targets(q_target_, xn, batch.rewards, config_.gamma, config_.clip);
    const LossGrad lg = dqn_loss_and_grad(q_, x, batch.actions.col(0), y);
    adam_step(q_, lg.grad, adam_);
    return stats_from(lg, y);
}

void DqnAgent::update_targets(double decay) { polyak_update(q_target_, q_, decay); }

DdpgAgent::DdpgAgent(const Environment& env, AgentConfig config, std::uint64_t seed)
    : Agent(std::move(config), RunningNormalizer(env.state_dim() + env.goal_dim())), space_(env.action_space()) {
    if (space_.discrete()) throw ConfigError("ddpg needs a continuous action space; " + env.name() + " is discrete");
    if (space_.low != -space_.high || (space_.high.array() <= 0.0).any())
        throw ConfigError("ddpg needs a symmetric action box");
    normalizer_ = RunningNormalizer(env.state_dim() + env.goal_dim(), config_.norm_clip, config_.variance_floor);
    const auto hidden = hidden_or(config_.hidden, {64, 64, 64});
    const int in = env.state_dim() + env.goal_dim();
    const int adim = int(space_.high.size());
    actor_ = mlp_init(make_layers(in, hidden, adim, Activation::relu, Activation::tanh), mix_seed(seed, 0),
                      space_.high);
    critic_ = mlp_init(make_layers(in + adim, hidden, 1, Activation::relu, Activation::identity), mix_seed(seed, 1));
    actor_target_ = actor_;
    critic_target_ = critic_;
    actor_adam_ = AdamState::zeros(actor_.param_count(), config_.learning_rate);
    critic_adam_ = AdamState::zeros(critic_.param_count(), config_.learning_rate);
}

DdpgAgent::DdpgAgent(AgentConfig config, RunningNormalizer normalizer, ActionSpace space, Network actor,
                     Network critic, Network actor_target, Network critic_target, AdamState actor_adam,
                     AdamState critic_adam)
    : Agent(std::move(config), std::move(normalizer)),
      space_(std::move(space)),
      actor_(std::move(actor)),
      critic_(std::move(critic)),
      actor_target_(std::move(actor_target)),
      critic_target_(std::move(critic_target)),
      actor_adam_(std::move(actor_adam)),
      critic_adam_(std::move(critic_adam)) {
    if (!actor_.same_architecture(actor_target_) || !critic_.same_architecture(critic_target_))
        throw ConfigError("ddpg: target networks differ from main networks");
    if (!actor_.output_scale() || *actor_.output_scale() != space_.high)
        throw ConfigError("ddpg: actor output scale does not match the action box");
    if (actor_.input_width() != normalizer_.dim() ||
        critic_.input_width() != normalizer_.dim() + actor_.output_width())
        throw ConfigError("ddpg: network input widths do not match the normalizer");
}

Vec DdpgAgent::explore(const Vec& state, const Vec& goal, Rng& rng) const {
    return behavioral_action(actor_, input(state, goal), space_, config_.noise_std_fraction,
                             config_.random_action_prob, rng);
}

Vec DdpgAgent::act(const Vec& state, const Vec& goal, bool use_target) const {
    return predict(use_target ? actor_target_ : actor_, input(state, goal).transpose()).row(0).transpose();
}

UpdateStats DdpgAgent::update(const Batch& batch) {
    const Mat x = inputs(batch.states, batch.goals);
    const Mat xn = inputs(batch.next_states, batch.goals);
    const Vec& scale = action_scale();
    const Vec y = ddpg_critic_targets(actor_target_, critic_target_, xn, batch.rewards, config_.gamma, config_.clip,
                                      scale);
    const LossGrad critic_lg = critic_loss_and_grad(critic_, critic_inputs(x, batch.actions, scale), y);
    // Both gradients use the critic as it was before this step.
    const LossGrad actor_lg = actor_loss_and_grad(actor_, critic_, x, scale, config_.penalty);
    adam_step(critic_, critic_lg.grad, critic_adam_);
    adam_step(actor_, actor_lg.grad, actor_adam_);
    return stats_from(critic_lg, y);
}

void DdpgAgent::update_targets(double decay) {
    polyak_update(actor_target_, actor_, decay);
    polyak_update(critic_target_, critic_, decay);
}

std::unique_ptr<Agent> make_agent(AgentKind kind, const Environment& env, const AgentConfig& config,
                                  std::uint64_t seed) {
    if (kind == AgentKind::dqn) return std::make_unique<DqnAgent>(env, config, seed);
    return std::make_unique<DdpgAgent>(env, config, seed);
}

}  // namespace her
