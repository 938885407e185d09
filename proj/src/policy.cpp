// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#include "fluidmarl/policy.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace fluidmarl {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * kPi);

std::vector<int> layer_sizes(int input, int output, NetworkShape shape) {
  if (shape.hidden_width < 1 || shape.hidden_layers < 1)
    throw InvalidConfig("network shape needs at least one hidden layer of positive width");
  std::vector<int> sizes{input};
  for (int l = 0; l < shape.hidden_layers; ++l) sizes.push_back(shape.hidden_width);
  sizes.push_back(output);
  return sizes;
}

std::atomic<std::uint64_t> g_critic_calls{0};

}  // namespace

GaussianPolicy::GaussianPolicy(int observation_size, int num_agents, int action_size, NetworkShape shape)
    : observation_size_(observation_size),
      num_agents_(num_agents),
      action_size_(action_size),
      trunk_(layer_sizes(observation_size + num_agents, action_size, shape)),
      log_std_(Eigen::VectorXd::Zero(action_size)) {}

Eigen::MatrixXd GaussianPolicy::make_input(const Eigen::MatrixXd& obs, const std::vector<int>& agents) const {
  if (obs.rows() != observation_size_ || static_cast<std::size_t>(obs.cols()) != agents.size())
    throw ShapeMismatch("policy input: expected " + std::to_string(observation_size_) +
                        "-row observations, one per agent index");
  Eigen::MatrixXd in = Eigen::MatrixXd::Zero(observation_size_ + num_agents_, obs.cols());
  in.topRows(observation_size_) = obs;
  for (Eigen::Index c = 0; c < obs.cols(); ++c) {
    const int a = agents[static_cast<std::size_t>(c)];
    if (a < 0 || a >= num_agents_) throw ShapeMismatch("policy input: agent index out of range");
    in(observation_size_ + a, c) = 1.0;
  }
  return in;
}

Eigen::MatrixXd GaussianPolicy::make_input(const Eigen::MatrixXd& obs) const {
  std::vector<int> agents(static_cast<std::size_t>(obs.cols()));
  for (std::size_t i = 0; i < agents.size(); ++i) agents[i] = static_cast<int>(i);
  return make_input(obs, agents);
}

Eigen::VectorXd GaussianPolicy::log_std() const { return log_std_.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax); }

ActorOutput actor_forward(const GaussianPolicy& policy, const Eigen::VectorXd& obs, int agent) {
  const Eigen::MatrixXd in = policy.make_input(obs, {agent});
  return {policy.mean(in).col(0), policy.log_std()};
}

Eigen::VectorXd gaussian_log_prob(const Eigen::MatrixXd& actions, const Eigen::MatrixXd& mean,
                                  const Eigen::VectorXd& log_std) {
  if (actions.rows() != mean.rows() || actions.cols() != mean.cols() || log_std.size() != mean.rows())
    throw ShapeMismatch("gaussian_log_prob: shapes differ");
  const Eigen::ArrayXd inv_std = (-log_std.array()).exp();
  const double constant = -log_std.sum() - static_cast<double>(log_std.size()) * kHalfLog2Pi;
  Eigen::VectorXd out(actions.cols());
  for (Eigen::Index c = 0; c < actions.cols(); ++c) {
    const Eigen::ArrayXd z = (actions.col(c) - mean.col(c)).array() * inv_std;
    out(c) = constant - 0.5 * z.square().sum();
  }
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> sample_actions(Rng& rng, const Eigen::MatrixXd& mean,
                                                           const Eigen::VectorXd& log_std) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::ArrayXd std_dev = log_std.array().exp();
  Eigen::MatrixXd actions(mean.rows(), mean.cols());
  Eigen::VectorXd log_probs(mean.cols());
  const double constant = -log_std.sum() - static_cast<double>(log_std.size()) * kHalfLog2Pi;
  for (Eigen::Index c = 0; c < mean.cols(); ++c) {
    double sq = 0;
    for (Eigen::Index d = 0; d < mean.rows(); ++d) {
      const double z = normal(rng);
      sq += z * z;
      actions(d, c) = mean(d, c) + std_dev(d) * z;
    }
    log_probs(c) = constant - 0.5 * sq;
  }
  return {std::move(actions), std::move(log_probs)};
}

SampledAction sample_action(Rng& rng, const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std) {
  auto [a, lp] = sample_actions(rng, mean, log_std);
  return {a.col(0), lp(0)};
}

double policy_entropy(const Eigen::VectorXd& log_std) {
  return log_std.sum() + static_cast<double>(log_std.size()) * (kHalfLog2Pi + 0.5);
}

// ---------------------------------------------------------------------------

Critic::Critic(int state_size, NetworkShape shape) : net_(layer_sizes(state_size, 1, shape)) {}

Eigen::VectorXd Critic::forward(const Eigen::MatrixXd& states) const {
  g_critic_calls.fetch_add(1, std::memory_order_relaxed);
  return net_.forward(states).row(0).transpose();
}

Eigen::VectorXd Critic::forward(const Eigen::MatrixXd& states, Mlp<double>::Tape& tape) const {
  g_critic_calls.fetch_add(1, std::memory_order_relaxed);
  return net_.forward(states, tape).row(0).transpose();
}

double critic_forward(const Critic& critic, const Eigen::VectorXd& state) {
  return critic.forward(state)(0);
}

std::uint64_t critic_forward_calls() { return g_critic_calls.load(std::memory_order_relaxed); }

double critic_mse_gradient(const Critic& critic, const Eigen::MatrixXd& states, const Eigen::VectorXd& targets,
                           Eigen::VectorXd& grad) {
  if (states.cols() != targets.size()) throw ShapeMismatch("critic_mse_gradient: one target per state");
  Mlp<double>::Tape tape;
  const Eigen::VectorXd v = critic.forward(states, tape);
  const Eigen::VectorXd err = v - targets;
  const double n = static_cast<double>(targets.size());
  grad = Eigen::VectorXd::Zero(critic.net().num_parameters());
  const Eigen::MatrixXd dout = (2.0 / n) * err.transpose();
  critic.net().backward(tape, dout, grad);
  return err.squaredNorm() / n;
}

// ---------------------------------------------------------------------------

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_approx(double logp_ref, double logp_cur) {
  const double d = logp_ref - logp_cur;
  return std::exp(d) - d - 1.0;
}

SurrogateResult surrogate_gradient(const GaussianPolicy& policy, const PolicySamples& s,
                                   const SurrogateOptions& options) {
  const Eigen::Index n = s.actions.cols();
  if (s.inputs.cols() != n || s.old_log_probs.size() != n || s.advantages.size() != n || s.weights.size() != n)
    throw ShapeMismatch("surrogate_gradient: sample arrays must have equal length");
  const bool with_kl = s.ref_log_probs.has_value() && options.kl_coef != 0.0;
  if (s.ref_log_probs && s.ref_log_probs->size() != n)
    throw ShapeMismatch("surrogate_gradient: reference log-probs length");

  Mlp<double>::Tape tape;
  const Eigen::MatrixXd mean = policy.trunk().forward(s.inputs, tape);
  const Eigen::VectorXd log_std = policy.log_std();
  const Eigen::ArrayXd inv_var = (-2.0 * log_std.array()).exp();
  const Eigen::MatrixXd diff = s.actions - mean;
  const Eigen::VectorXd logp = gaussian_log_prob(s.actions, mean, log_std);

  SurrogateResult r;
  r.ratios.resize(n);
  Eigen::VectorXd dlogp(n);  // d objective / d logp per sample
  double clipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ratio = std::exp(logp(i) - s.old_log_probs(i));
    r.ratios(i) = ratio;
    const double a = s.advantages(i);
    const double unclipped = ratio * a;
    const double bounded = std::clamp(ratio, 1.0 - options.clip, 1.0 + options.clip) * a;
    double g = 0;
    if (unclipped <= bounded) {
      r.surrogate += s.weights(i) * unclipped;
      g = unclipped;
    } else {
      r.surrogate += s.weights(i) * bounded;
    }
    if (ratio < 1.0 - options.clip || ratio > 1.0 + options.clip) clipped += 1;
    if (with_kl) {
      const double k = kl_approx((*s.ref_log_probs)(i), logp(i));
      r.kl += s.weights(i) * k;
      g -= options.kl_coef * (1.0 - std::exp((*s.ref_log_probs)(i) - logp(i)));
    }
    dlogp(i) = s.weights(i) * g;
  }
  r.entropy = policy_entropy(log_std);
  r.objective = r.surrogate - (with_kl ? options.kl_coef * r.kl : 0.0) + options.entropy_weight * r.entropy;
  r.mean_ratio = n > 0 ? r.ratios.mean() : 1.0;
  r.clip_fraction = n > 0 ? clipped / static_cast<double>(n) : 0.0;
  if (with_kl) {
    const double wsum = s.weights.sum();
    if (wsum > 0) r.kl /= wsum;
  }

  // d logp / d mean = (a - mu) / sigma^2 ; d logp / d log_std = (a - mu)^2 / sigma^2 - 1
  const Eigen::MatrixXd scaled = diff.array().colwise() * inv_var;
  const Eigen::MatrixXd dmean = -(scaled.array().rowwise() * dlogp.transpose().array()).matrix();
  r.trunk_grad = Eigen::VectorXd::Zero(policy.trunk().num_parameters());
  policy.trunk().backward(tape, dmean, r.trunk_grad);

  Eigen::VectorXd dls = Eigen::VectorXd::Zero(log_std.size());
  for (Eigen::Index i = 0; i < n; ++i)
    dls += dlogp(i) * ((diff.col(i).array().square() * inv_var).matrix() - Eigen::VectorXd::Ones(log_std.size()));
  dls.array() += options.entropy_weight;
  r.log_std_grad = -dls;
  const Eigen::VectorXd& raw = policy.raw_log_std();
  for (Eigen::Index d = 0; d < raw.size(); ++d)
    if (raw(d) < kLogStdMin || raw(d) > kLogStdMax) r.log_std_grad(d) = 0;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'M', 'A', 'R', 'L', 'C', 'K', 'P'};

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw Error("checkpoint truncated while reading " + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void write_string(std::ostream& out, const std::string& s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto len = read_le<std::uint32_t>(in, "string length");
  if (len > (1u << 20)) throw Error("checkpoint string too long");
  std::string s(len, '\0');
  if (!in.read(s.data(), len)) throw Error("checkpoint truncated while reading string");
  return s;
}

}  // namespace

const ParameterBlock& Checkpoint::block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw ShapeMismatch("checkpoint has no block '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  return std::any_of(blocks.begin(), blocks.end(), [&](const ParameterBlock& b) { return b.name == name; });
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_string(out, ck.phase);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.blocks.size()));
  for (const auto& b : ck.blocks) {
    write_string(out, b.name);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(b.shape.size()));
    for (int d : b.shape) write_le<std::int32_t>(out, d);
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(b.values.size()));
    for (Eigen::Index i = 0; i < b.values.size(); ++i) write_le<double>(out, b.values(i));
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + sizeof(kMagic), kMagic))
    throw Error(path.string() + " is not a fluidmarl checkpoint");
  const auto version = read_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.phase = read_string(in);
  const auto count = read_le<std::uint32_t>(in, "block count");
  for (std::uint32_t b = 0; b < count; ++b) {
    ParameterBlock block;
    block.name = read_string(in);
    const auto rank = read_le<std::uint32_t>(in, "rank");
    for (std::uint32_t r = 0; r < rank; ++r) block.shape.push_back(read_le<std::int32_t>(in, "shape"));
    const auto n = read_le<std::uint64_t>(in, "parameter count");
    block.values.resize(static_cast<Eigen::Index>(n));
    for (std::uint64_t i = 0; i < n; ++i) block.values(static_cast<Eigen::Index>(i)) = read_le<double>(in, "values");
    ck.blocks.push_back(std::move(block));
  }
  return ck;
}

void store_policy(Checkpoint& ck, const GaussianPolicy& policy) {
  ck.blocks.push_back({"actor", policy.trunk().sizes(), policy.trunk().parameters()});
  ck.blocks.push_back({"actor_log_std", {policy.action_size()}, policy.raw_log_std()});
  ck.blocks.push_back({"actor_io", {policy.observation_size(), policy.num_agents(), policy.action_size()}, {}});
}

void store_critic(Checkpoint& ck, const Critic& critic) {
  ck.blocks.push_back({"critic", critic.net().sizes(), critic.net().parameters()});
}

void restore_policy(const Checkpoint& ck, GaussianPolicy& policy) {
  const auto& actor = ck.block("actor");
  if (actor.shape != policy.trunk().sizes())
    throw ShapeMismatch("checkpoint actor layer sizes do not match the configured network");
  const auto& ls = ck.block("actor_log_std");
  if (ls.values.size() != policy.action_size()) throw ShapeMismatch("checkpoint log-std size mismatch");
  policy.trunk().parameters() = actor.values;
  policy.raw_log_std() = ls.values;
}

void restore_critic(const Checkpoint& ck, Critic& critic) {
  const auto& b = ck.block("critic");
  if (b.shape != critic.net().sizes()) throw ShapeMismatch("checkpoint critic layer sizes do not match");
  critic.net().parameters() = b.values;
}

}  // namespace fluidmarl
