#include "noisycon/dynamics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "noisycon/errors.hpp"
#include "noisycon/io.hpp"

namespace noisycon {

SpinState::SpinState(std::span<const int> values) {
  std::vector<std::string> problems;
  values_.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] != 1 && values[i] != -1) {
      problems.push_back("entry " + std::to_string(i) + " is " + std::to_string(values[i]));
    }
    values_.push_back(static_cast<std::int8_t>(values[i]));
  }
  if (!problems.empty()) throw ValidationError("spin values must be +1 or -1", std::move(problems));
}

SpinState SpinState::alternating(int n) {
  SpinState s(n, 1);
  for (int i = 1; i < n; i += 2) s.values_[i] = -1;
  return s;
}

SpinState SpinState::random(int n, RngStream& rng) {
  SpinState s(n, 1);
  for (int i = 0; i < n; ++i)
    if (rng.uniform01() >= 0.5) s.values_[i] = -1;
  return s;
}

SpinState SpinState::parse(const std::string& text) {
  std::vector<int> values;
  std::vector<std::string> problems;
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char c = text[k];
    if (c == '+') {
      values.push_back(1);
    } else if (c == '-') {
      values.push_back(-1);
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      problems.push_back("unexpected character '" + std::string(1, c) + "' at offset " + std::to_string(k));
    }
  }
  if (!problems.empty()) throw ValidationError("spin string must contain only '+' and '-'", std::move(problems));
  return SpinState(values);
}

SpinState SpinState::negated() const {
  SpinState out = *this;
  for (auto& v : out.values_) v = static_cast<std::int8_t>(-v);
  return out;
}

std::string SpinState::to_string() const {
  std::string out;
  out.reserve(values_.size());
  for (auto v : values_) out.push_back(v > 0 ? '+' : '-');
  return out;
}

int state_sum(const SpinState& state) {
  int s = 0;
  for (auto v : state.values()) s += v;
  return s;
}

NoiseSpec::NoiseSpec(double eta) : eta_(eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidParameter("eta must be > 0");
}

double node_average(const SpinState& state, const Graph& g, int node) {
  int sum = state[node];
  for (int j : g.neighbors(node)) sum += state[j];
  return static_cast<double>(sum) / static_cast<double>(g.degree(node) + 1);
}

double flip_probability_up(double v, double eta) {
  if (!(eta > 0.0)) throw InvalidParameter("eta must be > 0");
  auto upper_half = [eta](double w) { return std::min(1.0, 0.5 + w / (2.0 * eta)); };
  return v >= 0.0 ? upper_half(v) : 1.0 - upper_half(-v);
}

void apply_update(const SpinState& state, const Graph& g, std::span<const double> noise, SpinState& next) {
  const int n = state.size();
  if (next.size() != n) next = state;
  for (int i = 0; i < n; ++i) {
    const double drive = node_average(state, g, i) + noise[i];
    if (drive > 0.0) {
      next.set(i, 1);
    } else if (drive < 0.0) {
      next.set(i, -1);
    } else {
      next.set(i, state[i]);
    }
  }
}

SpinState step(const SpinState& state, const Graph& g, const NoiseSpec& noise, RngStream& rng) {
  if (state.size() != g.n_nodes()) throw InvalidParameter("state and graph sizes differ");
  std::vector<double> draws(static_cast<std::size_t>(state.size()));
  for (double& d : draws) d = rng.symmetric(noise.eta());
  SpinState next = state;
  apply_update(state, g, draws, next);
  return next;
}

ProcessStepper::ProcessStepper(const GraphProcessSpec& spec, NoiseSpec noise)
    : noise_(noise), n_nodes_(spec.n_nodes()), draws_(static_cast<std::size_t>(spec.n_nodes())) {
  if (auto f = spec.as_fixed()) {
    fixed_ = &f->graph;
  } else {
    const auto* b = spec.as_binomial();
    sampler_.emplace(b->n_nodes, b->edge_prob);
  }
}

const Graph& ProcessStepper::advance(const SpinState& state, SpinState& next, RngStream& rng, bool mirror_noise) {
  const Graph& g = fixed_ ? *fixed_ : sampler_->sample(rng);
  const double sign = mirror_noise ? -1.0 : 1.0;
  for (double& d : draws_) d = sign * rng.symmetric(noise_.eta());
  apply_update(state, g, draws_, next);
  return g;
}

ProcessStep step_process(const SpinState& state, const GraphProcessSpec& spec, const NoiseSpec& noise,
                         RngStream& rng) {
  if (state.size() != spec.n_nodes()) throw InvalidParameter("state and process sizes differ");
  ProcessStepper stepper(spec, noise);
  SpinState next = state;
  const Graph& g = stepper.advance(state, next, rng);
  return {std::move(next), g};
}

std::string describe(const InitPolicy& init) {
  struct Visitor {
    std::string operator()(const InitAllPlus&) const { return "all-plus"; }
    std::string operator()(const InitAllMinus&) const { return "all-minus"; }
    std::string operator()(const InitRandom&) const { return "random"; }
    std::string operator()(const InitExplicit& e) const { return "explicit:" + e.state.to_string(); }
  };
  return std::visit(Visitor{}, init);
}

SpinState initial_state(const InitPolicy& init, int n_nodes, RngStream& rng) {
  if (std::holds_alternative<InitAllPlus>(init)) return SpinState::all_plus(n_nodes);
  if (std::holds_alternative<InitAllMinus>(init)) return SpinState::all_minus(n_nodes);
  if (std::holds_alternative<InitRandom>(init)) return SpinState::random(n_nodes, rng);
  const auto& state = std::get<InitExplicit>(init).state;
  if (state.size() != n_nodes) {
    throw InvalidParameter("initial state has " + std::to_string(state.size()) + " nodes, process has " +
                           std::to_string(n_nodes));
  }
  return state;
}

int Trajectory::sum_at(std::int64_t k) const {
  if (k >= 0 && k < static_cast<std::int64_t>(sums.size())) return sums[static_cast<std::size_t>(k)];
  if (absorption && k >= 0 && k <= max_steps) return sums.back();
  throw std::out_of_range("step " + std::to_string(k) + " outside trajectory");
}

Trajectory run_trajectory(const GraphProcessSpec& spec, const NoiseSpec& noise, const InitPolicy& init,
                          const TrajectoryOptions& options, std::uint64_t seed) {
  if (options.max_steps < 1) throw InvalidParameter("max_steps must be >= 1");
  const int n = spec.n_nodes();

  Trajectory traj;
  traj.process = spec.describe();
  traj.eta = noise.eta();
  traj.seed = seed;
  traj.max_steps = options.max_steps;
  traj.init = describe(init);
  traj.n_nodes = n;

  RngStream rng(seed);
  ProcessStepper stepper(spec, noise);
  SpinState current = initial_state(init, n, rng);
  SpinState next = current;
  const bool absorbing_regime = noise.eta() <= 1.0;

  auto record = [&](std::int64_t k, const SpinState& s) {
    const int sum = state_sum(s);
    traj.sums.push_back(sum);
    if (options.record_states) traj.states.push_back(s);
    if (absorbing_regime && !traj.absorption && (sum == n || sum == -n)) {
      traj.absorption = Absorption{k, sum > 0 ? 1 : -1};
    }
  };

  traj.sums.reserve(static_cast<std::size_t>(std::min<std::int64_t>(options.max_steps + 1, 1 << 20)));
  record(0, current);
  for (std::int64_t k = 1; k <= options.max_steps; ++k) {
    if (traj.absorption && options.stop_at_absorption) break;
    stepper.advance(current, next, rng, options.mirror_noise);
    std::swap(current, next);
    record(k, current);
  }
  return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, bool full_state,
                          const std::vector<std::string>& extra_header) {
  out << "# process=" << traj.process << '\n'
      << "# n_nodes=" << traj.n_nodes << '\n'
      << "# eta=" << format_real(traj.eta) << '\n'
      << "# seed=" << traj.seed << '\n'
      << "# max_steps=" << traj.max_steps << '\n'
      << "# init=" << traj.init << '\n';
  if (traj.absorption) {
    out << "# absorbed_at_step=" << traj.absorption->step << '\n'
        << "# absorbed_sign=" << (traj.absorption->sign > 0 ? "+1" : "-1") << '\n';
  }
  for (const auto& line : extra_header) out << "# " << line << '\n';

  const bool with_states = full_state && traj.states.size() == traj.sums.size();
  out << (with_states ? "step,state_sum,state\n" : "step,state_sum\n");
  for (std::size_t k = 0; k < traj.sums.size(); ++k) {
    out << k << ',' << traj.sums[k];
    if (with_states) out << ',' << traj.states[k].to_string();
    out << '\n';
  }
}

}  // namespace noisycon
