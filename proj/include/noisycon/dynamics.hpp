#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "noisycon/graph.hpp"
#include "noisycon/rng.hpp"

namespace noisycon {

/// Vector of bipolar node values, each exactly +1 or -1.
class SpinState {
 public:
  SpinState() = default;
  /// Throws ValidationError if any entry is not +1 or -1.
  explicit SpinState(std::span<const int> values);

  static SpinState all_plus(int n) { return SpinState(n, 1); }
  static SpinState all_minus(int n) { return SpinState(n, -1); }
  static SpinState alternating(int n);
  /// Each node +1 with probability 1/2, one draw per node in index order.
  static SpinState random(int n, RngStream& rng);
  /// Parse '+'/'-' characters (whitespace ignored).
  static SpinState parse(const std::string& text);

  int size() const noexcept { return static_cast<int>(values_.size()); }
  int operator[](int i) const { return values_[i]; }
  void set(int i, int value) { values_[i] = static_cast<std::int8_t>(value > 0 ? 1 : -1); }
  std::span<const std::int8_t> values() const noexcept { return values_; }

  SpinState negated() const;
  std::string to_string() const;

  friend bool operator==(const SpinState&, const SpinState&) = default;

 private:
  SpinState(int n, int value) : values_(static_cast<std::size_t>(n), static_cast<std::int8_t>(value)) {}
  std::vector<std::int8_t> values_;
};

int state_sum(const SpinState& state);

/// Half-width eta of the uniform noise interval [-eta, eta].
class NoiseSpec {
 public:
  /// Throws InvalidParameter unless eta > 0 and finite.
  explicit NoiseSpec(double eta);
  double eta() const noexcept { return eta_; }

 private:
  double eta_;
};

/// Average of the values in node i's closed neighborhood.
double node_average(const SpinState& state, const Graph& g, int node);

/// Pr[next value = +1 | neighborhood average v] = clamp((eta + v) / (2 eta), 0, 1).
///
/// Evaluated so that flip_probability_up(-v) == 1 - flip_probability_up(v)
/// holds exactly in floating point, which keeps exact transition matrices
/// bit-symmetric under global negation.
double flip_probability_up(double v, double eta);

/// Deterministic core of one synchronous update with pre-drawn noise:
/// next[i] = sign(v_i + noise[i]), keeping state[i] when the sum is exactly 0.
void apply_update(const SpinState& state, const Graph& g, std::span<const double> noise, SpinState& next);

/// One synchronous update; draws one noise value per node in index order.
SpinState step(const SpinState& state, const Graph& g, const NoiseSpec& noise, RngStream& rng);

/// Advances a state under a graph process, reusing sampling buffers.
/// On a binomial process every call samples a fresh graph (edge draws first,
/// then the node noise draws).
class ProcessStepper {
 public:
  ProcessStepper(const GraphProcessSpec& spec, NoiseSpec noise);

  /// Writes the successor into `next` and returns the graph used, valid until the next call.
  /// With `mirror_noise` every noise value is negated (used only to check the
  /// negation symmetry of the dynamics).
  const Graph& advance(const SpinState& state, SpinState& next, RngStream& rng, bool mirror_noise = false);

  int n_nodes() const noexcept { return n_nodes_; }

 private:
  const Graph* fixed_ = nullptr;
  std::optional<BinomialGraphSampler> sampler_;
  NoiseSpec noise_;
  int n_nodes_;
  std::vector<double> draws_;
};

struct ProcessStep {
  SpinState state;
  Graph graph;
};

ProcessStep step_process(const SpinState& state, const GraphProcessSpec& spec, const NoiseSpec& noise,
                         RngStream& rng);

struct InitAllPlus {};
struct InitAllMinus {};
struct InitRandom {};
struct InitExplicit {
  SpinState state;
};
using InitPolicy = std::variant<InitAllPlus, InitAllMinus, InitRandom, InitExplicit>;

std::string describe(const InitPolicy& init);
/// Random init consumes n draws from `rng` before any dynamics.
SpinState initial_state(const InitPolicy& init, int n_nodes, RngStream& rng);

struct Absorption {
  std::int64_t step;
  int sign;
};

struct TrajectoryOptions {
  std::int64_t max_steps = 1000;
  bool record_states = false;
  bool mirror_noise = false;
  /// Stop once |S| = N. Only honoured when eta <= 1, where consensus is absorbing.
  bool stop_at_absorption = true;
};

struct Trajectory {
  std::string process;
  double eta = 0.0;
  std::uint64_t seed = 0;
  std::int64_t max_steps = 0;
  std::string init;
  int n_nodes = 0;

  std::vector<int> sums;           ///< S(0), S(1), ...
  std::vector<SpinState> states;   ///< filled only with record_states
  std::optional<Absorption> absorption;

  /// S(k) for any k <= max_steps; past an early stop the absorbed value persists.
  int sum_at(std::int64_t k) const;
};

Trajectory run_trajectory(const GraphProcessSpec& spec, const NoiseSpec& noise, const InitPolicy& init,
                          const TrajectoryOptions& options, std::uint64_t seed);

/// CSV: '#' provenance lines, then "step,state_sum" (plus ",state" when
/// `full_state` and states were recorded).
void write_trajectory_csv(std::ostream& out, const Trajectory& traj, bool full_state,
                          const std::vector<std::string>& extra_header = {});

}  // namespace noisycon
