#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "noisycon/dynamics.hpp"
#include "noisycon/graph.hpp"

namespace noisycon {

/// Spin configurations of N nodes are indexed by bit mask: bit i set means
/// node i holds +1. Global negation is the bitwise complement.
using StateIndex = std::uint32_t;

constexpr StateIndex negate_state(StateIndex s, int n_nodes) noexcept {
  return ((StateIndex{1} << n_nodes) - 1) ^ s;
}
int state_sum_of(StateIndex s, int n_nodes) noexcept;
SpinState spin_state_of(StateIndex s, int n_nodes);
StateIndex index_of(const SpinState& state);

/// Enumeration caps. Dense matrices grow as 4^N, marginalized ones also
/// enumerate 2^(N(N-1)/2) graphs.
inline constexpr int kDefaultFixedNodeCap = 12;
inline constexpr int kBinomialNodeCap = 5;

/// Dense row-stochastic matrix, entry (s, t) = Pr[x(k+1) = t | x(k) = s].
class TransitionMatrix {
 public:
  explicit TransitionMatrix(int n_nodes);

  int n_nodes() const noexcept { return n_nodes_; }
  std::size_t n_states() const noexcept { return n_states_; }

  double operator()(StateIndex s, StateIndex t) const { return data_[s * n_states_ + t]; }
  double& operator()(StateIndex s, StateIndex t) { return data_[s * n_states_ + t]; }
  std::span<const double> row(StateIndex s) const { return {data_.data() + s * n_states_, n_states_}; }
  std::span<double> row(StateIndex s) { return {data_.data() + s * n_states_, n_states_}; }

 private:
  int n_nodes_;
  std::size_t n_states_;
  std::vector<double> data_;
};

/// Per-node probabilities of ending at +1 from state `s`.
std::vector<double> up_probabilities(const Graph& g, double eta, StateIndex s);

/// Fills `out` (length 2^N) with the product distribution given the per-node
/// +1 probabilities; factors are multiplied in node order.
void product_row(std::span<const double> up, std::span<double> out);

/// Transition matrix of a fixed graph. Rows are built in parallel.
TransitionMatrix transition_matrix_fixed(const Graph& g, double eta, int node_cap = kDefaultFixedNodeCap);
/// Single-threaded reference build, kept for cross-checking the parallel one.
TransitionMatrix transition_matrix_fixed_serial(const Graph& g, double eta, int node_cap = kDefaultFixedNodeCap);

/// Transition matrix of the binomial random-graph process, marginalized over
/// every edge configuration. Rows are built in parallel.
TransitionMatrix transition_matrix_binomial(int n, double p, double eta);
TransitionMatrix transition_matrix_binomial_serial(int n, double p, double eta);

struct StationaryDistribution {
  std::vector<double> probs;
  double residual = 0.0;        ///< ||pi P - pi||_inf at exit
  std::int64_t iterations = 0;  ///< power-iteration sweeps (0 if solved directly)
  std::string method;           ///< "power-iteration", "linear-solve" or "closed-form"
};

struct TwoNodeClosedForm {
  TransitionMatrix matrix;  ///< row convention, bit-mask indexing
  StationaryDistribution stationary;
  double a, b, c;
};

/// The two-node binomial chain in closed form. The source formulas are written
/// column-stochastic in the order (+,+),(+,-),(-,-),(-,+); this converts to
/// rows and bit-mask indexing. Throws DomainError unless eta > 1.
TwoNodeClosedForm two_node_closed_form(double p, double eta);

/// The closed form in its original column-stochastic layout, order (+,+),(+,-),(-,-),(-,+).
std::vector<std::vector<double>> two_node_column_matrix(double p, double eta);

struct ChainClassification {
  std::vector<StateIndex> absorbing;
  std::vector<StateIndex> transient;
  std::vector<StateIndex> recurrent_nonabsorbing;
  /// Closed communicating classes, each sorted; absorbing states are singleton classes.
  std::vector<std::vector<StateIndex>> closed_classes;
};

inline constexpr double kAbsorbingTolerance = 1e-12;
inline constexpr double kReachabilityThreshold = 1e-15;

ChainClassification classify_states(const TransitionMatrix& P);

struct StationaryOptions {
  double tolerance = 1e-12;
  std::int64_t max_iterations = 10'000'000;
};

/// Unique stationary distribution by power iteration from the uniform vector,
/// falling back to a dense linear solve. Throws NotErgodic when the chain has
/// more than one closed class.
StationaryDistribution stationary_distribution(const TransitionMatrix& P, const StationaryOptions& options = {});
StationaryDistribution stationary_by_linear_solve(const TransitionMatrix& P);

/// Component s is E[S(k+1) | x(k) = s].
std::vector<double> expected_sum_step(const TransitionMatrix& P);

struct CCoefficients {
  double c1;
  double c2;
};
/// Weights of E[v_i | x] = c1 x_i + c2 sum_{j != i} x_j under the fair-coin random graph.
CCoefficients c_coefficients(int n);

struct AgreementInterval {
  double lower;  ///< exclusive
  double upper;  ///< inclusive
  bool contains(double eta) const noexcept { return eta > lower && eta <= upper; }
};
/// (1 - 2/D, 1] for a connected graph; throws InvalidParameter otherwise.
AgreementInterval agreement_threshold(const Graph& g);

struct OscillationReport {
  int n_nodes;
  double eta;
  StateIndex start;
  StateIndex shifted;               ///< left cyclic shift of start
  std::vector<StateIndex> reachable;  ///< closure of start under nonzero transitions
  bool closed_two_cycle;            ///< reachable == {start, shifted} with deterministic swaps
  bool consensus_reachable;
};

/// Alternating state on an even ring: explores the states reachable from it.
/// Below eta = 1/3 the update is a majority vote and the orbit is a 2-cycle.
OscillationReport remark1_counterexample(int n, double eta);

struct CheckResult {
  std::string name;
  bool passed;
  std::string detail;
};

struct ChainContext {
  double eta;
  std::optional<double> edge_prob;  ///< set for marginalized binomial chains
  std::optional<Graph> graph;       ///< set for fixed chains
};

/// Structural invariants: row sums, entry range, negation symmetry, and where
/// applicable stationary symmetry, the 1/eta contraction of E[S], the
/// two-node closed form and the agreement-threshold classification.
std::vector<CheckResult> verify_chain(const TransitionMatrix& P, const ChainContext& context);

double max_negation_asymmetry(const TransitionMatrix& P);
double max_row_sum_error(const TransitionMatrix& P);

void write_matrix_csv(std::ostream& out, const TransitionMatrix& P);

}  // namespace noisycon
