#include "noisycon/exact_chain.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>

#include "noisycon/errors.hpp"
#include "noisycon/io.hpp"

namespace noisycon {

int state_sum_of(StateIndex s, int n_nodes) noexcept { return 2 * std::popcount(s) - n_nodes; }

SpinState spin_state_of(StateIndex s, int n_nodes) {
  std::vector<int> values(static_cast<std::size_t>(n_nodes));
  for (int i = 0; i < n_nodes; ++i) values[i] = (s >> i) & 1U ? 1 : -1;
  return SpinState(values);
}

StateIndex index_of(const SpinState& state) {
  if (state.size() > 31) throw ResourceLimit("state index needs N <= 31");
  StateIndex s = 0;
  for (int i = 0; i < state.size(); ++i)
    if (state[i] > 0) s |= StateIndex{1} << i;
  return s;
}

TransitionMatrix::TransitionMatrix(int n_nodes)
    : n_nodes_(n_nodes), n_states_(std::size_t{1} << n_nodes), data_(n_states_ * n_states_, 0.0) {}

std::vector<double> up_probabilities(const Graph& g, double eta, StateIndex s) {
  const int n = g.n_nodes();
  std::vector<double> up(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int sum = (s >> i) & 1U ? 1 : -1;
    for (int j : g.neighbors(i)) sum += (s >> j) & 1U ? 1 : -1;
    up[i] = flip_probability_up(static_cast<double>(sum) / static_cast<double>(g.degree(i) + 1), eta);
  }
  return up;
}

void product_row(std::span<const double> up, std::span<double> out) {
  out[0] = 1.0;
  std::size_t len = 1;
  for (double f : up) {
    const double stay_down = 1.0 - f;
    for (std::size_t t = 0; t < len; ++t) {
      out[t + len] = out[t] * f;
      out[t] *= stay_down;
    }
    len *= 2;
  }
}

namespace {

void check_eta(double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidParameter("eta must be > 0");
}

void check_fixed_size(const Graph& g, int node_cap) {
  if (g.n_nodes() > node_cap) {
    throw ResourceLimit("exact fixed-graph chain supports N <= " + std::to_string(node_cap) + " (got N=" +
                        std::to_string(g.n_nodes()) + ")");
  }
  if (g.n_nodes() > 16) throw ResourceLimit("exact fixed-graph chain is hard-capped at N <= 16");
}

struct GraphEnsemble {
  std::vector<Graph> graphs;
  std::vector<double> weights;
};

// Every edge configuration on n nodes with its probability; bit k of the
// configuration mask selects the k-th pair in canonical order.
GraphEnsemble enumerate_graphs(int n, double p) {
  std::vector<Edge> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.push_back({i, j});
  const std::size_t n_configs = std::size_t{1} << pairs.size();

  GraphEnsemble out;
  out.graphs.reserve(n_configs);
  out.weights.reserve(n_configs);
  std::vector<Edge> edges;
  for (std::size_t mask = 0; mask < n_configs; ++mask) {
    edges.clear();
    double w = 1.0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if ((mask >> k) & 1U) {
        edges.push_back(pairs[k]);
        w *= p;
      } else {
        w *= 1.0 - p;
      }
    }
    out.graphs.emplace_back(n, edges, "binomial-config");
    out.weights.push_back(w);
  }
  return out;
}

void check_binomial_args(int n, double p, double eta) {
  if (n < 2) throw InvalidParameter("binomial chain needs n >= 2");
  if (n > kBinomialNodeCap) {
    throw ResourceLimit("exact binomial chain supports n <= " + std::to_string(kBinomialNodeCap) +
                        " (graph-enumeration cap 2^(n(n-1)/2) <= 1024, got n=" + std::to_string(n) + ")");
  }
  if (!(p > 0.0 && p < 1.0)) throw InvalidParameter("edge probability p must lie in (0, 1)");
  check_eta(eta);
}

void binomial_row(const GraphEnsemble& ensemble, double eta, StateIndex s, std::span<double> out,
                  std::vector<double>& scratch) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t g = 0; g < ensemble.graphs.size(); ++g) {
    const auto up = up_probabilities(ensemble.graphs[g], eta, s);
    product_row(up, scratch);
    const double w = ensemble.weights[g];
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += w * scratch[t];
  }
}

}  // namespace

TransitionMatrix transition_matrix_fixed(const Graph& g, double eta, int node_cap) {
  check_eta(eta);
  check_fixed_size(g, node_cap);
  TransitionMatrix P(g.n_nodes());
  const auto n_states = static_cast<std::int64_t>(P.n_states());
#pragma omp parallel for schedule(static)
  for (std::int64_t s = 0; s < n_states; ++s) {
    const auto state = static_cast<StateIndex>(s);
    product_row(up_probabilities(g, eta, state), P.row(state));
  }
  return P;
}

TransitionMatrix transition_matrix_fixed_serial(const Graph& g, double eta, int node_cap) {
  check_eta(eta);
  check_fixed_size(g, node_cap);
  TransitionMatrix P(g.n_nodes());
  for (StateIndex s = 0; s < P.n_states(); ++s) product_row(up_probabilities(g, eta, s), P.row(s));
  return P;
}

TransitionMatrix transition_matrix_binomial(int n, double p, double eta) {
  check_binomial_args(n, p, eta);
  const GraphEnsemble ensemble = enumerate_graphs(n, p);
  TransitionMatrix P(n);
  const auto n_states = static_cast<std::int64_t>(P.n_states());
#pragma omp parallel
  {
    std::vector<double> scratch(P.n_states());
#pragma omp for schedule(static)
    for (std::int64_t s = 0; s < n_states; ++s) {
      const auto state = static_cast<StateIndex>(s);
      binomial_row(ensemble, eta, state, P.row(state), scratch);
    }
  }
  return P;
}

TransitionMatrix transition_matrix_binomial_serial(int n, double p, double eta) {
  check_binomial_args(n, p, eta);
  const GraphEnsemble ensemble = enumerate_graphs(n, p);
  TransitionMatrix P(n);
  std::vector<double> scratch(P.n_states());
  for (StateIndex s = 0; s < P.n_states(); ++s) binomial_row(ensemble, eta, s, P.row(s), scratch);
  return P;
}

std::vector<std::vector<double>> two_node_column_matrix(double p, double eta) {
  const double q = 1.0 - p;
  const double a = (eta - 1.0) * (eta - 1.0) / (4.0 * eta * eta);
  const double b = (eta - 1.0) * (eta + 1.0) / (4.0 * eta * eta);
  const double c = (eta + 1.0) * (eta + 1.0) / (4.0 * eta * eta);
  const double e = p / 4.0;
  return {
      {c, e + q * b, a, e + q * b},
      {b, e + q * c, b, e + q * a},
      {a, e + q * b, c, e + q * b},
      {b, e + q * a, b, e + q * c},
  };
}

TwoNodeClosedForm two_node_closed_form(double p, double eta) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidParameter("edge probability p must lie in (0, 1)");
  if (!(eta > 1.0)) throw DomainError("two-node stationary closed form requires eta > 1 (ergodic regime)");

  const double q = 1.0 - p;
  const double a = (eta - 1.0) * (eta - 1.0) / (4.0 * eta * eta);
  const double b = (eta - 1.0) * (eta + 1.0) / (4.0 * eta * eta);
  const double c = (eta + 1.0) * (eta + 1.0) / (4.0 * eta * eta);

  // column order (+,+),(+,-),(-,-),(-,+) -> bit masks (node 0 is bit 0)
  constexpr StateIndex kOrder[4] = {0b11, 0b01, 0b00, 0b10};
  const auto columns = two_node_column_matrix(p, eta);
  TransitionMatrix P(2);
  for (int src = 0; src < 4; ++src)
    for (int dst = 0; dst < 4; ++dst) P(kOrder[src], kOrder[dst]) = columns[dst][src];

  const double denom = p + 4.0 * (1.0 + q) * b;
  const double agree = (p + 4.0 * q * b) / (2.0 * denom);
  const double split = 2.0 * b / denom;
  StationaryDistribution pi;
  pi.probs = {agree, split, split, agree};
  pi.method = "closed-form";
  return {std::move(P), std::move(pi), a, b, c};
}

ChainClassification classify_states(const TransitionMatrix& P) {
  const std::size_t n_states = P.n_states();
  constexpr std::size_t kUnvisited = static_cast<std::size_t>(-1);

  // Iterative Tarjan SCC over the support graph, scanning dense rows directly.
  std::vector<std::size_t> index(n_states, kUnvisited), low(n_states, 0), component(n_states, kUnvisited);
  std::vector<char> on_stack(n_states, 0);
  std::vector<std::size_t> scc_stack;
  std::vector<std::pair<std::size_t, std::size_t>> call_stack;  // (state, next column to scan)
  std::size_t counter = 0, n_components = 0;

  for (std::size_t root = 0; root < n_states; ++root) {
    if (index[root] != kUnvisited) continue;
    call_stack.push_back({root, 0});
    index[root] = low[root] = counter++;
    scc_stack.push_back(root);
    on_stack[root] = 1;
    while (!call_stack.empty()) {
      auto& [v, next] = call_stack.back();
      const auto row = P.row(static_cast<StateIndex>(v));
      bool descended = false;
      while (next < n_states) {
        const std::size_t w = next++;
        if (row[w] <= kReachabilityThreshold) continue;
        if (index[w] == kUnvisited) {
          index[w] = low[w] = counter++;
          scc_stack.push_back(w);
          on_stack[w] = 1;
          call_stack.push_back({w, 0});
          descended = true;
          break;
        }
        if (on_stack[w]) low[v] = std::min(low[v], index[w]);
      }
      if (descended) continue;
      const std::size_t finished = v;
      if (low[finished] == index[finished]) {
        std::size_t w;
        do {
          w = scc_stack.back();
          scc_stack.pop_back();
          on_stack[w] = 0;
          component[w] = n_components;
        } while (w != finished);
        ++n_components;
      }
      call_stack.pop_back();
      if (!call_stack.empty()) {
        const std::size_t parent = call_stack.back().first;
        low[parent] = std::min(low[parent], low[finished]);
      }
    }
  }

  std::vector<char> closed(n_components, 1);
  for (std::size_t s = 0; s < n_states; ++s) {
    const auto row = P.row(static_cast<StateIndex>(s));
    for (std::size_t t = 0; t < n_states; ++t) {
      if (row[t] > kReachabilityThreshold && component[t] != component[s]) {
        closed[component[s]] = 0;
        break;
      }
    }
  }

  ChainClassification out;
  std::vector<std::size_t> class_slot(n_components, kUnvisited);
  for (std::size_t s = 0; s < n_states; ++s) {
    const auto state = static_cast<StateIndex>(s);
    const std::size_t c = component[s];
    if (!closed[c]) {
      out.transient.push_back(state);
      continue;
    }
    if (class_slot[c] == kUnvisited) {
      class_slot[c] = out.closed_classes.size();
      out.closed_classes.emplace_back();
    }
    out.closed_classes[class_slot[c]].push_back(state);
    if (std::abs(P(state, state) - 1.0) <= kAbsorbingTolerance) {
      out.absorbing.push_back(state);
    } else {
      out.recurrent_nonabsorbing.push_back(state);
    }
  }
  return out;
}

namespace {

double stationary_residual(const TransitionMatrix& P, std::span<const double> pi, std::vector<double>& next) {
  const std::size_t n = P.n_states();
  std::fill(next.begin(), next.end(), 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const double w = pi[s];
    if (w == 0.0) continue;
    const auto row = P.row(static_cast<StateIndex>(s));
    for (std::size_t t = 0; t < n; ++t) next[t] += w * row[t];
  }
  double r = 0.0;
  for (std::size_t t = 0; t < n; ++t) r = std::max(r, std::abs(next[t] - pi[t]));
  return r;
}

}  // namespace

StationaryDistribution stationary_by_linear_solve(const TransitionMatrix& P) {
  const auto n = static_cast<Eigen::Index>(P.n_states());
  Eigen::MatrixXd A(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      A(i, j) = (i == j ? 1.0 : 0.0) - P(static_cast<StateIndex>(j), static_cast<StateIndex>(i));
  A.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  Eigen::VectorXd x = A.partialPivLu().solve(rhs);

  StationaryDistribution out;
  out.probs.resize(static_cast<std::size_t>(n));
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total += out.probs[i] = std::max(0.0, x(i));
  for (double& v : out.probs) v /= total;
  std::vector<double> scratch(out.probs.size());
  out.residual = stationary_residual(P, out.probs, scratch);
  out.method = "linear-solve";
  return out;
}

StationaryDistribution stationary_distribution(const TransitionMatrix& P, const StationaryOptions& options) {
  const auto classes = classify_states(P);
  if (classes.closed_classes.size() != 1) {
    std::string msg = "chain is not ergodic: " + std::to_string(classes.closed_classes.size()) + " closed classes";
    if (!classes.absorbing.empty()) {
      msg += "; absorbing states";
      for (StateIndex s : classes.absorbing) msg += " " + spin_state_of(s, P.n_nodes()).to_string();
    }
    throw NotErgodic(msg);
  }

  const std::size_t n = P.n_states();
  std::vector<double> pi(n, 1.0 / static_cast<double>(n)), next(n);
  StationaryDistribution out;
  for (std::int64_t it = 1; it <= options.max_iterations; ++it) {
    const double r = stationary_residual(P, pi, next);
    std::swap(pi, next);
    if (r <= options.tolerance) {
      out.probs = std::move(pi);
      out.iterations = it;
      out.residual = stationary_residual(P, out.probs, next);
      out.method = "power-iteration";
      return out;
    }
  }
  return stationary_by_linear_solve(P);
}

std::vector<double> expected_sum_step(const TransitionMatrix& P) {
  const std::size_t n = P.n_states();
  std::vector<double> out(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const auto row = P.row(static_cast<StateIndex>(s));
    double acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) acc += row[t] * state_sum_of(static_cast<StateIndex>(t), P.n_nodes());
    out[s] = acc;
  }
  return out;
}

namespace {
struct KahanSum {
  double sum = 0.0, carry = 0.0;
  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};
}  // namespace

CCoefficients c_coefficients(int n) {
  if (n < 2) throw InvalidParameter("c coefficients need n >= 2");
  KahanSum s1, s2;
  double binom = 1.0;  // C(n-1, m)
  for (int m = 0; m <= n - 1; ++m) {
    s1.add(binom / (m + 1));
    if (m >= 1) s2.add(binom * m / (m + 1));
    binom = binom * (n - 1 - m) / (m + 1);
  }
  const double scale = std::ldexp(1.0, -(n - 1));
  return {scale * s1.sum, scale * s2.sum / (n - 1)};
}

AgreementInterval agreement_threshold(const Graph& g) {
  if (!is_connected(g)) throw InvalidParameter("agreement threshold requires a connected graph");
  return {1.0 - 2.0 / max_neighborhood_size(g), 1.0};
}

OscillationReport remark1_counterexample(int n, double eta) {
  if (n < 4 || n % 2 != 0) throw InvalidParameter("alternating ring state needs an even ring size >= 4");
  check_eta(eta);
  const TransitionMatrix P = transition_matrix_fixed(make_ring(n), eta);

  OscillationReport report{};
  report.n_nodes = n;
  report.eta = eta;
  report.start = index_of(SpinState::alternating(n));
  const SpinState alt = SpinState::alternating(n);
  SpinState shifted = alt;
  for (int i = 0; i < n; ++i) shifted.set(i, alt[(i + 1) % n]);
  report.shifted = index_of(shifted);

  std::vector<char> seen(P.n_states(), 0);
  std::deque<StateIndex> queue{report.start};
  seen[report.start] = 1;
  while (!queue.empty()) {
    const StateIndex s = queue.front();
    queue.pop_front();
    report.reachable.push_back(s);
    const auto row = P.row(s);
    for (StateIndex t = 0; t < P.n_states(); ++t) {
      if (row[t] > kReachabilityThreshold && !seen[t]) {
        seen[t] = 1;
        queue.push_back(t);
      }
    }
  }
  std::sort(report.reachable.begin(), report.reachable.end());

  const StateIndex all_plus = negate_state(0, n);
  report.consensus_reachable = seen[0] || seen[all_plus];
  std::vector<StateIndex> pair{report.start, report.shifted};
  std::sort(pair.begin(), pair.end());
  report.closed_two_cycle = report.reachable == pair &&
                            std::abs(P(report.start, report.shifted) - 1.0) <= kAbsorbingTolerance &&
                            std::abs(P(report.shifted, report.start) - 1.0) <= kAbsorbingTolerance;
  return report;
}

double max_negation_asymmetry(const TransitionMatrix& P) {
  const int n = P.n_nodes();
  double worst = 0.0;
  for (StateIndex s = 0; s < P.n_states(); ++s)
    for (StateIndex t = 0; t < P.n_states(); ++t)
      worst = std::max(worst, std::abs(P(s, t) - P(negate_state(s, n), negate_state(t, n))));
  return worst;
}

double max_row_sum_error(const TransitionMatrix& P) {
  double worst = 0.0;
  for (StateIndex s = 0; s < P.n_states(); ++s) {
    KahanSum acc;
    for (double v : P.row(s)) acc.add(v);
    worst = std::max(worst, std::abs(acc.sum - 1.0));
  }
  return worst;
}

std::vector<CheckResult> verify_chain(const TransitionMatrix& P, const ChainContext& context) {
  std::vector<CheckResult> out;
  auto add = [&](std::string name, bool ok, std::string detail) {
    out.push_back({std::move(name), ok, std::move(detail)});
  };
  const int n = P.n_nodes();
  const StateIndex all_plus = negate_state(0, n);
  const double eta = context.eta;

  const double row_err = max_row_sum_error(P);
  add("row_stochastic", row_err <= 1e-12, "max |row sum - 1| = " + format_real(row_err));

  bool in_range = true;
  for (StateIndex s = 0; s < P.n_states(); ++s)
    for (double v : P.row(s)) in_range = in_range && v >= 0.0 && v <= 1.0;
  add("entries_in_unit_interval", in_range, in_range ? "all entries in [0, 1]" : "entry outside [0, 1]");

  const double asym = max_negation_asymmetry(P);
  add("negation_symmetry", asym <= 1e-14, "max |P[s][t] - P[-s][-t]| = " + format_real(asym));

  const auto classes = classify_states(P);
  const std::vector<StateIndex> consensus{0, all_plus};
  const bool agreement_classes = classes.absorbing == consensus && classes.recurrent_nonabsorbing.empty() &&
                                 classes.transient.size() == P.n_states() - 2;
  const bool single_recurrent_class = classes.absorbing.empty() && classes.transient.empty() &&
                                      classes.closed_classes.size() == 1;
  auto class_summary = [&] {
    return std::to_string(classes.absorbing.size()) + " absorbing, " + std::to_string(classes.transient.size()) +
           " transient, " + std::to_string(classes.recurrent_nonabsorbing.size()) + " recurrent non-absorbing";
  };

  if (context.graph && is_connected(*context.graph)) {
    const auto window = agreement_threshold(*context.graph);
    if (window.contains(eta)) {
      add("agreement_classification", agreement_classes,
          class_summary() + " (expected +-N absorbing, rest transient)");
    } else if (eta > 1.0) {
      add("ergodic_classification", single_recurrent_class, class_summary() + " (expected one recurrent class)");
    }
  }
  if (context.edge_prob) {
    if (eta <= 1.0) {
      add("agreement_classification", agreement_classes,
          class_summary() + " (expected +-N absorbing, rest transient)");
    } else {
      add("ergodic_classification", single_recurrent_class, class_summary() + " (expected one recurrent class)");
    }
  }

  if (eta > 1.0 && classes.closed_classes.size() == 1) {
    const auto pi = stationary_distribution(P);
    double sym = 0.0, mean = 0.0;
    for (StateIndex s = 0; s < P.n_states(); ++s) {
      sym = std::max(sym, std::abs(pi.probs[s] - pi.probs[negate_state(s, n)]));
      mean += pi.probs[s] * state_sum_of(s, n);
    }
    add("stationary_residual", pi.residual <= 1e-10, "||pi P - pi||_inf = " + format_real(pi.residual));
    add("stationary_symmetry", sym <= 1e-10, "max |pi(s) - pi(-s)| = " + format_real(sym));
    add("stationary_zero_mean", std::abs(mean) <= 1e-10, "sum pi(s) S(s) = " + format_real(mean));
  }

  if (context.edge_prob && eta > 1.0) {
    const auto expected = expected_sum_step(P);
    double worst = 0.0;
    for (StateIndex s = 0; s < P.n_states(); ++s)
      worst = std::max(worst, std::abs(expected[s] - state_sum_of(s, n) / eta));
    add("contraction_one_over_eta", worst <= 1e-10, "max |E[S'|s] - S(s)/eta| = " + format_real(worst));

    if (n == 2) {
      const auto closed = two_node_closed_form(*context.edge_prob, eta);
      double worst_entry = 0.0;
      for (StateIndex s = 0; s < 4; ++s)
        for (StateIndex t = 0; t < 4; ++t) worst_entry = std::max(worst_entry, std::abs(P(s, t) - closed.matrix(s, t)));
      add("closed_form_matrix", worst_entry <= 1e-14, "max entry difference = " + format_real(worst_entry));
      const auto pi = stationary_distribution(P);
      double worst_pi = 0.0;
      for (StateIndex s = 0; s < 4; ++s)
        worst_pi = std::max(worst_pi, std::abs(pi.probs[s] - closed.stationary.probs[s]));
      add("closed_form_stationary", worst_pi <= 1e-10, "max |pi - pi_closed| = " + format_real(worst_pi));
    }
  }
  return out;
}

void write_matrix_csv(std::ostream& out, const TransitionMatrix& P) {
  for (StateIndex s = 0; s < P.n_states(); ++s) {
    const auto row = P.row(s);
    for (std::size_t t = 0; t < row.size(); ++t) {
      if (t) out << ',';
      out << format_real(row[t]);
    }
    out << '\n';
  }
}

}  // namespace noisycon
