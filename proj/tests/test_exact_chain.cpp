#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "noisycon/errors.hpp"
#include "noisycon/exact_chain.hpp"

using namespace noisycon;

namespace {

// Independent brute-force oracle: adjacency matrix, textbook clamp formula,
// long double products, explicit per-entry evaluation.
using Adjacency = std::vector<std::vector<bool>>;

Adjacency adjacency_of(const Graph& g) {
  Adjacency adj(g.n_nodes(), std::vector<bool>(g.n_nodes(), false));
  for (const Edge& e : g.edges()) adj[e.first][e.second] = adj[e.second][e.first] = true;
  return adj;
}

long double oracle_entry(const Adjacency& adj, long double eta, unsigned s, unsigned t) {
  const int n = static_cast<int>(adj.size());
  long double prob = 1.0L;
  for (int i = 0; i < n; ++i) {
    int sum = 0, size = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i || adj[i][j]) {
        sum += (s >> j) & 1U ? 1 : -1;
        ++size;
      }
    }
    const long double v = static_cast<long double>(sum) / size;
    const long double up = std::clamp((eta + v) / (2 * eta), 0.0L, 1.0L);
    prob *= (t >> i) & 1U ? up : 1.0L - up;
  }
  return prob;
}

long double oracle_binomial_entry(int n, long double p, long double eta, unsigned s, unsigned t) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.push_back({i, j});
  long double total = 0.0L;
  for (unsigned mask = 0; mask < (1U << pairs.size()); ++mask) {
    Adjacency adj(n, std::vector<bool>(n, false));
    int k = 0;
    for (std::size_t e = 0; e < pairs.size(); ++e) {
      if ((mask >> e) & 1U) {
        adj[pairs[e].first][pairs[e].second] = adj[pairs[e].second][pairs[e].first] = true;
        ++k;
      }
    }
    const long double w = std::pow(p, k) * std::pow(1.0L - p, static_cast<long double>(pairs.size() - k));
    total += w * oracle_entry(adj, eta, s, t);
  }
  return total;
}

constexpr StateIndex kPP = 0b11, kPM = 0b01, kMP = 0b10, kMM = 0b00;

}  // namespace

TEST_CASE("state indexing") {
  CHECK(negate_state(0b0101, 4) == 0b1010);
  CHECK(state_sum_of(0b111, 3) == 3);
  CHECK(state_sum_of(0b000, 3) == -3);
  CHECK(state_sum_of(0b011, 3) == 1);
  for (StateIndex s = 0; s < 32; ++s) {
    CHECK(negate_state(negate_state(s, 5), 5) == s);
    CHECK(index_of(spin_state_of(s, 5)) == s);
    CHECK(state_sum(spin_state_of(s, 5)) == state_sum_of(s, 5));
  }
}

TEST_CASE("fixed-graph matrix matches the brute-force oracle") {
  for (const Graph& g : {make_path(2), make_ring(3), make_ring(4), make_complete(4), make_path(5)}) {
    for (double eta : {0.3, 0.5, 0.75, 1.0, 1.5, 2.0}) {
      const auto P = transition_matrix_fixed(g, eta);
      const auto adj = adjacency_of(g);
      double worst = 0.0;
      for (StateIndex s = 0; s < P.n_states(); ++s)
        for (StateIndex t = 0; t < P.n_states(); ++t)
          worst = std::max(worst, static_cast<double>(std::abs(P(s, t) - oracle_entry(adj, eta, s, t))));
      CHECK(worst <= 1e-15);
    }
  }
}

TEST_CASE("fixed-graph matrix examples") {
  const auto P = transition_matrix_fixed(make_path(2), 2.0);
  CHECK(P(kPP, kPP) == doctest::Approx(9.0 / 16.0).epsilon(1e-15));
  CHECK(P(kPM, kMM) == doctest::Approx(0.25).epsilon(1e-15));

  const auto Q = transition_matrix_fixed(make_ring(5), 0.5);
  CHECK(Q(0, 0) == 1.0);
  CHECK(Q(31, 31) == 1.0);
  CHECK(max_row_sum_error(Q) <= 1e-12);
}

TEST_CASE("binomial matrix matches the brute-force oracle") {
  for (int n : {2, 3}) {
    for (double p : {0.2, 0.5, 0.9}) {
      for (double eta : {0.4, 1.0, 2.0}) {
        const auto P = transition_matrix_binomial(n, p, eta);
        double worst = 0.0;
        for (StateIndex s = 0; s < P.n_states(); ++s)
          for (StateIndex t = 0; t < P.n_states(); ++t)
            worst = std::max(worst,
                             static_cast<double>(std::abs(P(s, t) - oracle_binomial_entry(n, p, eta, s, t))));
        CHECK(worst <= 1e-15);
      }
    }
  }
}

TEST_CASE("binomial matrix examples") {
  const auto P = transition_matrix_binomial(2, 0.5, 2.0);
  CHECK(P(kPM, kPP) == doctest::Approx(0.21875).epsilon(1e-15));
  for (double p : {0.1, 0.5, 0.8}) {
    const auto Q = transition_matrix_binomial(2, p, 2.0);
    CHECK(Q(kPP, kPP) == doctest::Approx(9.0 / 16.0).epsilon(1e-15));
    CHECK(max_row_sum_error(Q) <= 1e-12);
  }
  CHECK(max_row_sum_error(transition_matrix_binomial(5, 0.3, 1.2)) <= 1e-12);
}

TEST_CASE("enumeration caps") {
  CHECK_THROWS_AS(transition_matrix_fixed(make_ring(13), 1.0), ResourceLimit);
  CHECK_THROWS_AS(transition_matrix_fixed(make_ring(6), 1.0, 5), ResourceLimit);
  CHECK_THROWS_AS(transition_matrix_binomial(6, 0.5, 1.0), ResourceLimit);
  CHECK_THROWS_AS(transition_matrix_binomial(3, 1.0, 1.0), InvalidParameter);
  CHECK_THROWS_AS(transition_matrix_fixed(make_ring(4), 0.0), InvalidParameter);
}

TEST_CASE("negation symmetry is exact") {
  for (double eta : {0.35, 0.8, 1.05, 3.0}) {
    CHECK(max_negation_asymmetry(transition_matrix_fixed(make_ring(6), eta)) == 0.0);
    CHECK(max_negation_asymmetry(transition_matrix_fixed(make_complete(5), eta)) == 0.0);
    CHECK(max_negation_asymmetry(transition_matrix_binomial(4, 0.3, eta)) == 0.0);
  }
}

TEST_CASE("parallel and serial builds agree bit-for-bit") {
  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
  const auto a = transition_matrix_fixed(make_ring(8), 1.3);
  const auto b = transition_matrix_fixed_serial(make_ring(8), 1.3);
  const auto c = transition_matrix_binomial(4, 0.7, 0.9);
  const auto d = transition_matrix_binomial_serial(4, 0.7, 0.9);
  omp_set_num_threads(saved);
  for (StateIndex s = 0; s < a.n_states(); ++s)
    for (StateIndex t = 0; t < a.n_states(); ++t) REQUIRE(a(s, t) == b(s, t));
  for (StateIndex s = 0; s < c.n_states(); ++s)
    for (StateIndex t = 0; t < c.n_states(); ++t) REQUIRE(c(s, t) == d(s, t));
}

TEST_CASE("two-node closed form") {
  const auto columns = two_node_column_matrix(0.3, 1.7);
  for (int col = 0; col < 4; ++col) {
    double total = 0.0;
    for (int row = 0; row < 4; ++row) total += columns[row][col];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
  }

  const auto cf = two_node_closed_form(0.5, 2.0);
  CHECK(cf.b == doctest::Approx(3.0 / 16.0));
  CHECK(cf.stationary.probs[kPP] == doctest::Approx(7.0 / 26.0).epsilon(1e-15));
  CHECK(cf.stationary.probs[kMM] == doctest::Approx(7.0 / 26.0).epsilon(1e-15));
  CHECK(cf.stationary.probs[kPM] == doctest::Approx(3.0 / 13.0).epsilon(1e-15));
  CHECK(cf.stationary.probs[kMP] == doctest::Approx(3.0 / 13.0).epsilon(1e-15));

  for (double p : {0.1, 0.4, 0.95}) {
    for (double eta : {1.01, 1.5, 4.0}) {
      const auto closed = two_node_closed_form(p, eta);
      CHECK(std::accumulate(closed.stationary.probs.begin(), closed.stationary.probs.end(), 0.0) ==
            doctest::Approx(1.0).epsilon(1e-15));
      const auto P = transition_matrix_binomial(2, p, eta);
      for (StateIndex s = 0; s < 4; ++s)
        for (StateIndex t = 0; t < 4; ++t) CHECK(std::abs(P(s, t) - closed.matrix(s, t)) <= 1e-14);
    }
  }
  CHECK_THROWS_AS(two_node_closed_form(0.5, 1.0), DomainError);
  CHECK_THROWS_AS(two_node_closed_form(0.5, 0.3), DomainError);
}

TEST_CASE("state classification") {
  SUBCASE("ring(4) inside the agreement window") {
    const auto c = classify_states(transition_matrix_fixed(make_ring(4), 0.5));
    CHECK(c.absorbing == std::vector<StateIndex>{0, 15});
    CHECK(c.transient.size() == 14);
    CHECK(c.recurrent_nonabsorbing.empty());
    CHECK(c.closed_classes.size() == 2);
  }
  SUBCASE("high noise is one recurrent class") {
    for (const auto& P : {transition_matrix_fixed(make_ring(4), 2.0), transition_matrix_fixed(make_path(3), 2.0),
                          transition_matrix_binomial(3, 0.5, 2.0)}) {
      const auto c = classify_states(P);
      CHECK(c.absorbing.empty());
      CHECK(c.transient.empty());
      REQUIRE(c.closed_classes.size() == 1);
      CHECK(c.closed_classes[0].size() == P.n_states());
    }
  }
  SUBCASE("random graph process absorbs at tiny noise") {
    const auto c = classify_states(transition_matrix_binomial(3, 0.5, 0.4));
    CHECK(c.absorbing == std::vector<StateIndex>{0, 7});
    CHECK(c.transient.size() == 6);
  }
  SUBCASE("majority-vote ring keeps a closed 2-cycle") {
    // below 1/3 every update is a deterministic majority vote: adjacent pairs
    // of equal spins are frozen too
    const auto c = classify_states(transition_matrix_fixed(make_ring(4), 0.2));
    CHECK(c.absorbing == std::vector<StateIndex>{0, 0b0011, 0b0110, 0b1001, 0b1100, 15});
    CHECK(c.recurrent_nonabsorbing == std::vector<StateIndex>{0b0101, 0b1010});
    CHECK(c.transient.size() == 8);
    CHECK(c.closed_classes.size() == 7);
  }
  SUBCASE("partition") {
    const auto c = classify_states(transition_matrix_fixed(make_ring(6), 0.25));
    CHECK(c.absorbing.size() + c.transient.size() + c.recurrent_nonabsorbing.size() == 64);
    std::vector<StateIndex> all;
    for (const auto* v : {&c.absorbing, &c.transient, &c.recurrent_nonabsorbing}) all.insert(all.end(), v->begin(), v->end());
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  }
}

TEST_CASE("stationary distribution") {
  const auto pi = stationary_distribution(transition_matrix_binomial(2, 0.5, 2.0));
  CHECK(pi.probs[0] == doctest::Approx(7.0 / 26.0).epsilon(1e-12));
  CHECK(pi.probs[1] == doctest::Approx(3.0 / 13.0).epsilon(1e-12));
  CHECK(pi.probs[2] == doctest::Approx(3.0 / 13.0).epsilon(1e-12));
  CHECK(pi.probs[3] == doctest::Approx(7.0 / 26.0).epsilon(1e-12));
  CHECK(pi.method == "power-iteration");

  const auto ring3 = transition_matrix_fixed(make_ring(3), 2.0);
  const auto sym = stationary_distribution(ring3);
  CHECK(sym.residual <= 1e-10);
  double mean = 0.0;
  for (StateIndex s = 0; s < 8; ++s) {
    CHECK(std::abs(sym.probs[s] - sym.probs[negate_state(s, 3)]) <= 1e-12);
    mean += sym.probs[s] * state_sum_of(s, 3);
  }
  CHECK(std::abs(mean) <= 1e-10);

  const auto direct = stationary_by_linear_solve(ring3);
  for (StateIndex s = 0; s < 8; ++s) CHECK(std::abs(direct.probs[s] - sym.probs[s]) <= 1e-10);

  StationaryOptions few;
  few.max_iterations = 2;
  const auto fallback = stationary_distribution(transition_matrix_fixed(make_ring(5), 1.2), few);
  CHECK(fallback.method == "linear-solve");
  CHECK(fallback.residual <= 1e-12);

  CHECK_THROWS_AS(stationary_distribution(transition_matrix_fixed(make_ring(4), 0.5)), NotErgodic);
  try {
    stationary_distribution(transition_matrix_fixed(make_ring(4), 0.5));
  } catch (const NotErgodic& e) {
    CHECK(std::string(e.what()).find("++++") != std::string::npos);
  }
}

TEST_CASE("expected state sum contracts by 1/eta on random graph processes") {
  for (int n : {2, 3, 4}) {
    for (double p : {0.15, 0.5, 0.85}) {
      for (double eta : {1.05, 1.7, 3.0}) {
        const auto e = expected_sum_step(transition_matrix_binomial(n, p, eta));
        for (StateIndex s = 0; s < e.size(); ++s) CHECK(std::abs(e[s] - state_sum_of(s, n) / eta) <= 1e-10);
      }
    }
  }
  CHECK(expected_sum_step(transition_matrix_binomial(2, 0.5, 2.0))[kPP] == doctest::Approx(1.0).epsilon(1e-15));

  const auto fixed = expected_sum_step(transition_matrix_fixed(make_ring(4), 0.5));
  CHECK(fixed[0] == -4.0);
  CHECK(fixed[15] == 4.0);
}

TEST_CASE("c coefficients") {
  auto c = c_coefficients(2);
  CHECK(c.c1 == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(c.c2 == doctest::Approx(0.25).epsilon(1e-15));
  c = c_coefficients(3);
  CHECK(c.c1 == doctest::Approx(7.0 / 12.0).epsilon(1e-15));
  CHECK(c.c2 == doctest::Approx(5.0 / 24.0).epsilon(1e-15));
  for (int n = 2; n <= 20; ++n) {
    c = c_coefficients(n);
    CHECK(std::abs(c.c1 + (n - 1) * c.c2 - 1.0) <= 1e-14);
    // sum_m C(n-1,m)/(m+1) = (2^n - 1)/n
    const double closed_c1 = (std::ldexp(1.0, n) - 1.0) / (n * std::ldexp(1.0, n - 1));
    CHECK(std::abs(c.c1 - closed_c1) <= 1e-15);
  }
  CHECK_THROWS_AS(c_coefficients(1), InvalidParameter);
}

TEST_CASE("c coefficients reproduce E[v_i | x] on the fair-coin process") {
  // brute-force expectation of node 0's average over all graphs on 4 nodes
  const int n = 4;
  const auto c = c_coefficients(n);
  for (StateIndex s = 0; s < 16; ++s) {
    long double expected_v = 0.0L;
    for (unsigned mask = 0; mask < 64; ++mask) {
      std::vector<Edge> edges;
      int k = 0;
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++k)
          if ((mask >> k) & 1U) edges.push_back({i, j});
      const Graph g(n, edges);
      expected_v += node_average(spin_state_of(s, n), g, 0) / 64.0L;
    }
    const int x0 = s & 1U ? 1 : -1;
    const double predicted = c.c1 * x0 + c.c2 * (state_sum_of(s, n) - x0);
    CHECK(std::abs(static_cast<double>(expected_v) - predicted) <= 1e-14);
  }
}

TEST_CASE("agreement threshold") {
  for (int n : {3, 5, 10, 100}) {
    const auto w = agreement_threshold(make_ring(n));
    CHECK(w.lower == doctest::Approx(1.0 / 3.0));
    CHECK(w.upper == 1.0);
  }
  CHECK(agreement_threshold(make_complete(4)).lower == doctest::Approx(0.5));
  CHECK(agreement_threshold(make_path(2)).lower == 0.0);
  const auto w = agreement_threshold(make_ring(4));
  CHECK_FALSE(w.contains(1.0 / 3.0));
  CHECK(w.contains(1.0));
  CHECK_FALSE(w.contains(1.01));
  const Edge split[] = {{0, 1}, {2, 3}};
  CHECK_THROWS_AS(agreement_threshold(from_edge_list(4, split)), InvalidParameter);
}

TEST_CASE("alternating ring counterexample") {
  const auto r4 = remark1_counterexample(4, 0.2);
  CHECK(r4.closed_two_cycle);
  CHECK_FALSE(r4.consensus_reachable);
  CHECK(r4.start == 0b0101);
  CHECK(r4.shifted == 0b1010);

  const auto r6 = remark1_counterexample(6, 0.3);
  CHECK(r6.closed_two_cycle);
  CHECK_FALSE(r6.consensus_reachable);

  const auto escaped = remark1_counterexample(4, 0.5);
  CHECK_FALSE(escaped.closed_two_cycle);
  CHECK(escaped.consensus_reachable);

  CHECK_THROWS_AS(remark1_counterexample(5, 0.2), InvalidParameter);
}

TEST_CASE("verify_chain passes on well-formed chains") {
  auto all_pass = [](const std::vector<CheckResult>& checks) {
    for (const auto& c : checks) {
      INFO(c.name << ": " << c.detail);
      CHECK(c.passed);
    }
  };
  all_pass(verify_chain(transition_matrix_binomial(2, 0.5, 2.0), {2.0, 0.5, std::nullopt}));
  all_pass(verify_chain(transition_matrix_binomial(3, 0.5, 0.4), {0.4, 0.5, std::nullopt}));
  all_pass(verify_chain(transition_matrix_fixed(make_ring(4), 0.5), {0.5, std::nullopt, make_ring(4)}));
  all_pass(verify_chain(transition_matrix_fixed(make_ring(5), 2.0), {2.0, std::nullopt, make_ring(5)}));
  const auto checks = verify_chain(transition_matrix_binomial(2, 0.3, 1.5), {1.5, 0.3, std::nullopt});
  CHECK(std::any_of(checks.begin(), checks.end(), [](const auto& c) { return c.name == "closed_form_matrix"; }));
}

TEST_CASE("matrix CSV") {
  std::ostringstream out;
  write_matrix_csv(out, transition_matrix_fixed(make_path(2), 2.0));
  std::istringstream in(out.str());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 3);
  }
  CHECK(rows == 4);
  CHECK(out.str().find("0.5625") != std::string::npos);
}
