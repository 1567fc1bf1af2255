#pragma once

#include <cstddef>
#include <istream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "noisycon/rng.hpp"

namespace noisycon {

/// Undirected edge stored canonically with first < second.
struct Edge {
  int first;
  int second;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Simple undirected graph on nodes 0..n-1.
///
/// Immutable after construction. Adjacency is held in compressed form so a
/// neighborhood query is a contiguous span of sorted neighbor indices.
class Graph {
 public:
  /// Validates and canonicalizes `edges`. Throws ValidationError listing every
  /// self-loop, out-of-range endpoint and duplicate pair; InvalidParameter if n < 2.
  Graph(int n_nodes, std::span<const Edge> edges, std::string name = "custom");

  int n_nodes() const noexcept { return n_nodes_; }
  std::size_t n_edges() const noexcept { return edges_.size(); }
  std::span<const Edge> edges() const noexcept { return edges_; }
  const std::string& name() const noexcept { return name_; }

  std::span<const int> neighbors(int node) const {
    return {neighbors_.data() + offsets_[node],
            static_cast<std::size_t>(offsets_[node + 1] - offsets_[node])};
  }
  int degree(int node) const { return offsets_[node + 1] - offsets_[node]; }
  bool has_edge(int a, int b) const;

 private:
  friend class BinomialGraphSampler;
  Graph() = default;
  void rebuild_adjacency();

  int n_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<int> offsets_;
  std::vector<int> neighbors_;
  std::string name_;
};

/// Node `center` plus everything adjacent to it, sorted ascending.
struct Neighborhood {
  int center;
  std::vector<int> members;

  std::size_t size() const noexcept { return members.size(); }
};

Graph make_ring(int n);
Graph make_path(int n);
Graph make_complete(int n);
/// Orthogonal grid; dimension 0 varies fastest in the node numbering.
Graph make_lattice(std::span<const int> dims, bool periodic);
Graph from_edge_list(int n, std::span<const Edge> edges);

/// Parse the text edge-list format: first non-blank line "N", then one
/// whitespace-separated "i j" pair per line (0-based). '#' starts a comment.
/// Every violation is reported with its line number in one ValidationError.
Graph parse_edge_list(std::istream& in);
Graph load_edge_list(const std::string& path);

bool is_connected(const Graph& g);
/// D = 1 + maximum degree.
int max_neighborhood_size(const Graph& g);
Neighborhood neighborhood(const Graph& g, int node);

/// Reusable sampler for binomial random graphs G(n, p).
///
/// One uniform draw per candidate pair in canonical order (0,1),(0,2),...,
/// (0,n-1),(1,2),...; the pair is present when the draw is below p. The
/// returned graph is owned by the sampler and overwritten on the next call.
class BinomialGraphSampler {
 public:
  BinomialGraphSampler(int n_nodes, double edge_prob);

  const Graph& sample(RngStream& rng);

  int n_nodes() const noexcept { return n_nodes_; }
  double edge_prob() const noexcept { return edge_prob_; }

 private:
  int n_nodes_;
  double edge_prob_;
  Graph graph_;
};

Graph sample_binomial_graph(int n, double p, RngStream& rng);

struct FixedProcess {
  Graph graph;
};

struct BinomialProcess {
  int n_nodes;
  double edge_prob;
};

/// Interaction topology over time: one fixed graph, or an independent
/// binomial random graph at every step.
class GraphProcessSpec {
 public:
  static GraphProcessSpec fixed(Graph g);
  /// Throws InvalidParameter unless n >= 2 and 0 < p < 1.
  static GraphProcessSpec binomial(int n_nodes, double edge_prob);

  int n_nodes() const;
  bool is_fixed() const { return std::holds_alternative<FixedProcess>(variant_); }
  const FixedProcess* as_fixed() const { return std::get_if<FixedProcess>(&variant_); }
  const BinomialProcess* as_binomial() const { return std::get_if<BinomialProcess>(&variant_); }
  std::string describe() const;

 private:
  explicit GraphProcessSpec(std::variant<FixedProcess, BinomialProcess> v) : variant_(std::move(v)) {}
  std::variant<FixedProcess, BinomialProcess> variant_;
};

}  // namespace noisycon
