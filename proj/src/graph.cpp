#include "noisycon/graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "noisycon/errors.hpp"

namespace noisycon {

Graph::Graph(int n_nodes, std::span<const Edge> edges, std::string name)
    : n_nodes_(n_nodes), name_(std::move(name)) {
  if (n_nodes < 2) throw InvalidParameter("graph needs at least 2 nodes, got " + std::to_string(n_nodes));

  std::vector<std::string> problems;
  edges_.reserve(edges.size());
  for (const Edge& e : edges) {
    const std::string pair = "(" + std::to_string(e.first) + ", " + std::to_string(e.second) + ")";
    if (e.first < 0 || e.first >= n_nodes || e.second < 0 || e.second >= n_nodes) {
      problems.push_back("out-of-range endpoint " + pair);
    } else if (e.first == e.second) {
      problems.push_back("self-loop " + pair);
    } else {
      edges_.push_back({std::min(e.first, e.second), std::max(e.first, e.second)});
    }
  }
  std::sort(edges_.begin(), edges_.end());
  for (std::size_t k = 1; k < edges_.size(); ++k) {
    if (edges_[k] == edges_[k - 1]) {
      problems.push_back("duplicate edge (" + std::to_string(edges_[k].first) + ", " +
                         std::to_string(edges_[k].second) + ")");
    }
  }
  if (!problems.empty()) throw ValidationError("invalid edge list", std::move(problems));
  rebuild_adjacency();
}

void Graph::rebuild_adjacency() {
  offsets_.assign(static_cast<std::size_t>(n_nodes_) + 1, 0);
  for (const Edge& e : edges_) {
    ++offsets_[e.first + 1];
    ++offsets_[e.second + 1];
  }
  for (int i = 0; i < n_nodes_; ++i) offsets_[i + 1] += offsets_[i];
  neighbors_.resize(static_cast<std::size_t>(offsets_[n_nodes_]));
  std::vector<int> cursor(offsets_.begin(), offsets_.end() - 1);
  // edges_ is sorted: lower neighbors arrive first (ascending), then higher
  // ones (ascending), so every list comes out sorted without a sort pass.
  for (const Edge& e : edges_) neighbors_[cursor[e.second]++] = e.first;
  for (const Edge& e : edges_) neighbors_[cursor[e.first]++] = e.second;
}

bool Graph::has_edge(int a, int b) const {
  if (a < 0 || b < 0 || a >= n_nodes_ || b >= n_nodes_) return false;
  auto nb = neighbors(a);
  return std::binary_search(nb.begin(), nb.end(), b);
}

Graph make_ring(int n) {
  if (n < 3) throw InvalidParameter("ring needs n >= 3, got " + std::to_string(n));
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n});
  return Graph(n, edges, "ring(" + std::to_string(n) + ")");
}

Graph make_path(int n) {
  if (n < 2) throw InvalidParameter("path needs n >= 2, got " + std::to_string(n));
  std::vector<Edge> edges;
  for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
  return Graph(n, edges, "path(" + std::to_string(n) + ")");
}

Graph make_complete(int n) {
  if (n < 2) throw InvalidParameter("complete graph needs n >= 2, got " + std::to_string(n));
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) edges.push_back({i, j});
  return Graph(n, edges, "complete(" + std::to_string(n) + ")");
}

Graph make_lattice(std::span<const int> dims, bool periodic) {
  if (dims.empty()) throw InvalidParameter("lattice needs at least one dimension");
  long long total = 1;
  for (int d : dims) {
    if (d < 1) throw InvalidParameter("lattice dimensions must be positive");
    total *= d;
    if (total > (1 << 24)) throw ResourceLimit("lattice too large");
  }
  const int n = static_cast<int>(total);

  std::vector<Edge> edges;
  std::vector<int> coord(dims.size(), 0);
  for (int node = 0; node < n; ++node) {
    int stride = 1;
    for (std::size_t axis = 0; axis < dims.size(); ++axis) {
      const int size = dims[axis];
      if (coord[axis] + 1 < size) {
        edges.push_back({node, node + stride});
      } else if (periodic && size > 2) {
        // size 2 would duplicate the interior edge; size 1 would be a self-loop
        edges.push_back({node - (size - 1) * stride, node});
      }
      stride *= size;
    }
    for (std::size_t axis = 0; axis < dims.size(); ++axis) {
      if (++coord[axis] < dims[axis]) break;
      coord[axis] = 0;
    }
  }

  std::string name = periodic ? "torus(" : "lattice(";
  for (std::size_t axis = 0; axis < dims.size(); ++axis) {
    if (axis) name += "x";
    name += std::to_string(dims[axis]);
  }
  name += ")";
  return Graph(n, edges, name);
}

Graph from_edge_list(int n, std::span<const Edge> edges) { return Graph(n, edges, "edgelist"); }

Graph parse_edge_list(std::istream& in) {
  std::vector<std::string> problems;
  std::vector<Edge> edges;
  std::vector<int> edge_lines;
  int n = -1;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    if (tokens.empty()) continue;

    auto parse_int = [&](const std::string& tok, int& out) {
      std::size_t used = 0;
      try {
        out = std::stoi(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      return used == tok.size() && used > 0;
    };

    if (n < 0) {
      int value = 0;
      if (tokens.size() != 1 || !parse_int(tokens[0], value) || value < 2) {
        problems.push_back("line " + std::to_string(line_no) + ": expected node count N >= 2");
        n = 0;
      } else {
        n = value;
      }
      continue;
    }
    int a = 0, b = 0;
    if (tokens.size() != 2 || !parse_int(tokens[0], a) || !parse_int(tokens[1], b)) {
      problems.push_back("line " + std::to_string(line_no) + ": expected \"i j\"");
      continue;
    }
    if (a < 0 || b < 0 || a >= n || b >= n) {
      problems.push_back("line " + std::to_string(line_no) + ": node index out of range [0, " +
                         std::to_string(n) + ")");
      continue;
    }
    if (a == b) {
      problems.push_back("line " + std::to_string(line_no) + ": self-loop (" + tokens[0] + ", " + tokens[1] + ")");
      continue;
    }
    Edge canon{std::min(a, b), std::max(a, b)};
    for (std::size_t k = 0; k < edges.size(); ++k) {
      if (edges[k] == canon) {
        problems.push_back("line " + std::to_string(line_no) + ": duplicate of edge on line " +
                           std::to_string(edge_lines[k]));
        break;
      }
    }
    edges.push_back(canon);
    edge_lines.push_back(line_no);
  }
  if (n < 0) problems.push_back("missing node count line");
  if (!problems.empty()) throw ValidationError("malformed edge list", std::move(problems));
  return Graph(n, edges, "edgelist");
}

Graph load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open edge list '" + path + "'");
  return parse_edge_list(in);
}

bool is_connected(const Graph& g) {
  std::vector<char> seen(static_cast<std::size_t>(g.n_nodes()), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int w : g.neighbors(u)) {
      if (!seen[w]) {
        seen[w] = 1;
        ++reached;
        stack.push_back(w);
      }
    }
  }
  return reached == g.n_nodes();
}

int max_neighborhood_size(const Graph& g) {
  int best = 0;
  for (int i = 0; i < g.n_nodes(); ++i) best = std::max(best, g.degree(i));
  return best + 1;
}

Neighborhood neighborhood(const Graph& g, int node) {
  if (node < 0 || node >= g.n_nodes()) {
    throw InvalidParameter("node index " + std::to_string(node) + " out of range [0, " +
                           std::to_string(g.n_nodes()) + ")");
  }
  auto nb = g.neighbors(node);
  Neighborhood out{node, std::vector<int>(nb.begin(), nb.end())};
  out.members.insert(std::lower_bound(out.members.begin(), out.members.end(), node), node);
  return out;
}

BinomialGraphSampler::BinomialGraphSampler(int n_nodes, double edge_prob)
    : n_nodes_(n_nodes), edge_prob_(edge_prob) {
  if (n_nodes < 2) throw InvalidParameter("binomial graph needs n >= 2, got " + std::to_string(n_nodes));
  if (!(edge_prob > 0.0 && edge_prob < 1.0)) throw InvalidParameter("edge probability p must lie in (0, 1)");
  graph_.n_nodes_ = n_nodes;
  graph_.name_ = "binomial";
  graph_.edges_.reserve(static_cast<std::size_t>(n_nodes) * (n_nodes - 1) / 2);
}

const Graph& BinomialGraphSampler::sample(RngStream& rng) {
  graph_.edges_.clear();
  for (int i = 0; i < n_nodes_; ++i)
    for (int j = i + 1; j < n_nodes_; ++j)
      if (rng.bernoulli(edge_prob_)) graph_.edges_.push_back({i, j});
  graph_.rebuild_adjacency();
  return graph_;
}

Graph sample_binomial_graph(int n, double p, RngStream& rng) {
  BinomialGraphSampler sampler(n, p);
  return sampler.sample(rng);
}

GraphProcessSpec GraphProcessSpec::fixed(Graph g) { return GraphProcessSpec(FixedProcess{std::move(g)}); }

GraphProcessSpec GraphProcessSpec::binomial(int n_nodes, double edge_prob) {
  if (n_nodes < 2) throw InvalidParameter("binomial process needs n >= 2");
  if (!(edge_prob > 0.0 && edge_prob < 1.0)) throw InvalidParameter("edge probability p must lie in (0, 1)");
  return GraphProcessSpec(BinomialProcess{n_nodes, edge_prob});
}

int GraphProcessSpec::n_nodes() const {
  if (auto f = as_fixed()) return f->graph.n_nodes();
  return as_binomial()->n_nodes;
}

std::string GraphProcessSpec::describe() const {
  if (auto f = as_fixed()) return f->graph.name();
  const auto* b = as_binomial();
  std::ostringstream out;
  out.precision(17);
  out << "binomial(" << b->n_nodes << ", " << b->edge_prob << ")";
  return out.str();
}

}  // namespace noisycon
