#include "cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "noisycon/dynamics.hpp"
#include "noisycon/errors.hpp"
#include "noisycon/exact_chain.hpp"
#include "noisycon/graph.hpp"
#include "noisycon/io.hpp"
#include "noisycon/montecarlo.hpp"

namespace noisycon::cli {

namespace {

using nlohmann::json;

/// Bad flag value; always maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

struct ExperimentConfig {
  std::string command;
  std::string topology;
  int nodes = 0;
  std::vector<int> dims;
  bool periodic = false;
  std::string edges_path;
  double p = kUnset;
  double eta = kUnset;
  std::int64_t steps = 0;
  std::int64_t trials = 0;
  std::uint64_t seed = 1;
  std::string init;
  std::string init_file;
  std::string out;
  std::string format = "csv";
  int threads = 0;
  bool verify = false;
  bool no_timestamp = false;
  bool full_state = false;
  std::int64_t burn_in = 0;
  double floor = kDefaultSignalFloor;
  std::string metric;
  std::vector<double> eta_grid;
  std::vector<double> p_grid;
  int cap = kDefaultFixedNodeCap;
  std::string ensemble_out;
  std::string config_path;
};

void add_common(CLI::App* sub, ExperimentConfig& cfg, const std::string& default_topology,
                const std::string& default_init, std::int64_t default_steps, std::int64_t default_trials) {
  cfg.topology = default_topology;
  cfg.init = default_init;
  cfg.steps = default_steps;
  cfg.trials = default_trials;
  sub->add_option("--config", cfg.config_path, "flat key=value file; keys mirror flag names, flags override");
  sub->add_option("--topology", cfg.topology, "ring|path|complete|lattice|edgelist|binomial")
      ->check(CLI::IsMember({"ring", "path", "complete", "lattice", "edgelist", "binomial"}))
      ->capture_default_str();
  sub->add_option("--nodes", cfg.nodes, "number of nodes");
  sub->add_option("--dims", cfg.dims, "lattice side lengths, e.g. 10,10")->delimiter(',');
  sub->add_flag("--periodic", cfg.periodic, "wrap lattice boundaries");
  sub->add_option("--edges", cfg.edges_path, "edge-list file for --topology edgelist");
  sub->add_option("--p", cfg.p, "edge probability of the binomial random graph");
  sub->add_option("--eta", cfg.eta, "noise half-width eta > 0");
  sub->add_option("--steps", cfg.steps, "time steps")->capture_default_str();
  sub->add_option("--seed", cfg.seed, "master seed")->capture_default_str();
  sub->add_option("--init", cfg.init,
                  default_init.empty() ? "random|all-plus|all-minus|file (default: all-plus for decay_exponent, else random)"
                                       : "random|all-plus|all-minus|file")
      ->check(CLI::IsMember({"random", "all-plus", "all-minus", "file"}))
      ->capture_default_str();
  sub->add_option("--init-file", cfg.init_file, "file holding a '+'/'-' string for --init file");
  sub->add_option("--out", cfg.out, "output path");
  sub->add_option("--threads", cfg.threads, "worker thread cap (results do not depend on it)");
  sub->add_flag("--no-timestamp", cfg.no_timestamp, "omit the generation timestamp from outputs");
}

void add_trials(CLI::App* sub, ExperimentConfig& cfg) {
  sub->add_option("--trials", cfg.trials, "independent trials")->capture_default_str();
}

void add_format(CLI::App* sub, ExperimentConfig& cfg) {
  sub->add_option("--format", cfg.format, "csv|json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
}

std::string timestamp_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---- validation -----------------------------------------------------------

void require(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

void validate_eta(const ExperimentConfig& cfg) {
  require(!std::isnan(cfg.eta), "--eta is required");
  require(cfg.eta > 0.0 && std::isfinite(cfg.eta), "--eta: eta must be > 0");
}

void validate_counts(const ExperimentConfig& cfg, bool uses_trials) {
  require(cfg.steps >= 1, "--steps must be >= 1");
  if (uses_trials) require(cfg.trials >= 1, "--trials must be >= 1");
  require(cfg.threads >= 0, "--threads must be >= 0");
}

GraphProcessSpec build_process(const ExperimentConfig& cfg) {
  const std::string& t = cfg.topology;
  if (t == "binomial") {
    require(cfg.nodes >= 2, "--nodes must be >= 2 for a binomial graph");
    require(!std::isnan(cfg.p), "--p is required for --topology binomial");
    require(cfg.p > 0.0 && cfg.p < 1.0, "--p must lie in (0, 1)");
    return GraphProcessSpec::binomial(cfg.nodes, cfg.p);
  }
  require(std::isnan(cfg.p), "--p only applies to --topology binomial");
  if (t == "ring") {
    require(cfg.nodes >= 3, "--nodes must be >= 3 for a ring");
    return GraphProcessSpec::fixed(make_ring(cfg.nodes));
  }
  if (t == "path") {
    require(cfg.nodes >= 2, "--nodes must be >= 2 for a path");
    return GraphProcessSpec::fixed(make_path(cfg.nodes));
  }
  if (t == "complete") {
    require(cfg.nodes >= 2, "--nodes must be >= 2 for a complete graph");
    return GraphProcessSpec::fixed(make_complete(cfg.nodes));
  }
  if (t == "lattice") {
    require(!cfg.dims.empty(), "--dims is required for --topology lattice");
    for (int d : cfg.dims) require(d >= 1, "--dims entries must be positive");
    return GraphProcessSpec::fixed(make_lattice(cfg.dims, cfg.periodic));
  }
  require(!cfg.edges_path.empty(), "--edges is required for --topology edgelist");
  return GraphProcessSpec::fixed(load_edge_list(cfg.edges_path));
}

InitPolicy build_init(const ExperimentConfig& cfg, int n_nodes) {
  if (cfg.init == "all-plus") return InitAllPlus{};
  if (cfg.init == "all-minus") return InitAllMinus{};
  if (cfg.init == "random") return InitRandom{};
  require(!cfg.init_file.empty(), "--init-file is required with --init file");
  std::ifstream in(cfg.init_file);
  require(static_cast<bool>(in), "--init-file: cannot open '" + cfg.init_file + "'");
  std::stringstream text;
  text << in.rdbuf();
  SpinState state = SpinState::parse(text.str());
  require(state.size() == n_nodes, "--init-file: state has " + std::to_string(state.size()) + " nodes, expected " +
                                       std::to_string(n_nodes));
  return InitExplicit{std::move(state)};
}

void apply_threads(const ExperimentConfig& cfg) {
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
}

// ---- output ---------------------------------------------------------------

/// Writes through a temporary file renamed into place, so a failed run leaves
/// no partial output.
void write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << content;
    if (!f) throw std::runtime_error("write to '" + path + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

json config_json(const ExperimentConfig& cfg) {
  json j = {
      {"command", cfg.command}, {"topology", cfg.topology}, {"nodes", cfg.nodes},
      {"steps", cfg.steps},     {"seed", cfg.seed},         {"init", cfg.init},
  };
  if (!std::isnan(cfg.eta)) j["eta"] = cfg.eta;
  if (!std::isnan(cfg.p)) j["p"] = cfg.p;
  if (!cfg.dims.empty()) {
    j["dims"] = cfg.dims;
    j["periodic"] = cfg.periodic;
  }
  if (!cfg.edges_path.empty()) j["edges"] = cfg.edges_path;
  if (!cfg.init_file.empty()) j["init_file"] = cfg.init_file;
  if (cfg.command != "simulate" && cfg.command != "exact") j["trials"] = cfg.trials;
  if (cfg.command == "simulate" || cfg.metric == "final_time_average") j["burn_in"] = cfg.burn_in;
  if (cfg.command == "decay" || cfg.metric == "decay_exponent") j["floor"] = cfg.floor;
  if (cfg.command == "exact") j["cap"] = cfg.cap;
  if (cfg.command == "sweep") {
    j["metric"] = cfg.metric;
    j["eta_grid"] = cfg.eta_grid;
    if (!cfg.p_grid.empty()) j["p_grid"] = cfg.p_grid;
  }
  return j;
}

std::vector<std::string> csv_header_lines(const ExperimentConfig& cfg) {
  std::vector<std::string> lines{"command=" + cfg.command, "config=" + config_json(cfg).dump()};
  if (!cfg.no_timestamp) lines.push_back("generated_at=" + timestamp_utc());
  return lines;
}

void stamp(json& j, const ExperimentConfig& cfg) {
  j["config"] = config_json(cfg);
  if (!cfg.no_timestamp) j["generated_at"] = timestamp_utc();
}

// ---- subcommands ----------------------------------------------------------

int cmd_simulate(const ExperimentConfig& cfg, std::ostream& out) {
  validate_eta(cfg);
  validate_counts(cfg, false);
  require(cfg.burn_in >= 0, "--burn-in must be >= 0");
  const auto spec = build_process(cfg);
  const auto init = build_init(cfg, spec.n_nodes());
  apply_threads(cfg);

  TrajectoryOptions opts;
  opts.max_steps = cfg.steps;
  opts.record_states = cfg.full_state;
  const auto traj = run_trajectory(spec, NoiseSpec(cfg.eta), init, opts, cfg.seed);

  if (!cfg.out.empty()) {
    std::ostringstream body;
    if (cfg.format == "csv") {
      write_trajectory_csv(body, traj, cfg.full_state, csv_header_lines(cfg));
    } else {
      json j = {{"process", traj.process}, {"n_nodes", traj.n_nodes}, {"eta", traj.eta},
                {"seed", traj.seed},       {"max_steps", traj.max_steps}, {"init", traj.init},
                {"state_sum", traj.sums}};
      j["absorption"] = traj.absorption ? json{{"step", traj.absorption->step}, {"sign", traj.absorption->sign}}
                                        : json(nullptr);
      if (cfg.full_state) {
        std::vector<std::string> states;
        for (const auto& s : traj.states) states.push_back(s.to_string());
        j["state"] = states;
      }
      stamp(j, cfg);
      body << j.dump(2) << '\n';
    }
    write_file(cfg.out, body.str());
  }

  out << "process: " << traj.process << "  eta=" << format_real(cfg.eta) << "  seed=" << cfg.seed << '\n';
  if (traj.absorption) {
    out << "absorbed at step " << traj.absorption->step << " with S=" << (traj.absorption->sign > 0 ? "+" : "-")
        << traj.n_nodes << '\n';
  } else {
    out << "not absorbed within " << cfg.steps << " steps; final S=" << traj.sums.back() << '\n';
  }
  const auto last = static_cast<std::int64_t>(traj.sums.size()) - 1;
  if (last > cfg.burn_in) {
    const double avg = time_average_sum(traj, cfg.burn_in).back();
    out << "time-averaged S after burn-in " << cfg.burn_in << ": " << format_real(avg)
        << "  (|A|/N = " << format_real(std::abs(avg) / traj.n_nodes) << ")\n";
  }
  if (!cfg.out.empty()) out << "wrote " << cfg.out << '\n';
  return kSuccess;
}

int cmd_ensemble(const ExperimentConfig& cfg, std::ostream& out) {
  validate_eta(cfg);
  validate_counts(cfg, true);
  const auto spec = build_process(cfg);
  const auto init = build_init(cfg, spec.n_nodes());
  apply_threads(cfg);

  const auto ens = run_ensemble(spec, NoiseSpec(cfg.eta), init, cfg.steps, cfg.trials, cfg.seed);
  std::ostringstream body;
  if (cfg.format == "csv") {
    write_ensemble_csv(body, ens, csv_header_lines(cfg));
  } else {
    json j = ensemble_params_json(ens.params);
    j["mean_sum"] = ens.mean_sums;
    j["stderr"] = ens.stderr_sums;
    stamp(j, cfg);
    body << j.dump(2) << '\n';
  }
  if (cfg.out.empty()) {
    out << body.str();
  } else {
    write_file(cfg.out, body.str());
    out << "E S(0) = " << format_real(ens.mean_sums.front()) << ", E S(" << cfg.steps
        << ") = " << format_real(ens.mean_sums.back()) << " +- " << format_real(ens.stderr_sums.back()) << '\n'
        << "wrote " << cfg.out << '\n';
  }
  return kSuccess;
}

int cmd_decay(const ExperimentConfig& cfg, std::ostream& out) {
  validate_eta(cfg);
  require(cfg.eta > 1.0, "--eta: decay requires eta > 1; for eta <= 1 consensus is absorbing and E S(k) does not decay");
  validate_counts(cfg, true);
  require(cfg.floor > 0.0, "--floor must be > 0");
  const auto spec = build_process(cfg);
  const auto init = build_init(cfg, spec.n_nodes());
  apply_threads(cfg);

  const auto ens = run_ensemble(spec, NoiseSpec(cfg.eta), init, cfg.steps, cfg.trials, cfg.seed);
  const auto est = estimate_decay_exponent(ens, cfg.floor);
  json j = decay_to_json(est, ens);
  stamp(j, cfg);

  if (!cfg.ensemble_out.empty()) {
    std::ostringstream csv;
    write_ensemble_csv(csv, ens, csv_header_lines(cfg));
    write_file(cfg.ensemble_out, csv.str());
  }
  if (cfg.out.empty()) {
    out << j.dump(2) << '\n';
  } else {
    write_file(cfg.out, j.dump(2) + "\n");
    out << "exponent " << format_real(est.exponent) << " vs ln(eta) " << format_real(est.theoretical)
        << " (relative error " << format_real(est.relative_error()) << ", window " << est.fit_window.first << ".."
        << est.fit_window.second << ")\n"
        << "wrote " << cfg.out << '\n';
  }
  return kSuccess;
}

json states_json(const std::vector<StateIndex>& states, int n) {
  json arr = json::array();
  for (StateIndex s : states) arr.push_back(spin_state_of(s, n).to_string());
  return arr;
}

int cmd_exact(const ExperimentConfig& cfg, std::ostream& out) {
  validate_eta(cfg);
  require(cfg.threads >= 0, "--threads must be >= 0");
  require(cfg.cap >= 2 && cfg.cap <= 16, "--cap must lie in [2, 16]");
  if (cfg.topology == "binomial") {
    require(cfg.nodes <= kBinomialNodeCap, "--nodes: exact binomial chains are capped at n <= " +
                                               std::to_string(kBinomialNodeCap) +
                                               " (graph-enumeration cap 2^(n(n-1)/2) <= 1024)");
  }
  const auto spec = build_process(cfg);
  if (spec.is_fixed()) {
    require(spec.n_nodes() <= cfg.cap, "--nodes: exact fixed-graph chains are capped at N <= " +
                                           std::to_string(cfg.cap) + " (raise with --cap, at most 16)");
  }
  apply_threads(cfg);

  const int n = spec.n_nodes();
  ChainContext context{cfg.eta, std::nullopt, std::nullopt};
  TransitionMatrix P = [&] {
    if (auto b = spec.as_binomial()) {
      context.edge_prob = b->edge_prob;
      return transition_matrix_binomial(n, b->edge_prob, cfg.eta);
    }
    context.graph = spec.as_fixed()->graph;
    return transition_matrix_fixed(spec.as_fixed()->graph, cfg.eta, cfg.cap);
  }();

  const auto classes = classify_states(P);
  std::optional<StationaryDistribution> pi;
  if (classes.closed_classes.size() == 1) pi = stationary_distribution(P);
  const auto expected = expected_sum_step(P);

  json j = {{"n", n},
            {"eta", cfg.eta},
            {"process", spec.describe()},
            {"convention", "row-stochastic"},
            {"indexing", "bit i = node i, set = +1"}};
  if (context.edge_prob) j["p"] = *context.edge_prob;
  j["classification"] = {{"absorbing", states_json(classes.absorbing, n)},
                         {"transient_count", classes.transient.size()},
                         {"recurrent_nonabsorbing", states_json(classes.recurrent_nonabsorbing, n)},
                         {"closed_class_count", classes.closed_classes.size()}};
  if (pi) {
    j["stationary"] = {{"probs", pi->probs}, {"residual", pi->residual}, {"method", pi->method},
                       {"iterations", pi->iterations}};
  } else {
    j["stationary"] = nullptr;
  }
  j["expected_sum_step"] = expected;
  if (spec.is_fixed() && is_connected(spec.as_fixed()->graph)) {
    const auto w = agreement_threshold(spec.as_fixed()->graph);
    j["agreement_window"] = {w.lower, w.upper};
  }
  if (context.edge_prob && n == 2 && cfg.eta > 1.0) {
    const auto closed = two_node_closed_form(*context.edge_prob, cfg.eta);
    j["closed_form"] = {{"a", closed.a}, {"b", closed.b}, {"c", closed.c}, {"stationary", closed.stationary.probs}};
  }

  bool all_passed = true;
  std::vector<CheckResult> checks;
  if (cfg.verify) {
    checks = verify_chain(P, context);
    json arr = json::array();
    for (const auto& c : checks) {
      arr.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
      all_passed = all_passed && c.passed;
    }
    j["checks"] = arr;
  }
  stamp(j, cfg);

  if (!cfg.out.empty()) {
    std::ostringstream csv;
    write_matrix_csv(csv, P);
    write_file(cfg.out + ".matrix.csv", csv.str());
    write_file(cfg.out + ".json", j.dump(2) + "\n");
  }

  out << "process: " << spec.describe() << "  eta=" << format_real(cfg.eta) << "  states=" << P.n_states() << '\n'
      << "classification: " << classes.absorbing.size() << " absorbing, " << classes.transient.size()
      << " transient, " << classes.recurrent_nonabsorbing.size() << " recurrent non-absorbing ("
      << classes.closed_classes.size() << " closed classes)\n";
  if (pi) {
    out << "stationary (" << pi->method << ", residual " << format_real(pi->residual) << ")";
    if (P.n_states() <= 16) {
      out << ':';
      for (double v : pi->probs) out << ' ' << format_real(v);
    }
    out << '\n';
  } else {
    out << "stationary: not ergodic (more than one closed class)\n";
  }
  for (const auto& c : checks) out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
  if (!cfg.out.empty()) out << "wrote " << cfg.out << ".matrix.csv and " << cfg.out << ".json\n";
  return all_passed ? kSuccess : kRuntimeError;
}

struct SweepPoint {
  double value;
  double uncertainty;
};

SweepPoint sweep_point(const ExperimentConfig& cfg, const GraphProcessSpec& spec, double eta, std::uint64_t seed) {
  const NoiseSpec noise(eta);
  const auto init = build_init(cfg, spec.n_nodes());
  if (cfg.metric == "agreement_fraction") {
    const auto r = agreement_fraction(spec, noise, init, cfg.steps, cfg.trials, seed);
    return {r.fraction, std::sqrt(r.fraction * (1.0 - r.fraction) / static_cast<double>(cfg.trials))};
  }
  if (cfg.metric == "final_time_average") {
    const double n = spec.n_nodes();
    std::vector<double> values(static_cast<std::size_t>(cfg.trials));
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t t = 0; t < cfg.trials; ++t) {
      TrajectoryOptions opts;
      opts.max_steps = cfg.steps;
      const auto traj = run_trajectory(spec, noise, init, opts, derive_seed(seed, static_cast<std::uint64_t>(t)));
      values[t] = std::abs(time_average_sum(traj, cfg.burn_in, cfg.steps).back()) / n;
    }
    double mean = 0.0, sq = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    for (double v : values) sq += (v - mean) * (v - mean);
    const double se = values.size() > 1 ? std::sqrt(sq / static_cast<double>(values.size() - 1) /
                                                     static_cast<double>(values.size()))
                                        : 0.0;
    return {mean, se};
  }
  const auto ens = run_ensemble(spec, noise, init, cfg.steps, cfg.trials, seed);
  try {
    const auto est = estimate_decay_exponent(ens, cfg.floor);
    return {est.exponent, est.exponent_stderr};
  } catch (const InsufficientSignal&) {
    return {kUnset, kUnset};
  }
}

int cmd_sweep(ExperimentConfig cfg, std::ostream& out) {
  require(!cfg.metric.empty(), "--metric is required");
  require(!cfg.eta_grid.empty(), "--eta-grid: empty grid");
  for (double eta : cfg.eta_grid) require(eta > 0.0 && std::isfinite(eta), "--eta-grid: eta must be > 0");
  if (cfg.metric == "decay_exponent") {
    for (double eta : cfg.eta_grid) require(eta > 1.0, "--eta-grid: decay_exponent requires every eta > 1");
    require(cfg.floor > 0.0, "--floor must be > 0");
  }
  if (cfg.metric == "final_time_average") require(cfg.burn_in >= 0 && cfg.burn_in < cfg.steps, "--burn-in must lie in [0, steps)");
  validate_counts(cfg, true);
  // Decay fits need a nonzero E S(0), so that metric starts from consensus unless told otherwise.
  if (cfg.init.empty()) cfg.init = cfg.metric == "decay_exponent" ? "all-plus" : "random";

  std::vector<double> ps = cfg.p_grid;
  if (cfg.topology == "binomial") {
    if (ps.empty()) {
      require(!std::isnan(cfg.p), "--p or --p-grid is required for --topology binomial");
      ps.push_back(cfg.p);
    }
    for (double p : ps) require(p > 0.0 && p < 1.0, "--p-grid: p must lie in (0, 1)");
  } else {
    require(ps.empty(), "--p-grid only applies to --topology binomial");
    ps.push_back(kUnset);
  }
  // Validate the topology and init before any work or output.
  for (double p : ps) {
    ExperimentConfig probe = cfg;
    probe.p = p;
    build_init(probe, build_process(probe).n_nodes());
  }
  apply_threads(cfg);

  std::ostringstream body;
  for (const auto& line : csv_header_lines(cfg)) body << "# " << line << '\n';
  body << "point,eta,p,metric,value,uncertainty,seed\n";
  std::uint64_t point = 0;
  for (double p : ps) {
    ExperimentConfig point_cfg = cfg;
    point_cfg.p = p;
    const auto spec = build_process(point_cfg);
    for (double eta : cfg.eta_grid) {
      const std::uint64_t seed = cfg.seed + point;
      const auto r = sweep_point(point_cfg, spec, eta, seed);
      body << point << ',' << format_real(eta) << ',' << (std::isnan(p) ? std::string() : format_real(p)) << ','
           << cfg.metric << ',' << format_real(r.value) << ',' << format_real(r.uncertainty) << ',' << seed << '\n';
      ++point;
    }
  }
  if (cfg.out.empty()) {
    out << body.str();
  } else {
    write_file(cfg.out, body.str());
    out << "wrote " << point << " grid points to " << cfg.out << '\n';
  }
  return kSuccess;
}

const std::set<std::string> kBooleanFlags{"periodic", "verify", "no-timestamp", "full-state"};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  return s.substr(first, s.find_last_not_of(" \t\r") + 1 - first);
}

bool mentions(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args)
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  return false;
}

/// Replaces `--config FILE` by the file's key=value pairs as flags. Keys given
/// explicitly on the command line win. Lines starting with '#' or ';' and
/// [section] headers are ignored.
std::vector<std::string> expand_config(const std::vector<std::string>& args, const CLI::App& app) {
  std::vector<std::string> rest;
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      require(i + 1 < args.size(), "--config needs a file name");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty() || rest.empty()) return rest;
  const CLI::App* sub = app.get_subcommand_no_throw(rest.front());
  if (sub == nullptr) return rest;

  std::ifstream in(path);
  require(static_cast<bool>(in), "--config: cannot open '" + path + "'");
  std::vector<std::string> extra;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "--config: line " + std::to_string(line_no) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const std::string flag = "--" + key;
    require(key != "config" && sub->get_option_no_throw(flag) != nullptr,
            "--config: line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (mentions(rest, flag)) continue;
    if (kBooleanFlags.count(key)) {
      if (value == "true" || value == "1" || value == "yes") extra.push_back(flag);
      continue;
    }
    extra.push_back(flag);
    extra.push_back(value);
  }
  rest.insert(rest.begin() + 1, extra.begin(), extra.end());
  return rest;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Noisy bipolar consensus on fixed and random graphs: simulation and exact Markov-chain analysis",
               "noisycon"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  ExperimentConfig sim, ens, dec, exa, swp;

  auto* simulate = app.add_subcommand("simulate", "run one trajectory");
  add_common(simulate, sim, "ring", "random", 10000, 1);
  add_format(simulate, sim);
  simulate->add_flag("--full-state", sim.full_state, "append the +/- state string to every row");
  simulate->add_option("--burn-in", sim.burn_in, "steps excluded from the reported time average")->capture_default_str();

  auto* ensemble = app.add_subcommand("ensemble", "average S(k) over independent trials");
  add_common(ensemble, ens, "binomial", "all-plus", 100, 1000);
  add_trials(ensemble, ens);
  add_format(ensemble, ens);

  auto* decay = app.add_subcommand("decay", "estimate the decay exponent of E S(k) and compare with ln(eta)");
  add_common(decay, dec, "binomial", "all-plus", 200, 10000);
  add_trials(decay, dec);
  decay->add_option("--floor", dec.floor, "fit while |E S(k)| exceeds this many standard errors")->capture_default_str();
  decay->add_option("--ensemble-out", dec.ensemble_out, "also write the ensemble CSV here");

  auto* exact = app.add_subcommand("exact", "build and analyse the exact 2^N-state chain");
  add_common(exact, exa, "ring", "random", 1, 1);
  exact->add_flag("--verify", exa.verify, "run the invariant checks and report pass/fail");
  exact->add_option("--cap", exa.cap, "fixed-graph node cap")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "evaluate a metric over a grid of eta (and p)");
  add_common(sweep, swp, "ring", "", 10000, 50);
  add_trials(sweep, swp);
  sweep->add_option("--metric", swp.metric, "agreement_fraction|final_time_average|decay_exponent")
      ->check(CLI::IsMember({"agreement_fraction", "final_time_average", "decay_exponent"}));
  sweep->add_option("--eta-grid", swp.eta_grid, "comma-separated eta values")->delimiter(',');
  sweep->add_option("--p-grid", swp.p_grid, "comma-separated edge probabilities")->delimiter(',');
  sweep->add_option("--burn-in", swp.burn_in, "burn-in for final_time_average")->capture_default_str();
  sweep->add_option("--floor", swp.floor, "signal floor for decay_exponent")->capture_default_str();

  std::vector<std::string> expanded;
  try {
    expanded = expand_config(args, app);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
  std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kSuccess : kUsageError;
  }

  try {
    if (simulate->parsed()) return sim.command = "simulate", cmd_simulate(sim, out);
    if (ensemble->parsed()) return ens.command = "ensemble", cmd_ensemble(ens, out);
    if (decay->parsed()) return dec.command = "decay", cmd_decay(dec, out);
    if (exact->parsed()) return exa.command = "exact", cmd_exact(exa, out);
    swp.command = "sweep";
    return cmd_sweep(swp, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const InvalidParameter& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ResourceLimit& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace noisycon::cli
