#include "noisycon/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "noisycon/errors.hpp"
#include "noisycon/io.hpp"
#include "noisycon/rng.hpp"

namespace noisycon {

namespace {

EnsembleParams make_params(const GraphProcessSpec& spec, const NoiseSpec& noise, const InitPolicy& init,
                           std::int64_t steps, std::int64_t n_trials, std::uint64_t master_seed) {
  EnsembleParams params;
  params.process = spec.describe();
  params.n_nodes = spec.n_nodes();
  if (auto b = spec.as_binomial()) params.edge_prob = b->edge_prob;
  params.eta = noise.eta();
  params.init = describe(init);
  params.steps = steps;
  params.n_trials = n_trials;
  params.master_seed = master_seed;
  return params;
}

void check_ensemble_args(std::int64_t steps, std::int64_t n_trials) {
  if (n_trials < 1) throw InvalidParameter("n_trials must be >= 1");
  if (steps < 1) throw InvalidParameter("steps must be >= 1");
}

// Integer accumulators for a subset of trials.
struct Accumulator {
  std::vector<std::int64_t> sums, sums_sq;
  std::vector<std::vector<std::int64_t>> blocks;

  Accumulator(std::int64_t steps, int n_blocks)
      : sums(static_cast<std::size_t>(steps + 1), 0),
        sums_sq(static_cast<std::size_t>(steps + 1), 0),
        blocks(static_cast<std::size_t>(n_blocks), std::vector<std::int64_t>(static_cast<std::size_t>(steps + 1), 0)) {}

  void add(const Trajectory& traj, std::size_t block) {
    auto& b = blocks[block];
    for (std::size_t k = 0; k < sums.size(); ++k) {
      const std::int64_t s = traj.sum_at(static_cast<std::int64_t>(k));
      sums[k] += s;
      sums_sq[k] += s * s;
      b[k] += s;
    }
  }

  void merge(const Accumulator& other) {
    for (std::size_t k = 0; k < sums.size(); ++k) {
      sums[k] += other.sums[k];
      sums_sq[k] += other.sums_sq[k];
    }
    for (std::size_t g = 0; g < blocks.size(); ++g)
      for (std::size_t k = 0; k < sums.size(); ++k) blocks[g][k] += other.blocks[g][k];
  }
};

int block_count(std::int64_t n_trials, const EnsembleOptions& options) {
  return static_cast<int>(std::clamp<std::int64_t>(options.jackknife_blocks, 1, n_trials));
}

std::size_t block_of(std::int64_t trial, std::int64_t n_trials, int n_blocks) {
  return static_cast<std::size_t>(trial * n_blocks / n_trials);
}

Trajectory run_trial(const GraphProcessSpec& spec, const NoiseSpec& noise, const InitPolicy& init,
                     std::int64_t steps, std::uint64_t master_seed, std::int64_t trial) {
  TrajectoryOptions opts;
  opts.max_steps = steps;
  return run_trajectory(spec, noise, init, opts, derive_seed(master_seed, static_cast<std::uint64_t>(trial)));
}

EnsembleResult finish(EnsembleParams params, Accumulator acc) {
  EnsembleResult out = ensemble_from_totals(std::move(params), std::move(acc.sums), std::move(acc.sums_sq));
  out.block_sums = std::move(acc.blocks);
  const auto n_blocks = static_cast<int>(out.block_sums.size());
  out.block_trials.assign(out.block_sums.size(), 0);
  for (std::int64_t t = 0; t < out.params.n_trials; ++t) ++out.block_trials[block_of(t, out.params.n_trials, n_blocks)];
  return out;
}

}  // namespace

EnsembleResult ensemble_from_totals(EnsembleParams params, std::vector<std::int64_t> totals,
                                    std::vector<std::int64_t> totals_sq) {
  EnsembleResult out;
  const std::int64_t n = params.n_trials;
  out.params = std::move(params);
  out.mean_sums.resize(totals.size());
  out.stderr_sums.resize(totals.size());
  for (std::size_t k = 0; k < totals.size(); ++k) {
    out.mean_sums[k] = static_cast<double>(totals[k]) / static_cast<double>(n);
    if (n > 1) {
      // n * sum(x^2) - (sum x)^2 is exact in 128-bit integers.
      const __int128 centered = static_cast<__int128>(n) * totals_sq[k] - static_cast<__int128>(totals[k]) * totals[k];
      const double var = static_cast<double>(centered) / (static_cast<double>(n) * static_cast<double>(n - 1));
      out.stderr_sums[k] = std::sqrt(std::max(0.0, var) / static_cast<double>(n));
    } else {
      out.stderr_sums[k] = 0.0;
    }
  }
  out.total_sums = std::move(totals);
  return out;
}

EnsembleResult run_ensemble(const GraphProcessSpec& spec, const NoiseSpec& noise, const InitPolicy& init,
                            std::int64_t steps, std::int64_t n_trials, std::uint64_t master_seed,
                            const EnsembleOptions& options) {
  check_ensemble_args(steps, n_trials);
  const int n_blocks = block_count(n_trials, options);
  Accumulator total(steps, n_blocks);
#pragma omp parallel
  {
    Accumulator local(steps, n_blocks);
#pragma omp for schedule(dynamic, 16)
    for (std::int64_t t = 0; t < n_trials; ++t) {
      local.add(run_trial(spec, noise, init, steps, master_seed, t), block_of(t, n_trials, n_blocks));
    }
#pragma omp critical(noisycon_ensemble_merge)
    total.merge(local);
  }
  return finish(make_params(spec, noise, init, steps, n_trials, master_seed), std::move(total));
}

EnsembleResult run_ensemble_serial(const GraphProcessSpec& spec, const NoiseSpec& noise, const InitPolicy& init,
                                   std::int64_t steps, std::int64_t n_trials, std::uint64_t master_seed,
                                   const EnsembleOptions& options) {
  check_ensemble_args(steps, n_trials);
  const int n_blocks = block_count(n_trials, options);
  Accumulator total(steps, n_blocks);
  for (std::int64_t t = 0; t < n_trials; ++t) {
    total.add(run_trial(spec, noise, init, steps, master_seed, t), block_of(t, n_trials, n_blocks));
  }
  return finish(make_params(spec, noise, init, steps, n_trials, master_seed), std::move(total));
}

namespace {

struct LineFit {
  double slope, intercept, r_squared;
};

LineFit fit_line(const std::vector<double>& y) {
  const auto n = static_cast<double>(y.size());
  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    mean_x += static_cast<double>(k);
    mean_y += y[k];
  }
  mean_x /= n;
  mean_y /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double dx = static_cast<double>(k) - mean_x;
    const double dy = y[k] - mean_y;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  const double slope = sxy / sxx;
  const double r2 = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  return {slope, mean_y - slope * mean_x, r2};
}

// -ln(m_k / m_0) for k in [0, last]; empty if any ratio is non-positive.
std::vector<double> log_decay(std::span<const double> means, std::size_t last) {
  std::vector<double> y;
  y.reserve(last + 1);
  for (std::size_t k = 0; k <= last; ++k) {
    const double ratio = means[k] / means[0];
    if (!(ratio > 0.0)) return {};
    y.push_back(-std::log(ratio));
  }
  return y;
}

}  // namespace

DecayEstimate estimate_decay_exponent(const EnsembleResult& ens, double floor) {
  const auto& mean = ens.mean_sums;
  if (mean.empty() || mean[0] == 0.0) throw InvalidParameter("decay fit needs E S(0) != 0");
  const double sign = mean[0] > 0.0 ? 1.0 : -1.0;

  std::size_t last = 0;
  while (last + 1 < mean.size()) {
    const double m = sign * mean[last + 1];
    if (!(m > 0.0) || !(m > floor * ens.stderr_sums[last + 1])) break;
    ++last;
  }
  if (last + 1 < 3) {
    throw InsufficientSignal("only " + std::to_string(last + 1) + " steps stay above " + format_real(floor) +
                             " standard errors; run more trials");
  }

  DecayEstimate est;
  const auto fit = fit_line(log_decay(mean, last));
  est.exponent = fit.slope;
  est.intercept = fit.intercept;
  est.r_squared = fit.r_squared;
  est.fit_window = {0, static_cast<std::int64_t>(last)};
  est.theoretical = std::log(ens.params.eta);

  // Leave-one-block-out jackknife on the same window.
  est.exponent_stderr = std::numeric_limits<double>::quiet_NaN();
  const std::size_t n_blocks = ens.block_sums.size();
  if (n_blocks >= 2) {
    std::vector<double> slopes;
    std::vector<double> loo(last + 1);
    for (std::size_t g = 0; g < n_blocks; ++g) {
      const auto remaining = static_cast<double>(ens.params.n_trials - ens.block_trials[g]);
      for (std::size_t k = 0; k <= last; ++k)
        loo[k] = static_cast<double>(ens.total_sums[k] - ens.block_sums[g][k]) / remaining;
      const auto y = log_decay(loo, last);
      if (y.empty()) {
        slopes.clear();
        break;
      }
      slopes.push_back(fit_line(y).slope);
    }
    if (slopes.size() == n_blocks) {
      double mean_slope = 0.0;
      for (double s : slopes) mean_slope += s;
      mean_slope /= static_cast<double>(n_blocks);
      double ss = 0.0;
      for (double s : slopes) ss += (s - mean_slope) * (s - mean_slope);
      est.exponent_stderr = std::sqrt(ss * static_cast<double>(n_blocks - 1) / static_cast<double>(n_blocks));
    }
  }
  return est;
}

AgreementResult agreement_fraction(const GraphProcessSpec& spec, const NoiseSpec& noise, const InitPolicy& init,
                                   std::int64_t step_budget, std::int64_t n_trials, std::uint64_t master_seed) {
  check_ensemble_args(step_budget, n_trials);
  AgreementResult out;
  out.n_trials = n_trials;
  if (noise.eta() > 1.0) out.warning = "eta > 1: consensus is not absorbing, agreement is not expected";
  out.absorption_times.assign(static_cast<std::size_t>(n_trials), -1);
  std::vector<int> signs(static_cast<std::size_t>(n_trials), 0);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t t = 0; t < n_trials; ++t) {
    const auto traj = run_trial(spec, noise, init, step_budget, master_seed, t);
    if (traj.absorption) {
      out.absorption_times[t] = traj.absorption->step;
      signs[t] = traj.absorption->sign;
    }
  }

  std::vector<std::int64_t> absorbed;
  for (std::int64_t t = 0; t < n_trials; ++t) {
    if (out.absorption_times[t] < 0) continue;
    absorbed.push_back(out.absorption_times[t]);
    if (signs[t] > 0) ++out.n_absorbed_plus;
  }
  out.n_absorbed = static_cast<std::int64_t>(absorbed.size());
  out.fraction = static_cast<double>(out.n_absorbed) / static_cast<double>(n_trials);
  if (!absorbed.empty()) {
    std::sort(absorbed.begin(), absorbed.end());
    auto nearest_rank = [&](double q) {
      auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(absorbed.size())));
      return static_cast<double>(absorbed[std::max<std::size_t>(rank, 1) - 1]);
    };
    out.median_time = nearest_rank(0.5);
    out.p90_time = nearest_rank(0.9);
    double total = 0.0;
    for (auto t : absorbed) total += static_cast<double>(t);
    out.mean_time = total / static_cast<double>(absorbed.size());
  }
  return out;
}

std::vector<double> time_average_sum(const Trajectory& traj, std::int64_t burn_in, std::optional<std::int64_t> horizon) {
  if (burn_in < 0) throw InvalidParameter("burn_in must be >= 0");
  const std::int64_t last = horizon.value_or(static_cast<std::int64_t>(traj.sums.size()) - 1);
  if (last <= burn_in) throw InvalidParameter("trajectory must extend past burn_in");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(last - burn_in));
  std::int64_t running = 0;
  for (std::int64_t k = burn_in + 1; k <= last; ++k) {
    running += traj.sum_at(k);
    out.push_back(static_cast<double>(running) / static_cast<double>(k - burn_in));
  }
  return out;
}

void write_ensemble_csv(std::ostream& out, const EnsembleResult& ens, const std::vector<std::string>& extra_header) {
  const auto& p = ens.params;
  out << "# process=" << p.process << '\n'
      << "# n_nodes=" << p.n_nodes << '\n'
      << "# eta=" << format_real(p.eta) << '\n'
      << "# init=" << p.init << '\n'
      << "# steps=" << p.steps << '\n'
      << "# trials=" << p.n_trials << '\n'
      << "# master_seed=" << p.master_seed << '\n';
  for (const auto& line : extra_header) out << "# " << line << '\n';
  out << "step,mean_sum,stderr\n";
  for (std::size_t k = 0; k < ens.mean_sums.size(); ++k) {
    out << k << ',' << format_real(ens.mean_sums[k]) << ',' << format_real(ens.stderr_sums[k]) << '\n';
  }
}

nlohmann::json ensemble_params_json(const EnsembleParams& params) {
  nlohmann::json j = {
      {"process", params.process},
      {"n_nodes", params.n_nodes},
      {"eta", params.eta},
      {"init", params.init},
      {"steps", params.steps},
      {"n_trials", params.n_trials},
      {"master_seed", params.master_seed},
  };
  j["p"] = params.edge_prob ? nlohmann::json(*params.edge_prob) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json decay_to_json(const DecayEstimate& est, const EnsembleResult& ens) {
  const auto& p = ens.params;
  nlohmann::json j = {
      {"exponent", est.exponent},
      {"theoretical", est.theoretical},
      {"relative_error", est.relative_error()},
      {"fit_window", {est.fit_window.first, est.fit_window.second}},
      {"r_squared", est.r_squared},
      {"n_trials", p.n_trials},
      {"eta", p.eta},
      {"n_nodes", p.n_nodes},
      {"master_seed", p.master_seed},
      {"process", p.process},
      {"init", p.init},
      {"steps", p.steps},
  };
  j["p"] = p.edge_prob ? nlohmann::json(*p.edge_prob) : nlohmann::json(nullptr);
  j["exponent_stderr"] = std::isfinite(est.exponent_stderr) ? nlohmann::json(est.exponent_stderr) : nlohmann::json(nullptr);
  return j;
}

}  // namespace noisycon
