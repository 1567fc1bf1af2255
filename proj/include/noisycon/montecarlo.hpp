#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "noisycon/dynamics.hpp"
#include "noisycon/graph.hpp"

namespace noisycon {

struct EnsembleParams {
  std::string process;
  int n_nodes = 0;
  std::optional<double> edge_prob;
  double eta = 0.0;
  std::string init;
  std::int64_t steps = 0;
  std::int64_t n_trials = 0;
  std::uint64_t master_seed = 0;
};

/// Cross-trial statistics of S(k), k = 0..steps.
///
/// Per-step totals are accumulated in exact integer arithmetic, so the merged
/// result does not depend on how trials were scheduled across threads.
struct EnsembleResult {
  EnsembleParams params;
  std::vector<double> mean_sums;
  std::vector<double> stderr_sums;
  std::vector<std::int64_t> total_sums;
  /// Totals per contiguous block of trials, for jackknife error estimates.
  std::vector<std::vector<std::int64_t>> block_sums;
  std::vector<std::int64_t> block_trials;
};

struct EnsembleOptions {
  int jackknife_blocks = 20;
};

/// Trial t runs from derive_seed(master_seed, t). Trials are spread over
/// OpenMP threads.
EnsembleResult run_ensemble(const GraphProcessSpec& spec, const NoiseSpec& noise, const InitPolicy& init,
                            std::int64_t steps, std::int64_t n_trials, std::uint64_t master_seed,
                            const EnsembleOptions& options = {});
/// Trial-by-trial reference loop; must agree bit-for-bit with run_ensemble.
EnsembleResult run_ensemble_serial(const GraphProcessSpec& spec, const NoiseSpec& noise, const InitPolicy& init,
                                   std::int64_t steps, std::int64_t n_trials, std::uint64_t master_seed,
                                   const EnsembleOptions& options = {});

/// Builds the statistics from per-step totals only (no jackknife blocks).
EnsembleResult ensemble_from_totals(EnsembleParams params, std::vector<std::int64_t> totals,
                                    std::vector<std::int64_t> totals_sq);

struct DecayEstimate {
  double exponent = 0.0;
  double exponent_stderr = 0.0;  ///< jackknife over trial blocks; NaN when unavailable
  double theoretical = 0.0;      ///< ln eta
  double intercept = 0.0;
  std::pair<std::int64_t, std::int64_t> fit_window{0, 0};
  double r_squared = 0.0;

  double relative_error() const { return (exponent - theoretical) / theoretical; }
};

inline constexpr double kDefaultSignalFloor = 5.0;

/// Least-squares slope of -ln(E S(k) / E S(0)) against k over the longest
/// prefix where |E S(k)| stays above floor standard errors.
/// Throws InvalidParameter if E S(0) = 0, InsufficientSignal if fewer than 3 points qualify.
DecayEstimate estimate_decay_exponent(const EnsembleResult& ens, double floor = kDefaultSignalFloor);

struct AgreementResult {
  std::int64_t n_trials = 0;
  std::int64_t n_absorbed = 0;
  std::int64_t n_absorbed_plus = 0;
  double fraction = 0.0;
  /// Over absorbed trials only; nearest-rank percentiles. Empty when none absorbed.
  std::optional<double> median_time;
  std::optional<double> p90_time;
  std::optional<double> mean_time;
  std::vector<std::int64_t> absorption_times;  ///< per trial, -1 when not absorbed
  std::string warning;
};

AgreementResult agreement_fraction(const GraphProcessSpec& spec, const NoiseSpec& noise, const InitPolicy& init,
                                   std::int64_t step_budget, std::int64_t n_trials, std::uint64_t master_seed);

/// A(k) = mean of S(burn_in+1..k) for k = burn_in+1..horizon. Element 0 is A(burn_in+1).
/// `horizon` defaults to the last recorded step; steps past an early
/// absorption stop repeat the absorbed sum.
std::vector<double> time_average_sum(const Trajectory& traj, std::int64_t burn_in,
                                     std::optional<std::int64_t> horizon = std::nullopt);

void write_ensemble_csv(std::ostream& out, const EnsembleResult& ens,
                        const std::vector<std::string>& extra_header = {});
nlohmann::json ensemble_params_json(const EnsembleParams& params);
nlohmann::json decay_to_json(const DecayEstimate& est, const EnsembleResult& ens);

}  // namespace noisycon
