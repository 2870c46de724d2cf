#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikelab/error.hpp"
#include "spikelab/model.hpp"

namespace spikelab {

enum class ExperimentKind {
  esd_universality,
  alignment_sweep,
  threshold_probe,
  derivative_check,
  rank_r_decoupling,
  outlier_check,
  variance_check,
};

const char* to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);

/// Thrown by validate(); fields() names every offending field.
class ConfigValidationError : public ConfigError {
 public:
  explicit ConfigValidationError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }
  std::vector<std::string> fields() const;

 private:
  std::vector<std::string> problems_;
};

struct Tolerances {
  double ks = 0.05;
  double edge = 0.1;
  double lambda = 0.05;
  double alignment = 0.05;
  /// Upper bound on median alignment and on median lambda - hi below threshold.
  double alignment_floor = 0.3;
  double lambda_floor = 0.15;
  /// Lower bound on the median alignment well above threshold.
  double alignment_high = 0.6;
  double derivative = 1e-3;
  double orthogonality = 1e-10;
  double identity = 1e-8;
  double cross = 0.1;
  double variance_factor = 5.0;
  /// Fraction of paired trials in which KS decreases with N.
  double trend_fraction = 0.7;
  /// Outlier detection margin beyond the bulk edges.
  double outlier_margin = 0.15;

  bool operator==(const Tolerances&) const = default;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::alignment_sweep;
  /// One or more dimension profiles; kinds that compare sizes use several.
  std::vector<std::vector<std::size_t>> profiles{{100, 100, 100}};
  std::vector<std::string> noise{"gaussian"};
  /// SNR grid, strictly increasing. For rank_r_decoupling: the SNRs of one
  /// rank-R model, non-increasing. 0 means pure noise (esd_universality).
  std::vector<double> betas{2.0};
  int trials = 1;
  std::uint64_t seed = 0;
  int max_iter = 2000;
  double solver_tol = 1e-10;
  std::string spike_layout = "canonical";
  Tolerances tolerances;
  /// threshold_probe: the window that must contain the 0.5-crossing.
  std::vector<double> crossing_window{1.0, 1.35};
  /// derivative_check: multi-indices per trial.
  int derivative_samples = 50;
  bool dump_eigenvalues = false;
  std::string output_dir = "spikelab_out";
  /// 0 means the number of hardware threads.
  int threads = 0;

  bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Unknown keys and type errors are reported together with the range checks.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Throws ConfigValidationError listing every violated field.
void validate(const ExperimentConfig& config);

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::size_t profile = 0;
  std::size_t n_total = 0;
  std::string noise;
  double beta = 0.0;
  /// Index of the trial within its (profile, noise, beta) cell.
  std::size_t replicate = 0;
  /// NaN marks a quantity the kind does not produce; the CSV leaves it empty.
  double lambda = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> alignments;
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
  std::vector<double> outliers;
  double ks = std::numeric_limits<double>::quiet_NaN();
  /// Kind-specific scalars.
  std::map<std::string, double> metrics;
  /// Ascending spectrum of Phi and its non-outlier part; kept in memory for
  /// the pairwise comparisons and the optional dumps.
  std::vector<double> eigenvalues;
  std::vector<double> bulk;
  std::string error;
  double wall_time_s = 0.0;

  bool ok() const { return error.empty(); }
};

/// Every (profile, noise, beta, replicate) work unit in index order.
struct WorkUnit {
  std::size_t index = 0;
  std::size_t profile = 0;
  std::string noise;
  double beta = 0.0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
};
std::vector<WorkUnit> plan_trials(const ExperimentConfig& config);

/// Runs one unit; failures are captured in TrialResult::error.
TrialResult run_trial(const ExperimentConfig& config, const WorkUnit& unit);

/// min(requested or hardware threads, SPIKELAB_THREADS, units), at least 1.
int worker_count(const ExperimentConfig& config, std::size_t units);

struct ExperimentResult {
  std::vector<TrialResult> trials;
  nlohmann::json summary;
};

/// Runs every unit, writes trials.csv and summary.json into output_dir
/// (created if needed) and returns both.
ExperimentResult run_experiment(const ExperimentConfig& config);
/// The same without touching the filesystem.
ExperimentResult run_trials(const ExperimentConfig& config);

nlohmann::json summarize(const ExperimentConfig& config, const std::vector<TrialResult>& trials);

inline constexpr int kCsvSchema = 1;
void write_trials_csv(std::ostream& out, const std::vector<TrialResult>& trials,
                      bool include_wall_time = true);

}  // namespace spikelab
