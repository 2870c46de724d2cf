#include "spikelab/lab.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "spikelab/contraction.hpp"
#include "spikelab/estimator.hpp"
#include "spikelab/limitlaw.hpp"
#include "spikelab/spectrum.hpp"

namespace spikelab {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct KindName {
  ExperimentKind kind;
  const char* name;
};

constexpr KindName kKinds[] = {
    {ExperimentKind::esd_universality, "esd_universality"},
    {ExperimentKind::alignment_sweep, "alignment_sweep"},
    {ExperimentKind::threshold_probe, "threshold_probe"},
    {ExperimentKind::derivative_check, "derivative_check"},
    {ExperimentKind::rank_r_decoupling, "rank_r_decoupling"},
    {ExperimentKind::outlier_check, "outlier_check"},
    {ExperimentKind::variance_check, "variance_check"},
};

std::string format_double(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

const char* to_string(ExperimentKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (const auto& k : kKinds) {
    if (name == k.name) return k.kind;
  }
  throw ConfigError("unknown experiment kind '" + name + "'");
}

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string out = "invalid experiment config:";
  for (const auto& p : problems) out += "\n  " + p;
  return out;
}

}  // namespace

ConfigValidationError::ConfigValidationError(std::vector<std::string> problems)
    : ConfigError(join_problems(problems)), problems_(std::move(problems)) {}

std::vector<std::string> ConfigValidationError::fields() const {
  std::vector<std::string> out;
  for (const auto& p : problems_) {
    std::string field = p.substr(0, p.find(':'));
    if (std::find(out.begin(), out.end(), field) == out.end()) out.push_back(field);
  }
  return out;
}

// ---------------------------------------------------------------------------
// config serialization

namespace {

struct TolField {
  const char* name;
  double Tolerances::*member;
};

constexpr TolField kTolFields[] = {
    {"ks", &Tolerances::ks},
    {"edge", &Tolerances::edge},
    {"lambda", &Tolerances::lambda},
    {"alignment", &Tolerances::alignment},
    {"alignment_floor", &Tolerances::alignment_floor},
    {"lambda_floor", &Tolerances::lambda_floor},
    {"alignment_high", &Tolerances::alignment_high},
    {"derivative", &Tolerances::derivative},
    {"orthogonality", &Tolerances::orthogonality},
    {"identity", &Tolerances::identity},
    {"cross", &Tolerances::cross},
    {"variance_factor", &Tolerances::variance_factor},
    {"trend_fraction", &Tolerances::trend_fraction},
    {"outlier_margin", &Tolerances::outlier_margin},
};

void validate_into(const ExperimentConfig& c, std::vector<std::string>& problems) {
  auto bad = [&](const std::string& field, const std::string& why) {
    problems.push_back(field + ": " + why);
  };

  if (c.profiles.empty()) bad("profiles", "at least one profile is required");
  std::size_t min_dim = SIZE_MAX;
  for (std::size_t k = 0; k < c.profiles.size(); ++k) {
    const auto& dims = c.profiles[k];
    const std::string field = "profiles[" + std::to_string(k) + "]";
    if (dims.size() < 2) {
      bad(field, "needs at least two modes");
      continue;
    }
    if (c.kind == ExperimentKind::derivative_check && dims.size() < 3) {
      bad(field, "derivative_check needs order >= 3");
    }
    bool ok = true;
    for (auto n : dims) {
      if (n < 1) ok = false;
      min_dim = std::min(min_dim, n);
    }
    if (!ok) {
      bad(field, "mode sizes must be >= 1");
      continue;
    }
    if (DimProfile(dims).entry_count() > kDefaultEntryBudget) {
      bad(field, "tensor exceeds the entry budget of " + std::to_string(kDefaultEntryBudget));
    }
  }

  if (c.noise.empty()) bad("noise", "at least one noise law is required");
  std::set<std::string> seen;
  for (const auto& name : c.noise) {
    try {
      const std::string canonical(to_string(parse_noise_law(name)));
      if (!seen.insert(canonical).second) bad("noise", "duplicate law '" + name + "'");
    } catch (const Error& e) {
      bad("noise", e.what());
    }
  }

  if (c.betas.empty()) bad("betas", "at least one SNR is required");
  for (double b : c.betas) {
    if (!std::isfinite(b)) bad("betas", "values must be finite");
  }
  if (c.kind == ExperimentKind::rank_r_decoupling) {
    for (std::size_t k = 0; k < c.betas.size(); ++k) {
      if (!(c.betas[k] > 0.0)) bad("betas", "SNRs must be > 0");
      if (k > 0 && c.betas[k] > c.betas[k - 1]) bad("betas", "rank-R SNRs must be non-increasing");
    }
    if (min_dim != SIZE_MAX && c.betas.size() > min_dim) {
      bad("betas", "rank exceeds the smallest mode size");
    }
  } else {
    for (std::size_t k = 1; k < c.betas.size(); ++k) {
      if (!(c.betas[k] > c.betas[k - 1])) {
        bad("betas", "grid must be strictly increasing");
        break;
      }
    }
    for (double b : c.betas) {
      if (c.kind == ExperimentKind::esd_universality ? b < 0.0 : !(b > 0.0)) {
        bad("betas", c.kind == ExperimentKind::esd_universality ? "SNRs must be >= 0"
                                                                 : "SNRs must be > 0");
        break;
      }
    }
  }
  if (c.kind == ExperimentKind::threshold_probe && c.betas.size() < 2) {
    bad("betas", "threshold_probe needs at least two SNRs");
  }

  if (c.trials < 1) bad("trials", "must be >= 1");
  if (c.max_iter < 1) bad("max_iter", "must be >= 1");
  if (!(c.solver_tol > 0.0)) bad("solver_tol", "must be > 0");
  if (c.spike_layout != "canonical" && c.spike_layout != "haar") {
    bad("spike_layout", "must be 'canonical' or 'haar'");
  }
  for (const auto& f : kTolFields) {
    const double v = c.tolerances.*f.member;
    if (!(v > 0.0) || !std::isfinite(v)) bad(std::string("tolerances.") + f.name, "must be > 0");
  }
  if (c.tolerances.trend_fraction > 1.0) bad("tolerances.trend_fraction", "must be <= 1");
  if (c.crossing_window.size() != 2 || !(c.crossing_window[0] < c.crossing_window[1])) {
    bad("crossing_window", "must be [lo, hi] with lo < hi");
  }
  if (c.derivative_samples < 1) bad("derivative_samples", "must be >= 1");
  if (c.output_dir.empty()) bad("output_dir", "must not be empty");
  if (c.threads < 0) bad("threads", "must be >= 0");
}

template <class T>
void read_field(const json& j, const char* key, T& out, std::vector<std::string>& problems) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    problems.push_back(std::string(key) + ": " + e.what());
  }
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json tol = json::object();
  for (const auto& f : kTolFields) tol[f.name] = c.tolerances.*f.member;
  return json{{"kind", to_string(c.kind)},
              {"profiles", c.profiles},
              {"noise", c.noise},
              {"betas", c.betas},
              {"trials", c.trials},
              {"seed", c.seed},
              {"max_iter", c.max_iter},
              {"solver_tol", c.solver_tol},
              {"spike_layout", c.spike_layout},
              {"tolerances", tol},
              {"crossing_window", c.crossing_window},
              {"derivative_samples", c.derivative_samples},
              {"dump_eigenvalues", c.dump_eigenvalues},
              {"output_dir", c.output_dir},
              {"threads", c.threads}};
}

ExperimentConfig config_from_json(const json& j) {
  std::vector<std::string> problems;
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigValidationError({"config: must be a JSON object"});

  static const std::set<std::string> known{
      "kind",       "profiles",        "noise",           "betas",
      "trials",     "seed",            "max_iter",        "solver_tol",
      "spike_layout", "tolerances",    "crossing_window", "derivative_samples",
      "dump_eigenvalues", "output_dir", "threads"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) problems.push_back(key + ": unknown field");
  }

  if (!j.contains("kind")) {
    problems.push_back("kind: required");
  } else {
    try {
      c.kind = parse_experiment_kind(j.at("kind").get<std::string>());
    } catch (const std::exception& e) {
      problems.push_back(std::string("kind: ") + e.what());
    }
  }
  read_field(j, "profiles", c.profiles, problems);
  read_field(j, "noise", c.noise, problems);
  read_field(j, "betas", c.betas, problems);
  read_field(j, "trials", c.trials, problems);
  read_field(j, "seed", c.seed, problems);
  read_field(j, "max_iter", c.max_iter, problems);
  read_field(j, "solver_tol", c.solver_tol, problems);
  read_field(j, "spike_layout", c.spike_layout, problems);
  read_field(j, "crossing_window", c.crossing_window, problems);
  read_field(j, "derivative_samples", c.derivative_samples, problems);
  read_field(j, "dump_eigenvalues", c.dump_eigenvalues, problems);
  read_field(j, "output_dir", c.output_dir, problems);
  read_field(j, "threads", c.threads, problems);
  if (j.contains("tolerances")) {
    const json& t = j.at("tolerances");
    if (!t.is_object()) {
      problems.push_back("tolerances: must be an object");
    } else {
      for (const auto& [key, value] : t.items()) {
        auto it = std::find_if(std::begin(kTolFields), std::end(kTolFields),
                               [&](const TolField& f) { return key == f.name; });
        if (it == std::end(kTolFields)) {
          problems.push_back("tolerances." + key + ": unknown field");
          continue;
        }
        if (!value.is_number()) {
          problems.push_back("tolerances." + key + ": must be a number");
          continue;
        }
        c.tolerances.*(it->member) = value.get<double>();
      }
    }
  }

  validate_into(c, problems);
  if (!problems.empty()) throw ConfigValidationError(std::move(problems));
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void validate(const ExperimentConfig& config) {
  std::vector<std::string> problems;
  validate_into(config, problems);
  if (!problems.empty()) throw ConfigValidationError(std::move(problems));
}

// ---------------------------------------------------------------------------
// trials

std::vector<WorkUnit> plan_trials(const ExperimentConfig& c) {
  std::vector<WorkUnit> units;
  // A rank-R experiment is one model per trial, so its SNR list is one cell.
  const std::vector<double> cells =
      c.kind == ExperimentKind::rank_r_decoupling ? std::vector<double>{c.betas.front()} : c.betas;
  for (std::size_t p = 0; p < c.profiles.size(); ++p) {
    for (const auto& noise : c.noise) {
      for (double beta : cells) {
        for (int r = 0; r < c.trials; ++r) {
          WorkUnit u;
          u.index = units.size();
          u.profile = p;
          u.noise = noise;
          u.beta = beta;
          u.replicate = static_cast<std::size_t>(r);
          u.seed = trial_seed(c.seed, u.index);
          units.push_back(std::move(u));
        }
      }
    }
  }
  return units;
}

namespace {

/// Per-profile objects shared read-only by the workers.
struct ProfileContext {
  DimProfile profile;
  LimitLaw law;
  CdfTable cdf;
};

std::vector<ProfileContext> make_contexts(const ExperimentConfig& c, std::vector<bool> needed) {
  std::vector<ProfileContext> out;
  for (std::size_t k = 0; k < c.profiles.size(); ++k) {
    DimProfile p(c.profiles[k]);
    LimitLaw law(p.ratios());
    const bool want_cdf = c.kind == ExperimentKind::esd_universality && needed[k];
    CdfTable cdf = !want_cdf              ? CdfTable(std::vector<double>{-1.0, 1.0}, {1.0, 1.0})
                   : law.is_balanced()    ? balanced_cdf(p.order())
                                          : law_cdf(law);
    out.push_back({std::move(p), std::move(law), std::move(cdf)});
  }
  return out;
}

SpikeLayout layout_of(const ExperimentConfig& c) {
  return c.spike_layout == "haar" ? SpikeLayout::haar : SpikeLayout::canonical;
}

BranchOptions branch_options(const ExperimentConfig& c) {
  BranchOptions o;
  o.tol = c.solver_tol;
  o.max_iter = c.max_iter;
  return o;
}

void record_point(TrialResult& r, const BranchSelection& sel) {
  r.lambda = sel.point.lambda;
  r.alignments = sel.alignments;
  r.kkt_residual = sel.point.residual;
  r.iterations = sel.point.iterations;
  r.converged = sel.point.converged;
  r.metrics["bulk_distance"] = sel.bulk_distance;
  r.metrics["min_alignment"] = sel.min_alignment;
  r.metrics["aligned"] = sel.aligned ? 1.0 : 0.0;
  r.metrics["outlier_separated"] = sel.outlier_separated ? 1.0 : 0.0;
}

void record_spectrum(TrialResult& r, const SpectralSummary& s, const ProfileContext& ctx,
                     double margin) {
  r.eigenvalues.assign(s.eigenvalues().begin(), s.eigenvalues().end());
  for (const auto& o : detect_outliers(s, ctx.law, margin)) r.outliers.push_back(o.value);
  r.bulk = bulk_eigenvalues(s, ctx.law, margin);
}

std::vector<std::size_t> random_index(const DimProfile& p, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(p.order());
  for (std::size_t i = 0; i < p.order(); ++i) {
    idx[i] = std::uniform_int_distribution<std::size_t>(0, p.dim(i) - 1)(rng);
  }
  return idx;
}

double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale > 0.0 ? (a - b).norm() / scale : 0.0;
}

void derivative_trial(const ExperimentConfig& c, const ProfileContext& ctx, const WorkUnit& u,
                      TrialResult& r) {
  const SpikedModel model =
      make_spiked_model(ctx.profile, {u.beta}, parse_noise_law(u.noise), u.seed, layout_of(c));
  const DenseTensor t = assemble_spiked_tensor(model);
  PowerOptions opts;
  opts.tol = std::min(c.solver_tol, 1e-12);
  opts.max_iter = std::max(c.max_iter, 20000);
  opts.reference = model.spikes.front();
  const StationaryPoint point = power_iterate(t, model.spikes.front(), opts);
  r.lambda = point.lambda;
  r.kkt_residual = point.residual;
  r.iterations = point.iterations;
  r.converged = point.converged;
  for (std::size_t i = 0; i < ctx.profile.order(); ++i) {
    r.alignments.push_back(std::abs(point.modes[i].dot(model.spikes.front()[i])));
  }
  if (!point.converged) throw SolverError("power iteration did not converge", point.residual);

  const KktSensitivity sens(t, point);
  std::mt19937_64 rng(mix_seed(u.seed ^ 0x9e3779b97f4a7c15ULL));
  double lambda_err = 0.0, vector_err = 0.0, orth = 0.0;
  for (int k = 0; k < c.derivative_samples; ++k) {
    const auto idx = random_index(ctx.profile, rng);
    const FiniteDifference fd = finite_difference(t, point, idx);
    const double analytic = lambda_derivative(point, idx);
    const double scale = std::max(std::abs(analytic), std::abs(fd.lambda));
    if (scale > 0.0) lambda_err = std::max(lambda_err, std::abs(fd.lambda - analytic) / scale);
    const auto du = sens.vector_derivative(idx);
    for (std::size_t i = 0; i < du.size(); ++i) {
      vector_err = std::max(vector_err, relative_error(du[i], fd.modes[i]));
      orth = std::max(orth, std::abs(du[i].dot(point.modes[i])));
    }
  }
  r.metrics["lambda_derivative_error"] = lambda_err;
  r.metrics["vector_derivative_error"] = vector_err;
  r.metrics["orthogonality"] = orth;
  r.metrics["spectral_distance"] = sens.spectral_distance();
}

void run_unit(const ExperimentConfig& c, const ProfileContext& ctx, const WorkUnit& u,
              TrialResult& r) {
  const NoiseLaw law = parse_noise_law(u.noise);
  const double margin = c.tolerances.outlier_margin;
  switch (c.kind) {
    case ExperimentKind::esd_universality: {
      DenseTensor t(ctx.profile);
      std::vector<Vector> modes;
      if (u.beta == 0.0) {
        t = sample_noise_tensor(ctx.profile, law, u.seed);
        t *= 1.0 / std::sqrt(static_cast<double>(ctx.profile.total()));
        modes = random_unit_vectors(ctx.profile, mix_seed(u.seed ^ 0x5bd1e995ULL));
      } else {
        const SpikedModel model = make_spiked_model(ctx.profile, {u.beta}, law, u.seed, layout_of(c));
        t = assemble_spiked_tensor(model);
        const BranchSelection sel = select_branch(t, model, branch_options(c));
        record_point(r, sel);
        modes = sel.point.modes;
      }
      const SpectralSummary s = eigendecompose(build_phi(t, modes));
      record_spectrum(r, s, ctx, margin);
      r.ks = r.bulk.empty() ? kNaN : ks_distance(r.bulk, ctx.cdf);
      if (!r.bulk.empty()) {
        r.metrics["edge"] = r.bulk.back();
        r.metrics["lower_edge"] = r.bulk.front();
      }
      break;
    }
    case ExperimentKind::alignment_sweep:
    case ExperimentKind::threshold_probe:
    case ExperimentKind::variance_check: {
      const SpikedModel model = make_spiked_model(ctx.profile, {u.beta}, law, u.seed, layout_of(c));
      const DenseTensor t = assemble_spiked_tensor(model);
      record_point(r, select_branch(t, model, branch_options(c)));
      break;
    }
    case ExperimentKind::outlier_check: {
      const SpikedModel model = make_spiked_model(ctx.profile, {u.beta}, law, u.seed, layout_of(c));
      const DenseTensor t = assemble_spiked_tensor(model);
      const BranchSelection sel = select_branch(t, model, branch_options(c));
      record_point(r, sel);
      const ContractionMatrix phi = build_phi(t, sel.point.modes);
      const double d1 = static_cast<double>(ctx.profile.order() - 1);
      r.metrics["identity_residual"] = outlier_identity_residual(phi, sel.point.modes, sel.point.lambda);
      const SpectralSummary s = eigendecompose(phi);
      record_spectrum(r, s, ctx, margin);
      r.metrics["top_eigenvalue"] = r.eigenvalues.back();
      r.metrics["top_minus_identity"] = r.eigenvalues.back() - d1 * sel.point.lambda;
      break;
    }
    case ExperimentKind::derivative_check:
      derivative_trial(c, ctx, u, r);
      break;
    case ExperimentKind::rank_r_decoupling: {
      const SpikedModel model = make_spiked_model(ctx.profile, c.betas, law, u.seed, layout_of(c));
      const DenseTensor t = assemble_spiked_tensor(model);
      const RankRResult rr = rank_r_deflate(t, model, branch_options(c));
      record_point(r, rr.components.front());
      r.converged = true;
      for (std::size_t l = 0; l < rr.components.size(); ++l) {
        const auto& comp = rr.components[l];
        const std::string tag = std::to_string(l + 1);
        r.metrics["lambda_" + tag] = comp.point.lambda;
        r.metrics["converged_" + tag] = comp.point.converged ? 1.0 : 0.0;
        r.converged = r.converged && comp.point.converged;
        r.kkt_residual = std::max(r.kkt_residual, comp.point.residual);
        r.iterations = std::max(r.iterations, comp.point.iterations);
        for (std::size_t i = 0; i < comp.alignments.size(); ++i) {
          r.metrics["alignment_" + tag + "_" + std::to_string(i + 1)] = comp.alignments[i];
        }
      }
      r.metrics["max_cross"] = rr.report.max_cross();
      break;
    }
  }
}

TrialResult execute(const ExperimentConfig& c, const ProfileContext& ctx, const WorkUnit& u) {
  TrialResult r;
  r.trial = u.index;
  r.seed = u.seed;
  r.profile = u.profile;
  r.n_total = ctx.profile.total();
  r.noise = u.noise;
  r.beta = u.beta;
  r.replicate = u.replicate;
  const auto start = std::chrono::steady_clock::now();
  try {
    run_unit(c, ctx, u, r);
  } catch (const std::exception& e) {
    r.error = e.what();
    if (r.error.empty()) r.error = "unknown error";
  }
  r.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

TrialResult run_trial(const ExperimentConfig& config, const WorkUnit& unit) {
  validate(config);
  std::vector<bool> needed(config.profiles.size(), false);
  needed.at(unit.profile) = true;
  const auto contexts = make_contexts(config, needed);
  return execute(config, contexts[unit.profile], unit);
}

int worker_count(const ExperimentConfig& config, std::size_t units) {
  long n = config.threads > 0 ? config.threads
                              : static_cast<long>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("SPIKELAB_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min(n, cap);
  }
  n = std::min(n, static_cast<long>(std::max<std::size_t>(units, 1)));
  return static_cast<int>(n);
}

ExperimentResult run_trials(const ExperimentConfig& config) {
  validate(config);
  const auto units = plan_trials(config);
  const auto contexts =
      make_contexts(config, std::vector<bool>(config.profiles.size(), true));

  const int workers = worker_count(config, units.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::vector<TrialResult>> collected(static_cast<std::size_t>(workers));
  auto work = [&](std::size_t w) {
    for (std::size_t k = next++; k < units.size(); k = next++) {
      collected[w].push_back(execute(config, contexts[units[k].profile], units[k]));
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, static_cast<std::size_t>(w));
    for (auto& th : pool) th.join();
  }

  ExperimentResult out;
  for (auto& part : collected) {
    for (auto& r : part) out.trials.push_back(std::move(r));
  }
  std::sort(out.trials.begin(), out.trials.end(),
            [](const TrialResult& a, const TrialResult& b) { return a.trial < b.trial; });
  out.summary = summarize(config, out.trials);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  const std::filesystem::path dir(config.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError("output directory " + dir.string() + " is not writable");
  }

  ExperimentResult out = run_trials(config);

  std::ofstream csv(dir / "trials.csv");
  if (!csv) throw ConfigError("cannot write " + (dir / "trials.csv").string());
  write_trials_csv(csv, out.trials);

  std::ofstream summary(dir / "summary.json");
  if (!summary) throw ConfigError("cannot write " + (dir / "summary.json").string());
  summary << out.summary.dump(2) << '\n';

  if (config.dump_eigenvalues) {
    const auto eig_dir = dir / "eigenvalues";
    std::filesystem::create_directories(eig_dir);
    for (const auto& r : out.trials) {
      if (r.eigenvalues.empty()) continue;
      char name[32];
      std::snprintf(name, sizeof name, "trial_%05zu.csv", r.trial);
      std::ofstream f(eig_dir / name);
      f << "eigenvalue\n";
      for (double v : r.eigenvalues) f << format_double(v) << '\n';
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// persistence

namespace {

std::string join(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out += ';';
    out += format_double(xs[k]);
  }
  return out;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else if (ch == '\n' || ch == '\r') out += ' ';
    else out += ch;
  }
  return out + "\"";
}

}  // namespace

void write_trials_csv(std::ostream& out, const std::vector<TrialResult>& trials,
                      bool include_wall_time) {
  out << "# schema=" << kCsvSchema << '\n';
  out << "trial,seed,noise,beta,n_total,lambda,alignments,kkt_residual,iterations,converged,"
         "outliers,ks,metrics,error";
  if (include_wall_time) out << ",wall_time_s";
  out << '\n';
  for (const auto& r : trials) {
    std::string metrics;
    for (const auto& [k, v] : r.metrics) {
      if (!metrics.empty()) metrics += ';';
      metrics += k + "=" + format_double(v);
    }
    out << r.trial << ',' << r.seed << ',' << r.noise << ',' << format_double(r.beta) << ','
        << r.n_total << ',' << format_double(r.lambda) << ',' << join(r.alignments) << ','
        << format_double(r.kkt_residual) << ',' << r.iterations << ','
        << (r.converged ? 1 : 0) << ',' << join(r.outliers) << ',' << format_double(r.ks) << ','
        << metrics << ',' << csv_quote(r.error);
    if (include_wall_time) out << ',' << format_double(r.wall_time_s);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// summary

namespace {

double mean_of(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double variance_of(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// mean, median and n; stderr only with two or more values.
json stat_record(const std::vector<double>& xs) {
  json rec{{"n", xs.size()}};
  if (xs.empty()) return rec;
  rec["mean"] = mean_of(xs);
  rec["median"] = median_of(xs);
  if (xs.size() > 1) rec["stderr"] = std::sqrt(variance_of(xs) / static_cast<double>(xs.size()));
  return rec;
}

struct Cell {
  std::size_t profile = 0;
  std::string noise;
  double beta = 0.0;
  std::vector<const TrialResult*> trials;
  std::size_t failed = 0;

  std::vector<double> values(const std::function<double(const TrialResult&)>& f) const {
    std::vector<double> out;
    for (const auto* t : trials) {
      const double v = f(*t);
      if (!std::isnan(v)) out.push_back(v);
    }
    return out;
  }
  std::vector<double> metric(const std::string& key) const {
    return values([&](const TrialResult& t) {
      auto it = t.metrics.find(key);
      return it == t.metrics.end() ? kNaN : it->second;
    });
  }
  std::vector<double> alignment(std::size_t mode) const {
    return values([&](const TrialResult& t) {
      return mode < t.alignments.size() ? t.alignments[mode] : kNaN;
    });
  }
  std::vector<double> mean_alignment() const {
    return values([](const TrialResult& t) {
      if (t.alignments.empty()) return kNaN;
      return mean_of(t.alignments);
    });
  }
};

class Checks {
 public:
  void add(std::string name, double value, std::string relation, double bound,
           std::optional<double> reference = std::nullopt) {
    bool pass = false;
    if (relation == "<=") pass = value <= bound;
    else if (relation == ">=") pass = value >= bound;
    json rec{{"name", std::move(name)}, {"value", value}, {"relation", relation},
             {"bound", bound}, {"pass", pass}};
    if (reference) rec["reference"] = *reference;
    all_ = all_ && pass;
    list_.push_back(std::move(rec));
  }
  /// A check that could not be evaluated (no successful trials).
  void missing(std::string name) {
    all_ = false;
    list_.push_back(json{{"name", std::move(name)}, {"value", nullptr}, {"pass", false}});
  }
  json list() const { return list_; }
  bool all() const { return all_; }

 private:
  json list_ = json::array();
  bool all_ = true;
};

std::string cell_label(const Cell& cell, std::size_t n_total) {
  return "n_total=" + std::to_string(n_total) + ",noise=" + cell.noise +
         ",beta=" + format_double(cell.beta);
}

double per_mode_median_min(const Cell& cell, std::size_t order) {
  double out = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < order; ++i) {
    const auto a = cell.alignment(i);
    if (!a.empty()) out = std::min(out, median_of(a));
  }
  return out;
}

double per_mode_median_max(const Cell& cell, std::size_t order) {
  double out = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < order; ++i) {
    const auto a = cell.alignment(i);
    if (!a.empty()) out = std::max(out, median_of(a));
  }
  return out;
}

}  // namespace

json summarize(const ExperimentConfig& config, const std::vector<TrialResult>& trials) {
  const auto& tol = config.tolerances;
  std::vector<DimProfile> profiles;
  std::vector<LimitLaw> laws;
  for (const auto& dims : config.profiles) {
    profiles.emplace_back(dims);
    laws.emplace_back(profiles.back().ratios());
  }

  // Cells in plan order.
  std::vector<Cell> cells;
  for (const auto& t : trials) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const Cell& c) {
      return c.profile == t.profile && c.noise == t.noise && c.beta == t.beta;
    });
    if (it == cells.end()) {
      cells.push_back(Cell{t.profile, t.noise, t.beta, {}, 0});
      it = cells.end() - 1;
    }
    if (t.ok()) it->trials.push_back(&t);
    else ++it->failed;
  }

  const bool estimator_kind = config.kind != ExperimentKind::esd_universality;
  Checks checks;
  json groups = json::array();

  for (const auto& cell : cells) {
    const DimProfile& p = profiles[cell.profile];
    const LimitLaw& law = laws[cell.profile];
    const std::size_t d = p.order();
    const std::string label = cell_label(cell, p.total());
    json g{{"dims", p.dims()},
           {"n_total", p.total()},
           {"noise", cell.noise},
           {"beta", cell.beta},
           {"trials", cell.trials.size() + cell.failed},
           {"failed", cell.failed}};
    json metrics = json::object();

    std::optional<Prediction> pred;
    if (cell.beta > 0.0 && config.kind != ExperimentKind::rank_r_decoupling) {
      pred = predict(law, cell.beta);
    }
    if (pred) {
      g["reference"] = {{"lambda_inf", pred->lambda_inf},
                        {"q", pred->q},
                        {"beta_s", pred->beta_s},
                        {"upper_edge", pred->upper_edge},
                        {"regime", pred->regime == Regime::above_threshold ? "above_threshold"
                                                                           : "below_threshold"}};
    }

    auto lambda = cell.values([](const TrialResult& t) { return t.lambda; });
    if (!lambda.empty()) {
      json rec = stat_record(lambda);
      if (pred) rec["reference"] = pred->lambda_inf;
      if (lambda.size() > 1) {
        const double var = variance_of(lambda);
        rec["variance"] = var;
        rec["variance_times_n"] = var * static_cast<double>(p.total());
      }
      metrics["lambda"] = rec;
    }
    for (std::size_t i = 0; i < d; ++i) {
      auto a = cell.alignment(i);
      if (a.empty()) continue;
      json rec = stat_record(a);
      if (pred) rec["reference"] = pred->q[i];
      metrics["alignment_" + std::to_string(i + 1)] = rec;
    }
    if (auto ma = cell.mean_alignment(); !ma.empty()) metrics["alignment_mean"] = stat_record(ma);
    if (auto k = cell.values([](const TrialResult& t) { return t.kkt_residual; }); !k.empty()) {
      metrics["kkt_residual"] = stat_record(k);
    }
    if (estimator_kind || cell.beta > 0.0) {
      metrics["converged"] = stat_record(
          cell.values([](const TrialResult& t) { return t.converged ? 1.0 : 0.0; }));
      metrics["iterations"] = stat_record(
          cell.values([](const TrialResult& t) { return static_cast<double>(t.iterations); }));
    }
    if (auto ks = cell.values([](const TrialResult& t) { return t.ks; }); !ks.empty()) {
      metrics["ks"] = stat_record(ks);
    }
    std::set<std::string> keys;
    for (const auto* t : cell.trials) {
      for (const auto& [k, v] : t->metrics) keys.insert(k);
    }
    for (const auto& k : keys) {
      json rec = stat_record(cell.metric(k));
      if (k == "edge") rec["reference"] = law.upper_edge();
      if (k == "lower_edge") rec["reference"] = law.lower_edge();
      if (config.kind == ExperimentKind::rank_r_decoupling && k.rfind("lambda_", 0) == 0) {
        const std::size_t l = std::stoul(k.substr(7)) - 1;
        if (l < config.betas.size()) rec["reference"] = predict(law, config.betas[l]).lambda_inf;
      }
      metrics[k] = rec;
    }
    g["metrics"] = metrics;
    groups.push_back(std::move(g));

    // Per-cell checks.
    const bool empty = cell.trials.empty();
    switch (config.kind) {
      case ExperimentKind::esd_universality: {
        if (empty) {
          checks.missing("ks_to_law[" + label + "]");
          break;
        }
        auto ks = cell.values([](const TrialResult& t) { return t.ks; });
        if (ks.empty()) checks.missing("ks_to_law[" + label + "]");
        else checks.add("ks_to_law[" + label + "]", mean_of(ks), "<=", tol.ks, 0.0);
        auto edge = cell.metric("edge");
        if (edge.empty()) checks.missing("edge[" + label + "]");
        else checks.add("edge[" + label + "]", std::abs(mean_of(edge) - law.upper_edge()), "<=",
                        tol.edge, law.upper_edge());
        break;
      }
      case ExperimentKind::alignment_sweep: {
        if (empty) {
          checks.missing("lambda[" + label + "]");
          break;
        }
        if (pred->regime == Regime::above_threshold) {
          checks.add("lambda[" + label + "]", std::abs(mean_of(lambda) - pred->lambda_inf), "<=",
                     tol.lambda, pred->lambda_inf);
          for (std::size_t i = 0; i < d; ++i) {
            checks.add("alignment_" + std::to_string(i + 1) + "[" + label + "]",
                       std::abs(mean_of(cell.alignment(i)) - pred->q[i]), "<=", tol.alignment,
                       pred->q[i]);
          }
        } else {
          checks.add("median_alignment_below[" + label + "]", per_mode_median_max(cell, d), "<=",
                     tol.alignment_floor, 0.0);
          checks.add("median_lambda_below[" + label + "]", median_of(lambda), "<=",
                     law.upper_edge() + tol.lambda_floor, law.upper_edge());
        }
        break;
      }
      case ExperimentKind::threshold_probe: {
        const bool first = cell.beta == config.betas.front();
        const bool last = cell.beta == config.betas.back();
        if ((first || last) && empty) {
          checks.missing("endpoint[" + label + "]");
          break;
        }
        if (first) {
          checks.add("median_alignment_low[" + label + "]", per_mode_median_max(cell, d), "<=",
                     tol.alignment_floor, 0.0);
          checks.add("median_lambda_low[" + label + "]", median_of(lambda), "<=",
                     law.upper_edge() + tol.lambda_floor, law.upper_edge());
        }
        if (last) {
          checks.add("median_alignment_high[" + label + "]", per_mode_median_min(cell, d), ">=",
                     tol.alignment_high, pred ? std::optional<double>(pred->q[0]) : std::nullopt);
        }
        break;
      }
      case ExperimentKind::derivative_check: {
        if (empty) {
          checks.missing("derivatives[" + label + "]");
          break;
        }
        auto worst = [&](const char* key) {
          const auto v = cell.metric(key);
          return v.empty() ? kNaN : *std::max_element(v.begin(), v.end());
        };
        checks.add("lambda_derivative[" + label + "]", worst("lambda_derivative_error"), "<=",
                   tol.derivative);
        checks.add("vector_derivative[" + label + "]", worst("vector_derivative_error"), "<=",
                   tol.derivative);
        checks.add("orthogonality[" + label + "]", worst("orthogonality"), "<=",
                   tol.orthogonality);
        break;
      }
      case ExperimentKind::rank_r_decoupling: {
        if (empty) {
          checks.missing("rank_r[" + label + "]");
          break;
        }
        for (std::size_t l = 0; l < config.betas.size(); ++l) {
          const std::string tag = std::to_string(l + 1);
          const double ref = predict(law, config.betas[l]).lambda_inf;
          checks.add("lambda_" + tag + "[" + label + "]",
                     std::abs(mean_of(cell.metric("lambda_" + tag)) - ref), "<=", tol.lambda, ref);
        }
        checks.add("median_cross[" + label + "]", median_of(cell.metric("max_cross")), "<=",
                   tol.cross, 0.0);
        break;
      }
      case ExperimentKind::outlier_check: {
        std::vector<double> residuals;
        for (const auto* t : cell.trials) {
          if (t->converged) residuals.push_back(t->metrics.at("identity_residual"));
        }
        if (residuals.empty()) {
          checks.missing("outlier_identity[" + label + "]");
          break;
        }
        checks.add("outlier_identity[" + label + "]",
                   *std::max_element(residuals.begin(), residuals.end()), "<=", tol.identity, 0.0);
        break;
      }
      case ExperimentKind::variance_check: {
        if (lambda.size() < 2) {
          checks.missing("variance_times_n[" + label + "]");
          break;
        }
        checks.add("variance_times_n[" + label + "]",
                   variance_of(lambda) * static_cast<double>(p.total()), "<=",
                   tol.variance_factor);
        break;
      }
    }
  }

  json extra = json::object();

  // Pairwise and size-trend comparisons across cells.
  if (config.kind == ExperimentKind::esd_universality) {
    json pairs = json::array();
    for (std::size_t a = 0; a < cells.size(); ++a) {
      for (std::size_t b = a + 1; b < cells.size(); ++b) {
        const Cell& ca = cells[a];
        const Cell& cb = cells[b];
        if (ca.profile != cb.profile || ca.beta != cb.beta) continue;
        std::vector<double> ks;
        for (const auto* ta : ca.trials) {
          for (const auto* tb : cb.trials) {
            if (ta->replicate == tb->replicate && !ta->bulk.empty() && !tb->bulk.empty()) {
              ks.push_back(ks_two_sample(ta->bulk, tb->bulk));
            }
          }
        }
        const std::string name = "pairwise_ks[n_total=" +
                                 std::to_string(profiles[ca.profile].total()) + "," + ca.noise +
                                 "," + cb.noise + ",beta=" + format_double(ca.beta) + "]";
        if (ks.empty()) {
          checks.missing(name);
          continue;
        }
        json rec = stat_record(ks);
        rec["laws"] = {ca.noise, cb.noise};
        rec["n_total"] = profiles[ca.profile].total();
        rec["beta"] = ca.beta;
        pairs.push_back(rec);
        checks.add(name, mean_of(ks), "<=", tol.ks);
      }
    }
    extra["pairwise_ks"] = pairs;

    if (profiles.size() > 1) {
      std::size_t small = 0, large = 0;
      for (std::size_t k = 1; k < profiles.size(); ++k) {
        if (profiles[k].total() < profiles[small].total()) small = k;
        if (profiles[k].total() > profiles[large].total()) large = k;
      }
      json trend = json::array();
      for (const auto& noise : config.noise) {
        for (double beta : config.betas) {
          const Cell* cs = nullptr;
          const Cell* cl = nullptr;
          for (const auto& c : cells) {
            if (c.noise != noise || c.beta != beta) continue;
            if (c.profile == small) cs = &c;
            if (c.profile == large) cl = &c;
          }
          if (!cs || !cl) continue;
          int paired = 0, decreased = 0;
          for (const auto* ts : cs->trials) {
            for (const auto* tl : cl->trials) {
              if (ts->replicate != tl->replicate || std::isnan(ts->ks) || std::isnan(tl->ks)) {
                continue;
              }
              ++paired;
              if (tl->ks <= ts->ks) ++decreased;
            }
          }
          const std::string name = "ks_trend[" + noise + ",beta=" + format_double(beta) + "]";
          if (paired == 0) {
            checks.missing(name);
            continue;
          }
          const double frac = static_cast<double>(decreased) / paired;
          trend.push_back(json{{"noise", noise},
                               {"beta", beta},
                               {"n_small", profiles[small].total()},
                               {"n_large", profiles[large].total()},
                               {"paired", paired},
                               {"fraction_decreased", frac}});
          checks.add(name, frac, ">=", tol.trend_fraction);
        }
      }
      extra["ks_trend"] = trend;
    }
  }

  // Crossing of the mean alignment through 1/2.
  if (config.kind == ExperimentKind::threshold_probe) {
    json curves = json::array();
    for (std::size_t pi = 0; pi < profiles.size(); ++pi) {
      const double bs = beta_threshold(laws[pi]);
      for (const auto& noise : config.noise) {
        std::vector<std::pair<double, double>> curve;
        for (const auto& c : cells) {
          if (c.profile != pi || c.noise != noise) continue;
          auto ma = c.mean_alignment();
          if (!ma.empty()) curve.emplace_back(c.beta, mean_of(ma));
        }
        std::optional<double> crossing;
        for (std::size_t k = 1; k < curve.size() && !crossing; ++k) {
          const auto [b0, a0] = curve[k - 1];
          const auto [b1, a1] = curve[k];
          if (a0 < 0.5 && a1 >= 0.5) crossing = b0 + (0.5 - a0) * (b1 - b0) / (a1 - a0);
        }
        json pts = json::array();
        for (const auto& [b, a] : curve) pts.push_back({{"beta", b}, {"mean_alignment", a}});
        const std::string name =
            "crossing[n_total=" + std::to_string(profiles[pi].total()) + ",noise=" + noise + "]";
        json rec{{"n_total", profiles[pi].total()}, {"noise", noise}, {"curve", pts},
                 {"beta_s", bs}, {"window", config.crossing_window}};
        if (crossing) {
          rec["crossing"] = *crossing;
          const bool inside = *crossing >= config.crossing_window[0] &&
                              *crossing <= config.crossing_window[1];
          checks.add(name + ".lower", *crossing, ">=", config.crossing_window[0], bs);
          checks.add(name + ".upper", *crossing, "<=", config.crossing_window[1], bs);
          rec["pass"] = inside;
        } else {
          rec["crossing"] = nullptr;
          checks.missing(name);
        }
        curves.push_back(rec);
      }
    }
    extra["crossing"] = curves;
  }

  // Var(lambda) N per size and the log-log slope.
  if (config.kind == ExperimentKind::variance_check) {
    json fits = json::array();
    for (const auto& noise : config.noise) {
      for (double beta : config.betas) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& c : cells) {
          if (c.noise != noise || c.beta != beta) continue;
          auto lam = c.values([](const TrialResult& t) { return t.lambda; });
          if (lam.size() > 1) {
            pts.emplace_back(static_cast<double>(profiles[c.profile].total()), variance_of(lam));
          }
        }
        std::sort(pts.begin(), pts.end());
        json rec{{"noise", noise}, {"beta", beta}};
        json per = json::array();
        for (const auto& [n, v] : pts) {
          per.push_back({{"n_total", n}, {"variance", v}, {"variance_times_n", v * n}});
        }
        rec["points"] = per;
        const std::string tag = "[" + noise + ",beta=" + format_double(beta) + "]";
        if (pts.size() > 1) {
          double sx = 0, sy = 0, sxx = 0, sxy = 0;
          for (const auto& [n, v] : pts) {
            const double x = std::log(n), y = std::log(v);
            sx += x; sy += y; sxx += x * x; sxy += x * y;
          }
          const double m = static_cast<double>(pts.size());
          const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
          rec["slope"] = slope;
          rec["slope_reference"] = -1.0;
          double worst_ratio = 0.0;
          for (std::size_t k = 1; k < pts.size(); ++k) {
            worst_ratio = std::max(worst_ratio, pts[k].second / pts[k - 1].second);
          }
          // Strict decrease: every consecutive ratio below one.
          checks.add("variance_decreasing" + tag, worst_ratio, "<=",
                     std::nextafter(1.0, 0.0));
        }
        fits.push_back(rec);
      }
    }
    extra["variance"] = fits;
  }

  std::size_t failed = 0;
  for (const auto& t : trials) failed += t.ok() ? 0 : 1;

  json out{{"schema", kCsvSchema},
           {"kind", to_string(config.kind)},
           {"config", to_json(config)},
           {"trials", trials.size()},
           {"failed_trials", failed},
           {"groups", groups},
           {"checks", checks.list()},
           {"pass", checks.all()}};
  for (auto& [k, v] : extra.items()) out[k] = v;
  return out;
}

}  // namespace spikelab
