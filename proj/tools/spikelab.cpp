#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "spikelab/contraction.hpp"
#include "spikelab/estimator.hpp"
#include "spikelab/lab.hpp"
#include "spikelab/limitlaw.hpp"
#include "spikelab/spectrum.hpp"

using namespace spikelab;
using nlohmann::json;

namespace {

LimitLaw law_from(std::size_t order, const std::vector<double>& ratios) {
  if (ratios.empty()) return LimitLaw::balanced(order);
  if (order != 0 && ratios.size() != order) {
    throw ConfigError("--c has " + std::to_string(ratios.size()) + " entries but --d is " +
                      std::to_string(order));
  }
  return LimitLaw(ratios);
}

int run_command(const std::string& path, const std::optional<std::uint64_t>& seed,
                const std::optional<int>& trials, const std::vector<double>& betas,
                const std::optional<std::string>& out, const std::optional<int>& threads) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");
  if (seed) j["seed"] = *seed;
  if (trials) j["trials"] = *trials;
  if (!betas.empty()) j["betas"] = betas;
  if (out) j["output_dir"] = *out;
  if (threads) j["threads"] = *threads;

  const ExperimentConfig config = config_from_json(j);
  const ExperimentResult result = run_experiment(config);

  std::size_t passed = 0;
  const auto& checks = result.summary.at("checks");
  for (const auto& c : checks) {
    if (c.at("pass").get<bool>()) ++passed;
    else std::cout << "FAIL " << c.at("name").get<std::string>() << '\n';
  }
  std::cout << to_string(config.kind) << ": " << result.trials.size() << " trials ("
            << result.summary.at("failed_trials") << " failed), " << passed << "/"
            << checks.size() << " checks passed\n"
            << "wrote " << config.output_dir << "/trials.csv and " << config.output_dir
            << "/summary.json\n";
  return 0;
}

int predict_command(std::size_t order, const std::vector<double>& ratios, double beta) {
  const LimitLaw law = law_from(order, ratios);
  const Prediction p = predict(law, beta);
  json out{{"beta", p.beta},
           {"ratios", law.ratios()},
           {"lambda_inf", p.lambda_inf},
           {"q", p.q},
           {"alpha", p.alpha},
           {"beta_s", p.beta_s},
           {"upper_edge", p.upper_edge},
           {"regime", p.regime == Regime::above_threshold ? "above_threshold"
                                                           : "below_threshold"}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int density_command(std::size_t order, const std::vector<double>& ratios, std::size_t grid,
                    double eta, const std::string& out) {
  if (grid < 2) throw ConfigError("--grid must be at least 2");
  const LimitLaw law = law_from(order, ratios);
  const double reach = 1.1 * law.upper_edge();
  std::vector<double> xs(grid);
  for (std::size_t k = 0; k < grid; ++k) {
    xs[k] = -reach + 2.0 * reach * static_cast<double>(k) / static_cast<double>(grid - 1);
  }
  const std::vector<double> density = law.density_curve(xs, eta);
  std::ofstream f(out);
  if (!f) throw ConfigError("cannot write " + out);
  f << "x,density\n";
  char line[64];
  for (std::size_t k = 0; k < grid; ++k) {
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", xs[k], density[k]);
    f << line;
  }
  std::cout << "wrote " << grid << " points on [" << -reach << ", " << reach << "] to " << out
            << '\n';
  return 0;
}

int spectrum_command(const std::vector<std::size_t>& dims, double beta, const std::string& noise,
                     std::uint64_t seed, const std::string& out) {
  const DimProfile profile(dims);
  const NoiseLaw law = parse_noise_law(noise);
  DenseTensor t(profile);
  std::vector<Vector> modes;
  if (beta > 0.0) {
    const SpikedModel model = make_spiked_model(profile, {beta}, law, seed);
    t = assemble_spiked_tensor(model);
    const BranchSelection sel = select_branch(t, model);
    modes = sel.point.modes;
    std::cout << "lambda " << sel.point.lambda << ", converged " << sel.point.converged << '\n';
  } else {
    t = sample_noise_tensor(profile, law, seed);
    t *= 1.0 / std::sqrt(static_cast<double>(profile.total()));
    modes = random_unit_vectors(profile, mix_seed(seed ^ 0x5bd1e995ULL));
  }
  const SpectralSummary s = eigendecompose(build_phi(t, modes));
  std::ofstream f(out);
  if (!f) throw ConfigError("cannot write " + out);
  write_eigenvalues_csv(f, s);
  std::cout << "wrote " << s.size() << " eigenvalues to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spikelab: spiked tensor experiments and limiting-law predictions"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment described by a JSON config");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::vector<double> run_betas;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--seed", seed, "Override the base seed");
  run->add_option("--trials", trials, "Override the trial count");
  run->add_option("--beta", run_betas, "Override the SNR grid")->delimiter(',');
  run->add_option("--out", out_dir, "Override the output directory");
  run->add_option("--threads", threads, "Worker threads (capped by SPIKELAB_THREADS)");

  std::size_t order = 3;
  std::vector<double> ratios;
  bool balanced = false;

  auto* pred = app.add_subcommand("predict", "Print lambda_inf, q_i and beta_s as JSON");
  double beta = 2.0;
  pred->add_option("--d", order, "Tensor order")->check(CLI::Range(2, 64));
  auto* pc = pred->add_option("--c", ratios, "Aspect ratios n_i / N")->delimiter(',');
  pred->add_flag("--balanced", balanced, "Equal aspect ratios 1/d")->excludes(pc);
  pred->add_option("--beta", beta, "Signal-to-noise ratio")->required();

  auto* dens = app.add_subcommand("density", "Tabulate the limiting spectral density");
  std::size_t grid = 1001;
  double eta = 1e-6;
  std::string density_out = "density.csv";
  dens->add_option("--d", order, "Tensor order")->check(CLI::Range(2, 64));
  auto* dc = dens->add_option("--c", ratios, "Aspect ratios n_i / N")->delimiter(',');
  dens->add_flag("--balanced", balanced, "Equal aspect ratios 1/d")->excludes(dc);
  dens->add_option("--grid", grid, "Number of grid points");
  dens->add_option("--eta", eta, "Imaginary offset of the spectral parameter");
  dens->add_option("--out", density_out, "Output CSV");

  auto* dump = app.add_subcommand("spectrum", "Dump the eigenvalues of one contraction matrix");
  std::vector<std::size_t> dims{100, 100, 100};
  double spec_beta = 0.0;
  std::string noise = "gaussian";
  std::uint64_t spec_seed = 0;
  std::string spec_out = "eigenvalues.csv";
  dump->add_option("--dims", dims, "Mode sizes")->delimiter(',');
  dump->add_option("--beta", spec_beta, "SNR; 0 uses pure noise and random unit vectors");
  dump->add_option("--noise", noise, "Noise law");
  dump->add_option("--seed", spec_seed, "Seed");
  dump->add_option("--out", spec_out, "Output CSV");

  CLI11_PARSE(app, argc, argv);

  // --d only constrains --c when given explicitly.
  if ((*pred && pred->count("--d") == 0) || (*dens && dens->count("--d") == 0)) {
    if (!ratios.empty()) order = 0;
  }

  try {
    if (*run) return run_command(config_path, seed, trials, run_betas, out_dir, threads);
    if (*pred) return predict_command(order, ratios, beta);
    if (*dens) return density_command(order, ratios, grid, eta, density_out);
    if (*dump) return spectrum_command(dims, spec_beta, noise, spec_seed, spec_out);
  } catch (const ConfigError& e) {
    std::cerr << "spikelab: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "spikelab: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
