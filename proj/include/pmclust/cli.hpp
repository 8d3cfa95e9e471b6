// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pmclust/core.hpp"
#include "pmclust/io.hpp"
#include "pmclust/parallel.hpp"
#include "pmclust/relabel.hpp"
#include "pmclust/sampler.hpp"
#include "pmclust/selection.hpp"
#include "pmclust/simulate.hpp"

namespace pmclust::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitInternal = 4;

namespace detail {

struct FitFlags {
  std::int64_t iters = 20000;
  std::int64_t burnin = 5000;
  std::int64_t thin = 50;
  std::uint64_t seed = 0;
  Hyperparams hyper{};
  std::string init = "moment";
  std::string pm_form = "blended";

  void add_to(CLI::App& app) {
    app.add_option("--iters", iters, "Total MCMC iterations")->capture_default_str();
    app.add_option("--burnin", burnin, "Burn-in iterations")->capture_default_str();
    app.add_option("--thin", thin, "Keep every thin-th draw after burn-in")->capture_default_str();
    app.add_option("--seed", seed, "Random seed")->capture_default_str();
    app.add_option("--alpha", hyper.alpha, "Gamma prior shape on rates")->capture_default_str();
    app.add_option("--beta", hyper.beta, "Gamma prior rate on rates")->capture_default_str();
    app.add_option("--delta-a", hyper.a, "Lower bound of the uniform prior on delta")
        ->capture_default_str();
    app.add_option("--delta-b", hyper.b, "Upper bound of the uniform prior on delta")
        ->capture_default_str();
    app.add_option("--gamma-mix", hyper.gamma_mix, "Dirichlet concentration on mixture weights")
        ->capture_default_str();
    app.add_option("--init", init, "Initialization")
        ->check(CLI::IsMember({"prior", "moment"}))
        ->capture_default_str();
    app.add_option("--pm-form", pm_form, "PM likelihood used as the sampling target")
        ->check(CLI::IsMember({"blended", "weighted"}))
        ->capture_default_str();
  }

  mcmc::McmcConfig config() const {
    mcmc::McmcConfig cfg;
    cfg.n_iterations = iters;
    cfg.burn_in = burnin;
    cfg.thin = thin;
    cfg.seed = seed;
    cfg.init = mcmc::parse_init_strategy(init);
    cfg.validate();
    return cfg;
  }
};

inline const CLI::Validator kModelNames = CLI::IsMember({"pm", "mm", "mix"});
inline const CLI::Validator kWaicModes = CLI::IsMember({"conditional", "marginal"});
inline const CLI::Validator kMmVariants = CLI::IsMember({"tau_and_z", "z_only"});

inline void print_waic(std::ostream& os, const WaicResult& w) {
  os << "lppd=" << w.lppd << " p_waic=" << w.p_waic << " waic=" << w.waic << '\n';
}

}  // namespace detail

/// Runs the command line; returns the process exit status.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  CLI::App app{"Partial membership, mixed membership and mixture models for count data",
               "pmclust"};
  app.require_subcommand(1, 1);
  app.failure_message(CLI::FailureMessage::help);
  std::size_t workers = default_workers();

  // fit
  auto* fit = app.add_subcommand("fit", "Run MCMC for one model and write the chain");
  std::string fit_model, fit_data, fit_out;
  std::size_t fit_k = 0;
  detail::FitFlags fit_flags;
  fit->add_option("--model", fit_model, "pm, mm or mix")->required()->check(detail::kModelNames);
  fit->add_option("--data", fit_data, "Count CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--k", fit_k, "Number of clusters")->required()->check(CLI::PositiveNumber);
  fit->add_option("--out", fit_out, "Chain output (JSON lines)")->required();
  fit_flags.add_to(*fit);

  // waic
  auto* waic_cmd = app.add_subcommand("waic", "Compute WAIC for a saved chain");
  std::string waic_chain, waic_data, waic_mode = "marginal", waic_mm = "tau_and_z";
  int waic_mc = 100;
  std::uint64_t waic_seed = 0;
  waic_cmd->add_option("--chain", waic_chain, "Chain file")->required()->check(CLI::ExistingFile);
  waic_cmd->add_option("--data", waic_data, "Count CSV")->required()->check(CLI::ExistingFile);
  waic_cmd->add_option("--mode", waic_mode, "conditional or marginal")
      ->check(detail::kWaicModes)
      ->capture_default_str();
  waic_cmd->add_option("--mc-draws", waic_mc, "Monte Carlo draws per posterior draw")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  waic_cmd->add_option("--seed", waic_seed, "Seed for the Monte Carlo marginalization")
      ->capture_default_str();
  waic_cmd->add_option("--mm-marginal", waic_mm, "MM marginalization: tau_and_z or z_only")
      ->check(detail::kMmVariants)
      ->capture_default_str();

  // relabel
  auto* relabel_cmd = app.add_subcommand("relabel", "Undo label switching in a saved chain");
  std::string relabel_chain_path, relabel_out;
  relabel_cmd->add_option("--chain", relabel_chain_path, "Chain file")
      ->required()
      ->check(CLI::ExistingFile);
  relabel_cmd->add_option("--out", relabel_out, "Relabeled chain output")->required();

  // report
  auto* report = app.add_subcommand("report", "Summarize a chain into tables and JSON");
  std::string report_chain, report_data, report_out, report_mode = "marginal",
                                                     report_mm = "tau_and_z", report_model;
  double report_threshold = kDefaultArchetypeThreshold;
  int report_mc = 100;
  std::uint64_t report_seed = 0;
  report->add_option("--chain", report_chain, "Chain file")->required()->check(CLI::ExistingFile);
  report->add_option("--data", report_data, "Count CSV")->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "Output directory")->required();
  report->add_option("--archetype-threshold", report_threshold, "Minimum archetype membership")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  report->add_option("--waic-mode", report_mode, "conditional or marginal")
      ->check(detail::kWaicModes)
      ->capture_default_str();
  report->add_option("--mc-draws", report_mc, "Monte Carlo draws for marginal WAIC")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  report->add_option("--seed", report_seed, "Seed for the Monte Carlo marginalization")
      ->capture_default_str();
  report->add_option("--mm-marginal", report_mm, "MM marginalization: tau_and_z or z_only")
      ->check(detail::kMmVariants)
      ->capture_default_str();
  report->add_option("--model", report_model, "Expected model kind of the chain")
      ->check(detail::kModelNames);

  // scan
  auto* scan = app.add_subcommand("scan", "Fit a range of K and tabulate WAIC");
  std::string scan_model, scan_data, scan_out, scan_mode = "marginal", scan_mm = "tau_and_z";
  std::size_t scan_kmin = 0, scan_kmax = 0;
  int scan_mc = 100;
  detail::FitFlags scan_flags;
  scan->add_option("--model", scan_model, "pm, mm or mix")->required()->check(detail::kModelNames);
  scan->add_option("--data", scan_data, "Count CSV")->required()->check(CLI::ExistingFile);
  scan->add_option("--kmin", scan_kmin, "Smallest K")->required()->check(CLI::PositiveNumber);
  scan->add_option("--kmax", scan_kmax, "Largest K")->required()->check(CLI::PositiveNumber);
  scan->add_option("--out", scan_out, "Output directory")->required();
  scan->add_option("--waic-mode", scan_mode, "conditional or marginal")
      ->check(detail::kWaicModes)
      ->capture_default_str();
  scan->add_option("--mc-draws", scan_mc, "Monte Carlo draws for marginal WAIC")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  scan->add_option("--mm-marginal", scan_mm, "MM marginalization: tau_and_z or z_only")
      ->check(detail::kMmVariants)
      ->capture_default_str();
  scan->add_option("--workers", workers, "Parallel fits (default from PMCLUST_WORKERS)")
      ->check(CLI::PositiveNumber);
  scan_flags.add_to(*scan);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run the WAIC model-selection study");
  sim::StudyConfig study;
  std::string sim_out;
  std::int64_t sim_iters = 20000, sim_burnin = 5000, sim_thin = 50;
  study.mc_draws = 100;
  simulate->add_option("--replicates", study.n_replicates, "Number of simulated data sets")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  simulate->add_option("--n", study.n_units, "Units per data set")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  simulate->add_option("--j", study.n_features, "Features per data set")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  simulate->add_option("--true-k", study.true_k, "Generating number of clusters")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  simulate->add_option("--delta", study.delta_true, "Generating Dirichlet parameters, F,F,...")
      ->delimiter(',');
  simulate->add_option("--lambda-mean", study.lambda_mean, "Mean of the exponential rates")
      ->capture_default_str();
  simulate->add_option("--kmin", study.k_min, "Smallest K scanned")->capture_default_str();
  simulate->add_option("--kmax", study.k_max, "Largest K scanned")->capture_default_str();
  simulate->add_option("--seed", study.master_seed, "Master seed")->capture_default_str();
  simulate->add_option("--iters", sim_iters, "Total MCMC iterations")->capture_default_str();
  simulate->add_option("--burnin", sim_burnin, "Burn-in iterations")->capture_default_str();
  simulate->add_option("--thin", sim_thin, "Thinning interval")->capture_default_str();
  simulate->add_option("--mc-draws", study.mc_draws, "Monte Carlo draws for marginal WAIC")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  simulate->add_option("--alpha", study.hyper.alpha, "Gamma prior shape")->capture_default_str();
  simulate->add_option("--beta", study.hyper.beta, "Gamma prior rate")->capture_default_str();
  simulate->add_option("--delta-a", study.hyper.a, "Lower bound of the delta prior")
      ->capture_default_str();
  simulate->add_option("--delta-b", study.hyper.b, "Upper bound of the delta prior")
      ->capture_default_str();
  simulate->add_flag("--include-k1-marginal", study.include_k1_marginal,
                     "Count K=1 in the marginal WAIC tally");
  simulate->add_option("--workers", workers, "Parallel fits (default from PMCLUST_WORKERS)")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (fit->parsed()) {
      const auto x = io::load_csv(fit_data);
      ModelSpec spec{parse_model_kind(fit_model), fit_k, fit_flags.hyper,
                     parse_pm_form(fit_flags.pm_form)};
      const Chain chain = mcmc::run_chain(x, spec, fit_flags.config());
      io::save_chain(chain, fit_out);
      out << "wrote " << chain.draws.size() << " draws to " << fit_out << '\n';
      for (const auto& [block, rate] : chain.acceptance_rates) {
        out << "acceptance " << block << ' ' << rate << '\n';
      }
    } else if (waic_cmd->parsed()) {
      const auto x = io::load_csv(waic_data);
      const Chain chain = io::load_chain(waic_chain);
      const auto mode = parse_waic_mode(waic_mode);
      PointwiseLogLik pw;
      if (mode == WaicMode::Conditional) {
        pw = pointwise_conditional(chain, x, workers);
      } else {
        RandomSource rng(waic_seed);
        pw = pointwise_marginal(chain, x, waic_mc, rng, parse_mm_marginal(waic_mm), workers);
      }
      out.precision(10);
      out << "mode=" << to_string(mode) << ' ';
      detail::print_waic(out, waic(pw));
    } else if (relabel_cmd->parsed()) {
      const Chain chain = io::load_chain(relabel_chain_path);
      const auto relabeled = relabel_chain(chain);
      io::save_chain(relabeled.chain, relabel_out);
      out << "relabeled " << chain.draws.size() << " draws in " << relabeled.sweeps
          << " sweeps (pivot draw " << relabeled.pivot_index + 1 << ")"
          << (relabeled.converged ? "" : ", not converged") << '\n';
    } else if (report->parsed()) {
      io::ReportOptions opts;
      opts.archetype_threshold = report_threshold;
      opts.waic_mode = parse_waic_mode(report_mode);
      opts.mc_draws = report_mc;
      opts.seed = report_seed;
      opts.mm_variant = parse_mm_marginal(report_mm);
      if (!report_model.empty()) opts.expected_kind = parse_model_kind(report_model);
      const auto x = io::load_csv(report_data);
      const Chain chain = io::load_chain(report_chain, opts.expected_kind);
      const auto doc = io::make_report(chain, x, opts);
      io::write_report(doc, report_out);
      out << "report written to " << report_out << '\n';
      if (doc.single_draw_warning) err << "warning: chain holds a single draw\n";
    } else if (scan->parsed()) {
      if (scan_kmax < scan_kmin) throw ValidationError("--kmax must be at least --kmin");
      const auto x = io::load_csv(scan_data);
      ScanOptions opts;
      opts.mode = parse_waic_mode(scan_mode);
      opts.mc_draws = scan_mc;
      opts.mm_variant = parse_mm_marginal(scan_mm);
      opts.pm_form = parse_pm_form(scan_flags.pm_form);
      opts.workers = workers;
      const auto result = scan_k(x, parse_model_kind(scan_model), scan_kmin, scan_kmax,
                                 scan_flags.config(), scan_flags.hyper, opts);
      std::filesystem::create_directories(scan_out);
      io::write_atomically(std::filesystem::path(scan_out) / "scan.csv",
                           [&](std::ostream& os) { write_scan_csv(os, result); });
      write_scan_csv(out, result);
    } else if (simulate->parsed()) {
      if (simulate->count("--delta") == 0) study.delta_true.assign(study.true_k, 0.5);
      study.mcmc.n_iterations = sim_iters;
      study.mcmc.burn_in = sim_burnin;
      study.mcmc.thin = sim_thin;
      study.workers = workers;
      const auto result = sim::run_study(study);
      std::filesystem::create_directories(sim_out);
      const std::filesystem::path dir(sim_out);
      io::write_atomically(dir / "selection.csv",
                           [&](std::ostream& os) { sim::write_selection_csv(os, result); });
      io::write_atomically(dir / "replicates.csv",
                           [&](std::ostream& os) { sim::write_replicate_csv(os, result); });
      sim::write_selection_csv(out, result);
    }
  } catch (const InvariantError& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitOk;
}

inline int cli_dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  std::vector<const char*> argv;
  argv.push_back("pmclust");
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace pmclust::cli
