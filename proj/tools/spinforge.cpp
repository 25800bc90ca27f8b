// Command-line surface: configuration ingestion, presets, synthetic data
// generation, analysis, and the acceptance report.
//
// Exit codes: 0 success, 1 runtime/analysis failure, 2 usage/config error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <spinforge/acceptance.hpp>

namespace fs = std::filesystem;
using namespace spinforge;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string preset;
  std::string out_dir;
  std::string mode;
  std::string format = "json";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

RunConfig resolve_config(const CommonOpts& o) {
  if (!o.config_path.empty() && !o.preset.empty())
    throw config_error("give either --config or --preset, not both");
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  else if (!o.preset.empty()) cfg = preset_config(o.preset);
  else throw config_error("this command needs --config <file> or --preset <name>");
  if (o.seed_set) cfg.scan.seed = o.seed;
  if (!o.mode.empty()) cfg.sim.mode = o.mode == "fock" ? SimMode::fock : SimMode::analytic;
  return cfg;
}

fs::path prepare_out_dir(const CommonOpts& o) {
  const fs::path dir = o.out_dir.empty() ? fs::path(".") : fs::path(o.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void emit(const fs::path& path, const std::string& content) {
  write_text_file(path.string(), content);
  std::printf("wrote %s\n", path.string().c_str());
}

// ---------------------------------------------------------------------------

int cmd_calibrate(const CommonOpts& o) {
  const RunConfig cfg = resolve_config(o);
  if (!cfg.has_trap) throw config_error("calibrate needs a 'trap' block in the configuration");
  const DerivedGeometry g = derive_geometry(cfg.trap);
  const json report = geometry_to_json(g);
  if (o.format == "csv") {
    std::string csv = "quantity,value\n";
    for (const auto& item : report.items())
      csv += item.key() + "," + detail::fmt_double(item.value().get<double>()) + "\n";
    std::fputs(csv.c_str(), stdout);
    if (!o.out_dir.empty()) emit(prepare_out_dir(o) / "calibrate.csv", csv);
  } else {
    std::printf("%s\n", report.dump(2).c_str());
    if (!o.out_dir.empty()) emit(prepare_out_dir(o) / "calibrate.json", report.dump(2) + "\n");
  }
  return 0;
}

int cmd_simulate(const CommonOpts& o) {
  const RunConfig cfg = resolve_config(o);
  const PulseSequence seq = sequence_from_config(cfg);
  const DensityMatrix rho = run_sequence_prepared(seq, cfg.sim, cfg.readout.p_prep);
  const EntanglementReport rep = make_entanglement_report(rho);
  const OutcomeProbs pops = outcome_probs(rho);
  const json out = { { "rho", rho_to_json(rho) },
                     { "metrics", entanglement_to_json(rep) },
                     { "populations",
                       { { "p_uu", pops.p_uu }, { "p_mid", pops.p_mid }, { "p_dd", pops.p_dd } } },
                     { "sequence", sequence_to_json(seq) } };
  std::printf("F=%.4f  EoF=%.4f  concurrence=%.4f  2|C|=%.4f\n", rep.fidelity, rep.eof,
              rep.concurrence, 2 * std::abs(rep.coherence));
  emit(prepare_out_dir(o) / "state.json", out.dump(2) + "\n");
  return 0;
}

int cmd_scan(const CommonOpts& o) {
  const RunConfig cfg = resolve_config(o);
  if (!cfg.has_scan) throw config_error("scan needs a 'scan' block in the configuration");
  const fs::path dir = prepare_out_dir(o);

  if (!cfg.scan.tau.empty()) {
    if (cfg.sequence_name == "inline")
      throw config_error("tau scans need a preset sequence (the pulse duration is swept)");
    const SequenceKind kind =
        cfg.sequence_name == "single_w" ? SequenceKind::single_W : SequenceKind::double_W;
    if (!cfg.has_pulse) throw config_error("tau scans need a 'pulse' block");
    auto builder = [&](double tau) {
      ForcePulseParams p = cfg.pulse;
      p.tau = tau;
      return build_echo_sequence(kind, p);
    };
    ScanData scan = generate_tau_scan(cfg.trap, builder, cfg.scan.tau, cfg.scan.n_shots,
                                      cfg.scan.seed, cfg.readout, cfg.sim, cfg.scan.exact);
    scan.metadata.sequence = cfg.sequence_name;
    emit(dir / "scan_tau.csv", scan_to_csv(scan));
    emit(dir / "scan_tau.json", scan_to_json(scan).dump(2) + "\n");
    return 0;
  }

  const PulseSequence seq = sequence_from_config(cfg);
  std::vector<ScanData> scans(cfg.scan.theta_list.size());
  parallel_for(cfg.scan.theta_list.size(), [&](std::size_t t) {
    scans[t] = generate_phi_scan(cfg.trap, seq, cfg.scan.theta_list[t], cfg.scan.phi,
                                 cfg.scan.n_shots, cfg.scan.seed + t, cfg.readout, cfg.sim,
                                 cfg.scan.exact);
    scans[t].metadata.sequence = cfg.sequence_name;
  });
  for (std::size_t t = 0; t < scans.size(); ++t) {
    const std::string base = "scan_phi_" + std::to_string(t);
    emit(dir / (base + ".csv"), scan_to_csv(scans[t]));
    emit(dir / (base + ".json"), scan_to_json(scans[t]).dump(2) + "\n");
  }
  return 0;
}

ScanData read_scan_file(const std::string& path) {
  const std::string text = read_text_file(path);
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return scan_from_csv(text);
  return scan_from_json(parse_json(text, path));
}

int cmd_tomo(const CommonOpts& o, const std::vector<std::string>& files) {
  if (files.size() != 2)
    throw config_error("tomo needs exactly two scan files (one per analysis angle), got " +
                       std::to_string(files.size()));
  std::vector<ScanData> scans;
  for (const std::string& f : files) scans.push_back(read_scan_file(f));
  const TomoResult result = tomo_pipeline(scans);
  std::printf("F=%.4f  best_r=%.4f pi  EoF=%.4f  2|C|=%.4f  null dims=%d\n",
              result.report.fidelity, result.report.best_r / pi, result.report.eof,
              2 * std::abs(result.report.coherence), result.null_space_dims);
  const fs::path dir = prepare_out_dir(o);
  emit(dir / "tomo.json", tomo_to_json(result).dump(2) + "\n");
  emit(dir / "rho_bars.csv", rho_bar_csv(result.rho_P.m()));
  return 0;
}

int cmd_fit_model(const CommonOpts& o, const std::string& file) {
  const RunConfig cfg = resolve_config(o);
  if (!cfg.has_pulse)
    throw config_error("fit-model needs a 'pulse' block to seed the fit guess");
  const ScanData scan = read_scan_file(file);
  const EchoModelGuess guess{ cfg.sim.gamma, cfg.pulse.delta, cfg.pulse.Omega_f, cfg.pulse.Delta_c };
  const EchoModelFit fit = fit_echo_model(scan, guess);

  json cov = json::array();
  for (int i = 0; i < 4; ++i) {
    json row = json::array();
    for (int j = 0; j < 4; ++j) row.push_back(fit.covariance(i, j));
    cov.push_back(std::move(row));
  }
  const json out = { { "gamma_per_ms", fit.gamma * 1e-3 },
                     { "delta_hz", fit.delta / (2 * pi) },
                     { "omega_f_hz", fit.Omega_f / (2 * pi) },
                     { "delta_c_hz", fit.Delta_c / (2 * pi) },
                     { "covariance_si", cov },
                     { "covariance_order", "gamma, delta, omega_f, delta_c" },
                     { "cost", fit.cost },
                     { "iterations", fit.iterations } };
  std::printf("gamma=%.4g /ms  delta=%.6g Hz  omega_f=%.6g Hz  delta_c=%.6g Hz\n",
              fit.gamma * 1e-3, fit.delta / (2 * pi), fit.Omega_f / (2 * pi),
              fit.Delta_c / (2 * pi));

  const Eigen::Matrix3d minv = detail::readout_inverse(scan.metadata.readout);
  std::string resid = "tau_s,p_uu_data,p_uu_fit,p_mid_data,p_mid_fit\n";
  for (const ScanRecord& rec : scan.records) {
    const auto c = detail::correct_record(rec, minv);
    const EchoModelPopulations model = echo_model_populations(
        rec.tau, fit.gamma, fit.delta, fit.Omega_f, fit.Delta_c, scan.metadata.options.nbar,
        scan.metadata.options.include_thermal_coherence_factor);
    resid += detail::fmt_double(rec.tau) + "," + detail::fmt_double(c.p[0]) + "," +
             detail::fmt_double(model.p_uu) + "," + detail::fmt_double(c.p[1]) + "," +
             detail::fmt_double(model.p_mid) + "\n";
  }
  const fs::path dir = prepare_out_dir(o);
  emit(dir / "fit.json", out.dump(2) + "\n");
  emit(dir / "fit_residuals.csv", resid);
  return 0;
}

int cmd_report(const CommonOpts& o) {
  const std::vector<CheckResult> checks = run_acceptance();
  json rows = json::array();
  bool all_pass = true;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const CheckResult& c = checks[i];
    std::printf("ACCEPTANCE %zu: %-28s %s\n", i + 1, c.name.c_str(),
                c.pass ? "PASS" : "FAIL");
    std::printf("  expected: %s\n  computed: %s\n  tolerance: %s\n", c.expected.c_str(),
                c.computed.c_str(), c.tolerance.c_str());
    rows.push_back({ { "name", c.name },
                     { "expected", c.expected },
                     { "computed", c.computed },
                     { "tolerance", c.tolerance },
                     { "pass", c.pass } });
    all_pass = all_pass && c.pass;
  }
  const json out = { { "checks", std::move(rows) }, { "pass", all_pass } };
  emit(prepare_out_dir(o) / "acceptance.json", out.dump(2) + "\n");
  std::printf("overall: %s\n", all_pass ? "PASS" : "FAIL");
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{ "two-ion entangling-gate simulator and analysis chain" };
  app.require_subcommand(1);

  CommonOpts opts;
  std::vector<std::string> tomo_files;
  std::string fit_file;

  auto add_common = [&](CLI::App* sub, bool with_config, bool with_mode, bool with_seed,
                        bool with_format) {
    sub->add_option("--out", opts.out_dir, "output directory");
    if (with_config) {
      sub->add_option("--config", opts.config_path, "JSON configuration file");
      sub->add_option("--preset", opts.preset, "built-in preset name");
    }
    if (with_mode)
      sub->add_option("--mode", opts.mode, "simulation mode")
          ->check(CLI::IsMember({ "analytic", "fock" }));
    if (with_seed)
      sub->add_option("--seed", opts.seed, "override the scan seed")
          ->each([&](const std::string&) { opts.seed_set = true; });
    if (with_format)
      sub->add_option("--format", opts.format, "stdout format")
          ->check(CLI::IsMember({ "json", "csv" }));
  };

  CLI::App* calibrate = app.add_subcommand("calibrate", "derive the trap/beam chain quantities");
  add_common(calibrate, true, false, false, true);
  CLI::App* simulate = app.add_subcommand("simulate", "run the pulse sequence to a state");
  add_common(simulate, true, true, false, false);
  CLI::App* scan = app.add_subcommand("scan", "generate synthetic measurement scans");
  add_common(scan, true, true, true, false);
  CLI::App* tomo = app.add_subcommand("tomo", "reconstruct a state from two phi scans");
  add_common(tomo, false, false, false, false);
  tomo->add_option("files", tomo_files, "two scan files (.csv or .json)");
  CLI::App* fit = app.add_subcommand("fit-model", "fit the echo decay model to a tau scan");
  add_common(fit, true, false, false, false);
  fit->add_option("file", fit_file, "tau scan file (.csv or .json)")->required();
  CLI::App* report = app.add_subcommand("report", "run the acceptance suite");
  add_common(report, false, false, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (calibrate->parsed()) return cmd_calibrate(opts);
    if (simulate->parsed()) return cmd_simulate(opts);
    if (scan->parsed()) return cmd_scan(opts);
    if (tomo->parsed()) return cmd_tomo(opts, tomo_files);
    if (fit->parsed()) return cmd_fit_model(opts, fit_file);
    if (report->parsed()) return cmd_report(opts);
  } catch (const config_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
