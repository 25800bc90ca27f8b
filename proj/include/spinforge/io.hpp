#pragma once

// JSON/CSV serialization and configuration ingestion. On-disk units are
// human-denominated and spelled out in the field names (frequencies in
// ordinary Hz, durations in us, dephasing in 1/ms, beam angles in deg);
// in-memory quantities stay angular (rad/s) and SI (s). Inline pulse-op
// records are the one exception: they serialize in SI directly.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "gate_sim.hpp"
#include "measurement_model.hpp"
#include "quantum_core.hpp"
#include "tomography.hpp"
#include "trap_physics.hpp"

namespace spinforge {

using nlohmann::json;

namespace detail {

// Shortest decimal that round-trips, so identical data writes identical bytes.
inline std::string fmt_double(double x) {
  if (!std::isfinite(x)) throw numerical_failure("serialize: non-finite number");
  return json(x).dump();
}

inline std::string json_path(const std::string& block, const std::string& key) {
  return block.empty() ? key : block + "." + key;
}

inline const json& require_field(const json& j, const std::string& block, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end())
    throw config_error("config: missing required field '" + json_path(block, key) + "'");
  return *it;
}

inline double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw config_error("config: '" + where + "' must be a number");
  return v.get<double>();
}

inline double require_number(const json& j, const std::string& block, const std::string& key) {
  return as_number(require_field(j, block, key), json_path(block, key));
}

inline double number_or(const json& j, const std::string& block, const std::string& key,
                        double fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : as_number(*it, json_path(block, key));
}

inline bool bool_or(const json& j, const std::string& block, const std::string& key,
                    bool fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_boolean())
    throw config_error("config: '" + json_path(block, key) + "' must be a boolean");
  return it->get<bool>();
}

inline std::vector<double> number_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw config_error("config: '" + where + "' must be an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(as_number(e, where));
  return out;
}

inline void check_keys(const json& j, const std::string& block,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw config_error("config: '" + (block.empty() ? std::string("top level") : block) +
                       "' must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) { known = true; break; }
    if (!known)
      throw config_error("config: unknown field '" + json_path(block, item.key()) + "'");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// files

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open input file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot open output file for writing: " + path);
  out << content;
  if (!out) throw error("write failed: " + path);
}

inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error("invalid JSON in " + origin + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// density matrices: 4x4 nested array of [re, im] pairs, row-major, basis
// order (uu, ud, du, dd)

inline json rho_to_json(const Matrix4c& rho) {
  json rows = json::array();
  for (int r = 0; r < 4; ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) row.push_back(json::array({ rho(r, c).real(), rho(r, c).imag() }));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json rho_to_json(const DensityMatrix& rho) { return rho_to_json(rho.m()); }

inline Matrix4c rho_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4)
    throw config_error("density matrix: expected a 4x4 nested array");
  Matrix4c rho;
  for (int r = 0; r < 4; ++r) {
    const json& row = j[r];
    if (!row.is_array() || row.size() != 4)
      throw config_error("density matrix: expected a 4x4 nested array");
    for (int c = 0; c < 4; ++c) {
      const json& cell = row[c];
      if (!cell.is_array() || cell.size() != 2 || !cell[0].is_number() || !cell[1].is_number())
        throw config_error("density matrix: each entry must be an [re, im] pair");
      rho(r, c) = cxd(cell[0].get<double>(), cell[1].get<double>());
    }
  }
  return rho;
}

// ---------------------------------------------------------------------------
// pulse sequences: list of tagged op records, SI units

inline json sequence_to_json(const PulseSequence& seq) {
  json ops = json::array();
  for (const PulseOp& op : seq.ops) {
    if (const auto* rot = std::get_if<CarrierRotation>(&op)) {
      ops.push_back({ { "op", "carrier" }, { "theta_rad", rot->theta }, { "phi_rad", rot->phi } });
    } else if (const auto* fp = std::get_if<ForcePulse>(&op)) {
      ops.push_back({ { "op", "force" },
                      { "omega_f_rad_per_s", fp->params.Omega_f },
                      { "delta_rad_per_s", fp->params.delta },
                      { "delta_c_rad_per_s", fp->params.Delta_c },
                      { "tau_s", fp->params.tau } });
    } else {
      ops.push_back({ { "op", "wait" }, { "t_s", std::get<Wait>(op).t } });
    }
  }
  return ops;
}

inline PulseSequence sequence_from_json(const json& j) {
  if (!j.is_array()) throw config_error("sequence: expected an array of op records");
  PulseSequence seq;
  for (const json& rec : j) {
    if (!rec.is_object() || !rec.contains("op") || !rec["op"].is_string())
      throw config_error("sequence: each op record needs a string 'op' tag");
    const std::string tag = rec["op"].get<std::string>();
    if (tag == "carrier") {
      detail::check_keys(rec, "sequence op", { "op", "theta_rad", "phi_rad" });
      seq.ops.push_back(CarrierRotation{ detail::require_number(rec, "carrier", "theta_rad"),
                                         detail::number_or(rec, "carrier", "phi_rad", 0.0) });
    } else if (tag == "force") {
      detail::check_keys(rec, "sequence op",
                         { "op", "omega_f_rad_per_s", "delta_rad_per_s", "delta_c_rad_per_s",
                           "tau_s" });
      ForcePulseParams p;
      p.Omega_f = detail::require_number(rec, "force", "omega_f_rad_per_s");
      p.delta = detail::require_number(rec, "force", "delta_rad_per_s");
      p.Delta_c = detail::number_or(rec, "force", "delta_c_rad_per_s", 0.0);
      p.tau = detail::require_number(rec, "force", "tau_s");
      seq.ops.push_back(ForcePulse{ p });
    } else if (tag == "wait") {
      detail::check_keys(rec, "sequence op", { "op", "t_s" });
      seq.ops.push_back(Wait{ detail::require_number(rec, "wait", "t_s") });
    } else {
      throw config_error("sequence: unknown op tag '" + tag + "'");
    }
  }
  return seq;
}

// ---------------------------------------------------------------------------
// sim options / readout model blocks (shared by scan metadata and configs)

inline json sim_options_to_json(const SimOptions& o) {
  return { { "mode", o.mode == SimMode::analytic ? "analytic" : "fock" },
           { "fock_dim", o.fock_dim },
           { "nbar", o.nbar },
           { "gamma_per_ms", o.gamma * 1e-3 },
           { "thermal_coherence_factor", o.include_thermal_coherence_factor } };
}

inline SimOptions sim_options_from_json(const json& j, const std::string& block) {
  detail::check_keys(j, block,
                     { "mode", "fock_dim", "nbar", "gamma_per_ms", "thermal_coherence_factor" });
  SimOptions o;
  if (auto it = j.find("mode"); it != j.end()) {
    if (!it->is_string()) throw config_error("config: '" + block + ".mode' must be a string");
    const std::string mode = it->get<std::string>();
    if (mode == "analytic") o.mode = SimMode::analytic;
    else if (mode == "fock") o.mode = SimMode::fock;
    else throw config_error("config: '" + block + ".mode' must be \"analytic\" or \"fock\"");
  }
  o.fock_dim = static_cast<int>(detail::number_or(j, block, "fock_dim", o.fock_dim));
  o.nbar = detail::number_or(j, block, "nbar", o.nbar);
  o.gamma = detail::number_or(j, block, "gamma_per_ms", o.gamma * 1e-3) * 1e3;
  o.include_thermal_coherence_factor =
      detail::bool_or(j, block, "thermal_coherence_factor", o.include_thermal_coherence_factor);
  return o;
}

inline json readout_to_json(const ReadoutModel& r) {
  return { { "p_prep", r.p_prep }, { "eps_bright", r.eps_bright }, { "eps_dark", r.eps_dark } };
}

inline ReadoutModel readout_from_json(const json& j, const std::string& block) {
  detail::check_keys(j, block, { "p_prep", "eps_bright", "eps_dark" });
  ReadoutModel r;
  r.p_prep = detail::number_or(j, block, "p_prep", r.p_prep);
  r.eps_bright = detail::number_or(j, block, "eps_bright", r.eps_bright);
  r.eps_dark = detail::number_or(j, block, "eps_dark", r.eps_dark);
  return r;
}

// ---------------------------------------------------------------------------
// scan data: CSV (data only) and JSON (data + metadata)

inline std::string scan_to_csv(const ScanData& scan) {
  std::string out = "kind,theta_rad,phi_rad,tau_s,n_uu,n_mid,n_dd,n_shots\n";
  for (const ScanRecord& rec : scan.records) {
    const bool phi_kind = rec.kind == ScanKind::phi;
    out += phi_kind ? "phi," : "tau,";
    out += phi_kind ? detail::fmt_double(rec.theta) : "";
    out += ",";
    out += phi_kind ? detail::fmt_double(rec.phi) : "";
    out += ",";
    out += phi_kind ? "" : detail::fmt_double(rec.tau);
    out += "," + detail::fmt_double(rec.n_uu) + "," + detail::fmt_double(rec.n_mid) + "," +
           detail::fmt_double(rec.n_dd) + "," + detail::fmt_double(rec.n_shots) + "\n";
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

inline double csv_number(const std::string& cell, size_t line_no) {
  if (cell.empty()) return 0.0;
  try {
    size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw config_error("scan CSV line " + std::to_string(line_no) + ": bad number '" + cell + "'");
  }
}

}  // namespace detail

// CSV carries the data table only; metadata (readout, options, seed) is
// JSON-only, so a CSV read falls back to default metadata.
inline ScanData scan_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw config_error("scan CSV: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "kind,theta_rad,phi_rad,tau_s,n_uu,n_mid,n_dd,n_shots")
    throw config_error("scan CSV: unexpected header '" + line + "'");
  ScanData scan;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 8)
      throw config_error("scan CSV line " + std::to_string(line_no) + ": expected 8 columns");
    ScanRecord rec;
    if (cells[0] == "phi") rec.kind = ScanKind::phi;
    else if (cells[0] == "tau") rec.kind = ScanKind::tau;
    else
      throw config_error("scan CSV line " + std::to_string(line_no) + ": bad kind '" + cells[0] +
                         "'");
    rec.theta = detail::csv_number(cells[1], line_no);
    rec.phi = detail::csv_number(cells[2], line_no);
    rec.tau = detail::csv_number(cells[3], line_no);
    rec.n_uu = detail::csv_number(cells[4], line_no);
    rec.n_mid = detail::csv_number(cells[5], line_no);
    rec.n_dd = detail::csv_number(cells[6], line_no);
    rec.n_shots = detail::csv_number(cells[7], line_no);
    scan.records.push_back(rec);
  }
  if (!scan.records.empty()) scan.metadata.theta = scan.records.front().theta;
  return scan;
}

inline json scan_to_json(const ScanData& scan) {
  json records = json::array();
  for (const ScanRecord& rec : scan.records) {
    records.push_back({ { "kind", rec.kind == ScanKind::phi ? "phi" : "tau" },
                        { "theta_rad", rec.theta },
                        { "phi_rad", rec.phi },
                        { "tau_s", rec.tau },
                        { "n_uu", rec.n_uu },
                        { "n_mid", rec.n_mid },
                        { "n_dd", rec.n_dd },
                        { "n_shots", rec.n_shots } });
  }
  json meta = { { "sequence", scan.metadata.sequence },
                { "seed", scan.metadata.seed },
                { "exact", scan.metadata.exact },
                { "theta_rad", scan.metadata.theta },
                { "options", sim_options_to_json(scan.metadata.options) },
                { "readout", readout_to_json(scan.metadata.readout) },
                { "units", { { "angles", "rad" }, { "times", "s" } } } };
  return { { "metadata", std::move(meta) }, { "records", std::move(records) } };
}

inline ScanData scan_from_json(const json& j) {
  detail::check_keys(j, "scan file", { "metadata", "records" });
  ScanData scan;
  if (auto it = j.find("metadata"); it != j.end()) {
    const json& m = *it;
    detail::check_keys(m, "metadata",
                       { "sequence", "seed", "exact", "theta_rad", "options", "readout", "units" });
    if (auto s = m.find("sequence"); s != m.end()) {
      if (!s->is_string()) throw config_error("config: 'metadata.sequence' must be a string");
      scan.metadata.sequence = s->get<std::string>();
    }
    if (auto s = m.find("seed"); s != m.end()) {
      if (!s->is_number_unsigned())
        throw config_error("config: 'metadata.seed' must be an unsigned integer");
      scan.metadata.seed = s->get<std::uint64_t>();
    }
    scan.metadata.exact = detail::bool_or(m, "metadata", "exact", false);
    scan.metadata.theta = detail::number_or(m, "metadata", "theta_rad", 0.0);
    if (auto s = m.find("options"); s != m.end())
      scan.metadata.options = sim_options_from_json(*s, "metadata.options");
    if (auto s = m.find("readout"); s != m.end())
      scan.metadata.readout = readout_from_json(*s, "metadata.readout");
  }
  const json& records = detail::require_field(j, "scan file", "records");
  if (!records.is_array()) throw config_error("config: 'records' must be an array");
  for (const json& r : records) {
    detail::check_keys(r, "record",
                       { "kind", "theta_rad", "phi_rad", "tau_s", "n_uu", "n_mid", "n_dd",
                         "n_shots" });
    ScanRecord rec;
    const json& kind = detail::require_field(r, "record", "kind");
    if (kind == "phi") rec.kind = ScanKind::phi;
    else if (kind == "tau") rec.kind = ScanKind::tau;
    else throw config_error("config: record kind must be \"phi\" or \"tau\"");
    rec.theta = detail::number_or(r, "record", "theta_rad", 0.0);
    rec.phi = detail::number_or(r, "record", "phi_rad", 0.0);
    rec.tau = detail::number_or(r, "record", "tau_s", 0.0);
    rec.n_uu = detail::require_number(r, "record", "n_uu");
    rec.n_mid = detail::require_number(r, "record", "n_mid");
    rec.n_dd = detail::require_number(r, "record", "n_dd");
    rec.n_shots = detail::require_number(r, "record", "n_shots");
    scan.records.push_back(rec);
  }
  return scan;
}

// ---------------------------------------------------------------------------
// tomography results

inline json entanglement_to_json(const EntanglementReport& rep) {
  return { { "fidelity", rep.fidelity },
           { "best_r_rad", rep.best_r },
           { "coherence_abs", std::abs(rep.coherence) },
           { "coherence_phase_rad", std::arg(rep.coherence) },
           { "concurrence", rep.concurrence },
           { "eof", rep.eof } };
}

inline json tomo_to_json(const TomoResult& t) {
  json svals = json::array();
  for (Eigen::Index i = 0; i < t.diagnostics.design_svals.size(); ++i)
    svals.push_back(t.diagnostics.design_svals[i]);
  json rms = json::array();
  for (double v : t.diagnostics.fit_residual_rms) rms.push_back(v);
  return { { "rho_m", rho_to_json(t.rho_M) },
           { "rho_p", rho_to_json(t.rho_P) },
           { "null_space_dims", t.null_space_dims },
           { "ml_cost", t.cost },
           { "metrics", entanglement_to_json(t.report) },
           { "design_singular_values", std::move(svals) },
           { "fit_residual_rms", std::move(rms) } };
}

// Bar-chart data for a reconstructed matrix: one line per element, row-major.
inline std::string rho_bar_csv(const Matrix4c& rho) {
  std::string out = "row,col,abs,phase_rad\n";
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      out += std::to_string(r) + "," + std::to_string(c) + "," +
             detail::fmt_double(std::abs(rho(r, c))) + "," +
             detail::fmt_double(std::arg(rho(r, c))) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// derived-geometry report (calibrate)

inline json geometry_to_json(const DerivedGeometry& g) {
  return { { "delta_k_per_m", g.delta_k },
           { "omega_s_hz", g.omega_s / (2 * pi) },
           { "z0s_m", g.z0s },
           { "eta", g.eta },
           { "d_m", g.d },
           { "p", g.p_real },
           { "delta_phi_rad", g.delta_phi },
           { "rabi_sigma_hz", g.Omega_s / (2 * pi) },
           { "omega_f_hz", g.Omega_f / (2 * pi) } };
}

// ---------------------------------------------------------------------------
// run configuration

struct ScanGrid {
  std::vector<double> theta_list;  // analysis polar angles (rad), one file per angle
  std::vector<double> phi;         // analysis phases (rad); phi scans
  std::vector<double> tau;         // pulse durations (s); tau scans
  long n_shots = 500;
  std::uint64_t seed = 1;
  bool exact = false;
};

struct RunConfig {
  TrapConfig trap;
  ForcePulseParams pulse;
  std::string sequence_name = "double_w";  // "single_w" | "double_w" | "inline"
  PulseSequence inline_sequence;
  SimOptions sim;
  ReadoutModel readout;
  ScanGrid scan;
  bool has_trap = false;
  bool has_pulse = false;
  bool has_scan = false;
};

inline TrapConfig trap_from_json(const json& j) {
  detail::check_keys(j, "trap",
                     { "omega_c_hz", "ion_mass_kg", "lambda_nm", "theta_l_deg", "theta_a_deg",
                       "beta_rad", "omega_0_hz", "rabi_carrier_hz" });
  TrapConfig t;
  t.omega_c = 2 * pi * detail::require_number(j, "trap", "omega_c_hz");
  t.ion_mass = detail::number_or(j, "trap", "ion_mass_kg", t.ion_mass);
  t.lambda = detail::number_or(j, "trap", "lambda_nm", t.lambda * 1e9) * 1e-9;
  t.theta_L = detail::number_or(j, "trap", "theta_l_deg", 0.0) * pi / 180.0;
  t.theta_A = detail::number_or(j, "trap", "theta_a_deg", 0.0) * pi / 180.0;
  t.beta = detail::number_or(j, "trap", "beta_rad", 0.0);
  t.omega_0 = 2 * pi * detail::number_or(j, "trap", "omega_0_hz", 0.0);
  t.Omega_c = 2 * pi * detail::number_or(j, "trap", "rabi_carrier_hz", 0.0);
  return t;
}

inline json trap_to_json(const TrapConfig& t) {
  return { { "omega_c_hz", t.omega_c / (2 * pi) },
           { "ion_mass_kg", t.ion_mass },
           { "lambda_nm", t.lambda * 1e9 },
           { "theta_l_deg", t.theta_L * 180.0 / pi },
           { "theta_a_deg", t.theta_A * 180.0 / pi },
           { "beta_rad", t.beta },
           { "omega_0_hz", t.omega_0 / (2 * pi) },
           { "rabi_carrier_hz", t.Omega_c / (2 * pi) } };
}

inline ForcePulseParams pulse_from_json(const json& j) {
  detail::check_keys(j, "pulse", { "omega_f_hz", "delta_hz", "delta_c_hz", "tau_us" });
  ForcePulseParams p;
  p.Omega_f = 2 * pi * detail::require_number(j, "pulse", "omega_f_hz");
  p.delta = 2 * pi * detail::require_number(j, "pulse", "delta_hz");
  p.Delta_c = 2 * pi * detail::number_or(j, "pulse", "delta_c_hz", 0.0);
  p.tau = detail::require_number(j, "pulse", "tau_us") * 1e-6;
  return p;
}

inline json pulse_to_json(const ForcePulseParams& p) {
  return { { "omega_f_hz", p.Omega_f / (2 * pi) },
           { "delta_hz", p.delta / (2 * pi) },
           { "delta_c_hz", p.Delta_c / (2 * pi) },
           { "tau_us", p.tau * 1e6 } };
}

inline ScanGrid scan_grid_from_json(const json& j) {
  detail::check_keys(j, "scan",
                     { "theta_list_rad", "phi_rad", "tau_us", "n_shots", "seed", "exact" });
  ScanGrid g;
  if (auto it = j.find("theta_list_rad"); it != j.end())
    g.theta_list = detail::number_list(*it, "scan.theta_list_rad");
  if (auto it = j.find("phi_rad"); it != j.end())
    g.phi = detail::number_list(*it, "scan.phi_rad");
  if (auto it = j.find("tau_us"); it != j.end()) {
    g.tau = detail::number_list(*it, "scan.tau_us");
    for (double& t : g.tau) t *= 1e-6;
  }
  if (g.phi.empty() == g.tau.empty())
    throw config_error("config: scan needs exactly one of 'phi_rad' or 'tau_us' non-empty");
  if (!g.phi.empty() && g.theta_list.empty())
    throw config_error("config: phi scans need a non-empty 'scan.theta_list_rad'");
  const double n_shots = detail::number_or(j, "scan", "n_shots", 500.0);
  if (!(n_shots >= 1) || n_shots != std::floor(n_shots))
    throw config_error("config: 'scan.n_shots' must be a positive integer");
  g.n_shots = static_cast<long>(n_shots);
  if (auto it = j.find("seed"); it != j.end()) {
    if (!it->is_number_unsigned())
      throw config_error("config: 'scan.seed' must be an unsigned integer");
    g.seed = it->get<std::uint64_t>();
  }
  g.exact = detail::bool_or(j, "scan", "exact", false);
  return g;
}

inline json scan_grid_to_json(const ScanGrid& g) {
  json tau_us = json::array();
  for (double t : g.tau) tau_us.push_back(t * 1e6);
  return { { "theta_list_rad", g.theta_list },
           { "phi_rad", g.phi },
           { "tau_us", std::move(tau_us) },
           { "n_shots", g.n_shots },
           { "seed", g.seed },
           { "exact", g.exact } };
}

inline RunConfig config_from_json(const json& j) {
  detail::check_keys(j, "", { "trap", "pulse", "sequence", "sim", "readout", "scan" });
  RunConfig cfg;
  if (auto it = j.find("trap"); it != j.end()) {
    cfg.trap = trap_from_json(*it);
    cfg.has_trap = true;
  }
  if (auto it = j.find("pulse"); it != j.end()) {
    cfg.pulse = pulse_from_json(*it);
    cfg.has_pulse = true;
  }
  if (auto it = j.find("sequence"); it != j.end()) {
    if (it->is_string()) {
      cfg.sequence_name = it->get<std::string>();
      if (cfg.sequence_name != "single_w" && cfg.sequence_name != "double_w")
        throw config_error("config: unknown sequence preset '" + cfg.sequence_name + "'");
    } else {
      cfg.inline_sequence = sequence_from_json(*it);
      cfg.sequence_name = "inline";
    }
  }
  if (auto it = j.find("sim"); it != j.end()) cfg.sim = sim_options_from_json(*it, "sim");
  if (auto it = j.find("readout"); it != j.end()) cfg.readout = readout_from_json(*it, "readout");
  if (auto it = j.find("scan"); it != j.end()) {
    cfg.scan = scan_grid_from_json(*it);
    cfg.has_scan = true;
  }
  return cfg;
}

inline json config_to_json(const RunConfig& cfg) {
  json j = json::object();
  if (cfg.has_trap) j["trap"] = trap_to_json(cfg.trap);
  if (cfg.has_pulse) j["pulse"] = pulse_to_json(cfg.pulse);
  if (cfg.sequence_name == "inline") j["sequence"] = sequence_to_json(cfg.inline_sequence);
  else j["sequence"] = cfg.sequence_name;
  j["sim"] = sim_options_to_json(cfg.sim);
  j["readout"] = readout_to_json(cfg.readout);
  if (cfg.has_scan) j["scan"] = scan_grid_to_json(cfg.scan);
  return j;
}

inline RunConfig load_config(const std::string& path) {
  return config_from_json(parse_json(read_text_file(path), path));
}

// The pulse sequence a config describes (preset built from the pulse block, or
// the inline op list verbatim).
inline PulseSequence sequence_from_config(const RunConfig& cfg) {
  if (cfg.sequence_name == "inline") return cfg.inline_sequence;
  if (!cfg.has_pulse)
    throw config_error("config: sequence preset '" + cfg.sequence_name +
                       "' needs a 'pulse' block");
  const SequenceKind kind =
      cfg.sequence_name == "single_w" ? SequenceKind::single_W : SequenceKind::double_W;
  return build_echo_sequence(kind, cfg.pulse);
}

}  // namespace spinforge
