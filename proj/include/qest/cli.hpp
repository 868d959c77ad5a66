#pragma once

// Config-driven front end shared by tools/qest.cpp and the tests. A config is
// one JSON document; every object is checked against its allowed keys and the
// report echoes the fully resolved config (defaults filled in).

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qest/channel.hpp"
#include "qest/error.hpp"
#include "qest/estimate.hpp"
#include "qest/fisher.hpp"
#include "qest/phase.hpp"

namespace qest::cli {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// JSON helpers

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

inline double get_number(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  if (!j[key].is_number()) throw ConfigError(where + "." + key + ": expected a number");
  const double v = j[key].get<double>();
  if (!std::isfinite(v)) throw ConfigError(where + "." + key + ": must be finite");
  return v;
}

inline double get_number(const json& j, const std::string& key, const std::string& where, double fallback) {
  return j.contains(key) ? get_number(j, key, where) : fallback;
}

inline std::uint64_t get_unsigned(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  if (!j[key].is_number_unsigned() && !(j[key].is_number_integer() && j[key].get<std::int64_t>() >= 0))
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  return j[key].get<std::uint64_t>();
}

inline std::uint64_t get_unsigned(const json& j, const std::string& key, const std::string& where, std::uint64_t fallback) {
  return j.contains(key) ? get_unsigned(j, key, where) : fallback;
}

inline bool get_bool(const json& j, const std::string& key, const std::string& where, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) throw ConfigError(where + "." + key + ": expected true or false");
  return j[key].get<bool>();
}

inline std::string get_string(const json& j, const std::string& key, const std::string& where, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) throw ConfigError(where + "." + key + ": expected a string");
  return j[key].get<std::string>();
}

inline std::vector<double> get_real_list(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(where + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

/// Complex matrix as nested rows of [re, im] pairs.
inline json matrix_to_json(const CMatrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(json::array({m(i, k).real(), m(i, k).imag()}));
    rows.push_back(row);
  }
  return rows;
}

inline CMatrix matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty())
    throw ConfigError(where + ": expected a non-empty matrix of [re, im] pairs");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  CMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw ConfigError(where + ": ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) {
      const json& e = row[static_cast<std::size_t>(k)];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
        throw ConfigError(where + ": entries must be [re, im] pairs");
      m(i, k) = cplx(e[0].get<double>(), e[1].get<double>());
    }
  }
  if (!all_finite(m)) throw ConfigError(where + ": non-finite entry");
  return m;
}

inline Eigen::MatrixXd real_matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) throw ConfigError(where + ": expected a real matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw ConfigError(where + ": ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) {
      if (!row[static_cast<std::size_t>(k)].is_number()) throw ConfigError(where + ": entries must be numbers");
      m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
  }
  return m;
}

inline json fisher_to_json(const FisherValue& v) {
  return v.is_infinite() ? json("infinite") : json(v.value());
}

inline json mse_to_json(const MseEstimate& m) {
  return json{{"mean", m.mean}, {"std_error", m.std_error}, {"trials", m.trials}, {"theta", m.theta}, {"seed", m.seed}};
}

// ---------------------------------------------------------------------------
// Config pieces

struct FamilySpec {
  ChannelFamily family;
  std::string kind;
  json echo;
};

inline ParamSpace parse_param_space(const json& j, ParamSpace fallback, json& echo) {
  ParamSpace s = fallback;
  if (j.contains("param_space")) {
    const json& p = j["param_space"];
    check_keys(p, {"lo", "hi", "period"}, "family.param_space");
    s.lo = get_number(p, "lo", "family.param_space", s.lo);
    s.hi = get_number(p, "hi", "family.param_space", s.hi);
    if (p.contains("period")) {
      if (p["period"].is_null()) {
        s.period.reset();
      } else {
        const double per = get_number(p, "period", "family.param_space");
        if (!(per > 0.0)) throw ConfigError("family.param_space.period: must be positive");
        s.period = per;
      }
    }
    if (!(s.hi > s.lo)) throw ConfigError("family.param_space: hi must exceed lo");
  }
  echo["param_space"] = json{{"lo", s.lo}, {"hi", s.hi}, {"period", s.period ? json(*s.period) : json(nullptr)}};
  return s;
}

inline FamilySpec parse_family(const json& j) {
  check_keys(j, {"kind", "params", "param_space"}, "family");
  const std::string kind = get_string(j, "kind", "family", "");
  if (kind.empty()) throw ConfigError("family: missing 'kind'");
  const json params = j.contains("params") ? j["params"] : json::object();
  FamilySpec spec{make_identity_family(1), kind, json::object()};
  spec.echo["kind"] = kind;
  json& pe = spec.echo["params"] = json::object();

  if (kind == "unitary") {
    check_keys(params, {"h"}, "family.params");
    if (!params.contains("h")) throw ConfigError("family.params: unitary needs 'h'");
    const CMatrix h = matrix_from_json(params["h"], "family.params.h");
    if (h.rows() != h.cols() || !is_hermitian(h)) throw ConfigError("family.params.h: must be a Hermitian matrix");
    pe["h"] = matrix_to_json(h);
    const ParamSpace s = parse_param_space(j, ParamSpace{}, spec.echo);
    spec.family = make_unitary_family(h, s);
  } else if (kind == "phase_damping") {
    check_keys(params, {"rates"}, "family.params");
    if (!params.contains("rates")) throw ConfigError("family.params: phase_damping needs 'rates'");
    const Eigen::MatrixXd rates = real_matrix_from_json(params["rates"], "family.params.rates");
    if (rates.rows() != rates.cols()) throw ConfigError("family.params.rates: must be square");
    json r = json::array();
    for (Eigen::Index a = 0; a < rates.rows(); ++a) {
      json row = json::array();
      for (Eigen::Index b = 0; b < rates.cols(); ++b) row.push_back(rates(a, b));
      r.push_back(row);
    }
    pe["rates"] = r;
    const ParamSpace s = parse_param_space(j, ParamSpace{0.0, 10.0, std::nullopt}, spec.echo);
    spec.family = make_exponential_phase_damping(rates, s);
  } else if (kind == "depolarizing") {
    check_keys(params, {"dim"}, "family.params");
    const auto d = static_cast<count>(get_unsigned(params, "dim", "family.params", 2));
    if (d < 2 || d > 16) throw ConfigError("family.params.dim: must lie in [2, 16]");
    pe["dim"] = d;
    const ParamSpace s = parse_param_space(j, ParamSpace{0.0, 1.0, std::nullopt}, spec.echo);
    spec.family = make_depolarizing_family(d, s);
  } else if (kind == "shift_mixture") {
    check_keys(params, {"probs", "h_diag"}, "family.params");
    if (!params.contains("probs") || !params.contains("h_diag"))
      throw ConfigError("family.params: shift_mixture needs 'probs' and 'h_diag'");
    const auto probs = get_real_list(params["probs"], "family.params.probs");
    const auto hd = get_real_list(params["h_diag"], "family.params.h_diag");
    pe["probs"] = probs;
    pe["h_diag"] = hd;
    const ParamSpace s = parse_param_space(j, ParamSpace{}, spec.echo);
    spec.family = make_shift_mixture_family(probs, hd, s);
  } else {
    throw ConfigError("family.kind: unknown kind '" + kind + "' (unitary, phase_damping, depolarizing, shift_mixture)");
  }
  return spec;
}

struct ThetaSpec {
  std::vector<double> values;
  json echo;
};

inline ThetaSpec parse_theta(const json& j) {
  ThetaSpec t;
  if (j.is_number()) {
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ConfigError("theta: must be finite");
    t.values = {v};
    t.echo = v;
    return t;
  }
  check_keys(j, {"lo", "hi", "points"}, "theta");
  const double lo = get_number(j, "lo", "theta");
  const double hi = get_number(j, "hi", "theta");
  const auto pts = static_cast<count>(get_unsigned(j, "points", "theta"));
  if (pts < 1) throw ConfigError("theta.points: must be >= 1");
  if (pts > 1 && !(hi > lo)) throw ConfigError("theta: hi must exceed lo");
  for (count k = 0; k < pts; ++k)
    t.values.push_back(pts == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(pts - 1));
  t.echo = json{{"lo", lo}, {"hi", hi}, {"points", pts}};
  return t;
}

struct Output {
  std::string format = "json";
  std::string path;
};

/// Rows for CSV export plus the JSON document.
struct Report {
  json doc;
  std::vector<std::string> csv_header;
  std::vector<std::vector<std::string>> csv_rows;
};

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string csv_value(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  return csv_number(v.get<double>());
}

inline std::string render_csv(const Report& r) {
  std::ostringstream os;
  for (std::size_t i = 0; i < r.csv_header.size(); ++i) os << (i ? "," : "") << r.csv_header[i];
  os << "\n";
  for (const auto& row : r.csv_rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << "\n";
  }
  return os.str();
}

struct Parsed {
  json raw;
  json options;
  Output output;
};

inline Parsed parse_top(const json& cfg) {
  if (!cfg.is_object()) throw ConfigError("config: top level must be an object");
  check_keys(cfg, {"schema", "family", "theta", "options", "output"}, "config");
  if (!cfg.contains("schema")) throw ConfigError("config: missing 'schema'");
  if (!cfg["schema"].is_number_integer() || cfg["schema"].get<int>() != kSchemaVersion)
    throw ConfigError("config.schema: only schema 1 is supported");
  Parsed p;
  p.raw = cfg;
  p.options = cfg.contains("options") ? cfg["options"] : json::object();
  if (!p.options.is_object()) throw ConfigError("config.options: expected an object");
  if (cfg.contains("output")) {
    const json& o = cfg["output"];
    check_keys(o, {"format", "path"}, "output");
    p.output.format = get_string(o, "format", "output", "json");
    p.output.path = get_string(o, "path", "output", "");
    if (p.output.format != "json" && p.output.format != "csv") throw ConfigError("output.format: json or csv");
  }
  return p;
}

inline json base_doc(const std::string& command, const json& resolved) {
  json d;
  d["schema"] = kSchemaVersion;
  d["command"] = command;
  d["config"] = resolved;
  return d;
}

// ---------------------------------------------------------------------------
// Commands

inline Report cmd_choi(const json& cfg) {
  Parsed p = parse_top(cfg);
  if (!cfg.contains("family") || !cfg.contains("theta")) throw ConfigError("choi: needs 'family' and 'theta'");
  check_keys(p.options, {"fd_step", "tol"}, "options");
  const FamilySpec fam = parse_family(cfg["family"]);
  const ThetaSpec th = parse_theta(cfg["theta"]);
  const double fd = get_number(p.options, "fd_step", "options", 1e-5);
  const double tol = get_number(p.options, "tol", "options", kSupportConditionTol);
  if (!(fd > 0.0) || !(tol > 0.0)) throw ConfigError("options: fd_step and tol must be positive");

  json resolved{{"schema", kSchemaVersion}, {"family", fam.echo}, {"theta", th.echo},
                {"options", {{"fd_step", fd}, {"tol", tol}}}};
  Report r;
  r.doc = base_doc("choi", resolved);
  r.csv_header = {"x", "y"};
  json results = json::array();
  for (double t : th.values) {
    const ChoiPair pair = choi_pair(fam.family, t, fd);
    const ChoiResiduals res = choi_residuals(pair);
    const bool cc = condition_c(pair, tol);
    results.push_back(json{{"theta", t},
                           {"dim_out", pair.dim_out},
                           {"dim_in", pair.dim_in},
                           {"rank", support_projector(pair.rho).rank},
                           {"condition_c", cc},
                           {"residuals", {{"trk_rho", res.trk_rho}, {"trk_deriv", res.trk_deriv}, {"rho_min_eig", res.rho_min_eig}}},
                           {"rho", matrix_to_json(pair.rho)},
                           {"deriv", matrix_to_json(pair.deriv)}});
    r.csv_rows.push_back({csv_number(t), cc ? "1" : "0"});
  }
  r.doc["results"] = results;
  r.doc["provenance"] = json{{"rho", "choi_pair: Kraus sum of (F (x) I)|I>><<I|(F (x) I)^dag"},
                             {"deriv", fam.family.has_analytic_derivative() ? "choi_pair: analytic Kraus derivative"
                                                                           : "choi_pair: central difference of rho"},
                             {"residuals", "choi_residuals: Tr_K rho = I, Tr_K D = 0, min eig rho"},
                             {"condition_c", "condition_c: ||(I - P_rho) D|| <= tol max(||D||, 1e-12)"}};
  r.doc["csv_columns"] = json{{"x", "theta"}, {"y", "condition_c (1 true, 0 false)"}};
  return r;
}

inline Report cmd_fisher(const json& cfg) {
  Parsed p = parse_top(cfg);
  if (!cfg.contains("family") || !cfg.contains("theta")) throw ConfigError("fisher: needs 'family' and 'theta'");
  check_keys(p.options, {"tol", "optimize", "optimizer", "inputs", "additivity_copies", "superadditivity"}, "options");
  const FamilySpec fam = parse_family(cfg["family"]);
  const ThetaSpec th = parse_theta(cfg["theta"]);
  const double tol = get_number(p.options, "tol", "options", kSupportConditionTol);
  const bool optimize = get_bool(p.options, "optimize", "options", true);
  SldOptimizerOptions oo;
  if (p.options.contains("optimizer")) {
    const json& o = p.options["optimizer"];
    check_keys(o, {"restarts", "steps", "seed"}, "options.optimizer");
    oo.restarts = get_unsigned(o, "restarts", "options.optimizer", oo.restarts);
    oo.steps = get_unsigned(o, "steps", "options.optimizer", oo.steps);
    oo.seed = get_unsigned(o, "seed", "options.optimizer", oo.seed);
  }
  if (oo.restarts < 1) throw ConfigError("options.optimizer.restarts: must be >= 1");
  std::vector<CMatrix> inputs;
  json inputs_echo = json::array();
  if (p.options.contains("inputs")) {
    if (!p.options["inputs"].is_array()) throw ConfigError("options.inputs: expected an array of matrices");
    for (const auto& m : p.options["inputs"]) {
      inputs.push_back(matrix_from_json(m, "options.inputs[]"));
      inputs_echo.push_back(matrix_to_json(inputs.back()));
    }
  }
  const count copies = get_unsigned(p.options, "additivity_copies", "options", 0);
  if (copies == 1) throw ConfigError("options.additivity_copies: must be >= 2");
  std::optional<std::pair<count, count>> superadd;
  if (p.options.contains("superadditivity")) {
    const json& s = p.options["superadditivity"];
    check_keys(s, {"n", "m"}, "options.superadditivity");
    superadd = {{get_unsigned(s, "n", "options.superadditivity"), get_unsigned(s, "m", "options.superadditivity")}};
    if (superadd->first < 1 || superadd->second < 1) throw ConfigError("options.superadditivity: n, m must be >= 1");
  }

  json resolved_opts{{"tol", tol},
                     {"optimize", optimize},
                     {"optimizer", {{"restarts", oo.restarts}, {"steps", oo.steps}, {"seed", oo.seed}}},
                     {"inputs", inputs_echo}};
  if (copies) resolved_opts["additivity_copies"] = copies;
  if (superadd) resolved_opts["superadditivity"] = json{{"n", superadd->first}, {"m", superadd->second}};
  json resolved{{"schema", kSchemaVersion}, {"family", fam.echo}, {"theta", th.echo}, {"options", resolved_opts}};

  Report r;
  r.doc = base_doc("fisher", resolved);
  r.csv_header = {"x", "y"};
  json results = json::array();
  for (double t : th.values) {
    const ChoiPair pair = choi_pair(fam.family, t);
    const RldChannelResult rld = max_rld_channel(pair, tol);
    json e{{"theta", t},
           {"condition_c", rld.condition_c},
           {"j_rld_max", fisher_to_json(rld.value)},
           {"witness_input", matrix_to_json(rld.witness_input)},
           {"witness_mixing", rld.witness_mixing},
           {"witness_note", rld.note}};
    if (rld.value.is_finite()) e["witness_j_rld"] = fisher_to_json(fisher_for_input(pair, rld.witness_input, FisherKind::rld));
    if (optimize) {
      const SldOptimum opt = optimize_sld_input(pair, oo);
      e["j_sld_opt"] = opt.j_best;
      e["j_sld_opt_input"] = matrix_to_json(opt.a_best);
      e["j_sld_opt_restart"] = opt.best_restart;
    }
    json per = json::array();
    for (const auto& a : inputs) {
      const StateFamilyPoint pt = output_point(pair, a);
      per.push_back(json{{"j_sld", sld_fisher(pt)}, {"j_rld", fisher_to_json(rld_fisher(pt, tol))}});
    }
    e["inputs"] = per;
    if (copies) {
      const RldChannelResult many = max_rld_channel(choi_pair(tensor_power(fam.family, copies), t), tol);
      json a{{"copies", copies}, {"j_rld_copies", fisher_to_json(many.value)}};
      if (rld.value.is_finite() && many.value.is_finite())
        a["residual"] = std::abs(many.value.value() - static_cast<double>(copies) * rld.value.value());
      else
        a["residual"] = "not applicable: range condition fails";
      e["additivity"] = a;
    }
    if (superadd) {
      const SuperadditivityReport s = superadditivity_check(fam.family, t, superadd->first, superadd->second, oo);
      e["superadditivity"] = json{{"n", superadd->first}, {"m", superadd->second}, {"j_n", s.j_n}, {"j_m", s.j_m},
                                  {"j_n_plus_m", s.j_sum_copies}, {"slack", s.slack}, {"holds", s.holds}};
    }
    results.push_back(e);
    r.csv_rows.push_back({csv_number(t), csv_value(fisher_to_json(rld.value))});
  }
  r.doc["results"] = results;
  r.doc["provenance"] = json{
      {"j_rld_max", "max_rld_channel: ||Tr_K D rho^+ D||, infinite when condition_c fails"},
      {"witness_input", "max_rld_channel: conj(A) A^T = (1 - mixing) P_top / k + mixing I / d"},
      {"j_sld_opt", "optimize_sld_input: projected gradient ascent, a lower bound on the channel SLD maximum"},
      {"inputs", "fisher_for_input: sld_fisher and rld_fisher of (I (x) A^T) rho (I (x) conj A)"},
      {"additivity", "max_rld_channel on tensor_power versus copies * single-copy value"},
      {"superadditivity", "superadditivity_check: optimizer values on n, m and n + m copies"}};
  r.doc["csv_columns"] = json{{"x", "theta"}, {"y", "j_rld_max or infinite"}};
  return r;
}

inline Report cmd_phase(const json& cfg) {
  Parsed p = parse_top(cfg);
  if (cfg.contains("family") || cfg.contains("theta")) throw ConfigError("phase: takes no 'family' or 'theta'");
  check_keys(p.options, {"n", "sweep", "curve_points", "curve_n", "csv", "ambiguity"}, "options");
  const count n = get_unsigned(p.options, "n", "options");
  if (n > kMaxCovariantN) throw ConfigError("options.n: must be <= 5000");
  std::vector<count> sweep;
  if (p.options.contains("sweep")) {
    if (!p.options["sweep"].is_array()) throw ConfigError("options.sweep: expected an array of integers");
    for (const auto& v : p.options["sweep"]) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw ConfigError("options.sweep: expected non-negative integers");
      sweep.push_back(v.get<count>());
      if (sweep.back() > kMaxCovariantN) throw ConfigError("options.sweep: values must be <= 5000");
    }
  }
  const count curve_points = get_unsigned(p.options, "curve_points", "options", 512);
  const count curve_n = get_unsigned(p.options, "curve_n", "options", std::max<count>(n, 1));
  if (curve_n < 1 || curve_n > 20) throw ConfigError("options.curve_n: must lie in [1, 20]");
  if (curve_points < 1) throw ConfigError("options.curve_points: must be >= 1");
  const std::string csv = get_string(p.options, "csv", "options", "table");
  if (csv != "table" && csv != "curve") throw ConfigError("options.csv: table or curve");
  json amb_echo;
  if (p.options.contains("ambiguity")) {
    const json& a = p.options["ambiguity"];
    check_keys(a, {"n", "k", "theta_true", "grid_size", "seed"}, "options.ambiguity");
    if (!a.contains("seed")) throw ConfigError("options.ambiguity: 'seed' is required");
    amb_echo = json{{"n", get_unsigned(a, "n", "options.ambiguity", curve_n)},
                    {"k", get_unsigned(a, "k", "options.ambiguity", 100)},
                    {"theta_true", get_number(a, "theta_true", "options.ambiguity", 0.3)},
                    {"grid_size", get_unsigned(a, "grid_size", "options.ambiguity", 4096)},
                    {"seed", get_unsigned(a, "seed", "options.ambiguity")}};
  }

  json resolved_opts{{"n", n}, {"sweep", sweep}, {"curve_points", curve_points}, {"curve_n", curve_n}, {"csv", csv}};
  if (!amb_echo.is_null()) resolved_opts["ambiguity"] = amb_echo;
  Report r;
  r.doc = base_doc("phase", json{{"schema", kSchemaVersion}, {"options", resolved_opts}});

  json bounds;
  if (n == 0) {
    bounds = json{{"n", 0}, {"cramer_rao", "infinite"}, {"covariant", covariant_minimax_risk(0).risk}};
  } else {
    const PhaseBoundsReport b = phase_bounds_report(n);
    bounds = json{{"n", n}, {"cramer_rao", b.cramer_rao}, {"covariant", b.covariant}, {"ratio", b.ratio}};
  }
  r.doc["bounds"] = bounds;

  std::vector<count> table_n = sweep;
  if (std::find(table_n.begin(), table_n.end(), n) == table_n.end()) table_n.push_back(n);
  std::sort(table_n.begin(), table_n.end());
  json table = json::array();
  for (count m : table_n) {
    const double risk = covariant_minimax_risk(m).risk;
    const double scaled = static_cast<double>(m) * static_cast<double>(m) * risk;
    table.push_back(json{{"n", m}, {"value", risk}, {"scaled_value", scaled}});
  }
  r.doc["risk_table"] = table;

  json curve = json::array();
  const auto pts = noon_probability_curve(curve_n, curve_points);
  for (const auto& [x, y] : pts) curve.push_back(json::array({x, y}));
  r.doc["noon_curve"] = json{{"n", curve_n}, {"points", curve}};

  if (!amb_echo.is_null()) {
    const AmbiguityReport a = ambiguity_posterior(amb_echo["n"].get<count>(), amb_echo["k"].get<count>(),
                                                  amb_echo["theta_true"].get<double>(), amb_echo["seed"].get<std::uint64_t>(),
                                                  amb_echo["grid_size"].get<count>());
    json peaks = json::array();
    for (const auto& pk : a.peaks)
      peaks.push_back(json{{"location", pk.location}, {"peak", pk.peak}, {"mass", pk.mass},
                           {"distance_to_true_alias", pk.distance_to_true_alias}});
    r.doc["ambiguity"] = json{{"successes", a.successes}, {"theta_hat", a.theta_hat}, {"peaks", peaks},
                              {"mass_spread", a.mass_spread}, {"max_peak_offset", a.max_peak_offset}};
  }

  if (csv == "table") {
    r.csv_header = {"n", "value", "scaled_value"};
    for (const auto& row : table)
      r.csv_rows.push_back({std::to_string(row["n"].get<count>()), csv_number(row["value"].get<double>()),
                            csv_number(row["scaled_value"].get<double>())});
  } else {
    r.csv_header = {"x", "y"};
    for (const auto& [x, y] : pts) r.csv_rows.push_back({csv_number(x), csv_number(y)});
  }
  r.doc["provenance"] = json{{"bounds.cramer_rao", "1 / n^2 from the noon-state SLD Fisher information n^2"},
                             {"bounds.covariant", "covariant_minimax_risk: lambda_min of the cost Toeplitz matrix (computed, finite n)"},
                             {"risk_table", "covariant_minimax_risk per n; scaled_value = n^2 * value"},
                             {"noon_curve", "noon_outcome_prob: cos^2(n theta / 2)"},
                             {"ambiguity", "ambiguity_posterior: simulated noon outcomes, alias-cell masses"}};
  r.doc["csv_columns"] = csv == "table" ? json{{"n", "uses"}, {"value", "covariant risk"}, {"scaled_value", "n^2 * risk"}}
                                        : json{{"x", "theta"}, {"y", "cos^2(n theta / 2)"}};
  return r;
}

inline Report cmd_simulate(const json& cfg) {
  Parsed p = parse_top(cfg);
  check_keys(p.options, {"strategy", "seed", "n", "trials", "replicas", "grid_size", "input", "stage1_theta",
                         "local_risk", "diagnostics", "compare_covariant", "timing"},
             "options");
  if (!p.options.contains("seed")) throw ConfigError("simulate: options.seed is required");
  const std::uint64_t seed = get_unsigned(p.options, "seed", "options");
  const std::string strategy = get_string(p.options, "strategy", "options", "sld");
  const std::set<std::string> strategies{"sld", "two_step", "noon", "covariant", "two_step_phase"};
  if (!strategies.count(strategy)) throw ConfigError("options.strategy: unknown strategy '" + strategy + "'");
  if (!cfg.contains("theta")) throw ConfigError("simulate: needs 'theta'");
  const ThetaSpec th = parse_theta(cfg["theta"]);
  const bool needs_family = strategy == "sld" || strategy == "two_step";
  if (needs_family && !cfg.contains("family")) throw ConfigError("simulate: strategy '" + strategy + "' needs 'family'");
  if (!needs_family && cfg.contains("family")) throw ConfigError("simulate: strategy '" + strategy + "' takes no 'family'");

  const bool phase_like = strategy == "noon" || strategy == "covariant" || strategy == "two_step_phase";
  const count n = get_unsigned(p.options, "n", "options", strategy == "sld" ? 1 : 0);
  if (n < 1) throw ConfigError("options.n: required and >= 1 for strategy '" + strategy + "'");
  const count trials = get_unsigned(p.options, "trials", "options", 10000);
  const count replicas = get_unsigned(p.options, "replicas", "options", 1000);
  if (trials < 1 || replicas < 1) throw ConfigError("options: trials and replicas must be >= 1");
  const bool timing = get_bool(p.options, "timing", "options", false);
  const bool compare = get_bool(p.options, "compare_covariant", "options", false);

  json resolved_opts{{"strategy", strategy}, {"seed", seed}, {"n", n}};
  std::optional<FamilySpec> fam;
  if (needs_family) fam = parse_family(cfg["family"]);

  CMatrix input;
  if (needs_family) {
    input = p.options.contains("input") ? matrix_from_json(p.options["input"], "options.input")
                                        : maximally_entangled_input(fam->family.dim_in());
    resolved_opts["input"] = matrix_to_json(input);
  } else if (p.options.contains("input")) {
    throw ConfigError("options.input: only for strategies sld and two_step");
  }

  count grid_size = 0;
  if (strategy == "covariant") {
    grid_size = get_unsigned(p.options, "grid_size", "options", 8 * (n + 1));
    resolved_opts["grid_size"] = grid_size;
  } else if (p.options.contains("grid_size")) {
    throw ConfigError("options.grid_size: only for strategy covariant");
  }
  if (strategy == "two_step" || strategy == "two_step_phase") resolved_opts["replicas"] = replicas;
  else resolved_opts["trials"] = trials;

  struct LocalCfg { double eps; count points; double alpha; };
  std::optional<LocalCfg> local;
  if (p.options.contains("local_risk")) {
    if (strategy == "two_step" || strategy == "two_step_phase") throw ConfigError("options.local_risk: not for two-step strategies");
    const json& l = p.options["local_risk"];
    check_keys(l, {"eps", "grid_points", "alpha"}, "options.local_risk");
    local = LocalCfg{get_number(l, "eps", "options.local_risk"), get_unsigned(l, "grid_points", "options.local_risk", 9),
                     get_number(l, "alpha", "options.local_risk", phase_like ? 2.0 : 1.0)};
    if (!(local->eps > 0.0) || local->points < 5) throw ConfigError("options.local_risk: eps > 0 and grid_points >= 5 required");
    resolved_opts["local_risk"] = json{{"eps", local->eps}, {"grid_points", local->points}, {"alpha", local->alpha}};
  }
  struct DiagCfg { double half_width; count points; };
  std::optional<DiagCfg> diag;
  if (p.options.contains("diagnostics")) {
    if (strategy == "two_step" || strategy == "two_step_phase") throw ConfigError("options.diagnostics: not for two-step strategies");
    const json& d = p.options["diagnostics"];
    check_keys(d, {"half_width", "points"}, "options.diagnostics");
    diag = DiagCfg{get_number(d, "half_width", "options.diagnostics"), get_unsigned(d, "points", "options.diagnostics", 5)};
    if (!(diag->half_width > 0.0) || diag->points < 3) throw ConfigError("options.diagnostics: half_width > 0 and points >= 3 required");
    resolved_opts["diagnostics"] = json{{"half_width", diag->half_width}, {"points", diag->points}};
  }
  if (compare) {
    if (strategy != "noon" || !local) throw ConfigError("options.compare_covariant: needs strategy noon and local_risk");
    resolved_opts["compare_covariant"] = true;
  }
  std::optional<double> stage1_theta;
  if (p.options.contains("stage1_theta")) {
    if (strategy != "two_step") throw ConfigError("options.stage1_theta: only for strategy two_step");
    stage1_theta = get_number(p.options, "stage1_theta", "options");
  }
  if (strategy == "two_step") {
    const ParamSpace& s = fam->family.param_space();
    if (!stage1_theta) stage1_theta = s.period ? 0.0 : 0.5 * (s.lo + s.hi);
    resolved_opts["stage1_theta"] = *stage1_theta;
  }
  if (timing) resolved_opts["timing"] = true;

  json resolved{{"schema", kSchemaVersion}};
  if (fam) resolved["family"] = fam->echo;
  resolved["theta"] = th.echo;
  resolved["options"] = resolved_opts;

  const auto t0 = std::chrono::steady_clock::now();
  Report r;
  r.doc = base_doc("simulate", resolved);
  r.csv_header = {"x", "y", "stderr"};

  // Family and estimator for the single-shot strategies.
  std::optional<ChannelFamily> sim_family;
  std::optional<Estimator> sim_estimator;
  if (strategy == "noon") {
    if (n > 10) throw ConfigError("options.n: noon strategy supports n <= 10");
    NoonSetup s = make_noon_estimator(n);
    sim_family = s.family;
    sim_estimator = s.estimator;
  } else if (strategy == "covariant") {
    if (n > 64) throw ConfigError("options.n: covariant strategy supports n <= 64");
    sim_family = make_phase_mode_family(n);
    sim_estimator = make_covariant_estimator(n, grid_size);
  }

  json results = json::array();
  for (std::size_t ti = 0; ti < th.values.size(); ++ti) {
    const double t = th.values[ti];
    const std::uint64_t s = detail::sub_seed(seed, ti);
    json e{{"theta", t}};
    if (strategy == "two_step" || strategy == "two_step_phase") {
      TwoStepReport rep;
      if (strategy == "two_step") {
        const ChannelFamily& f = fam->family;
        const Estimator s1 = sld_eigenbasis_estimator(f, *stage1_theta, input);
        const ParamSpace sp = f.param_space();
        StageTwoBuilder builder = [&f, input, sp](double t1, count) {
          Estimator e2 = sld_eigenbasis_estimator(f, t1, input);
          return StageTwoPlan{f, e2, 1, make_mle_combine(f, e2, sp.lo, sp.hi, 64)};
        };
        rep = two_step_estimator(f, t, n, s1, builder, replicas, s);
      } else {
        rep = two_step_estimator(make_phase_qubit_family(), t, n, make_phase_stage1_estimator(),
                                 make_phase_stage2_builder(), replicas, s);
      }
      const double nn = static_cast<double>(n);
      e["mse"] = mse_to_json(rep.mse);
      e["n_mse"] = nn * rep.mse.mean;
      e["n2_mse"] = nn * nn * rep.mse.mean;
      e["stage1_uses"] = rep.stage1_uses;
      e["stage2_uses"] = rep.stage2_uses;
      e["blocks"] = rep.blocks;
      e["discarded_uses"] = rep.discarded;
      e["localization_failures"] = rep.localization_failures;
      e["stage1_cell"] = rep.stage1_cell;
      r.csv_rows.push_back({csv_number(t), csv_number(rep.mse.mean), csv_number(rep.mse.std_error)});
    } else {
      ChannelFamily f = sim_family ? *sim_family : fam->family;
      Estimator est = sim_estimator ? *sim_estimator : sld_eigenbasis_estimator(fam->family, t, input);
      validate_estimator(f, est);
      const MseEstimate m = simulate_mse(f, t, est, trials, s);
      e["mse"] = mse_to_json(m);
      e["exact_mse"] = exact_mse(f, t, est);
      e["classical_fisher"] = f.param_space().period || (t - 1e-6 >= f.param_space().lo && t + 1e-6 <= f.param_space().hi)
                                  ? json(classical_fisher(f, t, est))
                                  : json("not available at the boundary");
      if (strategy == "covariant") e["covariant_risk"] = covariant_minimax_risk(n).risk;
      if (local) {
        const LocalRiskReport lr = local_minimax_risk(f, est, t, local->eps, local->points, trials, s, local->alpha);
        e["local_risk"] = json{{"n", lr.n}, {"eps", lr.eps}, {"alpha", lr.alpha}, {"scaled_max", lr.scaled_max},
                               {"argmax_theta", lr.argmax_theta}, {"scaled_std_error", lr.argmax_std_error}};
        if (compare) {
          const ChannelFamily cf = make_phase_mode_family(n);
          const Estimator ce = make_covariant_estimator(n, 8 * (n + 1));
          const LocalRiskReport cr = local_minimax_risk(cf, ce, t, local->eps, local->points, trials, s, local->alpha);
          e["covariant_local_risk"] = json{{"scaled_max", cr.scaled_max}, {"scaled_std_error", cr.argmax_std_error},
                                           {"noon_strictly_larger", lr.scaled_max > cr.scaled_max}};
        }
      }
      if (diag) {
        std::vector<double> grid;
        for (count k = 0; k < diag->points; ++k)
          grid.push_back(t - diag->half_width + 2.0 * diag->half_width * static_cast<double>(k) / static_cast<double>(diag->points - 1));
        const DiagnosticsReport d = unbiasedness_diagnostics(f, est, grid, trials, s);
        json pts = json::array();
        for (const auto& q : d.points)
          pts.push_back(json{{"theta", q.theta}, {"eta_hat", q.eta_hat}, {"v_hat", q.v_hat}, {"v_std_error", q.v_std_error},
                             {"mse_hat", q.mse_hat}, {"slope_exact", q.slope_exact}, {"fisher", q.fisher},
                             {"cr_bound", std::isfinite(q.cr_bound) ? json(q.cr_bound) : json("infinite")},
                             {"cr_holds", q.cr_holds}});
        e["diagnostics"] = json{{"points", pts}, {"midpoints", d.midpoints}, {"midpoint_slopes", d.midpoint_slopes},
                                {"all_cr_hold", d.all_cr_hold}};
      }
      r.csv_rows.push_back({csv_number(t), csv_number(m.mean), csv_number(m.std_error)});
    }
    results.push_back(e);
  }
  r.doc["results"] = results;
  r.doc["provenance"] = json{{"mse", "simulate_mse / two_step_estimator: seeded Monte Carlo, stream (seed, trial)"},
                             {"exact_mse", "exact_mse: Born-rule expectation of the squared label error"},
                             {"classical_fisher", "classical_fisher: central differences of the outcome distribution"},
                             {"local_risk", "local_minimax_risk: n^alpha * max over the eps-grid of simulated MSE"},
                             {"diagnostics", "unbiasedness_diagnostics: eta, v, exact slope, classical Cramer-Rao check"}};
  r.doc["csv_columns"] = json{{"x", "theta"}, {"y", "mse"}, {"stderr", "standard error of the mse"}};
  if (timing)
    r.doc["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline Report dispatch(const std::string& command, const json& cfg) {
  if (command == "choi") return cmd_choi(cfg);
  if (command == "fisher") return cmd_fisher(cfg);
  if (command == "phase") return cmd_phase(cfg);
  if (command == "simulate") return cmd_simulate(cfg);
  throw ConfigError("unknown command '" + command + "'");
}

/// Runs body and maps its exceptions to exit codes: 0 ok, 1 config,
/// 2 precondition, 3 numerical. Messages go to err.
template <class Body>
int guarded(Body&& body, std::ostream& err) {
  try {
    body();
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const PreconditionError& e) {
    err << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "numerical error: " << e.what() << "\n";
    return 3;
  }
}

/// Reads the config, runs the command and writes the report; returns the exit code.
inline int run(const std::string& command, const std::string& config_path, const std::string& out_flag,
               const std::string& format_flag, std::ostream& out, std::ostream& err) {
  return guarded([&] {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file '" + config_path + "'");
    json cfg;
    try {
      cfg = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    const Parsed top = parse_top(cfg);
    const Report rep = dispatch(command, cfg);
    const std::string format = !format_flag.empty() ? format_flag : top.output.format;
    const std::string path = !out_flag.empty() ? out_flag : top.output.path;
    if (format != "json" && format != "csv") throw ConfigError("format must be json or csv");
    const std::string text = format == "json" ? rep.doc.dump(2) + "\n" : render_csv(rep);
    if (path.empty()) {
      out << text;
    } else {
      std::ofstream f(path, std::ios::binary);
      if (!f) throw ConfigError("cannot write output file '" + path + "'");
      f << text;
    }
  }, err);
}

}  // namespace qest::cli
