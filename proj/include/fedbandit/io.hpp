#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "fedbandit/harness.hpp"

#ifndef FEDBANDIT_VERSION
#define FEDBANDIT_VERSION "unknown"
#endif

namespace fedbandit {

using Json = nlohmann::ordered_json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const char* version_string() { return FEDBANDIT_VERSION; }

namespace detail {

inline Json number_or_inf(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

inline double read_number_or_inf(const Json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    throw PreconditionError("expected a number or \"inf\", got \"" + s + "\"");
  }
  return j.get<double>();
}

template <typename T>
void read_if(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline Json to_json(const SimConfig& c) {
  const auto& ch = c.channel;
  const auto& b = c.bound_params;
  Json j;
  j["num_devices_M"] = c.num_devices_M;
  j["horizon_T"] = c.horizon_T;
  j["dimension_d"] = c.dimension_d;
  j["num_actions_K"] = c.num_actions_K;
  j["snr_db"] = c.snr_db ? Json(*c.snr_db) : Json("error-free");
  j["snr_reference"] = c.snr_reference == SnrReference::cell_edge ? "cell_edge" : "transmit";
  j["p0_dbm"] = c.p0_dbm;
  j["channel"] = {{"path_loss_G0", ch.path_loss_G0},
                  {"path_loss_exponent_zeta", ch.path_loss_exponent_zeta},
                  {"reference_distance_k0", ch.reference_distance_k0},
                  {"cell_radius_R", ch.cell_radius_R}};
  j["bound_params"] = {{"alpha", b.alpha},
                       {"C", b.C},
                       {"c", b.c},
                       {"nu", b.nu},
                       {"gamma_floor", b.gamma_floor},
                       {"lambda_reg", b.lambda_reg},
                       {"sigma_reward", b.sigma_reward},
                       {"S_bound", b.S_bound},
                       {"L_bound", b.L_bound},
                       {"nominal_sync_rounds", b.nominal_sync_rounds},
                       {"sigma_override", b.sigma_override ? Json(*b.sigma_override) : Json(nullptr)}};
  j["threshold_override"] =
      c.threshold_override ? detail::number_or_inf(*c.threshold_override) : Json(nullptr);
  j["psd_policy"] = c.psd_policy == PsdPolicy::eigen_floor ? "eigen_floor" : "fixed_shift";
  j["psd_epsilon"] = c.psd_epsilon;
  j["psd_relative"] = c.psd_relative;
  j["deep_fade_ratio"] = c.deep_fade_ratio;
  j["trials"] = c.trials;
  j["base_seed"] = c.base_seed;
  if (c.sweep)
    j["sweep"] = {{"param", c.sweep->param}, {"values", c.sweep->values}};
  else
    j["sweep"] = nullptr;
  return j;
}

/// Missing keys keep their defaults, so a config file only has to list what
/// it changes.
inline SimConfig sim_config_from_json(const Json& j, SimConfig c = {}) {
  try {
    detail::read_if(j, "num_devices_M", c.num_devices_M);
    detail::read_if(j, "horizon_T", c.horizon_T);
    detail::read_if(j, "dimension_d", c.dimension_d);
    detail::read_if(j, "num_actions_K", c.num_actions_K);
    if (j.contains("snr_db")) {
      const auto& s = j.at("snr_db");
      if (s.is_null() || (s.is_string() && (s == "error-free" || s == "inf")))
        c.snr_db.reset();
      else
        c.snr_db = s.get<double>();
    }
    if (j.contains("snr_reference")) {
      const auto r = j.at("snr_reference").get<std::string>();
      if (r == "cell_edge")
        c.snr_reference = SnrReference::cell_edge;
      else if (r == "transmit")
        c.snr_reference = SnrReference::transmit;
      else
        throw PreconditionError("snr_reference must be \"cell_edge\" or \"transmit\"");
    }
    detail::read_if(j, "p0_dbm", c.p0_dbm);
    if (j.contains("channel")) {
      const auto& ch = j.at("channel");
      detail::read_if(ch, "path_loss_G0", c.channel.path_loss_G0);
      detail::read_if(ch, "path_loss_exponent_zeta", c.channel.path_loss_exponent_zeta);
      detail::read_if(ch, "reference_distance_k0", c.channel.reference_distance_k0);
      detail::read_if(ch, "cell_radius_R", c.channel.cell_radius_R);
    }
    if (j.contains("bound_params")) {
      const auto& b = j.at("bound_params");
      auto& o = c.bound_params;
      detail::read_if(b, "alpha", o.alpha);
      detail::read_if(b, "C", o.C);
      detail::read_if(b, "c", o.c);
      detail::read_if(b, "nu", o.nu);
      detail::read_if(b, "gamma_floor", o.gamma_floor);
      detail::read_if(b, "lambda_reg", o.lambda_reg);
      detail::read_if(b, "sigma_reward", o.sigma_reward);
      detail::read_if(b, "S_bound", o.S_bound);
      detail::read_if(b, "L_bound", o.L_bound);
      detail::read_if(b, "nominal_sync_rounds", o.nominal_sync_rounds);
      if (b.contains("sigma_override")) {
        if (b.at("sigma_override").is_null())
          o.sigma_override.reset();
        else
          o.sigma_override = b.at("sigma_override").get<double>();
      }
    }
    if (j.contains("threshold_override")) {
      if (j.at("threshold_override").is_null())
        c.threshold_override.reset();
      else
        c.threshold_override = detail::read_number_or_inf(j.at("threshold_override"));
    }
    if (j.contains("psd_policy")) {
      const auto p = j.at("psd_policy").get<std::string>();
      if (p == "eigen_floor")
        c.psd_policy = PsdPolicy::eigen_floor;
      else if (p == "fixed_shift")
        c.psd_policy = PsdPolicy::fixed_shift;
      else
        throw PreconditionError("psd_policy must be \"eigen_floor\" or \"fixed_shift\"");
    }
    detail::read_if(j, "psd_epsilon", c.psd_epsilon);
    detail::read_if(j, "psd_relative", c.psd_relative);
    detail::read_if(j, "deep_fade_ratio", c.deep_fade_ratio);
    detail::read_if(j, "trials", c.trials);
    detail::read_if(j, "base_seed", c.base_seed);
    if (j.contains("sweep")) {
      if (j.at("sweep").is_null()) {
        c.sweep.reset();
      } else {
        Sweep s;
        s.param = j.at("sweep").at("param").get<std::string>();
        for (const auto& v : j.at("sweep").at("values"))
          s.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        c.sweep = s;
      }
    }
  } catch (const Json::exception& e) {
    throw PreconditionError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline SimConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw IoError("cannot parse config file " + path.string() + ": " + e.what());
  }
  return sim_config_from_json(j);
}

/// Parses "snr=25,35,50,inf" style sweep specifications.
inline Sweep parse_sweep(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
    throw PreconditionError("sweep must look like param=v1,v2,...; got '" + spec + "'");
  Sweep s;
  s.param = spec.substr(0, eq);
  for (auto& ch : s.param) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  std::stringstream values(spec.substr(eq + 1));
  for (std::string v; std::getline(values, v, ',');)
    if (!v.empty()) s.values.push_back(v);
  if (s.values.empty()) throw PreconditionError("sweep '" + spec + "' lists no values");
  // validates names and values up front
  for (const auto& v : s.values) (void)apply_sweep_point(SimConfig{}, s.param, v);
  return s;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// CSV with one row per (sweep point, round), rounds 1-based.
inline void write_csv(const ExperimentResults& results, std::ostream& out) {
  out << "sweep_param,sweep_value,round,mean_cum_regret,stderr_cum_regret,mean_sync_count\n";
  for (const auto& p : results.points)
    for (std::size_t t = 0; t < p.mean_cum_regret.size(); ++t)
      out << p.param << ',' << p.value << ',' << (t + 1) << ',' << format_number(p.mean_cum_regret[t])
          << ',' << format_number(p.stderr_cum_regret[t]) << ',' << format_number(p.mean_sync_count[t])
          << '\n';
}

inline Json manifest_json(const SimConfig& cfg, const ExperimentResults& results) {
  Json m;
  m["version"] = version_string();
  m["config"] = to_json(cfg);
  m["seed_rule"] =
      "trial_seed = splitmix64-combine(base_seed, trial_index); each of environment, placement, "
      "fading, channel_noise, rewards draws from combine(trial_seed, stream_id)";
  m["notes"] = Json::array(
      {"SNR is treated purely as a sweep variable; the default 80 dB and the 25/35/50 dB sweep "
       "values describe different experiments."});
  Json points = Json::array();
  for (const auto& p : results.points) {
    Json jp;
    jp["sweep_param"] = p.param;
    jp["sweep_value"] = p.value;
    jp["final_mean_cum_regret"] = p.final_mean();
    jp["final_stderr_cum_regret"] = p.final_stderr();
    jp["mean_sync_count"] = p.mean_sync_count.back();
    jp["max_realized_sigma_t"] = p.max_sigma_t;
    jp["deep_fades"] = p.deep_fades;
    jp["theory"] = {{"gamma_max", p.matched_bounds.gamma_max},
                    {"gamma_min", p.matched_bounds.gamma_min},
                    {"gamma_min_clamped", p.matched_bounds.gamma_min_clamped},
                    {"kappa", p.matched_bounds.kappa},
                    {"nu", p.theory.nu},
                    {"threshold_D", p.theory.threshold_D},
                    {"beta_bar_T", p.theory.beta_bar},
                    {"regret_bound", p.theory.regret_bound}};
    jp["trial_seeds"] = p.trial_seeds;
    points.push_back(std::move(jp));
  }
  m["sweep_points"] = std::move(points);
  return m;
}

/// Writes the CSV to `csv_path` and the run manifest next to it as
/// `<stem>.manifest.json`. Returns the manifest path.
inline std::filesystem::path emit_results(const SimConfig& cfg, const ExperimentResults& results,
                                          const std::filesystem::path& csv_path) {
  if (results.points.empty()) throw PreconditionError("emit_results: no results to write");
  std::error_code ec;
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path(), ec);
  {
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw IoError("cannot open " + csv_path.string() + " for writing");
    write_csv(results, csv);
    if (!csv) throw IoError("failed writing " + csv_path.string());
  }
  auto manifest_path = csv_path;
  manifest_path.replace_extension(".manifest.json");
  std::ofstream man(manifest_path, std::ios::binary);
  if (!man) throw IoError("cannot open " + manifest_path.string() + " for writing");
  man << manifest_json(cfg, results).dump(2) << '\n';
  if (!man) throw IoError("failed writing " + manifest_path.string());
  return manifest_path;
}

}  // namespace fedbandit
