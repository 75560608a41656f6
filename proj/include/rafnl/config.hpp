#pragma once

// key = value configuration for both stages. Keys are "raf.<field>" and
// "nlrgs.<field>"; '#' starts a comment.

#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rafnl/error.hpp"
#include "rafnl/nlrgs.hpp"
#include "rafnl/raf.hpp"

namespace rafnl {

struct RunConfig {
  RafConfig raf;
  NlrgsConfig nlrgs;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ParameterError("config: " + key + " expects a number, got '" + v + "'");
  return d;
}

inline long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long i = 0;
  try {
    i = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ParameterError("config: " + key + " expects an integer, got '" + v + "'");
  return i;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParameterError("config: " + key + " expects true/false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  auto dbl = [](double RafConfig::*f) {
    return Setter([f](RunConfig& c, const std::string& k, const std::string& v) { c.raf.*f = to_double(k, v); });
  };
  auto dbl_n = [](double NlrgsConfig::*f) {
    return Setter([f](RunConfig& c, const std::string& k, const std::string& v) { c.nlrgs.*f = to_double(k, v); });
  };
  auto int_r = [](int RafConfig::*f) {
    return Setter([f](RunConfig& c, const std::string& k, const std::string& v) {
      c.raf.*f = static_cast<int>(to_int(k, v));
    });
  };
  auto int_n = [](int NlrgsConfig::*f) {
    return Setter([f](RunConfig& c, const std::string& k, const std::string& v) {
      c.nlrgs.*f = static_cast<int>(to_int(k, v));
    });
  };
  auto idx_n = [](Index NlrgsConfig::*f) {
    return Setter([f](RunConfig& c, const std::string& k, const std::string& v) { c.nlrgs.*f = to_int(k, v); });
  };
  auto bool_r = [](bool RafConfig::*f) {
    return Setter([f](RunConfig& c, const std::string& k, const std::string& v) { c.raf.*f = to_bool(k, v); });
  };
  static const std::map<std::string, Setter> m = {
      {"raf.mu1", dbl(&RafConfig::mu1)},
      {"raf.mu2", dbl(&RafConfig::mu2)},
      {"raf.nu", dbl(&RafConfig::nu)},
      {"raf.rho", dbl(&RafConfig::rho)},
      {"raf.subspace_dim",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.raf.subspace_dim = to_int(k, v); }},
      {"raf.tol_outer", dbl(&RafConfig::tol_outer)},
      {"raf.tol_inner", dbl(&RafConfig::tol_inner)},
      {"raf.max_outer", int_r(&RafConfig::max_outer)},
      {"raf.max_inner", int_r(&RafConfig::max_inner)},
      {"raf.max_l_admm", int_r(&RafConfig::max_l_admm)},
      {"raf.shared_tau", bool_r(&RafConfig::shared_tau)},
      {"raf.init_backprojection", bool_r(&RafConfig::init_backprojection)},
      {"raf.refresh_dict", bool_r(&RafConfig::refresh_dict)},
      {"nlrgs.l1", idx_n(&NlrgsConfig::l1)},
      {"nlrgs.l2", idx_n(&NlrgsConfig::l2)},
      {"nlrgs.alpha", dbl_n(&NlrgsConfig::alpha)},
      {"nlrgs.beta", dbl_n(&NlrgsConfig::beta)},
      {"nlrgs.lambda", dbl_n(&NlrgsConfig::lambda)},
      {"nlrgs.mu_l", dbl_n(&NlrgsConfig::mu_l)},
      {"nlrgs.mu_e", dbl_n(&NlrgsConfig::mu_e)},
      {"nlrgs.theta", dbl_n(&NlrgsConfig::theta)},
      {"nlrgs.n_clusters", idx_n(&NlrgsConfig::n_clusters)},
      {"nlrgs.patch_size",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.nlrgs.patch.size = to_int(k, v); }},
      {"nlrgs.patch_overlap",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.nlrgs.patch.overlap = to_int(k, v); }},
      {"nlrgs.tol", dbl_n(&NlrgsConfig::tol)},
      {"nlrgs.max_iter", int_n(&NlrgsConfig::max_iter)},
      {"nlrgs.max_admm", int_n(&NlrgsConfig::max_admm)},
      {"nlrgs.max_bcd", int_n(&NlrgsConfig::max_bcd)},
      {"nlrgs.seed",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const long long s = to_int(k, v);
         if (s < 0) throw ParameterError("config: nlrgs.seed must be nonnegative");
         c.nlrgs.seed = static_cast<std::uint64_t>(s);
       }},
      {"nlrgs.use_corrected_z",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.nlrgs.use_corrected_z = to_bool(k, v); }},
  };
  return m;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> k;
  for (const auto& [name, _] : detail::setters()) k.push_back(name);
  return k;
}

inline KeyValues parse_key_values(const std::string& text, const std::string& source = "config") {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError(source + ":" + std::to_string(no) + ": expected key = value, got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ParameterError(source + ":" + std::to_string(no) + ": empty key or value");
    out.emplace_back(key, value);
  }
  return out;
}

inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  const auto& m = detail::setters();
  const auto it = m.find(key);
  if (it == m.end()) throw ParameterError("config: unknown key '" + key + "'");
  it->second(c, key, value);
}

inline void apply_settings(RunConfig& c, const KeyValues& kv) {
  for (const auto& [k, v] : kv) apply_setting(c, k, v);
}

// Parameter values recommended for real data. nlrgs.l2 = 20 is reduced to
// bands - l1 on cubes with fewer bands (see resolve_for_bands).
inline KeyValues paper_defaults_profile() {
  return {
      {"raf.mu1", "10"},        {"raf.mu2", "10"},           {"raf.nu", "0.1"},
      {"raf.rho", "1.618"},     {"raf.subspace_dim", "3"},   {"nlrgs.l1", "3"},
      {"nlrgs.l2", "20"},       {"nlrgs.alpha", "1e-3"},     {"nlrgs.beta", "1e-3"},
      {"nlrgs.lambda", "1e-4"}, {"nlrgs.mu_l", "5e-3"},      {"nlrgs.mu_e", "5e-3"},
      {"nlrgs.theta", "8"},     {"nlrgs.n_clusters", "200"}, {"nlrgs.patch_size", "6"},
      {"nlrgs.patch_overlap", "4"},
  };
}

inline KeyValues profile(const std::string& name) {
  if (name == "paper-defaults") return paper_defaults_profile();
  if (name == "default") return {};
  throw ParameterError("unknown profile '" + name + "' (known: default, paper-defaults)");
}

// Clamps nlrgs.l2 to the band budget; returns a note when it changed.
inline std::string resolve_for_bands(RunConfig& c, Index bands) {
  if (c.nlrgs.l1 >= 1 && c.nlrgs.l1 <= bands && c.nlrgs.l1 + c.nlrgs.l2 > bands) {
    const Index old = c.nlrgs.l2;
    c.nlrgs.l2 = bands - c.nlrgs.l1;
    return "nlrgs.l2 reduced from " + std::to_string(old) + " to " + std::to_string(c.nlrgs.l2) + " for " +
           std::to_string(bands) + " bands";
  }
  return "";
}

}  // namespace rafnl
