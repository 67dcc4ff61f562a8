// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#include "dilattn/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dilattn {

DilatedConfig::DilatedConfig(std::vector<Pattern> pats, std::size_t heads_,
                             bool causal_, ScaleSpec scale_)
    : patterns(std::move(pats)), heads(heads_), causal(causal_), scale(scale_) {
  validate();
}

void DilatedConfig::validate() const {
  if (patterns.empty()) throw ConfigError("config: no patterns");
  if (heads < 1) throw ConfigError("config: heads must be >= 1");
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    const auto& p = patterns[i];
    if (p.segment_len < 1 || p.dilation < 1)
      throw ConfigError("config: pattern " + std::to_string(i) +
                        " has zero segment length or dilation");
    if (p.dilation > p.segment_len)
      throw ConfigError("config: pattern " + std::to_string(i) + " has r=" +
                        std::to_string(p.dilation) + " > w=" +
                        std::to_string(p.segment_len));
    if (i > 0) {
      if (patterns[i - 1].segment_len >= p.segment_len)
        throw ConfigError("config: segment lengths must be strictly increasing");
      if (patterns[i - 1].dilation > p.dilation)
        throw ConfigError("config: dilation rates must be non-decreasing");
    }
  }
  if (scale.kind == ScaleSpec::Kind::fixed && scale.value <= 0.0)
    throw ConfigError("config: fixed scale must be > 0");
}

std::string DilatedConfig::summary() const {
  std::ostringstream os;
  os << "w={";
  for (std::size_t i = 0; i < patterns.size(); ++i)
    os << (i ? "," : "") << patterns[i].segment_len;
  os << "} r={";
  for (std::size_t i = 0; i < patterns.size(); ++i)
    os << (i ? "," : "") << patterns[i].dilation;
  os << "} heads=" << heads << (causal ? " causal" : "");
  return os.str();
}

namespace {

std::size_t next_integral_term(std::size_t current, double alpha,
                               const char* what) {
  const double next = static_cast<double>(current) * alpha;
  const double rounded = std::round(next);
  if (std::abs(next - rounded) > 1e-6 * std::max(1.0, next) || rounded < 1.0)
    throw ConfigError(std::string("geometric preset: non-integral ") + what +
                      " term " + std::to_string(next));
  return static_cast<std::size_t>(rounded);
}

}  // namespace

DilatedConfig geometric_preset(std::size_t w0, double alpha, std::size_t n,
                               std::size_t heads, bool causal,
                               ScaleSpec scale) {
  if (w0 < 1) throw ConfigError("geometric preset: w0 must be >= 1");
  if (!(alpha > 1.0)) throw ConfigError("geometric preset: alpha must be > 1");
  if (n < w0 || n % w0 != 0)
    throw ConfigError("geometric preset: w0=" + std::to_string(w0) +
                      " does not divide n=" + std::to_string(n));

  std::vector<Pattern> pats;
  std::size_t w = w0;
  std::size_t r = 1;
  while (true) {
    const std::size_t w_clamped = std::min(w, n);
    const std::size_t r_clamped = std::min(r, w_clamped);
    if (!pats.empty() && pats.back().segment_len == w_clamped) break;
    pats.push_back({w_clamped, r_clamped});
    if (w_clamped == n) break;
    w = next_integral_term(w, alpha, "segment length");
    r = next_integral_term(r, alpha, "dilation rate");
  }

  DilatedConfig cfg(std::move(pats), heads, causal, scale);
  cfg.geo = GeoParams{w0, alpha};
  return cfg;
}

DilatedConfig longnet_32k_preset(std::size_t heads, bool causal,
                                 ScaleSpec scale) {
  std::vector<Pattern> pats = {
      {2048, 1}, {4096, 2}, {8192, 4}, {16384, 6}, {32768, 12}};
  return DilatedConfig(std::move(pats), heads, causal, scale);
}

DilatedConfig parse_config_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.contains("patterns") || !j["patterns"].is_array())
    throw ConfigError("config: missing \"patterns\" array");

  std::vector<Pattern> pats;
  for (const auto& entry : j["patterns"]) {
    if (!entry.is_array() || entry.size() != 2)
      throw ConfigError("config: each pattern must be a [w, r] pair");
    pats.push_back({entry[0].get<std::size_t>(), entry[1].get<std::size_t>()});
  }

  const std::size_t heads = j.value("heads", std::size_t{1});
  const bool causal = j.value("causal", false);

  ScaleSpec scale;
  if (j.contains("scale")) {
    const auto& s = j["scale"];
    if (s.is_string()) {
      if (s.get<std::string>() != "rsqrt_d")
        throw ConfigError("config: scale string must be \"rsqrt_d\"");
    } else if (s.is_number()) {
      scale = ScaleSpec::fixed(s.get<double>());
    } else {
      throw ConfigError("config: scale must be \"rsqrt_d\" or a number");
    }
  }
  return DilatedConfig(std::move(pats), heads, causal, scale);
}

DilatedConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_json(buf.str());
}

std::string config_to_json(const DilatedConfig& config) {
  nlohmann::json j;
  auto& pats = j["patterns"];
  pats = nlohmann::json::array();
  for (const auto& p : config.patterns)
    pats.push_back({p.segment_len, p.dilation});
  j["heads"] = config.heads;
  j["causal"] = config.causal;
  if (config.scale.kind == ScaleSpec::Kind::rsqrt_head_dim)
    j["scale"] = "rsqrt_d";
  else
    j["scale"] = config.scale.value;
  return j.dump();
}

DilatedConfig parse_preset(const std::string& token, std::size_t n,
                           std::size_t heads, bool causal, ScaleSpec scale) {
  if (token == "longnet-32k") return longnet_32k_preset(heads, causal, scale);
  if (token.rfind("geo:", 0) == 0) {
    const std::string body = token.substr(4);
    const auto comma = body.find(',');
    if (comma == std::string::npos)
      throw ConfigError("preset: expected geo:w0,alpha, got " + token);
    std::size_t w0 = 0;
    double alpha = 0.0;
    try {
      w0 = std::stoull(body.substr(0, comma));
      alpha = std::stod(body.substr(comma + 1));
    } catch (const std::exception&) {
      throw ConfigError("preset: cannot parse geo parameters in " + token);
    }
    return geometric_preset(w0, alpha, n, heads, causal, scale);
  }
  if (token.rfind("file:", 0) == 0) return load_config_file(token.substr(5));
  throw ConfigError("preset: unknown preset " + token);
}

}  // namespace dilattn
