#pragma once

// Analysis parameter files (JSON):
//
//   { "lambda": 3, "w1": 5, "w2": 3, "overlap_frac": 0.5, "bandwidth": 20,
//     "history": "raw" | "filtered", "subcarriers": [-28, ...],
//     "exclude_invalid": false }
//
// Every field is optional; missing ones keep the PipelineParams defaults.
// Without "subcarriers" the bandwidth's registry set is used.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csisniff/core.hpp"
#include "csisniff/detector.hpp"

namespace csisniff {

struct AnalysisConfig
{
  PipelineParams params;
  EvaluationOptions eval;
  int bandwidth_mhz = 20;
  bool explicit_subcarriers = false;

  /// Keeps the labeling fraction in one place: params.overlap_frac wins.
  EvaluationOptions evaluation() const
  {
    auto e = eval;
    e.overlap_frac = params.overlap_frac;
    return e;
  }
};

inline const char* to_string(FilterHistory h)
{
  return h == FilterHistory::raw ? "raw" : "filtered";
}

inline FilterHistory filter_history_from_string(const std::string& s)
{
  if (s == "raw")
    return FilterHistory::raw;
  if (s == "filtered")
    return FilterHistory::filtered;
  throw ConfigError("history must be 'raw' or 'filtered', got '" + s + "'");
}

inline AnalysisConfig analysis_config_from_json(const nlohmann::json& j,
                                                const FormatRegistry& reg = FormatRegistry::builtin())
{
  static const char* known[] = {"lambda",     "w1",          "w2",           "overlap_frac",
                                "bandwidth",  "history",     "subcarriers",  "exclude_invalid",
                                "description"};
  AnalysisConfig c;
  try {
    if (!j.is_object())
      throw ConfigError("parameter file must be a JSON object");
    for (const auto& [key, _] : j.items())
      if (std::find_if(std::begin(known), std::end(known),
                       [&](const char* k) { return key == k; }) == std::end(known))
        throw ConfigError("unknown parameter '" + key + "'");
    c.params.lambda = j.value("lambda", c.params.lambda);
    c.params.w1 = j.value("w1", c.params.w1);
    c.params.w2 = j.value("w2", c.params.w2);
    c.params.overlap_frac = j.value("overlap_frac", c.params.overlap_frac);
    c.bandwidth_mhz = j.value("bandwidth", c.bandwidth_mhz);
    if (j.contains("history"))
      c.params.history = filter_history_from_string(j.at("history").get<std::string>());
    c.eval.exclude_invalid = j.value("exclude_invalid", false);
    const auto& fmt = reg.at(c.bandwidth_mhz);
    if (j.contains("subcarriers")) {
      c.params.subcarriers = SubcarrierSet(j.at("subcarriers").get<std::vector<int>>(), fmt.fft_size);
      c.explicit_subcarriers = true;
    } else {
      c.params.subcarriers = SubcarrierSet(fmt.usable, fmt.fft_size);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("parameters: ") + e.what());
  }
  c.params.validate();
  c.eval.overlap_frac = c.params.overlap_frac;
  return c;
}

inline AnalysisConfig load_analysis_config(const std::string& path,
                                           const FormatRegistry& reg = FormatRegistry::builtin())
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return analysis_config_from_json(j, reg);
}

}  // namespace csisniff
