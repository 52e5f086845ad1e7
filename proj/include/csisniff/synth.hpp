#pragma once

// Seeded synthetic captures.
//
// Amplitude model, per frame at time t and usable subcarrier i:
//
//   b_i = B0 * (1 + 0.3 * sin(pi * i / 29))
//   a   = b_i * (1 + eps),  eps ~ N(0, s^2), s = active_noise inside an
//                           activity interval, idle_noise otherwise
//   with probability spike_prob, a *= g, g ~ U[spike_gain_lo, spike_gain_hi]
//   sample = round(a * (cos phi, sin phi)), phi ~ U[0, 2 pi), clamped to int16
//
// Bins outside the bandwidth's usable set (guard bands, DC) are (0, 0).
// Arrivals are a Poisson process of the given rate; timestamps are rounded to
// whole microseconds.
//
// Random numbers: std::mt19937_64, one engine per stream (0 arrivals, 1 noise,
// 2 spikes, 3 phases) seeded with splitmix64(seed + (k + 1) * 0x9e3779b97f4a7c15).
// Uniforms take the top 53 bits; normals use Box-Muller (both outputs used).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "csisniff/capture_csv.hpp"
#include "csisniff/core.hpp"
#include "csisniff/detector.hpp"

namespace csisniff {

struct Scenario
{
  std::uint64_t seed = 1;
  double duration = 60.0;
  double rate = 40.0;
  DeviceId device = DeviceId({0x02, 0x00, 0x00, 0x00, 0x00, 0x01});
  int bandwidth_mhz = 20;
  std::vector<Interval> activity_intervals;
  double idle_noise = 0.01;
  double active_noise = 0.08;
  double spike_prob = 0.001;
  double spike_gain_lo = 3.0;
  double spike_gain_hi = 6.0;
  double baseline_scale = 500.0;

  void validate(const FormatRegistry& reg = FormatRegistry::builtin()) const
  {
    if (!(duration > 0) || !std::isfinite(duration))
      throw ConfigError("duration must be positive");
    if (!(rate > 0) || !std::isfinite(rate))
      throw ConfigError("rate must be positive");
    if (!(idle_noise > 0) || !(active_noise > idle_noise))
      throw ConfigError("noise levels must satisfy active_noise > idle_noise > 0");
    if (!(spike_prob >= 0 && spike_prob <= 1))
      throw ConfigError("spike_prob must lie in [0, 1]");
    if (!(spike_gain_lo > 0) || !(spike_gain_hi >= spike_gain_lo))
      throw ConfigError("spike_gain must be a positive range [lo, hi]");
    if (!(baseline_scale > 0) || baseline_scale > 20000)
      throw ConfigError("baseline_scale must lie in (0, 20000]");
    reg.at(bandwidth_mhz);
    for (const auto& iv : activity_intervals)
      if (!(iv.end > iv.start) || iv.start < 0 || iv.end > duration)
        throw ConfigError("activity interval outside [0, duration] or empty");
  }
};

inline void to_json(nlohmann::json& j, const Scenario& s)
{
  auto intervals = nlohmann::json::array();
  for (const auto& iv : s.activity_intervals)
    intervals.push_back({iv.start, iv.end});
  j = nlohmann::json{
      {"seed", s.seed},
      {"duration", s.duration},
      {"rate", s.rate},
      {"device", s.device.str()},
      {"bandwidth", s.bandwidth_mhz},
      {"activity_intervals", intervals},
      {"idle_noise", s.idle_noise},
      {"active_noise", s.active_noise},
      {"spike_prob", s.spike_prob},
      {"spike_gain", {s.spike_gain_lo, s.spike_gain_hi}},
      {"baseline_scale", s.baseline_scale},
  };
}

inline Scenario scenario_from_json(const nlohmann::json& j)
{
  Scenario s;
  try {
    if (!j.is_object())
      throw ConfigError("scenario must be a JSON object");
    for (const auto& [key, _] : j.items()) {
      static const char* known[] = {"seed",       "duration",     "rate",         "device",
                                    "bandwidth",  "activity_intervals", "idle_noise",
                                    "active_noise", "spike_prob", "spike_gain", "baseline_scale",
                                    "description"};
      if (std::find_if(std::begin(known), std::end(known),
                       [&](const char* k) { return key == k; }) == std::end(known))
        throw ConfigError("unknown scenario field '" + key + "'");
    }
    s.seed = j.value("seed", s.seed);
    s.duration = j.value("duration", s.duration);
    s.rate = j.value("rate", s.rate);
    if (j.contains("device"))
      s.device = DeviceId::parse(j.at("device").get<std::string>());
    s.bandwidth_mhz = j.value("bandwidth", s.bandwidth_mhz);
    if (j.contains("activity_intervals"))
      for (const auto& iv : j.at("activity_intervals")) {
        if (!iv.is_array() || iv.size() != 2)
          throw ConfigError("activity interval must be [start, end]");
        s.activity_intervals.push_back({iv[0].get<double>(), iv[1].get<double>()});
      }
    s.idle_noise = j.value("idle_noise", s.idle_noise);
    s.active_noise = j.value("active_noise", s.active_noise);
    s.spike_prob = j.value("spike_prob", s.spike_prob);
    if (j.contains("spike_gain")) {
      const auto& g = j.at("spike_gain");
      if (!g.is_array() || g.size() != 2)
        throw ConfigError("spike_gain must be [lo, hi]");
      s.spike_gain_lo = g[0].get<double>();
      s.spike_gain_hi = g[1].get<double>();
    }
    s.baseline_scale = j.value("baseline_scale", s.baseline_scale);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

inline Scenario load_scenario(const std::string& path)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return scenario_from_json(j);
}

namespace synth_detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Stream
{
public:
  Stream(std::uint64_t seed, std::uint64_t k)
      : engine_(splitmix64(seed + (k + 1) * 0x9e3779b97f4a7c15ULL))
  {
  }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal()
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline std::int16_t to_int16(double v)
{
  const double r = std::round(v);
  if (r > 32767.0)
    return 32767;
  if (r < -32768.0)
    return -32768;
  return static_cast<std::int16_t>(r);
}

}  // namespace synth_detail

inline double baseline_amplitude(double scale, int index)
{
  return scale * (1.0 + 0.3 * std::sin(std::numbers::pi * index / 29.0));
}

struct SynthResult
{
  CaptureDocument capture;
  GroundTruth truth;
};

inline SynthResult generate(const Scenario& sc, const FormatRegistry& reg = FormatRegistry::builtin())
{
  using synth_detail::Stream;
  sc.validate(reg);
  const auto& fmt = reg.at(sc.bandwidth_mhz);
  const std::size_t n = fmt.fft_size;
  const int half = static_cast<int>(n / 2);

  std::vector<double> baseline(n, 0.0);
  std::vector<bool> usable(n, false);
  for (int i : fmt.usable) {
    baseline[static_cast<std::size_t>(i + half)] = baseline_amplitude(sc.baseline_scale, i);
    usable[static_cast<std::size_t>(i + half)] = true;
  }

  Stream arrivals(sc.seed, 0), noise(sc.seed, 1), spikes(sc.seed, 2), phases(sc.seed, 3);

  SynthResult out;
  out.capture.bandwidth_mhz = sc.bandwidth_mhz;
  out.truth.intervals = sc.activity_intervals;
  auto sorted = GroundTruth{sc.activity_intervals}.normalized().intervals;

  double t = 0.0;
  std::size_t next_interval = 0;
  for (;;) {
    t += -std::log(1.0 - arrivals.uniform()) / sc.rate;
    if (t >= sc.duration)
      break;
    const double ts = std::round(t * 1e6) / 1e6;
    while (next_interval < sorted.size() && sorted[next_interval].end <= ts)
      ++next_interval;
    const bool active = next_interval < sorted.size() && sorted[next_interval].start <= ts;
    const double sigma = active ? sc.active_noise : sc.idle_noise;

    CsiFrame frame;
    frame.timestamp = ts;
    frame.device = sc.device;
    frame.csi.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
      if (!usable[p])
        continue;
      double a = baseline[p] * (1.0 + sigma * noise.normal());
      if (spikes.uniform() < sc.spike_prob)
        a *= spikes.uniform(sc.spike_gain_lo, sc.spike_gain_hi);
      if (a < 0)
        a = 0;
      const double phi = 2.0 * std::numbers::pi * phases.uniform();
      frame.csi[p] = {synth_detail::to_int16(a * std::cos(phi)),
                      synth_detail::to_int16(a * std::sin(phi))};
    }
    out.capture.frames.push_back(std::move(frame));
  }
  return out;
}

}  // namespace csisniff
