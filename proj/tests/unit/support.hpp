#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "csisniff/capture_csv.hpp"

namespace testing_support {

using namespace csisniff;

inline const DeviceId kMacA = DeviceId::parse("aa:bb:cc:00:00:01");
inline const DeviceId kMacB = DeviceId::parse("aa:bb:cc:00:00:02");

inline CsiFrame constant_frame(double ts, ComplexSample s, std::size_t fft = 64, DeviceId mac = kMacA)
{
  CsiFrame f;
  f.timestamp = ts;
  f.device = mac;
  f.csi.assign(fft, s);
  return f;
}

/// Frame whose every bin has amplitude `a` (stored as (a, 0)).
inline CsiFrame amplitude_frame(double ts, std::int16_t a, std::size_t fft = 64, DeviceId mac = kMacA)
{
  return constant_frame(ts, {a, 0}, fft, mac);
}

/// Random document: jittered arrivals (occasionally duplicated timestamps,
/// occasional gaps), noisy int16 samples with sporadic spikes.
inline CaptureDocument random_document(std::mt19937_64& rng, std::size_t frames, int bandwidth = 20)
{
  std::uniform_real_distribution<double> gap(0.0, 0.6);
  std::uniform_int_distribution<int> base(50, 400);
  std::normal_distribution<double> noise(0.0, 25.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CaptureDocument doc;
  doc.bandwidth_mhz = bandwidth;
  const auto fft = doc.fft_size();
  std::vector<int> baseline(fft);
  for (auto& b : baseline)
    b = base(rng);
  double t = 1000.0 * u(rng);
  for (std::size_t n = 0; n < frames; ++n) {
    const double r = u(rng);
    if (r < 0.05)
      t += 4.0;  // silence gap
    else if (r > 0.1)
      t += gap(rng);  // else: same timestamp as previous frame
    CsiFrame f;
    f.timestamp = std::round(t * 1e6) / 1e6;
    f.device = kMacA;
    f.csi.resize(fft);
    for (std::size_t p = 0; p < fft; ++p) {
      double a = baseline[p] + noise(rng);
      if (u(rng) < 0.02)
        a *= 4;
      const double phi = 6.283185307179586 * u(rng);
      f.csi[p] = {static_cast<std::int16_t>(std::lround(a * std::cos(phi))),
                  static_cast<std::int16_t>(std::lround(a * std::sin(phi)))};
    }
    doc.frames.push_back(std::move(f));
  }
  return doc;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag)
{
  static std::mt19937_64 rng{std::random_device{}()};
  auto dir = std::filesystem::temp_directory_path() /
             ("csisniff-" + tag + "-" + std::to_string(rng() % 1000000000));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
