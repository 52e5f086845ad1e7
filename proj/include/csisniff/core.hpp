#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "csisniff/error.hpp"

namespace csisniff {

namespace detail {

inline std::string_view trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

template <class T>
std::optional<T> parse_number(std::string_view s)
{
  T value{};
  if (!s.empty() && s.front() == '+')
    s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    return std::nullopt;
  return value;
}

inline std::vector<std::string_view> split(std::string_view s, char sep)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string read_file(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw RuntimeFailure("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// 48-bit hardware address. Text form is exactly six lowercase hex octets
/// separated by colons; nothing else parses.
class DeviceId
{
public:
  DeviceId() = default;
  explicit constexpr DeviceId(std::array<std::uint8_t, 6> octets)
      : octets_(octets)
  {
  }

  static std::optional<DeviceId> try_parse(std::string_view text)
  {
    if (text.size() != 17)
      return std::nullopt;
    std::array<std::uint8_t, 6> o{};
    for (std::size_t i = 0; i < 6; ++i) {
      if (i > 0 && text[i * 3 - 1] != ':')
        return std::nullopt;
      int v = 0;
      for (std::size_t k = 0; k < 2; ++k) {
        char c = text[i * 3 + k];
        int d;
        if (c >= '0' && c <= '9')
          d = c - '0';
        else if (c >= 'a' && c <= 'f')
          d = c - 'a' + 10;
        else
          return std::nullopt;
        v = v * 16 + d;
      }
      o[i] = static_cast<std::uint8_t>(v);
    }
    return DeviceId(o);
  }

  static DeviceId parse(std::string_view text)
  {
    auto id = try_parse(text);
    if (!id)
      throw ValidationError("invalid MAC address '" + std::string(text) + "'");
    return *id;
  }

  std::string str() const
  {
    static constexpr char hex[] = "0123456789abcdef";
    std::string s(17, ':');
    for (std::size_t i = 0; i < 6; ++i) {
      s[i * 3] = hex[octets_[i] >> 4];
      s[i * 3 + 1] = hex[octets_[i] & 0xf];
    }
    return s;
  }

  const std::array<std::uint8_t, 6>& octets() const noexcept { return octets_; }

  friend auto operator<=>(const DeviceId&, const DeviceId&) = default;

private:
  std::array<std::uint8_t, 6> octets_{};
};

/// One complex CSI entry as stored by the capture tool: two int16 components.
struct ComplexSample
{
  std::int16_t real = 0;
  std::int16_t imag = 0;

  friend bool operator==(const ComplexSample&, const ComplexSample&) = default;
};

/// A captured frame. `csi` holds one sample per FFT bin, position p carrying
/// subcarrier index p - N/2 (so indices run -N/2 .. N/2-1).
struct CsiFrame
{
  double timestamp = 0.0;
  DeviceId device;
  std::vector<ComplexSample> csi;

  std::size_t fft_size() const noexcept { return csi.size(); }

  const ComplexSample& at_index(int index) const
  {
    const auto half = static_cast<int>(csi.size() / 2);
    if (index < -half || index >= half)
      throw StructuralError("subcarrier index " + std::to_string(index) +
                            " out of range for FFT size " + std::to_string(csi.size()));
    return csi[static_cast<std::size_t>(index + half)];
  }

  friend bool operator==(const CsiFrame&, const CsiFrame&) = default;
};

/// Sorted, distinct, zero-free subcarrier indices valid for one FFT size.
class SubcarrierSet
{
public:
  SubcarrierSet() = default;

  SubcarrierSet(std::vector<int> indices, std::size_t fft_size)
      : indices_(std::move(indices))
      , fft_size_(fft_size)
  {
    std::sort(indices_.begin(), indices_.end());
    if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end())
      throw ConfigError("duplicate subcarrier index in set");
    const auto half = static_cast<int>(fft_size / 2);
    for (int i : indices_) {
      if (i == 0)
        throw ConfigError("subcarrier index 0 is not usable");
      if (i < -half || i >= half)
        throw ConfigError("subcarrier index " + std::to_string(i) + " invalid for FFT size " +
                          std::to_string(fft_size));
    }
  }

  const std::vector<int>& indices() const noexcept { return indices_; }
  std::size_t size() const noexcept { return indices_.size(); }
  bool empty() const noexcept { return indices_.empty(); }
  std::size_t fft_size() const noexcept { return fft_size_; }

  friend bool operator==(const SubcarrierSet&, const SubcarrierSet&) = default;

private:
  std::vector<int> indices_;
  std::size_t fft_size_ = 0;
};

/// Which history the outlier filter's trailing statistics are computed over.
/// `raw` is the default: with `filtered`, substituted values repeat inside the
/// trailing window, shrinking sigma until the filter rejects almost every new
/// sample; at a few frames per second this locks the series up.
enum class FilterHistory { raw, filtered };

struct PipelineParams
{
  double lambda = 3.0;
  double w1 = 5.0;
  double w2 = 3.0;
  SubcarrierSet subcarriers;
  double overlap_frac = 0.5;
  FilterHistory history = FilterHistory::raw;

  void validate() const
  {
    if (!(lambda > 0) || !std::isfinite(lambda))
      throw ConfigError("lambda must be positive");
    if (!(w1 > 0) || !std::isfinite(w1))
      throw ConfigError("w1 must be positive");
    if (!(w2 > 0) || !std::isfinite(w2))
      throw ConfigError("w2 must be positive");
    if (!(overlap_frac >= 0 && overlap_frac <= 1))
      throw ConfigError("overlap_frac must lie in [0, 1]");
  }
};

// ---------------------------------------------------------------------------
// Format registry

struct BandwidthFormat
{
  int bandwidth_mhz = 0;
  std::size_t fft_size = 0;
  std::vector<int> usable;
};

/// Versioned key/value file mapping bandwidth -> FFT size and default usable
/// subcarriers. See data/formats.reg.
class FormatRegistry
{
public:
  static constexpr int kVersion = 1;

  static FormatRegistry parse(std::string_view text)
  {
    FormatRegistry reg;
    std::optional<int> version;
    std::size_t line_no = 0;
    for (auto raw : detail::split(text, '\n')) {
      ++line_no;
      auto line = detail::trim(raw);
      if (line.empty() || line.front() == '#')
        continue;
      auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ParseError(line_no, "expected key = value");
      auto key = detail::trim(line.substr(0, eq));
      auto value = detail::trim(line.substr(eq + 1));
      if (key == "format_version") {
        version = detail::parse_number<int>(value);
        if (!version)
          throw ParseError(line_no, "bad format_version");
        if (*version != kVersion)
          throw ParseError(line_no, "unsupported registry version " + std::to_string(*version));
        continue;
      }
      auto dot = key.find('.');
      if (dot == std::string_view::npos)
        throw ParseError(line_no, "unknown key '" + std::string(key) + "'");
      auto bw = detail::parse_number<int>(key.substr(0, dot));
      if (!bw || *bw <= 0)
        throw ParseError(line_no, "bad bandwidth in key '" + std::string(key) + "'");
      auto field = key.substr(dot + 1);
      auto& entry = reg.entries_[*bw];
      entry.bandwidth_mhz = *bw;
      if (field == "fft_size") {
        auto n = detail::parse_number<std::size_t>(value);
        if (!n || *n < 2 || (*n % 2) != 0)
          throw ParseError(line_no, "bad fft_size");
        entry.fft_size = *n;
      } else if (field == "usable") {
        entry.usable = parse_ranges(value, line_no);
      } else {
        throw ParseError(line_no, "unknown field '" + std::string(field) + "'");
      }
    }
    if (!version)
      throw ParseError(line_no, "missing format_version");
    for (auto& [bw, e] : reg.entries_) {
      if (e.fft_size == 0)
        throw ConfigError("bandwidth " + std::to_string(bw) + " has no fft_size");
      SubcarrierSet check(e.usable, e.fft_size);  // validates
      e.usable = check.indices();
    }
    return reg;
  }

  static FormatRegistry load(const std::string& path) { return parse(detail::read_file(path)); }

  /// Registry compiled into the library; identical to data/formats.reg.
  static const FormatRegistry& builtin()
  {
    static const FormatRegistry reg = parse(
        "format_version = 1\n"
        "20.fft_size = 64\n"
        "20.usable = -28:-1, 1:28\n"
        "40.fft_size = 128\n"
        "40.usable = -58:-2, 2:58\n"
        "80.fft_size = 256\n"
        "80.usable = -122:-2, 2:122\n");
    return reg;
  }

  const BandwidthFormat& at(int bandwidth_mhz) const
  {
    auto it = entries_.find(bandwidth_mhz);
    if (it == entries_.end())
      throw ConfigError("unsupported bandwidth " + std::to_string(bandwidth_mhz) + " MHz");
    return it->second;
  }

  std::optional<int> bandwidth_for_fft(std::size_t fft_size) const
  {
    for (const auto& [bw, e] : entries_)
      if (e.fft_size == fft_size)
        return bw;
    return std::nullopt;
  }

  const std::map<int, BandwidthFormat>& entries() const noexcept { return entries_; }

private:
  static std::vector<int> parse_ranges(std::string_view value, std::size_t line_no)
  {
    std::vector<int> out;
    for (auto part : detail::split(value, ',')) {
      part = detail::trim(part);
      if (part.empty())
        continue;
      auto colon = part.find(':', 1);
      auto lo = detail::parse_number<int>(detail::trim(part.substr(0, colon)));
      auto hi = colon == std::string_view::npos
                    ? lo
                    : detail::parse_number<int>(detail::trim(part.substr(colon + 1)));
      if (!lo || !hi || *hi < *lo)
        throw ParseError(line_no, "bad index range '" + std::string(part) + "'");
      for (int i = *lo; i <= *hi; ++i)
        out.push_back(i);
    }
    return out;
  }

  std::map<int, BandwidthFormat> entries_;
};

inline std::size_t fft_size_for(int bandwidth_mhz,
                                const FormatRegistry& reg = FormatRegistry::builtin())
{
  return reg.at(bandwidth_mhz).fft_size;
}

inline SubcarrierSet default_subcarrier_set(int bandwidth_mhz,
                                            const FormatRegistry& reg = FormatRegistry::builtin())
{
  const auto& e = reg.at(bandwidth_mhz);
  return SubcarrierSet(e.usable, e.fft_size);
}

// ---------------------------------------------------------------------------
// Amplitude math

// x^2 + y^2 of two int16 values is exact in a double, so this is the
// correctly rounded magnitude.
inline double amplitude(ComplexSample s) noexcept
{
  const double x = s.real;
  const double y = s.imag;
  return std::sqrt(x * x + y * y);
}

inline std::vector<double> frame_amplitudes(const CsiFrame& frame, const SubcarrierSet& set)
{
  std::vector<double> out;
  out.reserve(set.size());
  for (int index : set.indices())
    out.push_back(amplitude(frame.at_index(index)));
  return out;
}

}  // namespace csisniff
