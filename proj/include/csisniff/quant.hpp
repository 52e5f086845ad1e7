#pragma once

// Scalar quantizer and the CSIQ container. Layout (all multi-byte fields
// big-endian, see docs/quant-container.md):
//
//   off  size  field
//     0     4  magic "CSIQ"
//     4     1  format version (1)
//     5     1  stage (1 raw complex, 2 amplitude, 3 filtered amplitude, 4 aggregate)
//     6     1  bits B, 1..16
//     7     1  range mode (0 global, 1 joint, 2 per-subcarrier)
//     8     2  bandwidth MHz (0 when unknown)
//    10     2  stream count S
//    12     4  frames
//    16     4  subcarriers (FFT size for stage 1, |I| for stages 2-3)
//    20     4  windows
//    24     8  window start, f64 (stage 4, else 0)
//    32     8  window length, f64 (stage 4, else 0)
//    40  16*S  per stream: v_min f64, v_max f64
//     .     .  payload: value codes, B bits each, MSB first, zero padded

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "csisniff/error.hpp"

namespace csisniff {

enum class Stage : std::uint8_t { raw = 1, amplitude = 2, filtered = 3, aggregate = 4 };

inline Stage stage_from_int(int v)
{
  if (v < 1 || v > 4)
    throw ValidationError("stage must be 1..4, got " + std::to_string(v));
  return static_cast<Stage>(v);
}

enum class RangeMode : std::uint8_t {
  global = 0,          // one range per stream kind (stage 1: real and imaginary separately)
  joint = 1,           // stage 1 only: one range shared by real and imaginary parts
  per_subcarrier = 2,  // one range per subcarrier (and per component on stage 1)
};

struct ValueRange
{
  double min = 0.0;
  double max = 0.0;

  friend bool operator==(const ValueRange&, const ValueRange&) = default;
};

inline std::uint32_t max_code(int bits) { return (std::uint32_t{1} << bits) - 1; }

/// Normalize into [0, 2^B - 1] and round half away from zero. Inputs outside
/// the range are clamped; a degenerate range maps everything to 0.
inline std::uint32_t quantize_value(double v, ValueRange r, int bits)
{
  if (!(r.max > r.min))
    return 0;
  const double levels = max_code(bits);
  const double scaled = std::round((v - r.min) / (r.max - r.min) * levels);
  if (!(scaled > 0))
    return 0;
  if (scaled >= levels)
    return max_code(bits);
  return static_cast<std::uint32_t>(scaled);
}

inline double dequantize_value(std::uint32_t code, ValueRange r, int bits)
{
  if (!(r.max > r.min))
    return r.min;
  return r.min + static_cast<double>(code) * (r.max - r.min) / static_cast<double>(max_code(bits));
}

// ---------------------------------------------------------------------------

class BitWriter
{
public:
  void put(std::uint32_t value, int bits)
  {
    acc_ = (acc_ << bits) | value;
    pending_ += bits;
    while (pending_ >= 8) {
      pending_ -= 8;
      bytes_.push_back(static_cast<std::uint8_t>(acc_ >> pending_));
    }
    acc_ &= (std::uint64_t{1} << pending_) - 1;
  }

  std::vector<std::uint8_t> finish()
  {
    if (pending_ > 0) {
      bytes_.push_back(static_cast<std::uint8_t>(acc_ << (8 - pending_)));
      pending_ = 0;
      acc_ = 0;
    }
    return std::move(bytes_);
  }

private:
  std::vector<std::uint8_t> bytes_;
  std::uint64_t acc_ = 0;
  int pending_ = 0;
};

class BitReader
{
public:
  explicit BitReader(std::span<const std::uint8_t> bytes)
      : bytes_(bytes)
  {
  }

  std::uint32_t get(int bits)
  {
    while (pending_ < bits) {
      if (next_ >= bytes_.size())
        throw StructuralError("bit stream exhausted");
      acc_ = (acc_ << 8) | bytes_[next_++];
      pending_ += 8;
    }
    pending_ -= bits;
    const auto v = static_cast<std::uint32_t>(acc_ >> pending_) & max_code(bits);
    acc_ &= (std::uint64_t{1} << pending_) - 1;
    return v;
  }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t next_ = 0;
  std::uint64_t acc_ = 0;
  int pending_ = 0;
};

// ---------------------------------------------------------------------------

struct QuantHeader
{
  static constexpr std::uint8_t kVersion = 1;
  static constexpr std::size_t kFixedBytes = 40;

  Stage stage = Stage::aggregate;
  int bits = 8;
  RangeMode mode = RangeMode::global;
  std::uint16_t bandwidth_mhz = 0;
  std::uint32_t frames = 0;
  std::uint32_t subcarriers = 0;
  std::uint32_t windows = 0;
  double window_start = 0.0;
  double window_length = 0.0;
  std::vector<ValueRange> ranges;

  std::size_t value_count() const
  {
    switch (stage) {
    case Stage::raw: return std::size_t{frames} * subcarriers * 2;
    case Stage::amplitude:
    case Stage::filtered: return std::size_t{frames} * subcarriers;
    case Stage::aggregate: return windows;
    }
    return 0;
  }

  std::size_t expected_streams() const
  {
    switch (mode) {
    case RangeMode::global: return stage == Stage::raw ? 2 : 1;
    case RangeMode::joint:
      if (stage != Stage::raw)
        throw StructuralError("joint range mode only applies to stage 1");
      return 1;
    case RangeMode::per_subcarrier:
      if (stage == Stage::aggregate)
        throw StructuralError("per-subcarrier ranges do not apply to stage 4");
      return stage == Stage::raw ? std::size_t{subcarriers} * 2 : subcarriers;
    }
    throw StructuralError("unknown range mode");
  }

  /// Stream (range slot) of the value at flat position `index`. Stage 1 values
  /// are frame-major, bins ascending, real before imaginary; stages 2-3 are
  /// frame-major in subcarrier-set order.
  std::size_t stream_of(std::size_t index) const
  {
    if (mode == RangeMode::joint || stage == Stage::aggregate)
      return 0;
    if (stage == Stage::raw) {
      const auto pos = index % (std::size_t{subcarriers} * 2);
      return mode == RangeMode::global ? pos % 2 : pos;
    }
    return mode == RangeMode::global ? 0 : index % subcarriers;
  }

  std::size_t header_bytes() const { return kFixedBytes + 16 * ranges.size(); }
  std::size_t payload_bytes() const { return (value_count() * bits + 7) / 8; }

  void validate() const
  {
    if (bits < 1 || bits > 16)
      throw StructuralError("bits must be in [1, 16], got " + std::to_string(bits));
    if (ranges.size() != expected_streams())
      throw StructuralError("expected " + std::to_string(expected_streams()) + " ranges, got " +
                            std::to_string(ranges.size()));
    for (const auto& r : ranges)
      if (!std::isfinite(r.min) || !std::isfinite(r.max) || r.max < r.min)
        throw StructuralError("value range must be finite with min <= max");
  }

  friend bool operator==(const QuantHeader&, const QuantHeader&) = default;
};

struct DecodedQuant
{
  QuantHeader header;
  std::vector<std::uint32_t> codes;
  std::vector<double> values;
};

namespace quant_detail {

inline void put_be(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes)
{
  for (int i = bytes - 1; i >= 0; --i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_be(std::span<const std::uint8_t> in, std::size_t off, int bytes)
{
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v = (v << 8) | in[off + i];
  return v;
}

}  // namespace quant_detail

inline std::vector<std::uint32_t> quantize_values(const QuantHeader& h, std::span<const double> values)
{
  std::vector<std::uint32_t> codes(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw StructuralError("cannot quantize a non-finite value");
    codes[i] = quantize_value(values[i], h.ranges[h.stream_of(i)], h.bits);
  }
  return codes;
}

inline std::vector<std::uint8_t> encode_quant(const QuantHeader& h, std::span<const std::uint32_t> codes)
{
  using quant_detail::put_be;
  h.validate();
  if (codes.size() != h.value_count())
    throw StructuralError("value count " + std::to_string(codes.size()) +
                          " does not match header count " + std::to_string(h.value_count()));
  std::vector<std::uint8_t> out;
  out.reserve(h.header_bytes() + h.payload_bytes());
  out.insert(out.end(), {'C', 'S', 'I', 'Q'});
  out.push_back(QuantHeader::kVersion);
  out.push_back(static_cast<std::uint8_t>(h.stage));
  out.push_back(static_cast<std::uint8_t>(h.bits));
  out.push_back(static_cast<std::uint8_t>(h.mode));
  put_be(out, h.bandwidth_mhz, 2);
  put_be(out, h.ranges.size(), 2);
  put_be(out, h.frames, 4);
  put_be(out, h.subcarriers, 4);
  put_be(out, h.windows, 4);
  put_be(out, std::bit_cast<std::uint64_t>(h.window_start), 8);
  put_be(out, std::bit_cast<std::uint64_t>(h.window_length), 8);
  for (const auto& r : h.ranges) {
    put_be(out, std::bit_cast<std::uint64_t>(r.min), 8);
    put_be(out, std::bit_cast<std::uint64_t>(r.max), 8);
  }
  BitWriter w;
  const auto limit = max_code(h.bits);
  for (auto c : codes) {
    if (c > limit)
      throw StructuralError("code exceeds 2^B - 1");
    w.put(c, h.bits);
  }
  auto payload = w.finish();
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

/// Quantize `values` with the ranges in `h` and serialize the container.
inline std::vector<std::uint8_t> write_quant(const QuantHeader& h, std::span<const double> values)
{
  h.validate();
  if (values.size() != h.value_count())
    throw StructuralError("value count " + std::to_string(values.size()) +
                          " does not match header count " + std::to_string(h.value_count()));
  const auto codes = quantize_values(h, values);
  return encode_quant(h, codes);
}

inline DecodedQuant read_quant(std::span<const std::uint8_t> bytes)
{
  using quant_detail::get_be;
  if (bytes.size() < QuantHeader::kFixedBytes)
    throw StructuralError("truncated container header");
  if (std::memcmp(bytes.data(), "CSIQ", 4) != 0)
    throw StructuralError("bad magic, not a CSIQ container");
  if (bytes[4] != QuantHeader::kVersion)
    throw StructuralError("unsupported container version " + std::to_string(bytes[4]));
  DecodedQuant d;
  auto& h = d.header;
  if (bytes[5] < 1 || bytes[5] > 4)
    throw StructuralError("bad stage " + std::to_string(bytes[5]));
  h.stage = static_cast<Stage>(bytes[5]);
  h.bits = bytes[6];
  if (bytes[7] > 2)
    throw StructuralError("bad range mode " + std::to_string(bytes[7]));
  h.mode = static_cast<RangeMode>(bytes[7]);
  h.bandwidth_mhz = static_cast<std::uint16_t>(get_be(bytes, 8, 2));
  const auto streams = static_cast<std::size_t>(get_be(bytes, 10, 2));
  h.frames = static_cast<std::uint32_t>(get_be(bytes, 12, 4));
  h.subcarriers = static_cast<std::uint32_t>(get_be(bytes, 16, 4));
  h.windows = static_cast<std::uint32_t>(get_be(bytes, 20, 4));
  h.window_start = std::bit_cast<double>(get_be(bytes, 24, 8));
  h.window_length = std::bit_cast<double>(get_be(bytes, 32, 8));
  if (bytes.size() < QuantHeader::kFixedBytes + 16 * streams)
    throw StructuralError("truncated container header");
  h.ranges.resize(streams);
  for (std::size_t s = 0; s < streams; ++s) {
    const auto off = QuantHeader::kFixedBytes + 16 * s;
    h.ranges[s].min = std::bit_cast<double>(get_be(bytes, off, 8));
    h.ranges[s].max = std::bit_cast<double>(get_be(bytes, off + 8, 8));
  }
  h.validate();

  const auto payload = bytes.subspan(h.header_bytes());
  if (payload.size() < h.payload_bytes())
    throw StructuralError("truncated payload: need " + std::to_string(h.payload_bytes()) +
                          " bytes, have " + std::to_string(payload.size()));
  if (payload.size() > h.payload_bytes())
    throw StructuralError("trailing bytes after payload");

  const auto n = h.value_count();
  d.codes.resize(n);
  d.values.resize(n);
  BitReader r(payload);
  for (std::size_t i = 0; i < n; ++i) {
    d.codes[i] = r.get(h.bits);
    d.values[i] = dequantize_value(d.codes[i], h.ranges[h.stream_of(i)], h.bits);
  }
  return d;
}

}  // namespace csisniff
