#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "csisniff/capture_csv.hpp"
#include "csisniff/detector.hpp"
#include "csisniff/pipeline.hpp"
#include "csisniff/quant.hpp"

namespace csisniff {

/// Keep, per transmitter, the frames whose arrival rank r satisfies r % f == 0.
inline CaptureDocument decimate(const CaptureDocument& doc, std::size_t f)
{
  if (f == 0)
    throw ValidationError("decimation factor must be >= 1");
  CaptureDocument out;
  out.bandwidth_mhz = doc.bandwidth_mhz;
  out.source_config = doc.source_config;
  std::map<DeviceId, std::size_t> rank;
  for (const auto& frame : doc.frames) {
    auto& r = rank[frame.device];
    if (r % f == 0)
      out.frames.push_back(frame);
    ++r;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Storage accounting

struct StorageCounts
{
  std::size_t frames = 0;
  std::size_t subcarriers = 0;  // FFT size on stage 1, |I| on stages 2-3
  std::size_t windows = 0;
};

inline std::size_t stream_count(Stage stage, RangeMode mode, std::size_t subcarriers)
{
  QuantHeader h;
  h.stage = stage;
  h.mode = mode;
  h.subcarriers = static_cast<std::uint32_t>(subcarriers);
  return h.expected_streams();
}

/// Uncompressed bytes: int16 pairs for raw CSI, 32-bit floats otherwise. With
/// `bits`, the size of the CSIQ container holding the same values.
inline std::size_t storage_bytes(Stage stage, const StorageCounts& counts,
                                 std::optional<int> bits = std::nullopt,
                                 RangeMode mode = RangeMode::global)
{
  std::size_t values = 0;
  switch (stage) {
  case Stage::raw: values = counts.frames * counts.subcarriers * 2; break;
  case Stage::amplitude:
  case Stage::filtered: values = counts.frames * counts.subcarriers; break;
  case Stage::aggregate: values = counts.windows; break;
  }
  if (!bits) {
    // raw: two 16-bit integers per sample; others: one 32-bit float per value
    return stage == Stage::raw ? values * 2 : values * 4;
  }
  if (*bits < 1 || *bits > 16)
    throw ValidationError("bits must be in [1, 16]");
  const std::size_t header =
      QuantHeader::kFixedBytes + 16 * stream_count(stage, mode, counts.subcarriers);
  return (values * static_cast<std::size_t>(*bits) + 7) / 8 + header;
}

// ---------------------------------------------------------------------------
// Stage quantization. Each returns the container bytes and the dequantized
// data in the shape the next pipeline stage consumes.

namespace storage_detail {

inline std::vector<ValueRange> compute_ranges(const QuantHeader& h, const std::vector<double>& values)
{
  std::vector<ValueRange> ranges(h.expected_streams(),
                                 {std::numeric_limits<double>::infinity(),
                                  -std::numeric_limits<double>::infinity()});
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& r = ranges[h.stream_of(i)];
    r.min = std::min(r.min, values[i]);
    r.max = std::max(r.max, values[i]);
  }
  for (auto& r : ranges)
    if (r.min > r.max)
      r = {0.0, 0.0};
  return ranges;
}

inline std::vector<double> dequantize_all(const QuantHeader& h, const std::vector<std::uint32_t>& codes)
{
  std::vector<double> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i)
    out[i] = dequantize_value(codes[i], h.ranges[h.stream_of(i)], h.bits);
  return out;
}

inline std::int16_t round_to_int16(double v)
{
  const double r = std::round(v);
  return static_cast<std::int16_t>(std::clamp(r, -32768.0, 32767.0));
}

}  // namespace storage_detail

template <class T>
struct Quantized
{
  std::vector<std::uint8_t> container;
  T data;
};

inline QuantHeader capture_header(const CaptureDocument& doc, int bits, RangeMode mode)
{
  QuantHeader h;
  h.stage = Stage::raw;
  h.bits = bits;
  h.mode = mode;
  h.bandwidth_mhz = static_cast<std::uint16_t>(doc.bandwidth_mhz);
  h.frames = static_cast<std::uint32_t>(doc.frames.size());
  h.subcarriers = static_cast<std::uint32_t>(doc.fft_size());
  return h;
}

/// Replace the CSI of `skeleton` (timestamps and transmitters) with decoded
/// stage-1 values, rounded back to int16.
inline CaptureDocument restore_capture(const QuantHeader& h, const std::vector<double>& values,
                                       const CaptureDocument& skeleton)
{
  if (h.stage != Stage::raw)
    throw ValidationError("container does not hold stage-1 data");
  if (h.frames != skeleton.frames.size() || h.subcarriers != skeleton.fft_size())
    throw StructuralError("container shape does not match the capture skeleton");
  CaptureDocument out = skeleton;
  std::size_t i = 0;
  for (auto& f : out.frames)
    for (auto& s : f.csi) {
      s.real = storage_detail::round_to_int16(values[i++]);
      s.imag = storage_detail::round_to_int16(values[i++]);
    }
  return out;
}

inline Quantized<CaptureDocument> quantize_capture(const CaptureDocument& doc, int bits,
                                                   RangeMode mode = RangeMode::global)
{
  auto h = capture_header(doc, bits, mode);
  std::vector<double> values;
  values.reserve(h.value_count());
  for (const auto& f : doc.frames) {
    if (f.csi.size() != h.subcarriers)
      throw StructuralError("frame FFT size differs from document");
    for (const auto& s : f.csi) {
      values.push_back(s.real);
      values.push_back(s.imag);
    }
  }
  h.ranges = storage_detail::compute_ranges(h, values);
  const auto codes = quantize_values(h, values);
  return {encode_quant(h, codes), restore_capture(h, storage_detail::dequantize_all(h, codes), doc)};
}

inline AmplitudeMatrix restore_matrix(const QuantHeader& h, const std::vector<double>& values,
                                      const AmplitudeMatrix& skeleton)
{
  const Stage expected = skeleton.filtered ? Stage::filtered : Stage::amplitude;
  if (h.stage != expected)
    throw ValidationError("container stage does not match amplitude matrix kind");
  if (h.frames != skeleton.rows() || h.subcarriers != skeleton.cols())
    throw StructuralError("container shape does not match the matrix skeleton");
  AmplitudeMatrix out = skeleton;
  out.values = values;
  return out;
}

inline Quantized<AmplitudeMatrix> quantize_matrix(const AmplitudeMatrix& m, int bits,
                                                  RangeMode mode = RangeMode::global,
                                                  int bandwidth_mhz = 0)
{
  QuantHeader h;
  h.stage = m.filtered ? Stage::filtered : Stage::amplitude;
  h.bits = bits;
  h.mode = mode;
  h.bandwidth_mhz = static_cast<std::uint16_t>(bandwidth_mhz);
  h.frames = static_cast<std::uint32_t>(m.rows());
  h.subcarriers = static_cast<std::uint32_t>(m.cols());
  h.ranges = storage_detail::compute_ranges(h, m.values);
  const auto codes = quantize_values(h, m.values);
  return {encode_quant(h, codes), restore_matrix(h, storage_detail::dequantize_all(h, codes), m)};
}

/// Rebuild a feature series from stage-4 values. Validity flags are not part
/// of the container; they come from `skeleton` when given, else all true.
inline FeatureSeries restore_series(const QuantHeader& h, const std::vector<double>& values,
                                    const FeatureSeries* skeleton = nullptr)
{
  if (h.stage != Stage::aggregate)
    throw ValidationError("container does not hold stage-4 data");
  FeatureSeries fs;
  fs.window_length = h.window_length;
  fs.values = values;
  fs.window_starts.resize(h.windows);
  for (std::size_t k = 0; k < h.windows; ++k)
    fs.window_starts[k] = h.window_start + static_cast<double>(k) * h.window_length;
  if (skeleton) {
    if (skeleton->size() != h.windows)
      throw StructuralError("container window count does not match the series skeleton");
    fs.window_starts = skeleton->window_starts;
    fs.valid = skeleton->valid;
  } else {
    fs.valid.assign(h.windows, true);
  }
  return fs;
}

inline Quantized<FeatureSeries> quantize_series(const FeatureSeries& fs, int bits)
{
  QuantHeader h;
  h.stage = Stage::aggregate;
  h.bits = bits;
  h.windows = static_cast<std::uint32_t>(fs.size());
  h.window_start = fs.window_starts.empty() ? 0.0 : fs.window_starts.front();
  h.window_length = fs.window_length;
  h.ranges = storage_detail::compute_ranges(h, fs.values);
  const auto codes = quantize_values(h, fs.values);
  return {encode_quant(h, codes), restore_series(h, storage_detail::dequantize_all(h, codes), &fs)};
}

using StageData = std::variant<CaptureDocument, AmplitudeMatrix, FeatureSeries>;

/// Quantize `input` as the given stage. Stage 1 expects a capture, 2 an
/// unfiltered matrix, 3 a filtered matrix, 4 a feature series.
inline Quantized<StageData> quantize_stage(Stage stage, const StageData& input, int bits,
                                           RangeMode mode = RangeMode::global)
{
  auto mismatch = [stage] {
    return ValidationError("input does not match stage " + std::to_string(int(stage)));
  };
  switch (stage) {
  case Stage::raw:
    if (auto* doc = std::get_if<CaptureDocument>(&input)) {
      auto q = quantize_capture(*doc, bits, mode);
      return {std::move(q.container), std::move(q.data)};
    }
    throw mismatch();
  case Stage::amplitude:
  case Stage::filtered:
    if (auto* m = std::get_if<AmplitudeMatrix>(&input); m && m->filtered == (stage == Stage::filtered)) {
      auto q = quantize_matrix(*m, bits, mode);
      return {std::move(q.container), std::move(q.data)};
    }
    throw mismatch();
  case Stage::aggregate:
    if (auto* fs = std::get_if<FeatureSeries>(&input)) {
      if (mode != RangeMode::global)
        throw ValidationError("stage 4 supports only the global range mode");
      auto q = quantize_series(*fs, bits);
      return {std::move(q.container), std::move(q.data)};
    }
    throw mismatch();
  }
  throw mismatch();
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow
{
  int stage = 0;  // 1..4 for quantization rows, 0 for decimation rows
  int param = 0;  // bits B, or decimation factor f
  double auc = 0.0;
  std::size_t stored_bytes = 0;
  std::size_t baseline_bytes = 0;
  double ratio = 0.0;
  std::optional<double> rate_pps;  // decimation rows only
};

struct SweepReport
{
  std::vector<SweepRow> rows;
};

struct SweepConfig
{
  PipelineParams params;
  EvaluationOptions eval;
  DeviceFilter devices;
  RangeMode range_mode = RangeMode::global;
  unsigned threads = 0;  // 0: hardware concurrency
};

namespace storage_detail {

template <class Fn>
void run_cells(std::size_t count, unsigned threads, Fn&& fn)
{
  if (threads == 0)
    threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);
}

}  // namespace storage_detail

inline std::vector<int> default_bits_grid()
{
  std::vector<int> v;
  for (int b = 2; b <= 16; ++b)
    v.push_back(b);
  return v;
}

inline std::vector<int> default_rate_grid()
{
  std::vector<int> v;
  for (int f = 1; f <= 25; ++f)
    v.push_back(f);
  v.push_back(50);
  return v;
}

/// Evaluate one quantization cell: quantize at `stage`, run the remaining
/// stages, score against `truth`. Intermediate products of the unquantized
/// pipeline are passed in so they are computed once per sweep.
struct QuantSweepContext
{
  const CaptureDocument* doc = nullptr;
  const GroundTruth* truth = nullptr;
  SweepConfig config;
  AmplitudeMatrix raw;
  AmplitudeMatrix filtered;
  FeatureSeries features;

  QuantSweepContext(const CaptureDocument& d, const GroundTruth& t, SweepConfig cfg)
      : doc(&d)
      , truth(&t)
      , config(std::move(cfg))
  {
    raw = extract_amplitudes(d, config.params.subcarriers, config.devices);
    filtered = filter_outliers(raw, config.params);
    features = aggregate(filtered, config.params);
  }

  /// Feature series after replacing one stage's data and running the rest.
  FeatureSeries continue_from(const CaptureDocument& doc_in) const
  {
    return run_pipeline(doc_in, config.params, config.devices);
  }

  FeatureSeries continue_from(const AmplitudeMatrix& m) const
  {
    const auto& p = config.params;
    return m.filtered ? aggregate(m, p) : aggregate(filter_outliers(m, p), p);
  }

  FeatureSeries continue_from(const FeatureSeries& fs) const { return fs; }

  /// Quantize at `stage` with B bits; returns container bytes and the
  /// resulting feature series.
  std::pair<std::vector<std::uint8_t>, FeatureSeries> run_cell(Stage stage, int bits) const
  {
    const auto mode = config.range_mode;
    switch (stage) {
    case Stage::raw: {
      auto q = quantize_capture(*doc, bits, mode);
      return {std::move(q.container), continue_from(q.data)};
    }
    case Stage::amplitude: {
      auto q = quantize_matrix(raw, bits, mode, doc->bandwidth_mhz);
      return {std::move(q.container), continue_from(q.data)};
    }
    case Stage::filtered: {
      auto q = quantize_matrix(filtered, bits, mode, doc->bandwidth_mhz);
      return {std::move(q.container), continue_from(q.data)};
    }
    case Stage::aggregate: {
      if (mode != RangeMode::global)
        throw ValidationError("stage 4 supports only the global range mode");
      auto q = quantize_series(features, bits);
      return {std::move(q.container), std::move(q.data)};
    }
    }
    throw ValidationError("bad stage");
  }

  /// Decode a stored container and continue the pipeline from it.
  FeatureSeries continue_from_container(std::span<const std::uint8_t> bytes) const
  {
    const auto d = read_quant(bytes);
    switch (d.header.stage) {
    case Stage::raw: return continue_from(restore_capture(d.header, d.values, *doc));
    case Stage::amplitude: return continue_from(restore_matrix(d.header, d.values, raw));
    case Stage::filtered: return continue_from(restore_matrix(d.header, d.values, filtered));
    case Stage::aggregate: return restore_series(d.header, d.values, &features);
    }
    throw ValidationError("bad stage");
  }

  StorageCounts counts(Stage stage) const
  {
    StorageCounts c;
    c.frames = raw.rows();
    c.windows = features.size();
    c.subcarriers = stage == Stage::raw ? doc->fft_size() : raw.cols();
    if (stage == Stage::raw)
      c.frames = doc->frames.size();
    return c;
  }

  double score(const FeatureSeries& fs) const { return evaluate(fs, *truth, config.eval).auc; }
};

inline SweepReport run_quant_sweep(const CaptureDocument& doc, const GroundTruth& truth,
                                   const SweepConfig& config,
                                   const std::vector<int>& stages = {1, 2, 3, 4},
                                   const std::vector<int>& bits = default_bits_grid())
{
  for (int b : bits)
    if (b < 1 || b > 16)
      throw ValidationError("bits must be in [1, 16]");
  const QuantSweepContext ctx(doc, truth, config);
  SweepReport report;
  report.rows.resize(stages.size() * bits.size());
  storage_detail::run_cells(report.rows.size(), config.threads, [&](std::size_t i) {
    const Stage stage = stage_from_int(stages[i / bits.size()]);
    const int b = bits[i % bits.size()];
    const auto [container, fs] = ctx.run_cell(stage, b);
    auto& row = report.rows[i];
    row.stage = static_cast<int>(stage);
    row.param = b;
    row.auc = ctx.score(fs);
    row.stored_bytes = container.size();
    row.baseline_bytes = storage_bytes(stage, ctx.counts(stage));
    row.ratio = double(row.baseline_bytes) / double(row.stored_bytes);
  });
  return report;
}

inline SweepReport run_rate_sweep(const CaptureDocument& doc, const GroundTruth& truth,
                                  const SweepConfig& config,
                                  const std::vector<int>& factors = default_rate_grid())
{
  for (int f : factors)
    if (f < 1)
      throw ValidationError("decimation factor must be >= 1");
  const double duration = doc.duration();
  const std::size_t n = doc.fft_size();
  const std::size_t baseline = storage_bytes(Stage::raw, {doc.frames.size(), n, 0});
  SweepReport report;
  report.rows.resize(factors.size());
  storage_detail::run_cells(report.rows.size(), config.threads, [&](std::size_t i) {
    const auto kept = decimate(doc, static_cast<std::size_t>(factors[i]));
    const auto fs = run_pipeline(kept, config.params, config.devices);
    auto& row = report.rows[i];
    row.stage = 0;
    row.param = factors[i];
    row.auc = evaluate(fs, truth, config.eval).auc;
    row.stored_bytes = storage_bytes(Stage::raw, {kept.frames.size(), n, 0});
    row.baseline_bytes = baseline;
    row.ratio = row.stored_bytes ? double(row.baseline_bytes) / double(row.stored_bytes) : 0.0;
    row.rate_pps = duration > 0 ? double(kept.frames.size()) / duration : 0.0;
  });
  return report;
}

inline std::string write_sweep_csv(const SweepReport& report)
{
  const bool rate = !report.rows.empty() && report.rows.front().rate_pps.has_value();
  std::string out = rate ? "stage,bits_or_f,auc,stored_bytes,baseline_bytes,ratio,rate_pps\n"
                         : "stage,bits_or_f,auc,stored_bytes,baseline_bytes,ratio\n";
  char buf[160];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%zu,%zu,%.6f", r.stage, r.param, r.auc,
                  r.stored_bytes, r.baseline_bytes, r.ratio);
    out += buf;
    if (rate) {
      std::snprintf(buf, sizeof buf, ",%.6f", r.rate_pps.value_or(0.0));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

inline std::string format_sweep_table(const SweepReport& report)
{
  const bool rate = !report.rows.empty() && report.rows.front().rate_pps.has_value();
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s %-6s %-9s %-14s %-14s %-10s%s\n", "stage",
                rate ? "f" : "bits", "auc", "stored_bytes", "baseline_bytes", "ratio",
                rate ? " rate_pps" : "");
  out += buf;
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%-6d %-6d %-9.4f %-14zu %-14zu %-10.3f", r.stage, r.param,
                  r.auc, r.stored_bytes, r.baseline_bytes, r.ratio);
    out += buf;
    if (rate) {
      std::snprintf(buf, sizeof buf, " %.3f", r.rate_pps.value_or(0.0));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace csisniff
