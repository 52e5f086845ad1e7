#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csisniff/capture_csv.hpp"
#include "csisniff/core.hpp"

namespace csisniff {

/// Per-frame amplitudes over one subcarrier set, row-major (frame, subcarrier).
struct AmplitudeMatrix
{
  std::vector<double> timestamps;
  SubcarrierSet subcarriers;
  std::vector<double> values;
  bool filtered = false;

  std::size_t rows() const noexcept { return timestamps.size(); }
  std::size_t cols() const noexcept { return subcarriers.size(); }
  double at(std::size_t row, std::size_t col) const { return values[row * cols() + col]; }
  double& at(std::size_t row, std::size_t col) { return values[row * cols() + col]; }
  std::span<const double> row(std::size_t r) const
  {
    return std::span<const double>(values).subspan(r * cols(), cols());
  }

  friend bool operator==(const AmplitudeMatrix&, const AmplitudeMatrix&) = default;
};

/// Windowed aggregate A*_k. Window k spans [start_k, start_k + window_length).
struct FeatureSeries
{
  std::vector<double> window_starts;
  double window_length = 0.0;
  std::vector<double> values;
  std::vector<bool> valid;

  std::size_t size() const noexcept { return values.size(); }

  friend bool operator==(const FeatureSeries&, const FeatureSeries&) = default;
};

using DeviceFilter = std::vector<DeviceId>;

inline bool device_selected(const DeviceId& id, const DeviceFilter& filter)
{
  return filter.empty() || std::find(filter.begin(), filter.end(), id) != filter.end();
}

/// Amplitudes of every frame whose transmitter passes `filter` (an empty
/// filter keeps every device).
inline AmplitudeMatrix extract_amplitudes(const CaptureDocument& doc, const SubcarrierSet& set,
                                          const DeviceFilter& filter = {})
{
  AmplitudeMatrix m;
  m.subcarriers = set;
  for (const auto& f : doc.frames) {
    if (!device_selected(f.device, filter))
      continue;
    m.timestamps.push_back(f.timestamp);
    for (int index : set.indices())
      m.values.push_back(amplitude(f.at_index(index)));
  }
  if (m.timestamps.empty())
    throw NoFramesError();
  return m;
}

namespace pipeline_detail {

struct Moments
{
  double mean = 0.0;
  double stddev = 0.0;
};

// Two-pass population moments over column `col` of rows [lo, hi).
inline Moments exact_moments(const std::vector<double>& src, std::size_t cols, std::size_t col,
                             std::size_t lo, std::size_t hi)
{
  const double n = static_cast<double>(hi - lo);
  double sum = 0.0;
  for (std::size_t r = lo; r < hi; ++r)
    sum += src[r * cols + col];
  const double mean = sum / n;
  double ss = 0.0;
  for (std::size_t r = lo; r < hi; ++r) {
    const double d = src[r * cols + col] - mean;
    ss += d * d;
  }
  return {mean, std::sqrt(ss / n)};
}

inline bool passes(double value, Moments m, double lambda)
{
  if (m.stddev > 0)
    return std::abs(value - m.mean) / m.stddev < lambda;
  return value == m.mean;
}

}  // namespace pipeline_detail

/// Trailing-window outlier substitution, applied per subcarrier in time order.
///
/// For the frame at time t the window holds the same subcarrier's history
/// (raw values by default, filtered ones with FilterHistory::filtered) at times in
/// [t - w1, t). With fewer than two entries the value passes. Otherwise it
/// passes iff |A - mu| / sigma < lambda (population sigma; sigma = 0 passes
/// only when A == mu), and is replaced by the previous filtered value if not.
///
/// Window moments come from shifted running sums. Whenever the fast estimate
/// is degenerate or lands near the decision boundary the moments are recomputed
/// with an exact two-pass sum, so decisions match a direct evaluation.
inline AmplitudeMatrix filter_outliers(const AmplitudeMatrix& m, const PipelineParams& params)
{
  using namespace pipeline_detail;
  params.validate();
  if (m.filtered)
    throw ValidationError("filter_outliers expects an unfiltered amplitude matrix");

  AmplitudeMatrix out = m;
  out.filtered = true;
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  if (rows == 0 || cols == 0)
    return out;

  const auto& history = params.history == FilterHistory::filtered ? out.values : m.values;
  std::vector<double> shift(cols), s1(cols), s2(cols);
  std::size_t lo = 0, hi = 0;
  std::size_t updates_since_rebuild = 0;
  constexpr std::size_t kRebuildEvery = 256;

  auto rebuild = [&] {
    for (std::size_t c = 0; c < cols; ++c) {
      shift[c] = lo < hi ? history[lo * cols + c] : 0.0;
      double a = 0.0, b = 0.0;
      for (std::size_t r = lo; r < hi; ++r) {
        const double d = history[r * cols + c] - shift[c];
        a += d;
        b += d * d;
      }
      s1[c] = a;
      s2[c] = b;
    }
    updates_since_rebuild = 0;
  };

  for (std::size_t i = 0; i < rows; ++i) {
    const double t = m.timestamps[i];
    const double from = t - params.w1;
    while (hi < i && m.timestamps[hi] < t) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = history[hi * cols + c] - shift[c];
        s1[c] += d;
        s2[c] += d * d;
      }
      ++hi;
      ++updates_since_rebuild;
    }
    while (lo < hi && !(m.timestamps[lo] >= from)) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = history[lo * cols + c] - shift[c];
        s1[c] -= d;
        s2[c] -= d * d;
      }
      ++lo;
      ++updates_since_rebuild;
    }
    if (updates_since_rebuild >= kRebuildEvery || lo == hi)
      rebuild();

    const std::size_t count = hi - lo;
    if (count < 2)
      continue;
    const double n = static_cast<double>(count);
    for (std::size_t c = 0; c < cols; ++c) {
      const double value = m.values[i * cols + c];
      const double mean_shift = s1[c] / n;
      const double var = s2[c] / n - mean_shift * mean_shift;
      Moments fast{shift[c] + mean_shift, var > 0 ? std::sqrt(var) : 0.0};

      bool ok;
      const double scale = std::max(std::abs(fast.mean), std::abs(value));
      if (!(fast.stddev > 1e-6 * scale)) {
        ok = passes(value, exact_moments(history, cols, c, lo, hi), params.lambda);
      } else {
        const double ratio = std::abs(value - fast.mean) / fast.stddev;
        if (std::abs(ratio - params.lambda) <= 1e-6 * (params.lambda + ratio))
          ok = passes(value, exact_moments(history, cols, c, lo, hi), params.lambda);
        else
          ok = ratio < params.lambda;
      }
      if (!ok)
        out.values[i * cols + c] = out.values[(i - 1) * cols + c];
    }
  }
  return out;
}

struct AggregateOptions
{
  bool allow_unfiltered = false;
};

/// Index of the window containing t, for windows [t0 + k*w2, t0 + (k+1)*w2).
inline std::size_t window_index(double t, double t0, double w2)
{
  auto k = static_cast<std::ptrdiff_t>(std::floor((t - t0) / w2));
  if (k < 0)
    k = 0;
  while (k > 0 && t < t0 + static_cast<double>(k) * w2)
    --k;
  while (t >= t0 + static_cast<double>(k + 1) * w2)
    ++k;
  return static_cast<std::size_t>(k);
}

/// Non-overlapping w2 windows anchored at the first timestamp. A*_k is the mean
/// over subcarriers of each subcarrier's population standard deviation in the
/// window; windows with fewer than two frames get 0 and valid = false.
inline FeatureSeries aggregate(const AmplitudeMatrix& m, const PipelineParams& params,
                               AggregateOptions opts = {})
{
  params.validate();
  if (!m.filtered && !opts.allow_unfiltered)
    throw ValidationError("aggregate expects a filtered amplitude matrix");
  FeatureSeries fs;
  fs.window_length = params.w2;
  if (m.rows() == 0)
    return fs;

  const double t0 = m.timestamps.front();
  const std::size_t nwin = window_index(m.timestamps.back(), t0, params.w2) + 1;
  fs.window_starts.resize(nwin);
  fs.values.assign(nwin, 0.0);
  fs.valid.assign(nwin, false);
  for (std::size_t k = 0; k < nwin; ++k)
    fs.window_starts[k] = t0 + static_cast<double>(k) * params.w2;

  const std::size_t cols = m.cols();
  std::size_t r = 0;
  while (r < m.rows()) {
    const std::size_t k = window_index(m.timestamps[r], t0, params.w2);
    std::size_t end = r + 1;
    while (end < m.rows() && window_index(m.timestamps[end], t0, params.w2) == k)
      ++end;
    if (end - r >= 2 && cols > 0) {
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c)
        total += pipeline_detail::exact_moments(m.values, cols, c, r, end).stddev;
      fs.values[k] = total / static_cast<double>(cols);
      fs.valid[k] = true;
    }
    r = end;
  }
  return fs;
}

/// Injection points between stages; each hook may rewrite its stage's output.
struct PipelineHooks
{
  std::function<void(CaptureDocument&)> after_load;
  std::function<void(AmplitudeMatrix&)> after_extract;
  std::function<void(AmplitudeMatrix&)> after_filter;
  std::function<void(FeatureSeries&)> after_aggregate;
};

struct PipelineOptions
{
  bool skip_filter = false;
};

/// extract -> filter -> aggregate.
inline FeatureSeries run_pipeline(const CaptureDocument& doc, const PipelineParams& params,
                                  const DeviceFilter& filter = {}, const PipelineHooks& hooks = {},
                                  PipelineOptions opts = {})
{
  params.validate();
  const CaptureDocument* source = &doc;
  std::optional<CaptureDocument> copy;
  if (hooks.after_load) {
    copy = doc;
    hooks.after_load(*copy);
    source = &*copy;
  }
  auto raw = extract_amplitudes(*source, params.subcarriers, filter);
  if (hooks.after_extract)
    hooks.after_extract(raw);
  if (opts.skip_filter) {
    auto fs = aggregate(raw, params, {.allow_unfiltered = true});
    if (hooks.after_aggregate)
      hooks.after_aggregate(fs);
    return fs;
  }
  auto filtered = filter_outliers(raw, params);
  if (hooks.after_filter)
    hooks.after_filter(filtered);
  auto fs = aggregate(filtered, params);
  if (hooks.after_aggregate)
    hooks.after_aggregate(fs);
  return fs;
}

// FeatureSeries CSV: window_start,value,valid

inline std::string write_feature_csv(const FeatureSeries& fs)
{
  std::string out = "window_start,value,valid\n";
  char buf[96];
  for (std::size_t k = 0; k < fs.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.6f,%.17g,%d\n", fs.window_starts[k], fs.values[k],
                  fs.valid[k] ? 1 : 0);
    out += buf;
  }
  return out;
}

inline FeatureSeries parse_feature_csv(std::string_view text, double window_length)
{
  FeatureSeries fs;
  fs.window_length = window_length;
  std::size_t line_no = 0;
  bool header = false;
  for (auto raw : detail::split(text, '\n')) {
    ++line_no;
    auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#')
      continue;
    if (!header) {
      if (line != "window_start,value,valid")
        throw ParseError(line_no, "expected header 'window_start,value,valid'");
      header = true;
      continue;
    }
    auto f = detail::split(line, ',');
    if (f.size() != 3)
      throw ParseError(line_no, "expected 3 columns");
    auto start = detail::parse_number<double>(f[0]);
    auto value = detail::parse_number<double>(f[1]);
    if (!start || !value || (f[2] != "0" && f[2] != "1"))
      throw ParseError(line_no, "bad feature row");
    fs.window_starts.push_back(*start);
    fs.values.push_back(*value);
    fs.valid.push_back(f[2] == "1");
  }
  if (!header)
    throw ParseError(line_no, "missing header line");
  return fs;
}

}  // namespace csisniff
