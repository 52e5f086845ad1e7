#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "csisniff/core.hpp"
#include "csisniff/pipeline.hpp"

namespace csisniff {

struct Interval
{
  double start = 0.0;
  double end = 0.0;

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Activity intervals in capture time. `normalized()` sorts and merges.
struct GroundTruth
{
  std::vector<Interval> intervals;

  GroundTruth normalized() const
  {
    std::vector<Interval> v = intervals;
    for (const auto& iv : v)
      if (!std::isfinite(iv.start) || !std::isfinite(iv.end) || !(iv.end > iv.start))
        throw ValidationError("interval end must be greater than start");
    std::sort(v.begin(), v.end(),
              [](const Interval& a, const Interval& b) { return a.start < b.start; });
    GroundTruth out;
    for (const auto& iv : v) {
      if (!out.intervals.empty() && iv.start <= out.intervals.back().end)
        out.intervals.back().end = std::max(out.intervals.back().end, iv.end);
      else
        out.intervals.push_back(iv);
    }
    return out;
  }

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

// Truth CSV: start,end
inline std::string write_truth_csv(const GroundTruth& truth)
{
  std::string out = "start,end\n";
  char buf[80];
  for (const auto& iv : truth.intervals) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", iv.start, iv.end);
    out += buf;
  }
  return out;
}

inline GroundTruth parse_truth_csv(std::string_view text)
{
  GroundTruth truth;
  std::size_t line_no = 0;
  bool header = false;
  for (auto raw : detail::split(text, '\n')) {
    ++line_no;
    auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#')
      continue;
    if (!header) {
      if (line != "start,end")
        throw ParseError(line_no, "expected header 'start,end'");
      header = true;
      continue;
    }
    auto f = detail::split(line, ',');
    std::optional<double> s, e;
    if (f.size() == 2) {
      s = detail::parse_number<double>(detail::trim(f[0]));
      e = detail::parse_number<double>(detail::trim(f[1]));
    }
    if (!s || !e || !(*e > *s))
      throw ParseError(line_no, "bad interval");
    truth.intervals.push_back({*s, *e});
  }
  if (!header)
    throw ParseError(line_no, "missing header line");
  return truth;
}

/// G_k = 1 iff window k overlaps the union of `truth` intervals for at least
/// overlap_frac * window_length seconds.
inline std::vector<int> label_windows(const GroundTruth& truth, const FeatureSeries& series,
                                      double overlap_frac)
{
  if (!(overlap_frac >= 0 && overlap_frac <= 1))
    throw ValidationError("overlap_frac must lie in [0, 1]");
  const auto merged = truth.normalized();
  const double w = series.window_length;
  std::vector<int> g(series.size(), 0);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double a = series.window_starts[k];
    const double b = a + w;
    double overlap = 0.0;
    for (const auto& iv : merged.intervals) {
      if (iv.start >= b)
        break;
      overlap += std::max(0.0, std::min(iv.end, b) - std::max(iv.start, a));
    }
    g[k] = overlap >= overlap_frac * w ? 1 : 0;
  }
  return g;
}

/// Y_k = 1 iff A*_k >= tau.
inline std::vector<int> classify(std::span<const double> values, double tau)
{
  std::vector<int> y(values.size());
  for (std::size_t k = 0; k < values.size(); ++k)
    y[k] = values[k] >= tau ? 1 : 0;
  return y;
}

inline std::vector<int> classify(const FeatureSeries& series, double tau)
{
  return classify(series.values, tau);
}

struct Confusion
{
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  double tpr() const { return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn); }
  double fpr() const { return fp + tn == 0 ? 0.0 : double(fp) / double(fp + tn); }

  friend bool operator==(const Confusion&, const Confusion&) = default;
};

inline Confusion confusion(std::span<const int> y, std::span<const int> g)
{
  if (y.size() != g.size())
    throw ValidationError("prediction and label sequences differ in length");
  Confusion c;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (y[k])
      (g[k] ? c.tp : c.fp)++;
    else
      (g[k] ? c.fn : c.tn)++;
  }
  return c;
}

struct RocPoint
{
  double tau = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  Confusion cells;
};

struct RocCurve
{
  std::vector<double> thresholds;
  std::vector<RocPoint> points;  // one per threshold, same order

  /// Collapsed (fpr, tpr) polyline including the (0,0) and (1,1) anchors,
  /// ordered by fpr then tpr.
  std::vector<std::pair<double, double>> polyline() const
  {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(points.size() + 2);
    pts.emplace_back(0.0, 0.0);
    for (const auto& p : points)
      pts.emplace_back(p.fpr, p.tpr);
    pts.emplace_back(1.0, 1.0);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
  }
};

inline constexpr std::size_t kDefaultThresholds = 1000;

/// Sweep n linearly spaced thresholds over [min A*, max A*].
inline RocCurve roc(std::span<const double> scores, std::span<const int> labels,
                    std::size_t n_thresholds = kDefaultThresholds)
{
  if (scores.size() != labels.size())
    throw ValidationError("score and label sequences differ in length");
  if (n_thresholds < 2)
    throw ValidationError("need at least two thresholds");
  std::vector<double> pos, neg;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (!std::isfinite(scores[k]))
      throw ValidationError("non-finite score");
    (labels[k] ? pos : neg).push_back(scores[k]);
  }
  if (pos.empty() || neg.empty())
    throw ValidationError("ground truth has a single class; ROC/AUC undefined");
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  const double lo = std::min(pos.front(), neg.front());
  const double hi = std::max(pos.back(), neg.back());

  RocCurve curve;
  curve.thresholds.resize(n_thresholds);
  curve.points.resize(n_thresholds);
  const double last = static_cast<double>(n_thresholds - 1);
  for (std::size_t j = 0; j < n_thresholds; ++j) {
    double tau = lo + (hi - lo) * (static_cast<double>(j) / last);
    if (j == 0)
      tau = lo;
    if (j == n_thresholds - 1)
      tau = hi;
    auto above = [tau](const std::vector<double>& v) {
      return static_cast<std::size_t>(v.end() - std::lower_bound(v.begin(), v.end(), tau));
    };
    Confusion c;
    c.tp = above(pos);
    c.fn = pos.size() - c.tp;
    c.fp = above(neg);
    c.tn = neg.size() - c.fp;
    curve.thresholds[j] = tau;
    curve.points[j] = {tau, c.tpr(), c.fpr(), c};
  }
  return curve;
}

inline RocCurve roc(const FeatureSeries& series, std::span<const int> labels,
                    std::size_t n_thresholds = kDefaultThresholds)
{
  return roc(series.values, labels, n_thresholds);
}

/// Trapezoidal area under the collapsed polyline.
inline double auc(const RocCurve& curve)
{
  const auto pts = curve.polyline();
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) * 0.5;
  return std::clamp(area, 0.0, 1.0);
}

inline std::string write_roc_csv(const RocCurve& curve)
{
  std::string out = "# anchors (fpr,tpr)=(0,0) and (1,1) are implied and not listed\n";
  out += "tau,tpr,fpr\n";
  char buf[96];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.tau, p.tpr, p.fpr);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end evaluation of one feature series against ground truth.

struct EvaluationOptions
{
  double overlap_frac = 0.5;
  bool exclude_invalid = false;
  std::size_t n_thresholds = kDefaultThresholds;
};

struct Evaluation
{
  std::vector<double> scores;
  std::vector<int> labels;
  RocCurve curve;
  double auc = 0.0;
  std::size_t windows = 0;
  std::size_t invalid_windows = 0;
  EvaluationOptions options;
};

inline Evaluation evaluate(const FeatureSeries& series, const GroundTruth& truth,
                           EvaluationOptions opts = {})
{
  Evaluation ev;
  ev.options = opts;
  const auto g = label_windows(truth, series, opts.overlap_frac);
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (!series.valid[k]) {
      ++ev.invalid_windows;
      if (opts.exclude_invalid)
        continue;
    }
    ev.scores.push_back(series.values[k]);
    ev.labels.push_back(g[k]);
  }
  ev.windows = ev.scores.size();
  ev.curve = roc(ev.scores, ev.labels, opts.n_thresholds);
  ev.auc = auc(ev.curve);
  return ev;
}

/// name: value lines.
inline std::string format_metrics(const Evaluation& ev)
{
  std::size_t positives = 0;
  for (int l : ev.labels)
    positives += l ? 1 : 0;
  const RocPoint* best = nullptr;
  for (const auto& p : ev.curve.points)
    if (!best || p.tpr - p.fpr > best->tpr - best->fpr)
      best = &p;

  std::string out;
  char buf[128];
  auto line = [&](const char* name, const char* fmt, auto value) {
    std::snprintf(buf, sizeof buf, fmt, value);
    out += name;
    out += ": ";
    out += buf;
    out += '\n';
  };
  line("windows", "%zu", ev.windows);
  line("positives", "%zu", positives);
  line("negatives", "%zu", ev.windows - positives);
  line("invalid_windows", "%zu", ev.invalid_windows);
  line("exclude_invalid", "%s", ev.options.exclude_invalid ? "true" : "false");
  line("overlap_frac", "%.6g", ev.options.overlap_frac);
  line("thresholds", "%zu", ev.options.n_thresholds);
  line("auc", "%.6f", ev.auc);
  if (best) {
    line("best_tau", "%.9g", best->tau);
    line("best_tpr", "%.6f", best->tpr);
    line("best_fpr", "%.6f", best->fpr);
  }
  return out;
}

}  // namespace csisniff
