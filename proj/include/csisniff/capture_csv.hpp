#pragma once

// Canonical capture CSV.
//
//   [# config=<name>]
//   ts,mac,re_-32,im_-32,re_-31,im_-31,...,re_31,im_31
//   1700000000.000125,aa:bb:cc:dd:ee:ff,12,-7,...
//
// One row per frame, columns for every FFT bin in ascending index order,
// timestamps with exactly 6 decimals, lowercase MACs, '\n' line endings.
// Other lines starting with '#' are comments and are skipped on input.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "csisniff/core.hpp"

namespace csisniff {

struct CaptureDocument
{
  std::vector<CsiFrame> frames;
  int bandwidth_mhz = 20;
  std::optional<std::string> source_config;

  std::size_t fft_size(const FormatRegistry& reg = FormatRegistry::builtin()) const
  {
    return fft_size_for(bandwidth_mhz, reg);
  }

  /// Seconds between first and last frame; 0 for fewer than two frames.
  double duration() const
  {
    if (frames.size() < 2)
      return 0.0;
    return frames.back().timestamp - frames.front().timestamp;
  }

  friend bool operator==(const CaptureDocument&, const CaptureDocument&) = default;
};

namespace csv_detail {

inline void append_int(std::string& out, long long v)
{
  char buf[24];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, p);
}

}  // namespace csv_detail

inline std::string format_capture_header(std::size_t fft_size)
{
  std::string out = "ts,mac";
  const int half = static_cast<int>(fft_size / 2);
  for (int i = -half; i < half; ++i) {
    out += ",re_";
    csv_detail::append_int(out, i);
    out += ",im_";
    csv_detail::append_int(out, i);
  }
  out += '\n';
  return out;
}

inline std::string format_timestamp(double ts)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", ts);
  return buf;
}

inline void append_capture_row(std::string& out, const CsiFrame& frame)
{
  out += format_timestamp(frame.timestamp);
  out += ',';
  out += frame.device.str();
  for (const auto& s : frame.csi) {
    out += ',';
    csv_detail::append_int(out, s.real);
    out += ',';
    csv_detail::append_int(out, s.imag);
  }
  out += '\n';
}

inline std::string write_capture_csv(const CaptureDocument& doc,
                                     const FormatRegistry& reg = FormatRegistry::builtin())
{
  const auto n = doc.fft_size(reg);
  std::string out;
  out.reserve(64 + doc.frames.size() * (40 + n * 12));
  if (doc.source_config)
    out += "# config=" + *doc.source_config + "\n";
  out += format_capture_header(n);
  for (const auto& f : doc.frames) {
    if (f.csi.size() != n)
      throw StructuralError("frame CSI length " + std::to_string(f.csi.size()) +
                            " does not match FFT size " + std::to_string(n));
    append_capture_row(out, f);
  }
  return out;
}

inline CaptureDocument parse_capture_csv(std::string_view text,
                                         const FormatRegistry& reg = FormatRegistry::builtin())
{
  CaptureDocument doc;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::size_t fft = 0;
  bool have_header = false;
  std::vector<std::string_view> fields;

  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos)
      end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.remove_suffix(1);
    if (line.empty())
      continue;
    if (line.front() == '#') {
      constexpr std::string_view tag = "# config=";
      if (!have_header && line.substr(0, tag.size()) == tag)
        doc.source_config = std::string(line.substr(tag.size()));
      continue;
    }

    fields.clear();
    std::size_t start = 0;
    for (;;) {
      auto comma = line.find(',', start);
      if (comma == std::string_view::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }

    if (!have_header) {
      if (fields.size() < 4 || fields[0] != "ts" || fields[1] != "mac" || fields.size() % 2 != 0)
        throw ParseError(line_no, "expected header 'ts,mac,re_<i>,im_<i>,...'");
      fft = (fields.size() - 2) / 2;
      auto bw = reg.bandwidth_for_fft(fft);
      if (!bw)
        throw ParseError(line_no, "no registered bandwidth with FFT size " + std::to_string(fft));
      if (format_capture_header(fft) != std::string(line) + "\n")
        throw ParseError(line_no, "header columns do not follow the canonical index layout");
      doc.bandwidth_mhz = *bw;
      have_header = true;
      continue;
    }

    if (fields.size() != 2 + 2 * fft)
      throw ParseError(line_no, "expected " + std::to_string(2 + 2 * fft) + " columns for " +
                                    std::to_string(doc.bandwidth_mhz) + " MHz, got " +
                                    std::to_string(fields.size()));
    CsiFrame frame;
    auto ts = detail::parse_number<double>(fields[0]);
    if (!ts || !std::isfinite(*ts) || *ts < 0)
      throw ParseError(line_no, "bad timestamp '" + std::string(fields[0]) + "'");
    frame.timestamp = *ts;
    auto mac = DeviceId::try_parse(fields[1]);
    if (!mac)
      throw ParseError(line_no, "bad MAC '" + std::string(fields[1]) + "'");
    frame.device = *mac;
    frame.csi.resize(fft);
    for (std::size_t k = 0; k < fft; ++k) {
      auto re = detail::parse_number<std::int16_t>(fields[2 + 2 * k]);
      auto im = detail::parse_number<std::int16_t>(fields[3 + 2 * k]);
      if (!re || !im)
        throw ParseError(line_no, "bad int16 CSI value in column " + std::to_string(3 + 2 * k));
      frame.csi[k] = {*re, *im};
    }
    doc.frames.push_back(std::move(frame));
  }
  if (!have_header)
    throw ParseError(line_no, "missing header line");

  std::stable_sort(doc.frames.begin(), doc.frames.end(),
                   [](const CsiFrame& a, const CsiFrame& b) { return a.timestamp < b.timestamp; });
  return doc;
}

inline CaptureDocument load_capture(const std::string& path,
                                    const FormatRegistry& reg = FormatRegistry::builtin())
{
  return parse_capture_csv(detail::read_file(path), reg);
}

inline void save_capture(const std::string& path, const CaptureDocument& doc,
                         const FormatRegistry& reg = FormatRegistry::builtin())
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw RuntimeFailure("cannot write " + path);
  const auto text = write_capture_csv(doc, reg);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out)
    throw RuntimeFailure("write failed: " + path);
}

}  // namespace csisniff
