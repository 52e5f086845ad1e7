#pragma once

// Wire contract between the control service (access point side) and the
// collector: capture configurations, topic names and JSON message shapes.
//
//   start    <- CaptureConfig JSON
//   stop     <- {"name"}
//   download <- {"name", "correlation_id"}
//   output   -> {"name", "correlation_id", "row_count", "payload"}   payload = base64 CSV
//   status   -> {"name", "state", "op", "error", "correlation_id"}
//
// All messages travel at QoS 1.

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "csisniff/core.hpp"
#include "csisniff/error.hpp"

namespace csisniff::control {

namespace topic {
inline constexpr const char* start = "start";
inline constexpr const char* stop = "stop";
inline constexpr const char* download = "download";
inline constexpr const char* output = "output";
inline constexpr const char* status = "status";
}  // namespace topic

inline constexpr int kQos = 1;

// ---------------------------------------------------------------------------
// base64 (OpenSSL block codec)

inline std::string base64_encode(std::string_view in)
{
  std::string out(4 * ((in.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(in.data()),
                                static_cast<int>(in.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::string base64_decode(std::string_view in)
{
  if (in.size() % 4 != 0)
    throw ValidationError("base64 length is not a multiple of 4");
  std::string out(3 * (in.size() / 4), '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(in.data()),
                                static_cast<int>(in.size()));
  if (n < 0)
    throw ValidationError("invalid base64 payload");
  // EVP_DecodeBlock counts padding as zero bytes.
  std::size_t pad = 0;
  if (!in.empty() && in.back() == '=')
    pad = (in.size() >= 2 && in[in.size() - 2] == '=') ? 2 : 1;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

inline std::string make_correlation_id()
{
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char hex[] = "0123456789abcdef";
  std::string s(16, '0');
  auto v = rng();
  for (auto& c : s) {
    c = hex[v & 0xf];
    v >>= 4;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Capture configuration

enum class Band { ghz_2_4, ghz_5 };
enum class ConfigStatus { stopped, running };

inline const char* to_string(Band b) { return b == Band::ghz_2_4 ? "2.4" : "5"; }
inline const char* to_string(ConfigStatus s) { return s == ConfigStatus::running ? "running" : "stopped"; }

/// Standard 5 GHz channels, one per line; '#' comments. See data/channels-5ghz.txt.
class ChannelList
{
public:
  static ChannelList parse(std::string_view text)
  {
    ChannelList list;
    std::size_t line_no = 0;
    for (auto raw : detail::split(text, '\n')) {
      ++line_no;
      auto line = detail::trim(raw.substr(0, raw.find('#')));
      if (line.empty())
        continue;
      auto ch = detail::parse_number<int>(line);
      if (!ch || *ch <= 0)
        throw ParseError(line_no, "bad channel number");
      list.channels_.push_back(*ch);
    }
    std::sort(list.channels_.begin(), list.channels_.end());
    list.channels_.erase(std::unique(list.channels_.begin(), list.channels_.end()),
                         list.channels_.end());
    return list;
  }

  static ChannelList load(const std::string& path) { return parse(detail::read_file(path)); }

  /// Compiled-in copy of data/channels-5ghz.txt.
  static const ChannelList& builtin()
  {
    static const ChannelList list = parse("36\n40\n44\n48\n52\n56\n60\n64\n100\n104\n108\n112\n"
                                          "116\n120\n124\n128\n132\n136\n140\n144\n149\n153\n"
                                          "157\n161\n165\n");
    return list;
  }

  bool contains(int ch) const { return std::binary_search(channels_.begin(), channels_.end(), ch); }
  const std::vector<int>& channels() const noexcept { return channels_; }

private:
  std::vector<int> channels_;
};

inline bool valid_config_name(std::string_view name)
{
  if (name.empty() || name.size() > 64 || name.front() == '.')
    return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
  });
}

struct CaptureConfig
{
  std::string name;
  std::string description;
  Band band = Band::ghz_2_4;
  int bandwidth_mhz = 20;
  int channel = 6;
  std::vector<DeviceId> device_filter;  // empty = every device
  ConfigStatus status = ConfigStatus::stopped;

  void validate(const ChannelList& ch5 = ChannelList::builtin()) const
  {
    if (!valid_config_name(name))
      throw ConfigError("name must be 1-64 characters of [A-Za-z0-9._-] and not start with '.'");
    if (band == Band::ghz_2_4) {
      if (bandwidth_mhz != 20 && bandwidth_mhz != 40)
        throw ConfigError("2.4 GHz band supports 20 or 40 MHz bandwidth");
      if (channel < 1 || channel > 13)
        throw ConfigError("2.4 GHz channel must lie in [1, 13]");
    } else {
      if (bandwidth_mhz != 40 && bandwidth_mhz != 80)
        throw ConfigError("5 GHz band supports 40 or 80 MHz bandwidth");
      if (!ch5.contains(channel))
        throw ConfigError("channel " + std::to_string(channel) + " is not a 5 GHz channel");
    }
    auto sorted = device_filter;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("device_filter lists a MAC address twice");
  }

  friend bool operator==(const CaptureConfig&, const CaptureConfig&) = default;
};

inline nlohmann::ordered_json to_json(const CaptureConfig& c)
{
  auto macs = nlohmann::ordered_json::array();
  for (const auto& d : c.device_filter)
    macs.push_back(d.str());
  return {
      {"name", c.name},
      {"description", c.description},
      {"band", to_string(c.band)},
      {"bandwidth", c.bandwidth_mhz},
      {"channel", c.channel},
      {"device_filter", macs},
      {"status", to_string(c.status)},
  };
}

/// Strict parse: unknown fields, wrong types and missing required fields are
/// rejected. `status` is accepted but callers decide whether to honour it.
template <class Json>
CaptureConfig config_from_json(const Json& j, const ChannelList& ch5 = ChannelList::builtin())
{
  CaptureConfig c;
  try {
    if (!j.is_object())
      throw ConfigError("configuration must be a JSON object");
    static const char* known[] = {"name", "description", "band", "bandwidth", "channel",
                                  "device_filter", "status"};
    for (const auto& [key, _] : j.items())
      if (std::find_if(std::begin(known), std::end(known),
                       [&](const char* k) { return key == k; }) == std::end(known))
        throw ConfigError("unknown configuration field '" + key + "'");
    for (const char* req : {"name", "band", "bandwidth", "channel"})
      if (!j.contains(req))
        throw ConfigError(std::string("missing field '") + req + "'");
    c.name = j.at("name").template get<std::string>();
    c.description = j.value("description", std::string());
    const auto& band = j.at("band");
    if (band.is_string()) {
      const auto b = band.template get<std::string>();
      if (b == "2.4")
        c.band = Band::ghz_2_4;
      else if (b == "5")
        c.band = Band::ghz_5;
      else
        throw ConfigError("band must be \"2.4\" or \"5\"");
    } else if (band.is_number()) {
      const double b = band.template get<double>();
      if (b == 2.4)
        c.band = Band::ghz_2_4;
      else if (b == 5.0)
        c.band = Band::ghz_5;
      else
        throw ConfigError("band must be 2.4 or 5");
    } else {
      throw ConfigError("band must be \"2.4\" or \"5\"");
    }
    c.bandwidth_mhz = j.at("bandwidth").template get<int>();
    c.channel = j.at("channel").template get<int>();
    if (j.contains("device_filter")) {
      for (const auto& m : j.at("device_filter")) {
        auto id = DeviceId::try_parse(m.template get<std::string>());
        if (!id)
          throw ConfigError("invalid MAC address '" + m.template get<std::string>() + "'");
        c.device_filter.push_back(*id);
      }
    }
    if (j.contains("status")) {
      const auto s = j.at("status").template get<std::string>();
      if (s == "running")
        c.status = ConfigStatus::running;
      else if (s != "stopped")
        throw ConfigError("status must be 'stopped' or 'running'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("configuration: ") + e.what());
  }
  c.validate(ch5);
  return c;
}

// ---------------------------------------------------------------------------
// Messages

struct OutputEnvelope
{
  std::string name;
  std::string correlation_id;
  std::size_t row_count = 0;
  std::string content;  // decoded CSV bytes

  std::string to_payload() const
  {
    return nlohmann::ordered_json{{"name", name},
                                  {"correlation_id", correlation_id},
                                  {"row_count", row_count},
                                  {"payload", base64_encode(content)}}
        .dump();
  }

  static OutputEnvelope from_payload(std::string_view text)
  {
    try {
      const auto j = nlohmann::json::parse(text);
      OutputEnvelope e;
      e.name = j.at("name").get<std::string>();
      e.correlation_id = j.value("correlation_id", std::string());
      e.row_count = j.at("row_count").get<std::size_t>();
      e.content = base64_decode(j.at("payload").get<std::string>());
      return e;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("output envelope: ") + e.what());
    }
  }
};

struct StatusMessage
{
  std::string name;
  std::string state;  // idle | capturing | stopped
  std::string op;     // start | stop | download
  std::string error;  // empty on success
  std::string correlation_id;

  std::string to_payload() const
  {
    nlohmann::ordered_json j{{"name", name}, {"state", state}, {"op", op}};
    j["error"] = error.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(error);
    if (!correlation_id.empty())
      j["correlation_id"] = correlation_id;
    return j.dump();
  }

  static StatusMessage from_payload(std::string_view text)
  {
    try {
      const auto j = nlohmann::json::parse(text);
      StatusMessage s;
      s.name = j.value("name", std::string());
      s.state = j.value("state", std::string());
      s.op = j.value("op", std::string());
      if (j.contains("error") && j.at("error").is_string())
        s.error = j.at("error").get<std::string>();
      s.correlation_id = j.value("correlation_id", std::string());
      return s;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("status message: ") + e.what());
    }
  }
};

inline std::string name_message(const std::string& name, const std::string& correlation_id = {})
{
  nlohmann::ordered_json j{{"name", name}};
  if (!correlation_id.empty())
    j["correlation_id"] = correlation_id;
  return j.dump();
}

}  // namespace csisniff::control
