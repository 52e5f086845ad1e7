#pragma once

// Simulated CSI collector. Reacts to start/stop/download control messages,
// streams frames from a replay capture or a synthetic scenario into one CSV
// file per configuration, and publishes the file on request.
//
// File layout (<capture_dir>/<name>.csv):
//
//   # config=<name>
//   ts,mac,re_-32,im_-32,...
//   # session 1
//   <rows>
//   # session 2          <- appended by a later start of the same name
//   <rows>
//
// Rows keep the source timestamps. With acceleration a > 0 the frame at
// source offset dt is written dt / a seconds after start; a <= 0 writes as
// fast as possible.

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stop_token>
#include <string>
#include <thread>
#include <utility>

#include "csisniff/capture_csv.hpp"
#include "csisniff/control_plane.hpp"
#include "csisniff/mqtt.hpp"
#include "csisniff/synth.hpp"

namespace csisniff::collector {

using control::CaptureConfig;
using control::StatusMessage;

/// Produces the frames one capture session will emit.
using FrameSource = std::function<CaptureDocument(const CaptureConfig&)>;

inline FrameSource replay_source(const std::string& path)
{
  auto doc = std::make_shared<const CaptureDocument>(load_capture(path));
  return [doc, path](const CaptureConfig& cfg) {
    if (doc->bandwidth_mhz != cfg.bandwidth_mhz)
      throw ValidationError("replay file " + path + " holds " + std::to_string(doc->bandwidth_mhz) +
                            " MHz frames but the configuration asks for " +
                            std::to_string(cfg.bandwidth_mhz) + " MHz");
    return *doc;
  };
}

/// Scenario frames regenerated per session at the configuration's bandwidth.
inline FrameSource scenario_source(Scenario sc)
{
  return [sc](const CaptureConfig& cfg) {
    auto s = sc;
    s.bandwidth_mhz = cfg.bandwidth_mhz;
    return generate(s).capture;
  };
}

/// Data rows in capture CSV text (header and comment lines excluded).
inline std::size_t count_data_rows(std::string_view text)
{
  std::size_t rows = 0;
  bool header = false;
  for (auto line : detail::split(text, '\n')) {
    if (line.empty() || line.front() == '#')
      continue;
    if (!header) {
      header = true;
      continue;
    }
    ++rows;
  }
  return rows;
}

struct CollectorOptions
{
  std::filesystem::path capture_dir = "captures";
  double acceleration = 1.0;
};

enum class SessionState { idle, capturing, stopped };

inline const char* to_string(SessionState s)
{
  switch (s) {
  case SessionState::capturing: return "capturing";
  case SessionState::stopped: return "stopped";
  default: return "idle";
  }
}

class Collector
{
public:
  /// Sends (topic, payload); the MQTT binding plugs a client in here.
  using Publisher = std::function<void(const std::string&, const std::string&)>;

  Collector(FrameSource source, CollectorOptions opts, Publisher publish = {})
      : source_(std::move(source))
      , opts_(std::move(opts))
      , publish_(std::move(publish))
  {
    std::filesystem::create_directories(opts_.capture_dir);
  }

  ~Collector() { shutdown(); }

  Collector(const Collector&) = delete;
  Collector& operator=(const Collector&) = delete;

  void set_publisher(Publisher p)
  {
    std::lock_guard lock(map_mutex_);
    publish_ = std::move(p);
  }

  std::filesystem::path capture_path(const std::string& name) const
  {
    return opts_.capture_dir / (name + ".csv");
  }

  SessionState state(const std::string& name) const
  {
    std::lock_guard lock(map_mutex_);
    auto it = sessions_.find(name);
    return it == sessions_.end() ? SessionState::idle : it->second->state.load();
  }

  std::size_t frames_written(const std::string& name) const
  {
    std::lock_guard lock(map_mutex_);
    auto it = sessions_.find(name);
    return it == sessions_.end() ? 0 : it->second->written.load();
  }

  /// Dispatches one control message by topic. Unknown topics are ignored.
  void handle(const std::string& topic, const std::string& payload)
  {
    if (topic == control::topic::start)
      on_start(payload);
    else if (topic == control::topic::stop)
      on_stop(payload);
    else if (topic == control::topic::download)
      on_download(payload);
  }

  void on_start(const std::string& payload)
  {
    CaptureConfig cfg;
    try {
      cfg = control::config_from_json(nlohmann::json::parse(payload));
    } catch (const std::exception& e) {
      report({guess_name(payload), "idle", "start", std::string("rejected: ") + e.what(), {}});
      return;
    }
    auto lock = lock_name(cfg.name);
    auto s = session(cfg.name);
    if (s->state == SessionState::capturing) {
      report({cfg.name, "capturing", "start", "configuration is already capturing", {}});
      return;
    }
    try {
      begin(*s, cfg);
    } catch (const std::exception& e) {
      report({cfg.name, to_string(s->state), "start", e.what(), {}});
      return;
    }
    report({cfg.name, "capturing", "start", {}, {}});
  }

  void on_stop(const std::string& payload)
  {
    std::string name;
    try {
      name = nlohmann::json::parse(payload).at("name").get<std::string>();
    } catch (const std::exception& e) {
      report({guess_name(payload), "idle", "stop", std::string("rejected: ") + e.what(), {}});
      return;
    }
    auto lock = lock_name(name);
    auto s = find(name);
    if (!s || s->state != SessionState::capturing) {
      report({name, to_string(s ? s->state.load() : SessionState::idle), "stop",
               "no capturing session named '" + name + "'", {}});
      return;
    }
    end(*s);
    report({name, "stopped", "stop", {}, {}});
  }

  void on_download(const std::string& payload)
  {
    std::string name, corr;
    try {
      const auto j = nlohmann::json::parse(payload);
      name = j.at("name").get<std::string>();
      corr = j.value("correlation_id", std::string());
    } catch (const std::exception& e) {
      report({guess_name(payload), "idle", "download", std::string("rejected: ") + e.what(), {}});
      return;
    }
    auto lock = lock_name(name);
    auto s = find(name);
    const auto path = capture_path(name);
    if (!control::valid_config_name(name) || !std::filesystem::exists(path)) {
      report({name, to_string(s ? s->state.load() : SessionState::idle), "download",
              "no capture file for '" + name + "'", corr});
      return;
    }
    control::OutputEnvelope env;
    env.name = name;
    env.correlation_id = corr;
    if (s) {
      std::lock_guard file_lock(s->file_mutex);
      if (s->file)
        std::fflush(s->file);
      env.content = detail::read_file(path.string());
    } else {
      env.content = detail::read_file(path.string());
    }
    env.row_count = count_data_rows(env.content);
    send(control::topic::output, env.to_payload());
  }

  /// Stops every running session; files are flushed and synced.
  void shutdown()
  {
    std::map<std::string, std::shared_ptr<Session>> all;
    {
      std::lock_guard lock(map_mutex_);
      all = sessions_;
    }
    for (auto& [name, s] : all) {
      auto lock = lock_name(name);
      if (s->state == SessionState::capturing)
        end(*s);
    }
  }

  /// Connects to the broker and serves until `st` is triggered. Lost
  /// connections are retried every `retry`.
  void serve(const std::string& host, std::uint16_t port, std::stop_token st,
             std::string client_id = "csi-collector",
             std::chrono::milliseconds retry = std::chrono::milliseconds(500))
  {
    mqtt::Client client(host, port, std::move(client_id));
    client.on_message([this](const mqtt::Message& m) { handle(m.topic, m.payload); });
    set_publisher([&client](const std::string& t, const std::string& p) {
      client.publish(t, p, control::kQos);
    });
    while (!st.stop_requested()) {
      try {
        if (!client.connected()) {
          client.connect();
          client.subscribe({control::topic::start, control::topic::stop, control::topic::download},
                           control::kQos);
        }
      } catch (const RuntimeFailure&) {
      }
      std::mutex m;
      std::unique_lock lock(m);
      std::condition_variable_any cv;
      cv.wait_for(lock, st, client.connected() ? std::chrono::milliseconds(100) : retry,
                  [] { return false; });
    }
    client.disconnect();
    set_publisher({});
    shutdown();
  }

private:
  struct Session
  {
    std::string name;
    std::atomic<SessionState> state{SessionState::idle};
    std::atomic<std::size_t> written{0};
    std::mutex file_mutex;
    std::FILE* file = nullptr;
    std::jthread worker;
  };

  static std::string guess_name(const std::string& payload)
  {
    try {
      return nlohmann::json::parse(payload).value("name", std::string());
    } catch (...) {
      return {};
    }
  }

  void report(StatusMessage msg) { send(control::topic::status, msg.to_payload()); }

  void send(const std::string& topic, const std::string& payload)
  {
    Publisher p;
    {
      std::lock_guard lock(map_mutex_);
      p = publish_;
    }
    if (p) {
      try {
        p(topic, payload);
      } catch (const RuntimeFailure&) {
      }
    }
  }

  std::unique_lock<std::mutex> lock_name(const std::string& name)
  {
    std::shared_ptr<std::mutex> m;
    {
      std::lock_guard lock(map_mutex_);
      auto& slot = name_locks_[name];
      if (!slot)
        slot = std::make_shared<std::mutex>();
      m = slot;
    }
    // The mutex outlives the lock: name_locks_ entries are never erased.
    return std::unique_lock(*m);
  }

  std::shared_ptr<Session> find(const std::string& name) const
  {
    std::lock_guard lock(map_mutex_);
    auto it = sessions_.find(name);
    return it == sessions_.end() ? nullptr : it->second;
  }

  std::shared_ptr<Session> session(const std::string& name)
  {
    std::lock_guard lock(map_mutex_);
    auto& s = sessions_[name];
    if (!s) {
      s = std::make_shared<Session>();
      s->name = name;
    }
    return s;
  }

  static std::size_t count_sessions(const std::string& text)
  {
    std::size_t n = 0;
    for (auto line : detail::split(text, '\n'))
      if (line.substr(0, 10) == "# session ")
        ++n;
    return n;
  }

  void begin(Session& s, const CaptureConfig& cfg)
  {
    auto doc = source_(cfg);
    const auto header = format_capture_header(doc.fft_size());
    const auto path = capture_path(cfg.name);
    std::string prefix;
    std::size_t session_no = 1;
    if (std::filesystem::exists(path)) {
      const auto existing = detail::read_file(path.string());
      if (existing.find("\n" + header) == std::string::npos && existing.rfind(header, 0) != 0)
        throw ValidationError("existing capture file " + path.string() +
                              " has a different column layout");
      session_no = count_sessions(existing) + 1;
      if (!existing.empty() && existing.back() != '\n')
        prefix += '\n';
    } else {
      prefix = "# config=" + cfg.name + "\n" + header;
    }
    prefix += "# session " + std::to_string(session_no) + "\n";

    std::FILE* f = std::fopen(path.string().c_str(), "ab");
    if (!f)
      throw RuntimeFailure("cannot open " + path.string() + " for appending");
    std::fputs(prefix.c_str(), f);
    std::fflush(f);

    std::vector<CsiFrame> frames;
    frames.reserve(doc.frames.size());
    for (auto& fr : doc.frames)
      if (cfg.device_filter.empty() ||
          std::find(cfg.device_filter.begin(), cfg.device_filter.end(), fr.device) !=
              cfg.device_filter.end())
        frames.push_back(std::move(fr));

    {
      std::lock_guard lock(s.file_mutex);
      s.file = f;
    }
    s.written = 0;
    s.state = SessionState::capturing;
    const double accel = opts_.acceleration;
    s.worker = std::jthread([&s, frames = std::move(frames), accel](std::stop_token st) {
      stream(s, frames, accel, st);
    });
  }

  static void stream(Session& s, const std::vector<CsiFrame>& frames, double accel,
                     std::stop_token st)
  {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const double ts0 = frames.empty() ? 0.0 : frames.front().timestamp;
    std::mutex m;
    std::condition_variable_any cv;
    std::string row;
    std::size_t pending = 0;
    for (const auto& fr : frames) {
      if (accel > 0) {
        const auto due = t0 + std::chrono::duration_cast<clock::duration>(
                                  std::chrono::duration<double>((fr.timestamp - ts0) / accel));
        if (due > clock::now()) {
          std::unique_lock lock(m);
          cv.wait_until(lock, st, due, [] { return false; });
        }
      }
      if (st.stop_requested())
        return;
      row.clear();
      append_capture_row(row, fr);
      std::lock_guard lock(s.file_mutex);
      std::fwrite(row.data(), 1, row.size(), s.file);
      ++s.written;
      // Paced replay flushes every row so the file grows visibly; fast replay batches.
      if (accel > 0 || ++pending % 256 == 0)
        std::fflush(s.file);
    }
    std::lock_guard lock(s.file_mutex);
    std::fflush(s.file);
  }

  static void end(Session& s)
  {
    if (s.worker.joinable()) {
      s.worker.request_stop();
      s.worker.join();
    }
    std::lock_guard lock(s.file_mutex);
    if (s.file) {
      std::fflush(s.file);
      ::fsync(::fileno(s.file));
      std::fclose(s.file);
      s.file = nullptr;
    }
    s.state = SessionState::stopped;
  }

  FrameSource source_;
  CollectorOptions opts_;
  mutable std::mutex map_mutex_;
  Publisher publish_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::shared_ptr<std::mutex>> name_locks_;
};

}  // namespace csisniff::collector
