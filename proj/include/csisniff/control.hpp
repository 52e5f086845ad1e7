#pragma once

// Access-point side of the control plane: configuration store, MQTT control
// publisher and the HTTP API used by the CLI and the web UI.

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "csisniff/control_plane.hpp"
#include "csisniff/mqtt.hpp"

namespace csisniff::control {

class NotFound : public ValidationError
{
public:
  using ValidationError::ValidationError;
};

class Conflict : public ValidationError
{
public:
  using ValidationError::ValidationError;
};

class DownloadTimeout : public RuntimeFailure
{
public:
  using RuntimeFailure::RuntimeFailure;
};

class CollectorError : public RuntimeFailure
{
public:
  using RuntimeFailure::RuntimeFailure;
};

using ServiceUnavailable = mqtt::BrokerUnavailable;

// ---------------------------------------------------------------------------
// Store

/// One JSON document: {"schema_version": 1, "configs": [...]}. Every save
/// writes a temp file, syncs it and renames it over the old one.
class ConfigStore
{
public:
  static constexpr int kSchemaVersion = 1;

  explicit ConfigStore(std::filesystem::path path, const ChannelList& ch5 = ChannelList::builtin())
      : path_(std::move(path))
      , ch5_(ch5)
  {
    configs_ = load(path_, ch5_);
  }

  static std::vector<CaptureConfig> load(const std::filesystem::path& path,
                                         const ChannelList& ch5 = ChannelList::builtin())
  {
    if (!std::filesystem::exists(path))
      return {};
    std::vector<CaptureConfig> out;
    try {
      const auto j = nlohmann::json::parse(detail::read_file(path.string()));
      if (j.at("schema_version").get<int>() != kSchemaVersion)
        throw ConfigError(path.string() + ": unsupported schema_version");
      for (const auto& c : j.at("configs"))
        out.push_back(config_from_json(c, ch5));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    return out;
  }

  static void save(const std::filesystem::path& path, const std::vector<CaptureConfig>& configs)
  {
    nlohmann::ordered_json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["configs"] = nlohmann::ordered_json::array();
    for (const auto& c : configs)
      doc["configs"].push_back(to_json(c));
    const auto text = doc.dump(2) + "\n";

    auto dir = path.parent_path();
    if (dir.empty())
      dir = ".";
    std::filesystem::create_directories(dir);
    const auto tmp = path.string() + ".tmp." + std::to_string(::getpid());
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0)
      throw RuntimeFailure("cannot write " + tmp);
    std::size_t off = 0;
    while (off < text.size()) {
      const auto n = ::write(fd, text.data() + off, text.size() - off);
      if (n <= 0) {
        ::close(fd);
        ::unlink(tmp.c_str());
        throw RuntimeFailure("short write to " + tmp);
      }
      off += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
    if (::rename(tmp.c_str(), path.c_str()) != 0) {
      ::unlink(tmp.c_str());
      throw RuntimeFailure("cannot replace " + path.string());
    }
    if (int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY); dfd >= 0) {
      ::fsync(dfd);
      ::close(dfd);
    }
  }

  std::vector<CaptureConfig> all() const
  {
    std::lock_guard lock(mutex_);
    return configs_;
  }

  std::optional<CaptureConfig> get(const std::string& name) const
  {
    std::lock_guard lock(mutex_);
    for (const auto& c : configs_)
      if (c.name == name)
        return c;
    return std::nullopt;
  }

  /// Inserts or replaces by name, then persists.
  void put(const CaptureConfig& cfg)
  {
    std::lock_guard lock(mutex_);
    auto next = configs_;
    auto it = std::find_if(next.begin(), next.end(), [&](const auto& c) { return c.name == cfg.name; });
    if (it != next.end())
      *it = cfg;
    else
      next.push_back(cfg);
    save(path_, next);
    configs_ = std::move(next);
  }

  bool erase(const std::string& name)
  {
    std::lock_guard lock(mutex_);
    auto next = configs_;
    if (std::erase_if(next, [&](const auto& c) { return c.name == name; }) == 0)
      return false;
    save(path_, next);
    configs_ = std::move(next);
    return true;
  }

  const std::filesystem::path& path() const noexcept { return path_; }

private:
  std::filesystem::path path_;
  ChannelList ch5_;
  mutable std::mutex mutex_;
  std::vector<CaptureConfig> configs_;
};

// ---------------------------------------------------------------------------
// Service

struct ServiceOptions
{
  std::filesystem::path store_path = "configs.json";
  std::string broker_host = "127.0.0.1";
  std::uint16_t broker_port = 1883;
  std::chrono::milliseconds download_timeout = std::chrono::seconds(30);
  std::chrono::milliseconds broker_timeout = std::chrono::seconds(5);
  std::string client_id = "csi-control";
};

class ControlService
{
public:
  explicit ControlService(ServiceOptions opts, const ChannelList& ch5 = ChannelList::builtin())
      : opts_(std::move(opts))
      , ch5_(ch5)
      , store_(opts_.store_path, ch5)
      , client_(opts_.broker_host, opts_.broker_port, opts_.client_id)
  {
    client_.on_message([this](const mqtt::Message& m) { on_message(m); });
    try {
      ensure_connected();
    } catch (const RuntimeFailure&) {
      // Retried lazily on the first operation that needs the broker.
    }
  }

  ~ControlService() { client_.disconnect(); }

  const ChannelList& channels() const noexcept { return ch5_; }
  ConfigStore& store() noexcept { return store_; }
  bool broker_connected() const { return client_.connected(); }

  std::vector<CaptureConfig> list() const { return store_.all(); }

  CaptureConfig get(const std::string& name) const
  {
    auto c = store_.get(name);
    if (!c)
      throw NotFound("no configuration named '" + name + "'");
    return *c;
  }

  CaptureConfig create(CaptureConfig cfg)
  {
    cfg.status = ConfigStatus::stopped;
    cfg.validate(ch5_);
    auto lock = lock_name(cfg.name);
    if (store_.get(cfg.name))
      throw Conflict("configuration '" + cfg.name + "' already exists");
    store_.put(cfg);
    return cfg;
  }

  /// Full-document replace. The name cannot change and status stays server-owned.
  CaptureConfig update(const std::string& name, CaptureConfig cfg)
  {
    if (cfg.name != name)
      throw ConfigError("body name '" + cfg.name + "' does not match '" + name + "'");
    auto lock = lock_name(name);
    const auto current = get(name);
    if (current.status == ConfigStatus::running)
      throw Conflict("configuration '" + name + "' is running; stop it first");
    cfg.status = current.status;
    cfg.validate(ch5_);
    store_.put(cfg);
    return cfg;
  }

  void remove(const std::string& name)
  {
    auto lock = lock_name(name);
    const auto current = get(name);
    if (current.status == ConfigStatus::running)
      throw Conflict("configuration '" + name + "' is running; stop it first");
    store_.erase(name);
  }

  CaptureConfig start(const std::string& name)
  {
    auto lock = lock_name(name);
    auto cfg = get(name);
    if (cfg.status == ConfigStatus::running)
      throw Conflict("configuration '" + name + "' is already running");
    auto msg = to_json(cfg);
    msg.erase("status");
    publish(topic::start, msg.dump());
    cfg.status = ConfigStatus::running;
    store_.put(cfg);
    return cfg;
  }

  CaptureConfig stop(const std::string& name)
  {
    auto lock = lock_name(name);
    auto cfg = get(name);
    if (cfg.status != ConfigStatus::running)
      throw Conflict("configuration '" + name + "' is not running");
    publish(topic::stop, name_message(name));
    cfg.status = ConfigStatus::stopped;
    store_.put(cfg);
    return cfg;
  }

  /// Requests the capture file and waits for the matching output envelope.
  std::string download(const std::string& name)
  {
    get(name);
    const auto corr = make_correlation_id();
    auto promise = std::make_shared<std::promise<OutputEnvelope>>();
    auto future = promise->get_future();
    {
      std::lock_guard lock(waiters_mutex_);
      waiters_[corr] = promise;
    }
    struct Cleanup
    {
      ControlService* self;
      std::string corr;
      ~Cleanup()
      {
        std::lock_guard lock(self->waiters_mutex_);
        self->waiters_.erase(corr);
      }
    } cleanup{this, corr};

    publish(topic::download, name_message(name, corr));
    if (future.wait_for(opts_.download_timeout) != std::future_status::ready)
      throw DownloadTimeout("collector did not answer the download of '" + name + "' within " +
                            std::to_string(opts_.download_timeout.count()) + " ms");
    return future.get().content;
  }

private:
  void ensure_connected()
  {
    if (!client_.connected()) {
      client_.connect(opts_.broker_timeout);
      client_.subscribe({topic::output, topic::status}, kQos, opts_.broker_timeout);
    }
  }

  void publish(const std::string& t, const std::string& payload)
  {
    std::lock_guard lock(publish_mutex_);
    ensure_connected();
    client_.publish(t, payload, kQos, opts_.broker_timeout);
  }

  void on_message(const mqtt::Message& m)
  {
    if (m.topic == topic::output) {
      OutputEnvelope env;
      try {
        env = OutputEnvelope::from_payload(m.payload);
      } catch (const ValidationError&) {
        return;
      }
      fulfil(env.correlation_id, [&](auto& p) { p.set_value(std::move(env)); });
    } else if (m.topic == topic::status) {
      StatusMessage s;
      try {
        s = StatusMessage::from_payload(m.payload);
      } catch (const ValidationError&) {
        return;
      }
      if (!s.error.empty() && !s.correlation_id.empty())
        fulfil(s.correlation_id, [&](auto& p) {
          p.set_exception(std::make_exception_ptr(CollectorError("collector: " + s.error)));
        });
      reconcile(s);
    }
  }

  template <class F>
  void fulfil(const std::string& corr, F&& f)
  {
    std::shared_ptr<std::promise<OutputEnvelope>> p;
    {
      std::lock_guard lock(waiters_mutex_);
      auto it = waiters_.find(corr);
      if (it == waiters_.end())
        return;
      p = it->second;
      waiters_.erase(it);
    }
    f(*p);
  }

  /// The collector reports its actual session state with every status
  /// message; the stored status follows it.
  void reconcile(const StatusMessage& s)
  {
    if (s.op != "start" && s.op != "stop")
      return;
    auto lock = lock_name(s.name);
    auto cfg = store_.get(s.name);
    if (!cfg)
      return;
    const auto actual = s.state == "capturing" ? ConfigStatus::running : ConfigStatus::stopped;
    if (cfg->status != actual) {
      cfg->status = actual;
      try {
        store_.put(*cfg);
      } catch (const RuntimeFailure&) {
      }
    }
  }

  std::unique_lock<std::mutex> lock_name(const std::string& name)
  {
    std::shared_ptr<std::mutex> m;
    {
      std::lock_guard lock(names_mutex_);
      auto& slot = name_locks_[name];
      if (!slot)
        slot = std::make_shared<std::mutex>();
      m = slot;
    }
    return std::unique_lock(*m);
  }

  ServiceOptions opts_;
  ChannelList ch5_;
  ConfigStore store_;
  mqtt::Client client_;
  std::mutex publish_mutex_;
  std::mutex names_mutex_;
  std::map<std::string, std::shared_ptr<std::mutex>> name_locks_;
  std::mutex waiters_mutex_;
  std::map<std::string, std::shared_ptr<std::promise<OutputEnvelope>>> waiters_;
};

// ---------------------------------------------------------------------------
// HTTP API
//
//   GET    /healthz
//   GET    /configs                    POST /configs
//   GET    /configs/{name}             PUT  /configs/{name}     DELETE /configs/{name}
//   POST   /configs/{name}/start       POST /configs/{name}/stop
//   GET    /configs/{name}/output      (text/csv)
//   GET    /ui/...                     static dashboard assets
//
// Errors come back as {"error": "..."} with 400 invalid input, 404 unknown
// configuration, 409 state conflict, 502 collector error, 503 broker
// unreachable, 504 download timeout.

inline int http_status_for(const std::exception& e)
{
  if (dynamic_cast<const NotFound*>(&e))
    return 404;
  if (dynamic_cast<const Conflict*>(&e))
    return 409;
  if (dynamic_cast<const ValidationError*>(&e))
    return 400;
  if (dynamic_cast<const ServiceUnavailable*>(&e))
    return 503;
  if (dynamic_cast<const DownloadTimeout*>(&e))
    return 504;
  if (dynamic_cast<const CollectorError*>(&e))
    return 502;
  return 500;
}

inline constexpr const char* kPlaceholderUi =
    "<!doctype html><html><head><title>CSI Sniffer</title></head><body>"
    "<h1>CSI Sniffer</h1><p>The dashboard assets are not installed. Start the service with "
    "<code>--ui-dir</code> pointing at the built web UI, or use the JSON API under "
    "<a href=\"/configs\">/configs</a>.</p></body></html>";

class HttpApi
{
public:
  explicit HttpApi(ControlService& svc, std::optional<std::filesystem::path> ui_dir = std::nullopt)
      : svc_(svc)
  {
    routes(ui_dir);
  }

  ~HttpApi() { stop(); }

  /// Binds and serves on a background thread; returns the bound port
  /// (port 0 picks a free one).
  int start(const std::string& host, int port)
  {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0)
      throw RuntimeFailure("cannot listen on " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  /// Serves on the calling thread until stop().
  void listen(const std::string& host, int port)
  {
    if (!server_.listen(host, port))
      throw RuntimeFailure("cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop()
  {
    server_.stop();
    if (thread_.joinable())
      thread_.join();
  }

  httplib::Server& server() noexcept { return server_; }

private:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& j)
  {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  static Handler guarded(Handler h)
  {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const nlohmann::json::exception& e) {
        send_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
      } catch (const std::exception& e) {
        send_json(res, http_status_for(e), {{"error", e.what()}});
      }
    };
  }

  CaptureConfig body_config(const httplib::Request& req, const std::string* path_name) const
  {
    auto j = nlohmann::json::parse(req.body);
    if (path_name && j.is_object() && !j.contains("name"))
      j["name"] = *path_name;
    return config_from_json(j, svc_.channels());
  }

  void routes(const std::optional<std::filesystem::path>& ui_dir)
  {
    static const std::string name_re = "([A-Za-z0-9._-]+)";
    auto& s = server_;

    s.Get("/healthz", guarded([this](const auto&, auto& res) {
            send_json(res, 200,
                      {{"status", "ok"}, {"broker", svc_.broker_connected() ? "connected" : "disconnected"}});
          }));

    s.Get("/configs", guarded([this](const auto&, auto& res) {
            auto arr = nlohmann::ordered_json::array();
            for (const auto& c : svc_.list())
              arr.push_back(to_json(c));
            send_json(res, 200, arr);
          }));

    s.Post("/configs", guarded([this](const auto& req, auto& res) {
             auto c = svc_.create(body_config(req, nullptr));
             res.set_header("Location", "/configs/" + c.name);
             send_json(res, 201, to_json(c));
           }));

    s.Get("/configs/" + name_re, guarded([this](const auto& req, auto& res) {
            send_json(res, 200, to_json(svc_.get(req.matches[1])));
          }));

    s.Put("/configs/" + name_re, guarded([this](const auto& req, auto& res) {
            const std::string name = req.matches[1];
            send_json(res, 200, to_json(svc_.update(name, body_config(req, &name))));
          }));

    s.Delete("/configs/" + name_re, guarded([this](const auto& req, auto& res) {
               svc_.remove(req.matches[1]);
               res.status = 204;
             }));

    s.Post("/configs/" + name_re + "/start", guarded([this](const auto& req, auto& res) {
             send_json(res, 200, to_json(svc_.start(req.matches[1])));
           }));

    s.Post("/configs/" + name_re + "/stop", guarded([this](const auto& req, auto& res) {
             send_json(res, 200, to_json(svc_.stop(req.matches[1])));
           }));

    s.Get("/configs/" + name_re + "/output", guarded([this](const auto& req, auto& res) {
            const std::string name = req.matches[1];
            auto csv = svc_.download(name);
            res.status = 200;
            res.set_header("Content-Disposition", "attachment; filename=\"" + name + ".csv\"");
            res.set_content(std::move(csv), "text/csv");
          }));

    if (ui_dir && std::filesystem::is_directory(*ui_dir)) {
      s.set_mount_point("/ui", ui_dir->string());
    } else {
      s.Get("/ui", [](const auto&, auto& res) { res.set_content(kPlaceholderUi, "text/html"); });
      s.Get("/ui/", [](const auto&, auto& res) { res.set_content(kPlaceholderUi, "text/html"); });
    }
  }

  ControlService& svc_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace csisniff::control
