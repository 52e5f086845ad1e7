#include <gtest/gtest.h>

#include <future>

#include "csisniff/collector.hpp"
#include "csisniff/control.hpp"
#include "net_support.hpp"
#include "support.hpp"

using namespace csisniff;
using namespace csisniff::control;
using testing_support::eventually;

namespace {

CaptureConfig parse(const char* text) { return config_from_json(nlohmann::json::parse(text)); }

CaptureConfig basic(const std::string& name)
{
  CaptureConfig c;
  c.name = name;
  return c;
}

std::uint16_t dead_port()
{
  mqtt::Broker b;
  return b.port();
}

}  // namespace

TEST(ConfigValidation, AcceptedExamples)
{
  const auto a = parse(R"({"name":"lab-1","band":"2.4","bandwidth":20,"channel":6})");
  EXPECT_EQ(a.band, Band::ghz_2_4);
  EXPECT_EQ(a.status, ConfigStatus::stopped);
  EXPECT_TRUE(a.device_filter.empty());
  const auto b = parse(R"({"name":"x","band":5,"bandwidth":80,"channel":149,
                           "device_filter":["aa:bb:cc:00:00:01"]})");
  EXPECT_EQ(b.band, Band::ghz_5);
  EXPECT_EQ(b.device_filter.at(0).str(), "aa:bb:cc:00:00:01");
  EXPECT_NO_THROW(parse(R"({"name":"y","band":2.4,"bandwidth":40,"channel":13})"));
  EXPECT_NO_THROW(parse(R"({"name":"z","band":"5","bandwidth":40,"channel":36})"));
}

TEST(ConfigValidation, RejectedExamples)
{
  for (const char* text : {
           R"({"name":"a","band":"2.4","bandwidth":80,"channel":6})",
           R"({"name":"a","band":"2.4","bandwidth":20,"channel":14})",
           R"({"name":"a","band":"2.4","bandwidth":20,"channel":0})",
           R"({"name":"a","band":"5","bandwidth":20,"channel":36})",
           R"({"name":"a","band":"5","bandwidth":40,"channel":14})",
           R"({"name":"a","band":"6","bandwidth":40,"channel":36})",
           R"({"name":"a","band":"2.4","bandwidth":20})",
           R"({"name":"a","band":"2.4","bandwidth":20,"channel":6,"colour":"red"})",
           R"({"name":"a","band":"2.4","bandwidth":"20","channel":6})",
           R"({"name":"a","band":"2.4","bandwidth":20,"channel":6,"device_filter":["nope"]})",
           R"({"name":"a","band":"2.4","bandwidth":20,"channel":6,
               "device_filter":["aa:bb:cc:00:00:01","aa:bb:cc:00:00:01"]})",
           R"({"name":"a","band":"2.4","bandwidth":20,"channel":6,"device_filter":["AA:BB:CC:00:00:01"]})",
           R"({"name":"a","band":"2.4","bandwidth":20,"channel":6,"status":"paused"})",
           R"({"name":"","band":"2.4","bandwidth":20,"channel":6})",
           R"({"name":".hidden","band":"2.4","bandwidth":20,"channel":6})",
           R"({"name":"a/b","band":"2.4","bandwidth":20,"channel":6})",
           R"([1,2])",
       })
    EXPECT_THROW(parse(text), ConfigError) << text;
}

TEST(ConfigValidation, NameRules)
{
  EXPECT_TRUE(valid_config_name("A.b_c-9"));
  EXPECT_TRUE(valid_config_name(std::string(64, 'n')));
  EXPECT_FALSE(valid_config_name(std::string(65, 'n')));
  EXPECT_FALSE(valid_config_name(".."));
  EXPECT_FALSE(valid_config_name("a b"));
}

TEST(ConfigValidation, JsonRoundTrip)
{
  auto c = parse(R"({"name":"r","description":"hall","band":"5","bandwidth":40,"channel":100,
                     "device_filter":["02:00:00:00:00:01"],"status":"running"})");
  EXPECT_EQ(config_from_json(to_json(c)), c);
  EXPECT_EQ(to_json(c).dump(),
            R"({"name":"r","description":"hall","band":"5","bandwidth":40,"channel":100,)"
            R"("device_filter":["02:00:00:00:00:01"],"status":"running"})");
}

TEST(ChannelList, FileMatchesBuiltin)
{
  const auto file = ChannelList::load(CSISNIFF_SOURCE_DIR "/data/channels-5ghz.txt");
  EXPECT_EQ(file.channels(), ChannelList::builtin().channels());
  EXPECT_THROW(ChannelList::parse("36\nforty\n"), ParseError);
}

TEST(Messages, EnvelopesRoundTrip)
{
  OutputEnvelope e{"lab", "c-1", 2, std::string("a,b\n\0\xff", 6)};
  const auto back = OutputEnvelope::from_payload(e.to_payload());
  EXPECT_EQ(back.content, e.content);
  EXPECT_EQ(back.row_count, 2u);
  EXPECT_EQ(nlohmann::json::parse(e.to_payload())["payload"], base64_encode(e.content));

  StatusMessage s{"lab", "stopped", "stop", "", ""};
  EXPECT_TRUE(nlohmann::json::parse(s.to_payload())["error"].is_null());
  EXPECT_FALSE(nlohmann::json::parse(s.to_payload()).contains("correlation_id"));
  s.error = "boom";
  s.correlation_id = "k";
  const auto sb = StatusMessage::from_payload(s.to_payload());
  EXPECT_EQ(sb.error, "boom");
  EXPECT_EQ(sb.correlation_id, "k");
}

TEST(Messages, Base64)
{
  EXPECT_EQ(base64_encode(""), "");
  EXPECT_EQ(base64_encode("f"), "Zg==");
  EXPECT_EQ(base64_encode("foob"), "Zm9vYg==");
  EXPECT_EQ(base64_decode("Zm9vYmFy"), "foobar");
  EXPECT_EQ(base64_decode("Zm8="), "fo");
  EXPECT_THROW(base64_decode("abc"), ValidationError);
  EXPECT_NE(make_correlation_id(), make_correlation_id());
}

TEST(Store, PersistsAndReloads)
{
  const auto dir = testing_support::scratch_dir("store");
  const auto path = dir / "sub" / "configs.json";
  {
    ConfigStore s(path);
    EXPECT_TRUE(s.all().empty());
    s.put(parse(R"({"name":"a","band":"2.4","bandwidth":20,"channel":1})"));
    s.put(parse(R"({"name":"b","band":"5","bandwidth":80,"channel":36})"));
    auto a = *s.get("a");
    a.channel = 11;
    s.put(a);
    EXPECT_TRUE(s.erase("b"));
    EXPECT_FALSE(s.erase("b"));
  }
  ConfigStore again(path);
  ASSERT_EQ(again.all().size(), 1u);
  EXPECT_EQ(again.get("a")->channel, 11);
  const auto j = nlohmann::json::parse(detail::read_file(path.string()));
  EXPECT_EQ(j["schema_version"], 1);
  for (const auto& e : std::filesystem::directory_iterator(path.parent_path()))
    EXPECT_EQ(e.path().filename(), "configs.json") << "temp file left behind";
}

TEST(Store, CorruptFileRejected)
{
  const auto dir = testing_support::scratch_dir("store-bad");
  std::ofstream(dir / "c.json") << "{\"schema_version\": 2, \"configs\": []}";
  EXPECT_THROW(ConfigStore(dir / "c.json"), ConfigError);
  std::ofstream(dir / "d.json") << "{broken";
  EXPECT_THROW(ConfigStore(dir / "d.json"), ConfigError);
}

TEST(Store, InterruptedSaveKeepsOldDocument)
{
  // A save that cannot rename leaves the previous file intact.
  const auto dir = testing_support::scratch_dir("store-atomic");
  ConfigStore s(dir / "c.json");
  s.put(basic("keep"));
  const auto before = detail::read_file((dir / "c.json").string());
  std::filesystem::create_directories(dir / "c.json.blocker");
  EXPECT_THROW(ConfigStore::save(dir / "c.json.blocker", {basic("other")}), RuntimeFailure);
  EXPECT_EQ(detail::read_file((dir / "c.json").string()), before);
}

TEST(HttpStatus, Mapping)
{
  EXPECT_EQ(http_status_for(ConfigError("x")), 400);
  EXPECT_EQ(http_status_for(NotFound("x")), 404);
  EXPECT_EQ(http_status_for(Conflict("x")), 409);
  EXPECT_EQ(http_status_for(ServiceUnavailable("x")), 503);
  EXPECT_EQ(http_status_for(DownloadTimeout("x")), 504);
  EXPECT_EQ(http_status_for(CollectorError("x")), 502);
  EXPECT_EQ(http_status_for(std::runtime_error("x")), 500);
}

TEST(ServiceOffline, CrudWithoutBroker)
{
  ServiceOptions o;
  o.store_path = testing_support::scratch_dir("svc-off") / "c.json";
  o.broker_port = dead_port();
  o.broker_timeout = std::chrono::milliseconds(200);
  ControlService svc(o);
  EXPECT_FALSE(svc.broker_connected());
  auto c = basic("a");
  c.status = ConfigStatus::running;  // ignored: status is server-owned
  EXPECT_EQ(svc.create(c).status, ConfigStatus::stopped);
  EXPECT_THROW(svc.create(basic("a")), Conflict);
  EXPECT_THROW(svc.get("b"), NotFound);
  EXPECT_THROW(svc.update("b", basic("b")), NotFound);
  EXPECT_THROW(svc.update("a", basic("b")), ConfigError);
  auto upd = basic("a");
  upd.channel = 1;
  EXPECT_EQ(svc.update("a", upd).channel, 1);
  EXPECT_THROW(svc.start("a"), ServiceUnavailable);
  EXPECT_EQ(svc.get("a").status, ConfigStatus::stopped);
  EXPECT_THROW(svc.stop("a"), Conflict);
  EXPECT_THROW(svc.download("a"), ServiceUnavailable);
  svc.remove("a");
  EXPECT_THROW(svc.remove("a"), NotFound);
}

class ControlPlane : public ::testing::Test
{
protected:
  std::filesystem::path dir = testing_support::scratch_dir("plane");
  mqtt::Broker broker;
  std::unique_ptr<collector::Collector> col;
  std::jthread col_thread;
  std::unique_ptr<ControlService> svc;
  std::unique_ptr<HttpApi> api;
  int http_port = 0;

  void SetUp() override
  {
    Scenario sc;
    sc.duration = 3;
    save_capture((dir / "replay.csv").string(), generate(sc).capture);
    start_collector();
    ServiceOptions o;
    o.store_path = dir / "configs.json";
    o.broker_port = broker.port();
    o.download_timeout = std::chrono::seconds(5);
    svc = std::make_unique<ControlService>(o);
    api = std::make_unique<HttpApi>(*svc);
    http_port = api->start("127.0.0.1", 0);
  }

  void TearDown() override
  {
    api.reset();
    svc.reset();
    stop_collector();
  }

  void start_collector()
  {
    col = std::make_unique<collector::Collector>(collector::replay_source((dir / "replay.csv").string()),
                                                 collector::CollectorOptions{dir / "cap", 50.0});
    col_thread = std::jthread([this](std::stop_token st) {
      col->serve("127.0.0.1", broker.port(), st, "collector", std::chrono::milliseconds(50));
    });
    ASSERT_TRUE(eventually([&] { return broker_has_collector(); }));
  }

  bool broker_has_collector()
  {
    // A probe publish on "stop" answered by a status means the collector is subscribed.
    mqtt::Client probe("127.0.0.1", broker.port(), "probe");
    std::atomic<bool> seen{false};
    probe.on_message([&](const mqtt::Message&) { seen = true; });
    probe.connect();
    probe.subscribe({topic::status});
    probe.publish(topic::stop, R"({"name":"__probe__"})");
    return eventually([&] { return seen.load(); }, std::chrono::milliseconds(300));
  }

  void stop_collector()
  {
    if (col_thread.joinable()) {
      col_thread.request_stop();
      col_thread.join();
    }
    col.reset();
  }

  httplib::Client http() { return httplib::Client("127.0.0.1", http_port); }
};

TEST_F(ControlPlane, StartStopDownloadOverBroker)
{
  svc->create(basic("lab"));
  EXPECT_EQ(svc->start("lab").status, ConfigStatus::running);
  ASSERT_TRUE(eventually([&] { return col->state("lab") == collector::SessionState::capturing; }));
  EXPECT_THROW(svc->start("lab"), Conflict);
  EXPECT_THROW(svc->remove("lab"), Conflict);
  EXPECT_THROW(svc->update("lab", basic("lab")), Conflict);
  ASSERT_TRUE(eventually([&] { return col->frames_written("lab") > 10; }));
  EXPECT_EQ(svc->stop("lab").status, ConfigStatus::stopped);
  ASSERT_TRUE(eventually([&] { return col->state("lab") == collector::SessionState::stopped; }));
  const auto csv = svc->download("lab");
  EXPECT_EQ(csv, detail::read_file(col->capture_path("lab").string()));
  EXPECT_EQ(collector::count_data_rows(csv), col->frames_written("lab"));
}

TEST_F(ControlPlane, ConcurrentDownloadsAreDemultiplexed)
{
  for (const char* n : {"a", "b", "c"}) {
    svc->create(basic(n));
    svc->start(n);
  }
  for (const char* n : {"a", "b", "c"})
    ASSERT_TRUE(eventually([&] { return col->frames_written(n) > 5; }));
  for (const char* n : {"a", "b", "c"})
    svc->stop(n);
  ASSERT_TRUE(eventually([&] { return col->state("c") == collector::SessionState::stopped; }));
  std::vector<std::future<std::string>> futures;
  std::vector<std::string> names;
  for (int i = 0; i < 12; ++i) {
    names.push_back(std::string(1, char('a' + i % 3)));
    futures.push_back(std::async(std::launch::async, [this, n = names.back()] { return svc->download(n); }));
  }
  for (std::size_t i = 0; i < futures.size(); ++i)
    EXPECT_EQ(futures[i].get(), detail::read_file(col->capture_path(names[i]).string())) << names[i];
}

TEST_F(ControlPlane, CollectorRejectionReconcilesStatus)
{
  auto wide = basic("wide");
  wide.bandwidth_mhz = 40;  // the replay file holds 20 MHz frames
  svc->create(wide);
  svc->start("wide");
  EXPECT_TRUE(eventually([&] { return svc->get("wide").status == ConfigStatus::stopped; }));
}

TEST_F(ControlPlane, DownloadErrorsFromCollector)
{
  svc->create(basic("never"));
  EXPECT_THROW(svc->download("never"), CollectorError);
}

TEST_F(ControlPlane, DownloadTimesOutWithoutCollector)
{
  svc->create(basic("lab"));
  stop_collector();
  ServiceOptions o;
  o.store_path = dir / "configs.json";
  o.broker_port = broker.port();
  o.download_timeout = std::chrono::milliseconds(300);
  o.client_id = "csi-control-2";
  api.reset();
  svc = std::make_unique<ControlService>(o);
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(svc->download("lab"), DownloadTimeout);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(3));
}

TEST_F(ControlPlane, BrokerLossMapsToUnavailable)
{
  svc->create(basic("lab"));
  broker.stop();
  EXPECT_TRUE(eventually([&] { return !svc->broker_connected(); }));
  EXPECT_THROW(svc->start("lab"), ServiceUnavailable);
  EXPECT_EQ(svc->get("lab").status, ConfigStatus::stopped);
  auto cli = http();
  auto r = cli.Post("/configs/lab/start", "", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 503);
  r = cli.Get("/healthz");
  EXPECT_EQ(nlohmann::json::parse(r->body)["broker"], "disconnected");
}

TEST_F(ControlPlane, HttpSurface)
{
  auto cli = http();
  auto r = cli.Post("/configs", R"({"name":"lab","band":"2.4","bandwidth":20,"channel":6})",
                    "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 201);
  EXPECT_EQ(r->get_header_value("Location"), "/configs/lab");
  EXPECT_EQ(nlohmann::json::parse(r->body)["status"], "stopped");

  EXPECT_EQ(cli.Post("/configs", R"({"name":"lab","band":"2.4","bandwidth":20,"channel":6})",
                     "application/json")->status, 409);
  EXPECT_EQ(cli.Post("/configs", R"({"name":"bad","band":"2.4","bandwidth":80,"channel":6})",
                     "application/json")->status, 400);
  EXPECT_EQ(cli.Post("/configs", "{oops", "application/json")->status, 400);
  EXPECT_EQ(cli.Get("/configs/none")->status, 404);
  EXPECT_EQ(cli.Get("/configs/none/output")->status, 404);

  r = cli.Put("/configs/lab", R"({"band":"2.4","bandwidth":40,"channel":3})", "application/json");
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(nlohmann::json::parse(r->body)["bandwidth"], 40);
  EXPECT_EQ(cli.Put("/configs/lab", R"({"name":"other","band":"2.4","bandwidth":20,"channel":3})",
                    "application/json")->status, 400);
  r = cli.Put("/configs/lab", R"({"band":"2.4","bandwidth":20,"channel":3})", "application/json");
  EXPECT_EQ(r->status, 200);

  r = cli.Get("/configs");
  EXPECT_EQ(nlohmann::json::parse(r->body).size(), 1u);

  EXPECT_EQ(cli.Post("/configs/lab/stop", "", "application/json")->status, 409);
  r = cli.Post("/configs/lab/start", "", "application/json");
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(nlohmann::json::parse(r->body)["status"], "running");
  EXPECT_EQ(cli.Delete("/configs/lab")->status, 409);
  ASSERT_TRUE(eventually([&] { return col->frames_written("lab") > 0; }));
  EXPECT_EQ(cli.Post("/configs/lab/stop", "", "application/json")->status, 200);
  ASSERT_TRUE(eventually([&] { return col->state("lab") == collector::SessionState::stopped; }));

  r = cli.Get("/configs/lab/output");
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "text/csv");
  EXPECT_NE(r->get_header_value("Content-Disposition").find("lab.csv"), std::string::npos);
  EXPECT_EQ(r->body, detail::read_file(col->capture_path("lab").string()));

  EXPECT_EQ(cli.Delete("/configs/lab")->status, 204);
  EXPECT_EQ(cli.Get("/configs/lab")->status, 404);

  r = cli.Get("/healthz");
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(nlohmann::json::parse(r->body)["broker"], "connected");
  r = cli.Get("/ui");
  EXPECT_EQ(r->status, 200);
  EXPECT_NE(r->body.find("<html"), std::string::npos);
}

TEST(HttpUi, MountsDirectory)
{
  const auto dir = testing_support::scratch_dir("ui");
  std::ofstream(dir / "index.html") << "<p>ui</p>";
  ServiceOptions o;
  o.store_path = dir / "c.json";
  o.broker_port = dead_port();
  o.broker_timeout = std::chrono::milliseconds(200);
  ControlService svc(o);
  HttpApi api(svc, dir);
  httplib::Client cli("127.0.0.1", api.start("127.0.0.1", 0));
  auto r = cli.Get("/ui/index.html");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->body, "<p>ui</p>");
}
