#include <gtest/gtest.h>

#include <mutex>

#include "csisniff/collector.hpp"
#include "net_support.hpp"
#include "support.hpp"

using namespace csisniff;
using namespace csisniff::collector;
using control::OutputEnvelope;
using control::StatusMessage;
using testing_support::eventually;
using testing_support::kMacA;
using testing_support::kMacB;

namespace {

CaptureDocument two_device_doc(std::size_t frames)
{
  CaptureDocument doc;
  doc.bandwidth_mhz = 20;
  for (std::size_t i = 0; i < frames; ++i)
    doc.frames.push_back(testing_support::amplitude_frame(100.0 + 0.025 * double(i),
                                                          static_cast<std::int16_t>(10 + i % 7), 64,
                                                          i % 2 ? kMacB : kMacA));
  return doc;
}

std::string start_payload(const std::string& name, const std::vector<std::string>& macs = {},
                          int bandwidth = 20)
{
  nlohmann::json j{{"name", name}, {"band", "2.4"}, {"bandwidth", bandwidth}, {"channel", 6},
                   {"device_filter", macs}};
  return j.dump();
}

struct Outbox
{
  std::mutex m;
  std::vector<std::pair<std::string, std::string>> sent;

  Collector::Publisher publisher()
  {
    return [this](const std::string& t, const std::string& p) {
      std::lock_guard lock(m);
      sent.emplace_back(t, p);
    };
  }

  std::vector<StatusMessage> statuses()
  {
    std::lock_guard lock(m);
    std::vector<StatusMessage> out;
    for (const auto& [t, p] : sent)
      if (t == control::topic::status)
        out.push_back(StatusMessage::from_payload(p));
    return out;
  }

  std::vector<OutputEnvelope> outputs()
  {
    std::lock_guard lock(m);
    std::vector<OutputEnvelope> out;
    for (const auto& [t, p] : sent)
      if (t == control::topic::output)
        out.push_back(OutputEnvelope::from_payload(p));
    return out;
  }
};

class CollectorTest : public ::testing::Test
{
protected:
  std::filesystem::path dir = testing_support::scratch_dir("collector");
  CaptureDocument doc = two_device_doc(40);
  Outbox box;
  Collector col{[this](const control::CaptureConfig&) { return doc; }, {dir, 0.0}, box.publisher()};

  void run_to_end(const std::string& name, std::size_t expect)
  {
    ASSERT_TRUE(eventually([&] { return col.frames_written(name) == expect; }));
    col.handle("stop", R"({"name":")" + name + R"("})");
  }
};

}  // namespace

TEST_F(CollectorTest, StartStopWritesSessionFile)
{
  col.handle("start", start_payload("lab"));
  EXPECT_EQ(col.state("lab"), SessionState::capturing);
  run_to_end("lab", 40);
  EXPECT_EQ(col.state("lab"), SessionState::stopped);

  const auto text = detail::read_file(col.capture_path("lab").string());
  EXPECT_EQ(text.rfind("# config=lab\nts,mac,re_-32", 0), 0u);
  EXPECT_NE(text.find("\n# session 1\n"), std::string::npos);
  EXPECT_EQ(count_data_rows(text), 40u);
  // Rows keep the source timestamps and parse back to the same frames.
  EXPECT_EQ(parse_capture_csv(text).frames, doc.frames);

  const auto st = box.statuses();
  ASSERT_EQ(st.size(), 2u);
  EXPECT_EQ(st[0].op, "start");
  EXPECT_EQ(st[0].state, "capturing");
  EXPECT_TRUE(st[0].error.empty());
  EXPECT_EQ(st[1].op, "stop");
  EXPECT_EQ(st[1].state, "stopped");
}

TEST_F(CollectorTest, DeviceFilterKeepsListedMacs)
{
  col.handle("start", start_payload("one", {kMacB.str()}));
  run_to_end("one", 20);
  for (const auto& f : parse_capture_csv(detail::read_file(col.capture_path("one").string())).frames)
    EXPECT_EQ(f.device, kMacB);
}

TEST_F(CollectorTest, RestartAppendsNewSession)
{
  col.handle("start", start_payload("lab"));
  run_to_end("lab", 40);
  col.handle("start", start_payload("lab"));
  run_to_end("lab", 40);
  const auto text = detail::read_file(col.capture_path("lab").string());
  EXPECT_NE(text.find("\n# session 2\n"), std::string::npos);
  EXPECT_EQ(count_data_rows(text), 80u);
  EXPECT_EQ(text.find("ts,mac,"), text.rfind("ts,mac,"));  // one header
}

TEST_F(CollectorTest, DuplicateStartReportsError)
{
  Collector slow([this](const control::CaptureConfig&) { return doc; }, {dir / "slow", 0.001},
                 box.publisher());
  slow.handle("start", start_payload("lab"));
  slow.handle("start", start_payload("lab"));
  const auto st = box.statuses();
  ASSERT_EQ(st.size(), 2u);
  EXPECT_FALSE(st[1].error.empty());
  EXPECT_EQ(st[1].state, "capturing");
  slow.shutdown();
  EXPECT_EQ(slow.state("lab"), SessionState::stopped);
}

TEST_F(CollectorTest, StopUnknownReportsError)
{
  col.handle("stop", R"({"name":"ghost"})");
  const auto st = box.statuses();
  ASSERT_EQ(st.size(), 1u);
  EXPECT_EQ(st[0].state, "idle");
  EXPECT_FALSE(st[0].error.empty());
}

TEST_F(CollectorTest, MalformedStartRejected)
{
  col.handle("start", "{not json");
  col.handle("start", R"({"name":"x","band":"2.4","bandwidth":80,"channel":6})");
  const auto st = box.statuses();
  ASSERT_EQ(st.size(), 2u);
  EXPECT_EQ(st[0].error.rfind("rejected", 0), 0u);
  EXPECT_EQ(st[1].name, "x");
  EXPECT_FALSE(std::filesystem::exists(col.capture_path("x")));
}

TEST_F(CollectorTest, DownloadReturnsFileBytes)
{
  col.handle("start", start_payload("lab"));
  run_to_end("lab", 40);
  col.handle("download", R"({"name":"lab","correlation_id":"c1"})");
  col.handle("download", R"({"name":"lab","correlation_id":"c2"})");
  const auto out = box.outputs();
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].correlation_id, "c1");
  EXPECT_EQ(out[0].row_count, 40u);
  EXPECT_EQ(out[0].content, detail::read_file(col.capture_path("lab").string()));
  EXPECT_EQ(out[0].content, out[1].content);
}

TEST_F(CollectorTest, DownloadWhileCapturingSeesFlushedRows)
{
  Collector paced([this](const control::CaptureConfig&) { return doc; }, {dir / "paced", 1.0},
                  box.publisher());
  paced.handle("start", start_payload("live"));
  ASSERT_TRUE(eventually([&] { return paced.frames_written("live") >= 3; }));
  paced.handle("download", R"({"name":"live","correlation_id":"c"})");
  const auto out = box.outputs();
  ASSERT_EQ(out.size(), 1u);
  EXPECT_GE(out[0].row_count, 3u);
  EXPECT_EQ(count_data_rows(out[0].content), out[0].row_count);
  paced.shutdown();
}

TEST_F(CollectorTest, DownloadUnknownCarriesCorrelation)
{
  col.handle("download", R"({"name":"ghost","correlation_id":"abc"})");
  EXPECT_TRUE(box.outputs().empty());
  const auto st = box.statuses();
  ASSERT_EQ(st.size(), 1u);
  EXPECT_EQ(st[0].correlation_id, "abc");
  EXPECT_EQ(st[0].op, "download");
  EXPECT_FALSE(st[0].error.empty());
}

TEST_F(CollectorTest, PathTraversalNamesRefused)
{
  col.handle("download", R"({"name":"../etc/passwd","correlation_id":"z"})");
  EXPECT_TRUE(box.outputs().empty());
}

TEST(ReplaySource, BandwidthMismatchFailsStart)
{
  const auto dir = testing_support::scratch_dir("replay");
  auto doc = two_device_doc(4);
  save_capture((dir / "in.csv").string(), doc);
  Outbox box;
  Collector col(replay_source((dir / "in.csv").string()), {dir / "cap", 0.0}, box.publisher());
  col.handle("start", start_payload("wide", {}, 40));
  const auto st = box.statuses();
  ASSERT_EQ(st.size(), 1u);
  EXPECT_NE(st[0].error.find("20 MHz"), std::string::npos);
  EXPECT_NE(st[0].state, "capturing");
}

TEST(ScenarioSource, FollowsConfigBandwidth)
{
  Scenario sc;
  sc.duration = 1;
  const auto src = scenario_source(sc);
  control::CaptureConfig cfg;
  cfg.bandwidth_mhz = 40;
  EXPECT_EQ(src(cfg).fft_size(), 128u);
}

TEST(CountRows, SkipsHeaderAndComments)
{
  EXPECT_EQ(count_data_rows("# config=a\nh\n# session 1\n1\n2\n# session 2\n3\n"), 3u);
  EXPECT_EQ(count_data_rows(""), 0u);
}
