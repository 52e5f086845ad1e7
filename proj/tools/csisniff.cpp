// csisniff: command-line front end for the analysis library and the two
// control-plane services.
//
// Exit codes: 0 success, 1 invalid input or arguments, 2 runtime failure.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "csisniff/collector.hpp"
#include "csisniff/control.hpp"
#include "csisniff/params.hpp"
#include "csisniff/storage.hpp"
#include "csisniff/synth.hpp"

namespace fs = std::filesystem;
using namespace csisniff;

namespace {

struct Endpoint
{
  std::string host;
  std::uint16_t port;
};

Endpoint parse_endpoint(const std::string& text, std::uint16_t default_port)
{
  const auto colon = text.rfind(':');
  if (colon == std::string::npos)
    return {text, default_port};
  auto port = detail::parse_number<std::uint16_t>(text.substr(colon + 1));
  if (!port)
    throw ConfigError("bad port in '" + text + "'");
  return {text.substr(0, colon), *port};
}

void write_text(const fs::path& path, const std::string& text)
{
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw RuntimeFailure("cannot write " + path.string());
  out << text;
  if (!out)
    throw RuntimeFailure("write failed for " + path.string());
}

void wait_for_signal()
{
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
}

// Shared inputs of the analysis subcommands.
struct AnalysisArgs
{
  std::string capture;
  std::string truth;
  std::string params_file;
  std::optional<double> lambda, w1, w2, overlap_frac;
  std::string history;
  bool exclude_invalid = false;
  std::vector<std::string> devices;
  unsigned threads = 0;

  void attach(CLI::App* cmd)
  {
    cmd->add_option("--capture", capture,
                    "capture CSV, or a directory holding capture.csv (and truth.csv)")
        ->required();
    cmd->add_option("--truth", truth, "ground-truth CSV (start,end); default <capture dir>/truth.csv");
    cmd->add_option("--params", params_file, "JSON parameter file; flags below override it");
    cmd->add_option("--lambda", lambda, "outlier threshold in standard deviations (default 3)");
    cmd->add_option("--w1", w1, "outlier statistics window, seconds (default 5)");
    cmd->add_option("--w2", w2, "aggregation window, seconds (default 3)");
    cmd->add_option("--overlap-frac", overlap_frac,
                    "window labelled active when truth covers this fraction of it (default 0.5)");
    cmd->add_option("--history", history,
                    "values feeding the outlier window: raw or filtered (default raw)");
    cmd->add_flag("--exclude-invalid", exclude_invalid,
                  "drop windows with fewer than 2 frames from evaluation (default: included, value 0)");
    cmd->add_option("--device", devices, "only frames from this MAC (repeatable; default all)");
    cmd->add_option("--threads", threads, "worker threads for sweeps (default: all cores)");
  }

  fs::path capture_file() const
  {
    return fs::is_directory(capture) ? fs::path(capture) / "capture.csv" : fs::path(capture);
  }

  fs::path truth_file() const
  {
    if (!truth.empty())
      return truth;
    const fs::path base = fs::is_directory(capture) ? fs::path(capture) : fs::path(capture).parent_path();
    return base / "truth.csv";
  }

  CaptureDocument load_doc() const { return load_capture(capture_file().string()); }

  GroundTruth load_truth() const { return parse_truth_csv(detail::read_file(truth_file().string())); }

  /// Parameters for a document of the given bandwidth.
  AnalysisConfig config(int bandwidth_mhz) const
  {
    AnalysisConfig c;
    if (!params_file.empty()) {
      c = load_analysis_config(params_file);
      if (c.bandwidth_mhz != bandwidth_mhz && !c.explicit_subcarriers)
        c.params.subcarriers = default_subcarrier_set(bandwidth_mhz);
      else if (c.bandwidth_mhz != bandwidth_mhz)
        throw ConfigError("parameter file targets " + std::to_string(c.bandwidth_mhz) +
                          " MHz but the capture is " + std::to_string(bandwidth_mhz) + " MHz");
    } else {
      c.params.subcarriers = default_subcarrier_set(bandwidth_mhz);
    }
    c.bandwidth_mhz = bandwidth_mhz;
    if (lambda)
      c.params.lambda = *lambda;
    if (w1)
      c.params.w1 = *w1;
    if (w2)
      c.params.w2 = *w2;
    if (overlap_frac)
      c.params.overlap_frac = *overlap_frac;
    if (!history.empty())
      c.params.history = filter_history_from_string(history);
    if (exclude_invalid)
      c.eval.exclude_invalid = true;
    c.params.validate();
    c.eval = c.evaluation();
    return c;
  }

  DeviceFilter device_filter() const
  {
    DeviceFilter f;
    for (const auto& d : devices)
      f.push_back(DeviceId::parse(d));
    return f;
  }

  SweepConfig sweep_config(const CaptureDocument& doc) const
  {
    const auto c = config(doc.bandwidth_mhz);
    SweepConfig s;
    s.params = c.params;
    s.eval = c.eval;
    s.devices = device_filter();
    s.threads = threads;
    return s;
  }
};

RangeMode parse_range_mode(const std::string& s)
{
  if (s == "global")
    return RangeMode::global;
  if (s == "joint")
    return RangeMode::joint;
  if (s == "per-subcarrier")
    return RangeMode::per_subcarrier;
  throw ConfigError("range mode must be global, joint or per-subcarrier");
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"CSI sniffer: capture control plane and CSI presence-detection analysis"};
  app.require_subcommand(1);

  // synth
  std::string scenario_file, synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "generate a seeded synthetic capture and its ground truth");
  synth_cmd->add_option("--scenario", scenario_file, "scenario JSON")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("--out", synth_out, "output directory (capture.csv, truth.csv)")->required();

  // analyze
  AnalysisArgs analyze_args;
  std::string features_out;
  auto* analyze_cmd = app.add_subcommand("analyze", "run the pipeline and report detection metrics");
  analyze_args.attach(analyze_cmd);
  analyze_cmd->add_option("--features-out", features_out, "also write window_start,value,valid CSV");

  // roc
  AnalysisArgs roc_args;
  std::string roc_out;
  std::size_t roc_thresholds = kDefaultThresholds;
  auto* roc_cmd = app.add_subcommand("roc", "export the threshold sweep as tau,tpr,fpr");
  roc_args.attach(roc_cmd);
  roc_cmd->add_option("--out", roc_out, "ROC CSV path")->required();
  roc_cmd->add_option("--thresholds", roc_thresholds, "number of thresholds (default 1000)");

  // sweep-rate
  AnalysisArgs rate_args;
  std::string rate_out;
  std::vector<int> factors = default_rate_grid();
  auto* rate_cmd = app.add_subcommand("sweep-rate", "AUC versus frame decimation factor");
  rate_args.attach(rate_cmd);
  rate_cmd->add_option("--out", rate_out, "also write the report as CSV");
  rate_cmd->add_option("--factors", factors, "decimation factors (default 1..25 and 50)")->delimiter(',');

  // sweep-quant
  AnalysisArgs quant_args;
  std::string quant_out, range_mode = "global", container_dir;
  std::vector<int> stages{1, 2, 3, 4};
  std::vector<int> bits = default_bits_grid();
  auto* quant_cmd = app.add_subcommand("sweep-quant", "AUC and storage versus quantization stage and bits");
  quant_args.attach(quant_cmd);
  quant_cmd->add_option("--out", quant_out, "also write the report as CSV");
  quant_cmd->add_option("--stages", stages, "pipeline stages 1..4 (default all)")->delimiter(',');
  quant_cmd->add_option("--bits", bits, "bit depths (default 2..16)")->delimiter(',');
  quant_cmd->add_option("--range-mode", range_mode,
                        "normalization range: global, joint or per-subcarrier (default global)");
  quant_cmd->add_option("--container-dir", container_dir,
                        "write each cell's container as stage<S>-b<B>.csiq");

  // serve
  std::string serve_broker = "127.0.0.1:1883", store_path = "configs.json", listen = "127.0.0.1:8080";
  std::string ui_dir;
  double download_timeout = 30.0;
  auto* serve_cmd = app.add_subcommand("serve", "run the control service (HTTP API + MQTT publisher)");
  serve_cmd->add_option("--broker", serve_broker, "MQTT broker host:port")->envname("CSISNIFF_BROKER");
  serve_cmd->add_option("--store", store_path, "configuration store JSON")->envname("CSISNIFF_STORE");
  serve_cmd->add_option("--listen", listen, "HTTP listen host:port")->envname("CSISNIFF_LISTEN");
  serve_cmd->add_option("--download-timeout", download_timeout, "seconds to wait for the collector")
      ->envname("CSISNIFF_DOWNLOAD_TIMEOUT");
  serve_cmd->add_option("--ui-dir", ui_dir, "static web UI assets served under /ui");

  // collector
  std::string col_broker = "127.0.0.1:1883", replay, col_scenario, capture_dir = "captures";
  double acceleration = 1.0;
  auto* col_cmd = app.add_subcommand("collector", "run the simulated CSI collector");
  col_cmd->add_option("--broker", col_broker, "MQTT broker host:port")->envname("CSISNIFF_BROKER");
  auto* replay_opt = col_cmd->add_option("--replay", replay, "capture CSV to replay")->check(CLI::ExistingFile);
  auto* scen_opt = col_cmd->add_option("--scenario", col_scenario, "scenario JSON to synthesize")
                       ->check(CLI::ExistingFile);
  replay_opt->excludes(scen_opt);
  col_cmd->add_option("--acceleration", acceleration, "replay speed-up; <= 0 writes as fast as possible");
  col_cmd->add_option("--capture-dir", capture_dir, "directory for per-configuration CSV files");

  // broker
  std::string broker_listen = "127.0.0.1:1883";
  auto* broker_cmd = app.add_subcommand("broker", "run a minimal MQTT 3.1.1 broker");
  broker_cmd->add_option("--listen", broker_listen, "listen host:port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*synth_cmd) {
      const auto sc = load_scenario(scenario_file);
      const auto r = generate(sc);
      fs::create_directories(synth_out);
      write_text(fs::path(synth_out) / "capture.csv", write_capture_csv(r.capture));
      write_text(fs::path(synth_out) / "truth.csv", write_truth_csv(r.truth));
      std::printf("frames: %zu\nintervals: %zu\nout: %s\n", r.capture.frames.size(),
                  r.truth.intervals.size(), synth_out.c_str());
      return 0;
    }

    if (*analyze_cmd) {
      const auto doc = analyze_args.load_doc();
      const auto truth = analyze_args.load_truth();
      const auto cfg = analyze_args.config(doc.bandwidth_mhz);
      const auto fs_ = run_pipeline(doc, cfg.params, analyze_args.device_filter());
      if (!features_out.empty())
        write_text(features_out, write_feature_csv(fs_));
      const auto ev = evaluate(fs_, truth, cfg.eval);
      std::printf("frames: %zu\nlambda: %g\nw1: %g\nw2: %g\nhistory: %s\n", doc.frames.size(),
                  cfg.params.lambda, cfg.params.w1, cfg.params.w2, to_string(cfg.params.history));
      std::fputs(format_metrics(ev).c_str(), stdout);
      return 0;
    }

    if (*roc_cmd) {
      const auto doc = roc_args.load_doc();
      const auto truth = roc_args.load_truth();
      auto cfg = roc_args.config(doc.bandwidth_mhz);
      cfg.eval.n_thresholds = roc_thresholds;
      const auto ev = evaluate(run_pipeline(doc, cfg.params, roc_args.device_filter()), truth, cfg.eval);
      write_text(roc_out, write_roc_csv(ev.curve));
      std::fputs(format_metrics(ev).c_str(), stdout);
      return 0;
    }

    if (*rate_cmd) {
      const auto doc = rate_args.load_doc();
      const auto report = run_rate_sweep(doc, rate_args.load_truth(), rate_args.sweep_config(doc), factors);
      if (!rate_out.empty())
        write_text(rate_out, write_sweep_csv(report));
      std::fputs(format_sweep_table(report).c_str(), stdout);
      return 0;
    }

    if (*quant_cmd) {
      const auto doc = quant_args.load_doc();
      auto cfg = quant_args.sweep_config(doc);
      cfg.range_mode = parse_range_mode(range_mode);
      const auto truth = quant_args.load_truth();
      const auto report = run_quant_sweep(doc, truth, cfg, stages, bits);
      if (!container_dir.empty()) {
        const QuantSweepContext ctx(doc, truth, cfg);
        fs::create_directories(container_dir);
        for (const auto& row : report.rows) {
          const auto cell = ctx.run_cell(stage_from_int(row.stage), row.param);
          const auto path = fs::path(container_dir) /
                            ("stage" + std::to_string(row.stage) + "-b" + std::to_string(row.param) + ".csiq");
          write_text(path, std::string(cell.first.begin(), cell.first.end()));
        }
      }
      if (!quant_out.empty())
        write_text(quant_out, write_sweep_csv(report));
      std::fputs(format_sweep_table(report).c_str(), stdout);
      return 0;
    }

    // Long-running services: SIGINT/SIGTERM are taken synchronously.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    if (*serve_cmd) {
      const auto b = parse_endpoint(serve_broker, 1883);
      const auto l = parse_endpoint(listen, 8080);
      control::ServiceOptions o;
      o.store_path = store_path;
      o.broker_host = b.host;
      o.broker_port = b.port;
      o.download_timeout = std::chrono::milliseconds(static_cast<long long>(download_timeout * 1000));
      control::ControlService svc(o);
      control::HttpApi api(svc, ui_dir.empty() ? std::nullopt : std::optional<fs::path>(ui_dir));
      const int port = api.start(l.host, l.port);
      std::fprintf(stderr, "control service on http://%s:%d (broker %s:%u)\n", l.host.c_str(), port,
                   b.host.c_str(), b.port);
      wait_for_signal();
      api.stop();
      return 0;
    }

    if (*col_cmd) {
      if (replay.empty() && col_scenario.empty())
        throw ConfigError("collector needs --replay or --scenario");
      const auto b = parse_endpoint(col_broker, 1883);
      auto source = replay.empty() ? collector::scenario_source(load_scenario(col_scenario))
                                   : collector::replay_source(replay);
      collector::Collector col(std::move(source), {capture_dir, acceleration});
      std::jthread worker([&](std::stop_token st) { col.serve(b.host, b.port, st); });
      std::fprintf(stderr, "collector connected to %s:%u, writing to %s\n", b.host.c_str(), b.port,
                   capture_dir.c_str());
      wait_for_signal();
      worker.request_stop();
      return 0;
    }

    if (*broker_cmd) {
      const auto l = parse_endpoint(broker_listen, 1883);
      mqtt::Broker broker(l.host, l.port);
      std::fprintf(stderr, "MQTT broker on %s:%u\n", l.host.c_str(), broker.port());
      wait_for_signal();
      return 0;
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
