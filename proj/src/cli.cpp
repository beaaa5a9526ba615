#include "e2vts/cli.hpp"

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "e2vts/io.hpp"
#include "e2vts/metrics.hpp"
#include "e2vts/ood.hpp"
#include "e2vts/pipeline.hpp"
#include "e2vts/service.hpp"

// After Eigen: <resolv.h> defines a `_res` macro.
#include <httplib.h>

namespace e2vts::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "quality.window_size", "quality.subsample_rate", "quality.lambda", "quality.analysis_max_side",
      "screen.theta", "screen.alpha", "screen.canny_low", "screen.canny_high", "screen.close_w", "screen.close_h",
      "screen.busy_threshold", "screen.margin_px",
      "ood.model", "ood.reg", "ood.epochs", "ood.grid",
      "stages.quality", "stages.screen", "stages.ood",
      "spotter.id", "spotter.cost_ms", "spotter.jitter_px", "spotter.ground_truth",
      "label.lowe_ratio", "label.inlier_px", "label.max_iters", "label.min_inliers", "label.min_inlier_ratio",
      "label.max_keypoints",
      "threads", "seed"};
  return keys;
}

autolabel::PropagationOptions propagation_options_from(const Config& c) {
  autolabel::PropagationOptions o;
  o.lowe_ratio = c.get_double("label.lowe_ratio", o.lowe_ratio);
  o.ransac.inlier_px = c.get_double("label.inlier_px", o.ransac.inlier_px);
  o.ransac.max_iters = c.get_int("label.max_iters", o.ransac.max_iters);
  o.min_inliers = c.get_int("label.min_inliers", o.min_inliers);
  o.min_inlier_ratio = c.get_double("label.min_inlier_ratio", o.min_inlier_ratio);
  o.detector.max_keypoints = c.get_int("label.max_keypoints", o.detector.max_keypoints);
  const int seed = c.get_int("seed", 0);
  if (seed < 0) throw InvalidArgument("seed must be >= 0");
  o.ransac.seed = static_cast<std::uint64_t>(seed);
  return o;
}

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw RuntimeFailure("write failed: " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << text;
}

struct Globals {
  std::string config_path;
  std::optional<int> seed;
  std::optional<int> threads;
};

Config load_config(const Globals& g) {
  Config c = g.config_path.empty() ? Config{} : Config::load(g.config_path);
  for (const auto& [key, value] : c.values())
    if (!known_config_keys().count(key)) throw InvalidArgument("unknown config key: " + key);
  if (g.seed) c.set("seed", std::to_string(*g.seed));
  if (g.threads) c.set("threads", std::to_string(*g.threads));
  return c;
}

std::vector<ood::FeatureVector> features_of(const fs::path& dir, const ood::FeatureExtractor& ex) {
  const io::DirectorySource src(dir);
  if (src.size() == 0) throw InvalidArgument("no frames in " + dir.string());
  std::vector<ood::FeatureVector> out;
  for (int p = 0; p < src.size(); ++p) out.push_back(ex.extract(src.load(p)));
  return out;
}

struct ProcessArgs {
  std::string frames, trace, metrics, timings, predictions;
};

int run_process(const Globals& g, const ProcessArgs& a) {
  const auto cfg = pipeline::pipeline_config_from(load_config(g));
  const auto source = io::open_source(a.frames);
  const auto r = pipeline::run_pipeline(*source, cfg);
  if (!a.trace.empty()) write_json(a.trace, pipeline::trace_to_json(r.trace));
  if (!a.metrics.empty()) write_json(a.metrics, pipeline::metrics_to_json(r.metrics, false));
  if (!a.timings.empty()) write_json(a.timings, pipeline::metrics_to_json(r.metrics, true));
  if (!a.predictions.empty()) write_text(a.predictions, dump_document(pipeline::results_to_document(r.results)));
  std::cout << source->size() << " frames, " << r.metrics.spotter_invocations << " spotter invocations\n";
  return kOk;
}

struct LabelArgs {
  std::string frames, seed_doc, out;
  std::optional<int> from, to;
};

int run_label(const Globals& g, const LabelArgs& a) {
  const auto opt = propagation_options_from(load_config(g));
  const auto source = io::open_source(a.frames);
  const AnnotationDocument seed_doc = read_document(a.seed_doc);

  const FrameAnnotations* seed_frame = nullptr;
  if (a.from) {
    seed_frame = seed_doc.find(*a.from);
  } else {
    for (const auto& f : seed_doc.frames)
      if (!f.annotations.empty()) {
        seed_frame = &f;
        break;
      }
  }
  if (!seed_frame || seed_frame->annotations.empty()) throw InvalidArgument("seed document has no annotations at the start frame");
  std::vector<Annotation> seeds;
  for (const auto& ann : seed_frame->annotations)
    if (!ann.stale) seeds.push_back(ann);

  const int begin = io::position_of(*source, seed_frame->index);
  if (begin < 0) throw InvalidArgument("seed frame " + std::to_string(seed_frame->index) + " is not in " + a.frames);
  int end = source->size();
  if (a.to) {
    const int p = io::position_of(*source, *a.to);
    if (p < begin) throw InvalidArgument("--to must name a frame at or after the seed frame");
    end = p + 1;
  }
  const io::SliceSource slice(*source, begin, end);
  const auto r = autolabel::propagate_annotations(slice, seeds, opt);
  write_text(a.out, dump_document(autolabel::to_document(r)));
  if (r.halted_at) std::cerr << "halted at frame " << *r.halted_at << ": " << r.halt_reason << "\n";
  std::cout << r.frames.size() << " frames labeled\n";
  return kOk;
}

struct TrainArgs {
  std::string pos, neg, out;
};

int run_train(const Globals& g, const TrainArgs& a) {
  const Config c = load_config(g);
  const auto pc = pipeline::pipeline_config_from(c);
  const ood::EdgeDensityGrid ex(pc.screen, c.get_int("ood.grid", 8));
  const auto pos = features_of(a.pos, ex);
  const auto neg = features_of(a.neg, ex);
  std::vector<ood::FeatureVector> samples(pos);
  samples.insert(samples.end(), neg.begin(), neg.end());
  std::vector<int> labels(pos.size(), 1);
  labels.insert(labels.end(), neg.size(), -1);

  ood::TrainOptions t;
  t.reg = c.get_double("ood.reg", t.reg);
  t.epochs = c.get_int("ood.epochs", t.epochs);
  t.seed = pc.seed;
  ood::SvmModel model = ood::svm_train(samples, labels, t);
  model.extractor_id = ex.id();
  ood::save_model(a.out, model);

  int correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    correct += static_cast<int>(ood::svm_predict(model, samples[i])) == labels[i];
  std::cout << "trained on " << pos.size() << " positive and " << neg.size() << " negative frames, training accuracy "
            << std::fixed << std::setprecision(3) << static_cast<double>(correct) / static_cast<double>(samples.size())
            << "\n";
  return kOk;
}

struct EvalArgs {
  std::string pred, gt, report;
};

int run_eval(const EvalArgs& a) {
  const auto report = metrics::evaluate_documents(read_document(a.pred), read_document(a.gt));
  const json j = metrics::to_json(report);
  if (a.report.empty())
    std::cout << j.dump(2) << "\n";
  else
    write_json(a.report, j);
  std::cout << std::fixed << std::setprecision(4) << "mean IoU " << report.mean_iou << ", mean edit distance "
            << report.mean_edit_distance << " over " << report.per_gt.size() << " ground-truth regions\n";
  return kOk;
}

struct BenchArgs {
  std::string frames, out;
  int repeat = 1;
};

int run_bench(const Globals& g, const BenchArgs& a) {
  const auto base = pipeline::pipeline_config_from(load_config(g));
  const auto source = io::open_source(a.frames);
  std::optional<ood::SvmModel> model;
  if (base.ood_model_path) model = ood::load_model(*base.ood_model_path);

  struct Row {
    pipeline::StageToggles stages;
    int invocations = 0;
    double cpu_ms = 0.0;
    double wall_ms = 0.0;
  };
  std::vector<Row> rows;
  for (int mask = 0; mask < 8; ++mask) {
    pipeline::PipelineConfig cfg = base;
    cfg.stages = {(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0};
    if (cfg.stages.ood && !model) continue;
    Row row{cfg.stages};
    for (int rep = 0; rep < std::max(1, a.repeat); ++rep) {
      auto spotter = pipeline::make_spotter(cfg.spotter, cfg.seed);
      const auto r = pipeline::run_pipeline(*source, cfg, *spotter, model ? &*model : nullptr);
      const auto t = r.metrics.totals();
      const double cpu = static_cast<double>(t.cpu_ns) / 1e6;
      const double wall = static_cast<double>(t.wall_ns) / 1e6;
      row.invocations = r.metrics.spotter_invocations;
      row.cpu_ms = rep == 0 ? cpu : std::min(row.cpu_ms, cpu);
      row.wall_ms = rep == 0 ? wall : std::min(row.wall_ms, wall);
    }
    rows.push_back(row);
  }

  const double ref_cpu = std::max(rows.front().cpu_ms, 1e-9);
  const double ref_wall = std::max(rows.front().wall_ms, 1e-9);
  json out = {{"version", 1}, {"frames", source->size()}, {"baseline", "no stages"}, {"rows", json::array()}};
  std::cout << "quality  screen  ood  invocations  rel_cpu  rel_wall\n";
  for (const auto& r : rows) {
    const auto on = [](bool b) { return b ? "on " : "off"; };
    std::cout << std::left << std::setw(9) << on(r.stages.quality) << std::setw(8) << on(r.stages.screen)
              << std::setw(5) << on(r.stages.ood) << std::right << std::setw(11) << r.invocations << std::fixed
              << std::setprecision(3) << std::setw(9) << r.cpu_ms / ref_cpu << std::setw(10) << r.wall_ms / ref_wall
              << "\n";
    out["rows"].push_back({{"stages", {{"quality", r.stages.quality}, {"screen", r.stages.screen}, {"ood", r.stages.ood}}},
                           {"spotter_invocations", r.invocations},
                           {"relative_cpu", r.cpu_ms / ref_cpu},
                           {"relative_wall", r.wall_ms / ref_wall}});
  }
  if (!model) std::cout << "(stage III rows skipped: no ood.model configured)\n";
  if (!a.out.empty()) write_json(a.out, out);
  return kOk;
}

httplib::Server* g_server = nullptr;

extern "C" void stop_server(int) {
  if (g_server) g_server->stop();
}

struct ServeArgs {
  std::string data, host = "127.0.0.1";
  int port = 8080;
};

int run_serve(const Globals& g, const ServeArgs& a) {
  const auto opt = propagation_options_from(load_config(g));
  service::AnnotationService svc(a.data, opt);
  httplib::Server srv;
  svc.bind(srv);
  g_server = &srv;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::cout << "listening on http://" << a.host << ":" << a.port << "\n" << std::flush;
  const bool ok = srv.listen(a.host, a.port);
  g_server = nullptr;
  if (!ok && !srv.is_running()) {
    std::cerr << "error: cannot listen on " << a.host << ":" << a.port << "\n";
    return kRuntimeFailure;
  }
  return kOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Edge-oriented video text spotting toolkit", "e2vts"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Flat key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "RNG seed (overrides the config key)")->check(CLI::NonNegativeNumber);
  app.add_option("--threads", g.threads, "Worker threads for the pipeline")->check(CLI::PositiveNumber);

  ProcessArgs pa;
  auto* process = app.add_subcommand("process", "Run the filtering cascade and spotter over a frame sequence");
  process->add_option("--frames", pa.frames, "Directory of numbered images or a .y4m file")->required()->check(CLI::ExistingPath);
  process->add_option("--trace", pa.trace, "Per-frame decision trace (JSON)");
  process->add_option("--metrics", pa.metrics, "Per-stage counters (JSON, no timings)");
  process->add_option("--timings", pa.timings, "Per-stage counters with wall and CPU time (JSON)");
  process->add_option("--predictions", pa.predictions, "Spotter output as an annotation document");

  LabelArgs la;
  auto* label = app.add_subcommand("label", "Propagate seed quads through a frame sequence");
  label->add_option("--frames", la.frames, "Directory of numbered images or a .y4m file")->required()->check(CLI::ExistingPath);
  label->add_option("--seed", la.seed_doc, "Annotation document holding the seed quads")->required()->check(CLI::ExistingFile);
  label->add_option("--out", la.out, "Output annotation document")->required();
  label->add_option("--from", la.from, "Seed frame index (default: first annotated frame)");
  label->add_option("--to", la.to, "Last frame index (default: end of sequence)");

  TrainArgs ta;
  auto* train = app.add_subcommand("train-ood", "Train the linear out-of-distribution filter");
  train->add_option("--pos", ta.pos, "Frames to accept")->required()->check(CLI::ExistingDirectory);
  train->add_option("--neg", ta.neg, "Frames to reject")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", ta.out, "Model file")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--pred", ea.pred, "Predicted annotation document")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", ea.gt, "Ground-truth annotation document")->required()->check(CLI::ExistingFile);
  eval->add_option("--report", ea.report, "Report file (default: stdout)");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Compare stage subsets by relative latency");
  bench->add_option("--frames", ba.frames, "Directory of numbered images or a .y4m file")->required()->check(CLI::ExistingPath);
  bench->add_option("--out", ba.out, "Comparison table (JSON)");
  bench->add_option("--repeat", ba.repeat, "Runs per subset; the fastest is kept")->check(CLI::PositiveNumber);

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "Serve the annotation HTTP API");
  serve->add_option("--data", sa.data, "Session storage directory")->required();
  serve->add_option("--port", sa.port, "TCP port")->check(CLI::Range(0, 65535));
  serve->add_option("--host", sa.host, "Bind address");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    const auto parsed = app.get_subcommands();
    std::cerr << (parsed.empty() ? app.help() : parsed.back()->help());
    return kInvalidInput;
  }

  try {
    if (*process) return run_process(g, pa);
    if (*label) return run_label(g, la);
    if (*train) return run_train(g, ta);
    if (*eval) return run_eval(ea);
    if (*bench) return run_bench(g, ba);
    if (*serve) return run_serve(g, sa);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kInvalidInput;
}

int dispatch(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("e2vts");
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace e2vts::cli
