#include "e2vts/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace e2vts::pipeline {

void PipelineConfig::validate() const {
  quality.validate();
  screen.validate();
  if (threads < 1) throw InvalidArgument("threads must be >= 1");
  if (spotter.cost_ms < 0.0) throw InvalidArgument("spotter.cost_ms must be >= 0");
  if (spotter.jitter_px < 0.0) throw InvalidArgument("spotter.jitter_px must be >= 0");
}

PipelineConfig pipeline_config_from(const Config& c) {
  PipelineConfig p;
  auto& q = p.quality;
  q.window_size = c.get_int("quality.window_size", q.window_size);
  q.subsample_rate = c.get_int("quality.subsample_rate", q.subsample_rate);
  q.lambda = c.get_double("quality.lambda", q.lambda);
  q.analysis_max_side = c.get_int("quality.analysis_max_side", q.analysis_max_side);

  auto& s = p.screen;
  s.theta = c.get_int("screen.theta", s.theta);
  s.alpha = c.get_double("screen.alpha", s.alpha);
  s.canny_low = c.get_double("screen.canny_low", s.canny_low);
  s.canny_high = c.get_double("screen.canny_high", s.canny_high);
  s.close_w = c.get_int("screen.close_w", s.close_w);
  s.close_h = c.get_int("screen.close_h", s.close_h);
  s.busy_threshold = c.get_int("screen.busy_threshold", s.busy_threshold);
  s.margin_px = c.get_int("screen.margin_px", s.margin_px);

  if (auto m = c.get("ood.model"); m && !m->empty()) p.ood_model_path = *m;
  p.stages.quality = c.get_bool("stages.quality", true);
  p.stages.screen = c.get_bool("stages.screen", true);
  p.stages.ood = c.get_bool("stages.ood", p.ood_model_path.has_value());

  p.spotter.id = c.get_string("spotter.id", p.spotter.id);
  p.spotter.cost_ms = c.get_double("spotter.cost_ms", 0.0);
  p.spotter.jitter_px = c.get_double("spotter.jitter_px", 0.0);
  if (auto g = c.get("spotter.ground_truth"); g && !g->empty()) p.spotter.ground_truth = *g;

  p.threads = c.get_int("threads", 1);
  const int seed = c.get_int("seed", 0);
  if (seed < 0) throw InvalidArgument("seed must be >= 0");
  p.seed = static_cast<std::uint64_t>(seed);
  p.validate();
  return p;
}

void burn_cpu(double ms) {
  if (ms <= 0.0) return;
  const auto now = [] {
    timespec ts{};
    clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    return static_cast<std::int64_t>(ts.tv_sec) * 1'000'000'000 + ts.tv_nsec;
  };
  const std::int64_t end = now() + static_cast<std::int64_t>(ms * 1e6);
  volatile std::uint64_t sink = 0;
  while (now() < end)
    for (int i = 0; i < 1000; ++i) sink = sink + static_cast<std::uint64_t>(i);
}

SpotterResult MockSpotter::spot(const Frame& input, const PixelRect& region) {
  SpotterResult r;
  r.frame_index = input.index;
  if (const auto it = opt_.canned.find(input.index); it != opt_.canned.end()) {
    r = it->second;
    r.frame_index = input.index;
  } else if (opt_.ground_truth) {
    if (const FrameAnnotations* fa = opt_.ground_truth->find(input.index)) {
      std::mt19937_64 rng(opt_.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(input.index + 1)));
      std::uniform_real_distribution<double> noise(-opt_.jitter_px, opt_.jitter_px);
      for (const auto& a : fa->annotations) {
        if (a.stale) continue;
        double minx = a.quad.corners[0].x(), maxx = minx, miny = a.quad.corners[0].y(), maxy = miny;
        for (const auto& p : a.quad.corners) {
          minx = std::min(minx, p.x());
          maxx = std::max(maxx, p.x());
          miny = std::min(miny, p.y());
          maxy = std::max(maxy, p.y());
        }
        if (maxx <= region.x0 || minx >= region.x1 || maxy <= region.y0 || miny >= region.y1) continue;
        Quad q = a.quad;
        for (auto& p : q.corners) {
          if (opt_.jitter_px > 0.0) p += Point2(noise(rng), noise(rng));
          p.x() = std::clamp(p.x(), static_cast<double>(region.x0), static_cast<double>(region.x1));
          p.y() = std::clamp(p.y(), static_cast<double>(region.y0), static_cast<double>(region.y1));
        }
        r.quads.push_back(q);
        r.transcriptions.push_back(a.label.value_or(""));
      }
    }
  }
  burn_cpu(opt_.cost_ms);
  return r;
}

std::unique_ptr<Spotter> make_spotter(const SpotterConfig& cfg, std::uint64_t seed) {
  if (cfg.id != "mock") throw InvalidArgument("unknown spotter id: " + cfg.id);
  MockSpotterOptions opt;
  opt.jitter_px = cfg.jitter_px;
  opt.cost_ms = cfg.cost_ms;
  opt.seed = seed;
  if (cfg.ground_truth) opt.ground_truth = read_document(*cfg.ground_truth);
  return std::make_unique<MockSpotter>(std::move(opt));
}

std::int64_t process_cpu_ns() {
  timespec ts{};
  clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
  return static_cast<std::int64_t>(ts.tv_sec) * 1'000'000'000 + ts.tv_nsec;
}

StageEntry StageMetrics::totals() const {
  StageEntry t;
  t.name = "total";
  for (const auto& s : stages) {
    t.wall_ns += s.wall_ns;
    t.cpu_ns += s.cpu_ns;
    t.frames_in += s.frames_in;
    t.frames_out += s.frames_out;
    t.bytes_in += s.bytes_in;
  }
  return t;
}

const StageEntry* StageMetrics::find(const std::string& name) const {
  for (const auto& s : stages)
    if (s.name == name) return &s;
  return nullptr;
}

std::string_view to_string(Fate f) {
  switch (f) {
    case Fate::SubsampledOut: return "subsampled-out";
    case Fate::RejectedStage1: return "rejected-stage1";
    case Fate::RejectedStage2: return "rejected-stage2";
    case Fate::RejectedStage3: return "rejected-stage3";
    case Fate::Spotted: return "spotted";
    case Fate::DecodeError: return "decode-error";
  }
  return "unknown";
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  const int workers = std::min(std::max(threads, 1), std::max(n, 1));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

struct Candidate {
  int position = 0;
  std::optional<Frame> frame;
  std::optional<textregion::ScreenDecision> screen;
  BinaryImage closed;
  bool keep = true;
};

std::uint64_t u64(std::size_t v) { return static_cast<std::uint64_t>(v); }

}  // namespace

PipelineResult run_pipeline(const io::FrameSource& source, const PipelineConfig& cfg, Spotter& spotter,
                            const ood::SvmModel* model) {
  cfg.validate();
  const ood::EdgeDensityGrid extractor(cfg.screen);
  if (cfg.stages.ood) {
    if (!model) throw InvalidArgument("stage III enabled but no OOD model given");
    if (model->extractor_id != extractor.id() || model->dimension() != extractor.dimension())
      throw InvalidArgument("OOD model expects extractor " + model->extractor_id);
  }

  const int n = source.size();
  PipelineResult out;
  out.trace.resize(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) {
    out.trace[static_cast<std::size_t>(p)].position = p;
    out.trace[static_cast<std::size_t>(p)].index = source.index_at(p);
  }
  auto trace = [&](int position) -> FrameTrace& { return out.trace[static_cast<std::size_t>(position)]; };

  // Loads on first use; decode failures end the frame's journey.
  auto load = [&](Candidate& c) {
    if (c.frame) return true;
    try {
      Frame f = source.load(c.position);
      f.validate();
      f.index = trace(c.position).index;
      c.frame = std::move(f);
      return true;
    } catch (const std::exception& e) {
      trace(c.position).fate = Fate::DecodeError;
      trace(c.position).error = e.what();
      return false;
    }
  };

  std::vector<Candidate> cands;

  if (cfg.stages.quality) {
    out.metrics.stages.push_back(meter("stage1", [&](StageEntry& e) {
      std::vector<int> all(static_cast<std::size_t>(n));
      std::iota(all.begin(), all.end(), 0);
      const std::vector<int> kept = quality::subsample(all, cfg.quality.subsample_rate);
      for (int p = 0; p < n; ++p) trace(p).fate = Fate::SubsampledOut;
      const auto windows = quality::sliding_windows(kept, cfg.quality.window_size);
      std::vector<Candidate> chosen(windows.size());
      std::vector<std::uint64_t> bytes(windows.size(), 0);
      parallel_for(static_cast<int>(windows.size()), cfg.threads, [&](int w) {
        const auto& members = windows[static_cast<std::size_t>(w)];
        std::vector<Candidate> loaded;
        std::vector<quality::FrameScore> scores;
        for (int p : members) {
          trace(p).window = w;
          trace(p).fate = Fate::RejectedStage1;
          Candidate c;
          c.position = p;
          if (!load(c)) continue;
          bytes[static_cast<std::size_t>(w)] += u64(c.frame->byte_size());
          quality::FrameScore s = quality::score_frame(*c.frame, cfg.quality.analysis_max_side);
          s.index = p;
          scores.push_back(s);
          loaded.push_back(std::move(c));
        }
        if (scores.empty()) return;
        const auto sel = quality::select_highest_quality(scores, cfg.quality.lambda, w);
        for (std::size_t k = 0; k < scores.size(); ++k) {
          FrameTrace& t = trace(scores[k].index);
          t.score = scores[k];
          t.score->index = t.index;
          t.fft_rank = sel.fft_ranks[k];
          t.lv_rank = sel.lv_ranks[k];
          t.fused = sel.fused[k];
          if (scores[k].index == sel.selected) chosen[static_cast<std::size_t>(w)] = std::move(loaded[k]);
        }
      });
      e.frames_in = static_cast<int>(kept.size());
      for (std::size_t w = 0; w < windows.size(); ++w) {
        e.bytes_in += bytes[w];
        if (chosen[w].frame) cands.push_back(std::move(chosen[w]));
      }
      e.frames_out = static_cast<int>(cands.size());
    }));
  } else {
    out.metrics.stages.push_back({"stage1", false});
    for (int p = 0; p < n; ++p) cands.push_back(Candidate{p, {}, {}, {}, true});
  }

  auto compact = [&] {
    cands.erase(std::remove_if(cands.begin(), cands.end(), [](const Candidate& c) { return !c.keep; }), cands.end());
  };

  if (cfg.stages.screen) {
    out.metrics.stages.push_back(meter("stage2", [&](StageEntry& e) {
      e.frames_in = static_cast<int>(cands.size());
      std::vector<std::uint64_t> bytes(cands.size(), 0);
      parallel_for(static_cast<int>(cands.size()), cfg.threads, [&](int i) {
        Candidate& c = cands[static_cast<std::size_t>(i)];
        if (!load(c)) {
          c.keep = false;
          return;
        }
        bytes[static_cast<std::size_t>(i)] = u64(c.frame->byte_size());
        auto r = textregion::screen_frame_detailed(*c.frame, cfg.screen);
        trace(c.position).screen = r.decision;
        if (r.decision.verdict == textregion::Verdict::Reject) {
          trace(c.position).fate = Fate::RejectedStage2;
          c.keep = false;
          c.frame.reset();
          return;
        }
        c.screen = std::move(r.decision);
        if (cfg.stages.ood) c.closed = std::move(r.closed);
      });
      for (auto b : bytes) e.bytes_in += b;
      compact();
      e.frames_out = static_cast<int>(cands.size());
    }));
  } else {
    out.metrics.stages.push_back({"stage2", false});
  }

  if (cfg.stages.ood) {
    out.metrics.stages.push_back(meter("stage3", [&](StageEntry& e) {
      e.frames_in = static_cast<int>(cands.size());
      std::vector<std::uint64_t> bytes(cands.size(), 0);
      parallel_for(static_cast<int>(cands.size()), cfg.threads, [&](int i) {
        Candidate& c = cands[static_cast<std::size_t>(i)];
        if (!load(c)) {
          c.keep = false;
          return;
        }
        bytes[static_cast<std::size_t>(i)] = u64(c.frame->byte_size());
        const ood::FeatureVector f = c.closed.size() > 0 ? extractor.from_edge_map(c.closed) : extractor.extract(*c.frame);
        c.closed.resize(0, 0);
        const double d = model->decision_value(f);
        trace(c.position).ood_decision = d;
        if (ood::svm_predict(*model, f) == ood::OodLabel::Reject) {
          trace(c.position).fate = Fate::RejectedStage3;
          c.keep = false;
          c.frame.reset();
        }
      });
      for (auto b : bytes) e.bytes_in += b;
      compact();
      e.frames_out = static_cast<int>(cands.size());
    }));
  } else {
    out.metrics.stages.push_back({"stage3", false});
  }

  out.metrics.stages.push_back(meter("spotter", [&](StageEntry& e) {
    e.frames_in = static_cast<int>(cands.size());
    for (auto& c : cands) {
      if (!load(c)) continue;
      const Frame& f = *c.frame;
      PixelRect region{0, 0, f.width, f.height};
      std::optional<Frame> cropped;
      if (c.screen && c.screen->verdict == textregion::Verdict::AcceptCrop) {
        region = c.screen->rect.to_pixel_rect(f.height);
        cropped = crop(f, region);
        cropped->index = f.index;
      }
      const Frame& input = cropped ? *cropped : f;
      e.bytes_in += u64(input.byte_size());
      SpotterResult r = spotter.spot(input, region);
      r.frame_index = f.index;
      FrameTrace& t = trace(c.position);
      t.fate = Fate::Spotted;
      t.spotted_region = region;
      t.spotted_quads = static_cast<int>(r.quads.size());
      out.results.push_back(std::move(r));
      c.frame.reset();
      ++e.frames_out;
    }
  }));
  out.metrics.spotter_invocations = static_cast<int>(out.results.size());
  return out;
}

PipelineResult run_pipeline(const io::FrameSource& source, const PipelineConfig& cfg) {
  std::optional<ood::SvmModel> model;
  if (cfg.stages.ood) {
    if (!cfg.ood_model_path) throw InvalidArgument("stage III enabled but ood.model is not set");
    model = ood::load_model(*cfg.ood_model_path);
  }
  auto spotter = make_spotter(cfg.spotter, cfg.seed);
  return run_pipeline(source, cfg, *spotter, model ? &*model : nullptr);
}

nlohmann::json trace_to_json(const std::vector<FrameTrace>& trace) {
  using nlohmann::json;
  json frames = json::array();
  for (const auto& t : trace) {
    json j;
    j["position"] = t.position;
    j["index"] = t.index;
    j["fate"] = to_string(t.fate);
    if (t.window) j["window"] = *t.window;
    if (t.score)
      j["stage1"] = {{"fft", t.score->fft},
                     {"lv", t.score->lv},
                     {"fft_rank", t.fft_rank.value_or(0)},
                     {"lv_rank", t.lv_rank.value_or(0)},
                     {"fused", t.fused.value_or(0.0)}};
    if (t.screen) {
      const auto& s = *t.screen;
      json st = {{"verdict", textregion::to_string(s.verdict)},
                 {"peaks_x", s.peaks_x.size()},
                 {"peaks_y", s.peaks_y.size()},
                 {"mean_x", s.mean_x},
                 {"mean_y", s.mean_y}};
      if (s.verdict == textregion::Verdict::AcceptCrop)
        st["rect"] = {{"x_l", s.rect.x_l}, {"y_b", s.rect.y_b}, {"x_r", s.rect.x_r}, {"y_t", s.rect.y_t}};
      j["stage2"] = std::move(st);
    }
    if (t.ood_decision) j["stage3"] = {{"decision", *t.ood_decision}};
    if (t.spotted_region) {
      const auto& r = *t.spotted_region;
      j["spotter"] = {{"region", {r.x0, r.y0, r.x1, r.y1}}, {"quads", t.spotted_quads}};
    }
    if (!t.error.empty()) j["error"] = t.error;
    frames.push_back(std::move(j));
  }
  return {{"version", 1}, {"frames", std::move(frames)}};
}

nlohmann::json metrics_to_json(const StageMetrics& m, bool include_timings) {
  using nlohmann::json;
  auto entry = [&](const StageEntry& s) {
    json j = {{"name", s.name},
              {"enabled", s.enabled},
              {"frames_in", s.frames_in},
              {"frames_out", s.frames_out},
              {"bytes_in", s.bytes_in}};
    if (include_timings) {
      j["wall_ns"] = s.wall_ns;
      j["cpu_ns"] = s.cpu_ns;
    }
    return j;
  };
  json stages = json::array();
  for (const auto& s : m.stages) stages.push_back(entry(s));
  json totals = entry(m.totals());
  totals.erase("name");
  totals.erase("enabled");
  return {{"version", 1},
          {"timings", include_timings},
          {"stages", std::move(stages)},
          {"totals", std::move(totals)},
          {"spotter_invocations", m.spotter_invocations}};
}

AnnotationDocument results_to_document(const std::vector<SpotterResult>& results) {
  AnnotationDocument doc;
  for (const auto& r : results) {
    FrameAnnotations& fa = doc.upsert(r.frame_index);
    for (std::size_t k = 0; k < r.quads.size(); ++k) {
      Annotation a;
      a.track_id = static_cast<int>(k);
      a.quad = r.quads[k];
      a.source = Provenance::Propagated;
      if (k < r.transcriptions.size()) a.transcription = r.transcriptions[k];
      fa.annotations.push_back(std::move(a));
    }
  }
  doc.normalize();
  return doc;
}

}  // namespace e2vts::pipeline
