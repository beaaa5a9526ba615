#include <doctest.h>

#include <set>
#include <thread>

#include "e2vts/metrics.hpp"
#include "e2vts/pipeline.hpp"
#include "support/synth.hpp"
#include "support/testing.hpp"

using namespace e2vts;
using namespace e2vts::pipeline;

namespace {

std::vector<Frame> solid_frames(int n) {
  std::vector<Frame> v;
  for (int i = 0; i < n; ++i) v.push_back(testing::solid_frame(32, 24, 10 * i, 20, 30, i));
  return v;
}

PipelineConfig stages(bool q, bool s, bool o) {
  PipelineConfig c;
  c.stages = {q, s, o};
  return c;
}

class FlakySource : public io::FrameSource {
 public:
  FlakySource(std::vector<Frame> frames, int bad) : frames_(std::move(frames)), bad_(bad) {}
  int size() const override { return static_cast<int>(frames_.size()); }
  Frame load(int p) const override {
    if (p == bad_) throw RuntimeFailure("truncated frame");
    return frames_.at(static_cast<std::size_t>(p));
  }

 private:
  std::vector<Frame> frames_;
  int bad_;
};

const synth::Video& small_video() {
  static const synth::Video v = synth::text_video(90, 320, 240, 12);
  return v;
}

const ood::SvmModel& model() {
  static const ood::SvmModel m = synth::train_ood_model(ood::EdgeDensityGrid{}, 30, 320, 240, 3);
  return m;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("with every stage off each frame is spotted") {
  const io::MemorySource src(solid_frames(10));
  MockSpotter sp({});
  const auto r = run_pipeline(src, stages(false, false, false), sp);
  CHECK(r.metrics.spotter_invocations == 10);
  CHECK(r.results.size() == 10);
  for (const auto& t : r.trace) CHECK(t.fate == Fate::Spotted);
  CHECK_FALSE(r.metrics.find("stage1")->enabled);
}

TEST_CASE("stage I keeps one frame per window") {
  PipelineConfig cfg = stages(true, false, false);
  cfg.quality.window_size = 5;
  cfg.quality.subsample_rate = 1;
  const io::MemorySource src(solid_frames(10));
  MockSpotter sp({});
  const auto r = run_pipeline(src, cfg, sp);
  CHECK(r.metrics.spotter_invocations == 2);
  const auto* s1 = r.metrics.find("stage1");
  CHECK(s1->frames_in == 10);
  CHECK(s1->frames_out == 2);
  int rejected = 0;
  for (const auto& t : r.trace) rejected += t.fate == Fate::RejectedStage1;
  CHECK(rejected == 8);

  cfg.quality.subsample_rate = 3;
  MockSpotter sp2({});
  const auto r2 = run_pipeline(src, cfg, sp2);
  CHECK(r2.metrics.find("stage1")->frames_in == 4);
  CHECK(r2.trace[1].fate == Fate::SubsampledOut);
}

TEST_CASE("disabling a stage never lowers the number of spotter calls") {
  const io::MemorySource src(small_video().frames);
  std::map<int, int> calls;
  for (int mask = 0; mask < 8; ++mask) {
    MockSpotter sp({});
    const auto r = run_pipeline(src, stages(mask & 1, mask & 2, mask & 4), sp, &model());
    calls[mask] = r.metrics.spotter_invocations;
    for (const auto& s : r.metrics.stages) CHECK(s.frames_out <= s.frames_in);
    const StageEntry total = r.metrics.totals();
    std::int64_t cpu = 0;
    for (const auto& s : r.metrics.stages) cpu += s.cpu_ns;
    CHECK(total.cpu_ns == cpu);
  }
  for (int mask = 0; mask < 8; ++mask)
    for (int bit : {1, 2, 4})
      if (mask & bit) CHECK(calls[mask & ~bit] >= calls[mask]);
  CHECK(calls[7] < calls[0]);
}

TEST_CASE("rejected frames never reach later stages") {
  const io::MemorySource src(small_video().frames);
  MockSpotter sp({});
  const auto r = run_pipeline(src, stages(true, true, true), sp, &model());
  std::set<int> spotted;
  for (const auto& res : r.results) spotted.insert(res.frame_index);
  for (const auto& t : r.trace) {
    CHECK((t.fate == Fate::Spotted) == (spotted.count(t.index) == 1));
    if (t.fate == Fate::SubsampledOut) CHECK_FALSE(t.score);
    if (t.fate == Fate::RejectedStage1) CHECK_FALSE(t.screen);
    if (t.fate == Fate::RejectedStage2) CHECK_FALSE(t.ood_decision);
    if (t.fate == Fate::Spotted) CHECK(t.spotted_region);
  }
}

TEST_CASE("worker count does not change the output") {
  const io::MemorySource src(small_video().frames);
  PipelineConfig cfg = stages(true, true, true);
  MockSpotter a({}), b({});
  const auto r1 = run_pipeline(src, cfg, a, &model());
  cfg.threads = 4;
  const auto r4 = run_pipeline(src, cfg, b, &model());
  CHECK(trace_to_json(r1.trace).dump() == trace_to_json(r4.trace).dump());
  CHECK(metrics_to_json(r1.metrics, false).dump() == metrics_to_json(r4.metrics, false).dump());
}

TEST_CASE("decode errors are traced and the run continues") {
  FlakySource src(solid_frames(6), 2);
  MockSpotter sp({});
  const auto r = run_pipeline(src, stages(false, false, false), sp);
  CHECK(r.metrics.spotter_invocations == 5);
  CHECK(r.trace[2].fate == Fate::DecodeError);
  CHECK(r.trace[2].error == "truncated frame");
  CHECK(trace_to_json(r.trace)["frames"][2]["fate"] == "decode-error");
}

TEST_CASE("stage III needs a matching model") {
  const io::MemorySource src(solid_frames(3));
  MockSpotter sp({});
  CHECK_THROWS_AS(run_pipeline(src, stages(false, false, true), sp), InvalidArgument);
  ood::SvmModel other = model();
  other.extractor_id = "edge-density-grid-4x4";
  CHECK_THROWS_AS(run_pipeline(src, stages(false, false, true), sp, &other), InvalidArgument);
  CHECK_THROWS_AS(run_pipeline(src, stages(false, false, true)), InvalidArgument);
}

TEST_CASE("meter examples") {
  const StageEntry noop = meter("noop", [](StageEntry& e) { e.frames_in = e.frames_out = 4; });
  CHECK(noop.frames_in == noop.frames_out);
  CHECK(noop.wall_ns >= 0);
  CHECK(noop.wall_ns < 50'000'000);
  const StageEntry none = meter("reject", [](StageEntry& e) { e.frames_in = 4; });
  CHECK(none.frames_out == 0);

  StageMetrics m;
  m.stages.push_back(meter("a", [](StageEntry&) { burn_cpu(3.0); }));
  m.stages.push_back(meter("b", [](StageEntry&) { std::this_thread::sleep_for(std::chrono::milliseconds(2)); }));
  CHECK(m.totals().wall_ns >= std::max(m.stages[0].wall_ns, m.stages[1].wall_ns));
  CHECK(m.stages[0].cpu_ns >= 3'000'000);
  const auto j = metrics_to_json(m, false);
  CHECK_FALSE(j["stages"][0].contains("wall_ns"));
  CHECK(metrics_to_json(m, true)["stages"][0].contains("cpu_ns"));
}

TEST_CASE("canned spotter output is returned verbatim") {
  SpotterResult canned;
  canned.quads = {rect_quad(1, 2, 3, 4)};
  canned.transcriptions = {"HELLO"};
  MockSpotterOptions opt;
  opt.canned[7] = canned;
  MockSpotter sp(opt);
  const Frame f = testing::solid_frame(20, 20, 0, 0, 0, 7);
  const auto r = sp.spot(f, {0, 0, 20, 20});
  CHECK(r.frame_index == 7);
  CHECK(r.quads == canned.quads);
  CHECK(r.transcriptions == canned.transcriptions);
  CHECK(sp.spot(testing::solid_frame(20, 20, 0, 0, 0, 8), {0, 0, 20, 20}).quads.empty());
}

TEST_CASE("echoed ground truth scores by jitter") {
  AnnotationDocument gt;
  Annotation a;
  a.quad = rect_quad(40, 30, 120, 60);
  a.label = "PLATFORM";
  gt.upsert(0).annotations.push_back(a);
  const Frame f = testing::solid_frame(320, 240, 0, 0, 0, 0);

  MockSpotterOptions exact;
  exact.ground_truth = gt;
  const auto r = MockSpotter(exact).spot(f, {0, 0, 320, 240});
  const auto e = metrics::evaluate_documents(results_to_document({r}), gt);
  CHECK(e.mean_iou == doctest::Approx(1.0));
  CHECK(e.mean_edit_distance == 0.0);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    MockSpotterOptions noisy = exact;
    noisy.jitter_px = 2.0;
    noisy.seed = seed;
    const auto n = MockSpotter(noisy).spot(f, {0, 0, 320, 240});
    const double iou = metrics::evaluate_documents(results_to_document({n}), gt).mean_iou;
    CHECK(iou < 1.0);
    CHECK(iou > 0.9);
  }

  const auto clipped = MockSpotter(exact).spot(f, {0, 0, 100, 240});
  REQUIRE(clipped.quads.size() == 1);
  for (const auto& p : clipped.quads[0].corners) CHECK(p.x() <= 100.0);
  CHECK(MockSpotter(exact).spot(f, {200, 0, 320, 240}).quads.empty());
}

TEST_CASE("spotter lookup and cpu burn") {
  CHECK(make_spotter({}, 0)->id() == "mock");
  SpotterConfig bad;
  bad.id = "east-crnn";
  CHECK_THROWS_AS(make_spotter(bad, 0), InvalidArgument);
  const std::int64_t t0 = process_cpu_ns();
  burn_cpu(5.0);
  CHECK(process_cpu_ns() - t0 >= 5'000'000);
}

TEST_CASE("parallel_for visits every index once") {
  for (int threads : {1, 3, 8}) {
    std::vector<std::atomic<int>> hits(50);
    parallel_for(50, threads, [&](int i) { ++hits[static_cast<std::size_t>(i)]; });
    for (const auto& h : hits) CHECK(h.load() == 1);
  }
  CHECK_THROWS_AS(parallel_for(5, 2, [](int i) { if (i == 3) throw RuntimeFailure("x"); }), RuntimeFailure);
}

}  // TEST_SUITE
