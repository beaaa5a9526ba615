#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "e2vts/annotation.hpp"
#include "e2vts/config.hpp"
#include "e2vts/io.hpp"
#include "e2vts/ood.hpp"
#include "e2vts/quality.hpp"
#include "e2vts/textregion.hpp"

namespace e2vts::pipeline {

struct StageToggles {
  bool quality = true;  ///< subsampling and Stage I selection
  bool screen = true;
  bool ood = true;
};

struct SpotterConfig {
  std::string id = "mock";
  /// CPU time burned per invocation.
  double cost_ms = 0.0;
  /// Uniform per-corner noise applied in echo mode.
  double jitter_px = 0.0;
  /// Annotation document echoed back for frames that have entries.
  std::optional<std::filesystem::path> ground_truth;
};

struct PipelineConfig {
  quality::QualityConfig quality;
  textregion::ScreenConfig screen;
  std::optional<std::filesystem::path> ood_model_path;
  StageToggles stages;
  SpotterConfig spotter;
  int threads = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Reads quality.*, screen.*, ood.model, stages.*, spotter.*, threads and seed.
/// stages.ood defaults to on exactly when ood.model is set.
PipelineConfig pipeline_config_from(const Config& c);

struct SpotterResult {
  int frame_index = 0;
  std::vector<Quad> quads;
  std::vector<std::string> transcriptions;
};

class Spotter {
 public:
  virtual ~Spotter() = default;
  virtual std::string id() const = 0;
  /// `input` is the frame or its crop; `region` locates it in the full frame.
  /// Returned quads are in full-frame pixel coordinates.
  virtual SpotterResult spot(const Frame& input, const PixelRect& region) = 0;
};

struct MockSpotterOptions {
  std::map<int, SpotterResult> canned;
  std::optional<AnnotationDocument> ground_truth;
  double jitter_px = 0.0;
  double cost_ms = 0.0;
  std::uint64_t seed = 0;
};

/// Canned results keyed by frame index take precedence; otherwise ground-truth
/// quads of the frame are echoed with optional jitter and clamped to the region.
class MockSpotter : public Spotter {
 public:
  explicit MockSpotter(MockSpotterOptions opt) : opt_(std::move(opt)) {}
  std::string id() const override { return "mock"; }
  SpotterResult spot(const Frame& input, const PixelRect& region) override;

 private:
  MockSpotterOptions opt_;
};

std::unique_ptr<Spotter> make_spotter(const SpotterConfig& cfg, std::uint64_t seed);

/// Spins on the calling thread's CPU clock.
void burn_cpu(double ms);

struct StageEntry {
  std::string name;
  bool enabled = true;
  std::int64_t wall_ns = 0;
  std::int64_t cpu_ns = 0;
  int frames_in = 0;
  int frames_out = 0;
  std::uint64_t bytes_in = 0;
};

struct StageMetrics {
  std::vector<StageEntry> stages;
  int spotter_invocations = 0;

  StageEntry totals() const;
  const StageEntry* find(const std::string& name) const;
};

std::int64_t process_cpu_ns();

/// Times `fn` on the monotonic wall clock and the process CPU clock, which
/// includes worker threads. `fn` fills the counters of the entry.
template <typename Fn>
StageEntry meter(std::string name, Fn&& fn) {
  StageEntry e;
  e.name = std::move(name);
  const auto w0 = std::chrono::steady_clock::now();
  const std::int64_t c0 = process_cpu_ns();
  fn(e);
  e.cpu_ns = process_cpu_ns() - c0;
  e.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - w0).count();
  return e;
}

enum class Fate { SubsampledOut, RejectedStage1, RejectedStage2, RejectedStage3, Spotted, DecodeError };
std::string_view to_string(Fate f);

struct FrameTrace {
  int position = 0;
  int index = 0;
  Fate fate = Fate::Spotted;
  std::optional<int> window;
  std::optional<quality::FrameScore> score;
  std::optional<int> fft_rank;
  std::optional<int> lv_rank;
  std::optional<double> fused;
  std::optional<textregion::ScreenDecision> screen;
  std::optional<double> ood_decision;
  std::optional<PixelRect> spotted_region;
  int spotted_quads = 0;
  std::string error;
};

struct PipelineResult {
  std::vector<SpotterResult> results;
  StageMetrics metrics;
  std::vector<FrameTrace> trace;
};

/// Runs Stage I -> II -> III -> spotter with early exit. Each stage runs over
/// all of its input before the next starts; stages I-III use up to
/// cfg.threads workers and emit results in temporal order.
PipelineResult run_pipeline(const io::FrameSource& source, const PipelineConfig& cfg, Spotter& spotter,
                            const ood::SvmModel* model = nullptr);

/// Loads the OOD model and builds the spotter named in the configuration.
PipelineResult run_pipeline(const io::FrameSource& source, const PipelineConfig& cfg);

/// Calls fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

nlohmann::json trace_to_json(const std::vector<FrameTrace>& trace);
/// Timings are non-deterministic; leave them out for reproducible output.
nlohmann::json metrics_to_json(const StageMetrics& m, bool include_timings);
/// Spotter output as an annotation document carrying transcriptions.
AnnotationDocument results_to_document(const std::vector<SpotterResult>& results);

}  // namespace e2vts::pipeline
