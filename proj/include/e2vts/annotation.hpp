#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "e2vts/geometry.hpp"

namespace e2vts {

enum class Provenance { Human, Propagated };

struct Annotation {
  int track_id = 0;
  Quad quad;
  std::optional<std::string> label;
  Provenance source = Provenance::Human;
  /// Predicted text, used by evaluation when present.
  std::optional<std::string> transcription;
  /// Invalidated by a later human correction upstream; excluded from export.
  bool stale = false;
  /// For propagated annotations, the frame the propagation run started from.
  std::optional<int> origin;
};

struct FrameAnnotations {
  int index = 0;
  std::vector<Annotation> annotations;
};

struct StepDiagnostics {
  int from_index = 0;
  int to_index = 0;
  int matches = 0;
  int inliers = 0;
  double mean_reprojection_error = 0.0;
  bool failed = false;
  std::string reason;
};

/// Versioned interchange document shared by labeling, evaluation and the service.
struct AnnotationDocument {
  static constexpr int kVersion = 1;
  int version = kVersion;
  std::vector<FrameAnnotations> frames;
  std::vector<StepDiagnostics> diagnostics;

  const FrameAnnotations* find(int index) const;
  FrameAnnotations& upsert(int index);
  /// Frames sorted by index.
  void normalize();
  /// Copy without stale annotations (and without frames left empty by that).
  AnnotationDocument without_stale() const;
};

std::string_view to_string(Provenance p);

nlohmann::json to_json(const Quad& q);
Quad quad_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Annotation& a, bool include_stale_flag = false);
Annotation annotation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StepDiagnostics& d);
nlohmann::json to_json(const AnnotationDocument& doc, bool include_stale_flag = false);
/// Throws InvalidArgument on schema violations.
AnnotationDocument document_from_json(const nlohmann::json& j);

std::string dump_document(const AnnotationDocument& doc);
AnnotationDocument read_document(const std::filesystem::path& path);
void write_document(const std::filesystem::path& path, const AnnotationDocument& doc);

}  // namespace e2vts
