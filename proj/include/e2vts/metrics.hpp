#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "e2vts/annotation.hpp"

namespace e2vts::metrics {

struct Overlap {
  double iou = 0.0;
  double iop = 0.0;  ///< intersection over prediction
  double iog = 0.0;  ///< intersection over ground truth
};

double polygon_area(const Polygon& p);

/// Convex-quad overlap via Sutherland-Hodgman clipping and shoelace areas.
/// Throws InvalidArgument for non-convex or zero-area quads.
Overlap polygon_overlap(const Quad& pred, const Quad& gt);

/// Decodes UTF-8 into Unicode scalar values; malformed bytes map to U+FFFD.
std::u32string decode_utf8(std::string_view s);

/// Levenshtein distance with unit costs over Unicode scalar values.
int edit_distance(std::string_view a, std::string_view b);
int edit_distance(const std::u32string& a, const std::u32string& b);

struct Prediction {
  Quad quad;
  std::string text;
};

struct GroundTruth {
  Quad quad;
  std::string text;
};

struct GtResult {
  int frame_index = 0;
  int gt_id = 0;
  std::optional<int> matched_prediction;
  Overlap overlap;
  int edit_distance = 0;
  std::string error;  ///< set when a pair could not be scored
};

struct EvalReport {
  std::vector<GtResult> per_gt;
  double mean_iou = 0.0;
  double mean_iop = 0.0;
  double mean_iog = 0.0;
  double mean_edit_distance = 0.0;
};

/// For each ground truth, the prediction with maximum IoU (ties: lowest id) is
/// selected and its text scored. Unmatched ground truths score zero overlap and
/// edit distance equal to their label length.
EvalReport match_and_score(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                           int frame_index = 0);

/// Frame-by-frame evaluation of two annotation documents. Ground-truth text is
/// the label; predicted text is the transcription, falling back to the label.
EvalReport evaluate_documents(const AnnotationDocument& pred, const AnnotationDocument& gt);

nlohmann::json to_json(const EvalReport& r);

}  // namespace e2vts::metrics
