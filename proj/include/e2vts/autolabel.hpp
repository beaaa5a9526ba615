#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "e2vts/annotation.hpp"
#include "e2vts/io.hpp"
#include "e2vts/keypoints.hpp"

namespace e2vts::autolabel {

/// 3x3 projective map, scaled so that H(2,2) == 1 whenever that entry is non-zero.
using Homography = Eigen::Matrix3d;

Homography normalize_homography(const Homography& h);
bool is_invertible(const Homography& h);

/// Similarity taking points to zero centroid and mean distance sqrt(2).
Eigen::Matrix3d hartley_normalization(std::span<const Point2> pts);

/// Normalized DLT over all given correspondences (>= 4).
Homography dlt_homography(std::span<const Point2> src, std::span<const Point2> dst);

/// Forward reprojection error |H src - dst|; infinity when src maps to infinity.
double reprojection_error(const Homography& h, const Point2& src, const Point2& dst);

struct RansacOptions {
  double inlier_px = 3.0;
  int max_iters = 2000;
  double confidence = 0.99;
  std::uint64_t seed = 0;
};

struct HomographyEstimate {
  Homography h = Homography::Identity();
  std::vector<std::uint8_t> inlier_mask;
  int inlier_count = 0;
  double mean_inlier_error = 0.0;
  int iterations = 0;
};

/// RANSAC on minimal 4-point samples, adaptive iteration count, final DLT refit
/// on the consensus set. Deterministic for a given seed.
HomographyEstimate estimate_homography(std::span<const Point2> src, std::span<const Point2> dst,
                                       const RansacOptions& opt = {});

Point2 apply_homography(const Homography& h, const Point2& p);
Quad warp_quad(const Quad& q, const Homography& h);

struct PropagationOptions {
  DetectorOptions detector;
  double lowe_ratio = 0.75;
  RansacOptions ransac;
  /// A step whose consensus set is smaller than this counts as failed.
  int min_inliers = 12;
  /// Minimum inlier fraction of the ratio-test matches.
  double min_inlier_ratio = 0.2;
};

struct PropagationResult {
  /// One entry per processed frame, the first holding the seeds.
  std::vector<FrameAnnotations> frames;
  std::vector<StepDiagnostics> diagnostics;
  /// Index of the frame where the chain stopped, if it did.
  std::optional<int> halted_at;
  std::string halt_reason;
};

/// Called after each frame's annotations are final (including the seed frame).
using PropagationCallback = std::function<void(const FrameAnnotations&, const StepDiagnostics*)>;

/// Chains adjacent-frame homographies from the first frame onward, warping every
/// seed quad. Stops at the first step that cannot be estimated.
PropagationResult propagate_annotations(const io::FrameSource& frames, std::span<const Annotation> seeds,
                                        const PropagationOptions& opt = {},
                                        const PropagationCallback& on_frame = {});

PropagationResult propagate_annotations(std::span<const Frame> frames, std::span<const Annotation> seeds,
                                        const PropagationOptions& opt = {},
                                        const PropagationCallback& on_frame = {});

AnnotationDocument to_document(const PropagationResult& r);

}  // namespace e2vts::autolabel
