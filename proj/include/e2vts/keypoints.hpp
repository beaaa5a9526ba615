#pragma once

#include <vector>

#include <Eigen/Core>

#include "e2vts/image.hpp"

namespace e2vts::autolabel {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  /// Gaussian scale in input-image pixels.
  double scale = 0.0;
  /// Dominant gradient orientation in radians, image axes (y down).
  double orientation = 0.0;
  double response = 0.0;
  int octave = 0;
};

using DescriptorMatrix = Eigen::Matrix<float, Eigen::Dynamic, 128, Eigen::RowMajor>;

/// Keypoints with one L2-normalized 128-D descriptor row each.
struct KeypointSet {
  std::vector<Keypoint> keypoints;
  DescriptorMatrix descriptors;

  std::size_t size() const { return keypoints.size(); }
};

struct DetectorOptions {
  int scales_per_octave = 3;
  double base_sigma = 1.6;
  double contrast_threshold = 0.04;
  double edge_ratio = 10.0;
  /// Strongest responses kept; 0 keeps all.
  int max_keypoints = 1500;
};

/// Difference-of-Gaussians detector, dominant orientations, 4x4x8 gradient
/// histogram descriptors. Images smaller than 32x32 yield an empty set.
KeypointSet detect_and_describe(const GrayImage& img, const DetectorOptions& opt = {});

struct Match {
  int source = 0;
  int target = 0;
  double distance = 0.0;
};

using MatchSet = std::vector<Match>;

/// Brute-force L2 nearest / second-nearest search with Lowe's ratio test.
/// With a single target descriptor, a match is kept if its distance is below
/// `single_target_cap`.
MatchSet match_descriptors(const KeypointSet& a, const KeypointSet& b, double ratio = 0.75,
                           double single_target_cap = 0.5);

}  // namespace e2vts::autolabel
