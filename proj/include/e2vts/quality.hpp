#pragma once

#include <span>
#include <vector>

#include "e2vts/imgcore.hpp"

namespace e2vts::quality {

struct QualityConfig {
  int window_size = 8;
  int subsample_rate = 2;
  double lambda = 0.5;
  int analysis_max_side = 256;

  void validate() const;
};

/// Keeps positions 0, r, 2r, ... of the input order.
std::vector<int> subsample(std::span<const int> indices, int rate);

/// Consecutive non-overlapping windows of size N; the last may be shorter.
std::vector<std::vector<int>> sliding_windows(std::span<const int> indices, int window_size);

/// Population variance of the 3x3 Laplacian response.
template <typename Scalar>
double laplacian_variance(const Plane<Scalar>& img) {
  if (img.size() == 0) throw InvalidArgument("laplacian_variance: empty image");
  const RealImage r = convolve2d(img, laplacian_kernel());
  const double mean = r.mean();
  return (r.array() - mean).square().mean();
}

/// Mean magnitude of the 2-D DFT, computed on a thumbnail whose longest side is
/// at most max_side. The DC bin is included.
double fft_mean_magnitude(const GrayImage& img, int max_side = 256);

template <typename Scalar>
double fft_mean_magnitude_raw(const Plane<Scalar>& img) {
  if (img.size() == 0) throw InvalidArgument("fft_mean_magnitude: empty image");
  return dft2_magnitude(img).sum() / static_cast<double>(img.size());
}

/// Rank 1 = lowest score. Equal scores: the earlier entry gets the lower rank.
std::vector<int> rank_ascending(std::span<const double> scores);

struct FrameScore {
  int index = 0;
  double fft = 0.0;
  double lv = 0.0;
};

/// Both measures on the analysis thumbnail of a frame's luma.
FrameScore score_frame(const Frame& frame, int analysis_max_side);

struct WindowSelection {
  int window_id = 0;
  std::vector<int> members;
  std::vector<FrameScore> scores;
  std::vector<int> fft_ranks;
  std::vector<int> lv_ranks;
  std::vector<double> fused;
  int selected = -1;
};

/// Weighted rank fusion over one window; ties go to the earliest member.
/// `scores` must be in temporal order.
WindowSelection select_highest_quality(std::span<const FrameScore> scores, double lambda, int window_id = 0);

}  // namespace e2vts::quality
