#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "e2vts/imgcore.hpp"

namespace e2vts::textregion {

struct ScreenConfig {
  int theta = 3;
  /// Fraction of the perpendicular dimension (h for H_x peaks, w for H_y peaks).
  double alpha = 0.02;
  double canny_low = 50.0;
  double canny_high = 120.0;
  int close_w = 9;
  int close_h = 3;
  int busy_threshold = 40;
  int margin_px = 16;

  void validate() const;
};

enum class Verdict { Reject, AcceptWhole, AcceptCrop };

std::string_view to_string(Verdict v);

/// Crop bounds in lower-left-origin pixel coordinates, inclusive on both ends.
struct CropRect {
  int x_l = 0;
  int y_b = 0;
  int x_r = 0;
  int y_t = 0;

  /// Converts to a top-left-origin half-open rectangle for a frame of height h.
  PixelRect to_pixel_rect(int frame_height) const {
    return {x_l, frame_height - 1 - y_t, x_r + 1, frame_height - y_b};
  }
  bool operator==(const CropRect&) const = default;
};

struct ScreenDecision {
  Verdict verdict = Verdict::Reject;
  CropRect rect;
  std::vector<int> peaks_x;
  std::vector<int> peaks_y;
  double mean_x = 0.0;
  double mean_y = 0.0;
};

/// Canny on each of Y, U, V with shared thresholds, merged by OR.
BinaryImage edge_map_yuv(const Frame& frame, const ScreenConfig& cfg);

struct AxisHistograms {
  std::vector<int> hx;  ///< column sums, left to right
  std::vector<int> hy;  ///< row sums, bottom to top
};

AxisHistograms axis_histograms(const BinaryImage& img);

/// Strict interior local maxima; a plateau with strictly lower neighbours on
/// both sides reports its first index. Endpoints are never peaks.
std::vector<int> find_peaks(std::span<const int> hist);

/// Full decision together with the closed edge map it was derived from.
struct ScreenResult {
  ScreenDecision decision;
  BinaryImage closed;
};

ScreenResult screen_frame_detailed(const Frame& frame, const ScreenConfig& cfg);

inline ScreenDecision screen_frame(const Frame& frame, const ScreenConfig& cfg) {
  return screen_frame_detailed(frame, cfg).decision;
}

/// Decision from an already closed edge map (frame size w x h).
ScreenDecision decide(const BinaryImage& closed, const ScreenConfig& cfg);

}  // namespace e2vts::textregion
