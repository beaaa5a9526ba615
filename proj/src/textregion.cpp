#include "e2vts/textregion.hpp"

#include <algorithm>
#include <numeric>

namespace e2vts::textregion {

void ScreenConfig::validate() const {
  if (theta < 1) throw InvalidArgument("screen.theta must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("screen.alpha must lie in (0, 1)");
  if (busy_threshold <= theta) throw InvalidArgument("screen.busy_threshold must exceed screen.theta");
  if (canny_low < 0.0 || canny_low > canny_high) throw InvalidArgument("screen canny thresholds must satisfy 0 <= low <= high");
  if (close_w < 1 || close_h < 1) throw InvalidArgument("screen.close_w/close_h must be >= 1");
  if (margin_px < 0) throw InvalidArgument("screen.margin_px must be >= 0");
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Reject: return "reject";
    case Verdict::AcceptWhole: return "accept-whole";
    case Verdict::AcceptCrop: return "accept-crop";
  }
  return "?";
}

BinaryImage edge_map_yuv(const Frame& frame, const ScreenConfig& cfg) {
  if (frame.channels != 3) throw InvalidArgument("edge_map_yuv: color frame required");
  const YuvPlanes yuv = rgb_to_yuv(frame);
  BinaryImage e = canny(yuv.y, cfg.canny_low, cfg.canny_high);
  e = bitwise_or(e, canny(yuv.u, cfg.canny_low, cfg.canny_high));
  e = bitwise_or(e, canny(yuv.v, cfg.canny_low, cfg.canny_high));
  return e;
}

AxisHistograms axis_histograms(const BinaryImage& img) {
  const auto h = img.rows();
  AxisHistograms hist;
  hist.hx.resize(static_cast<std::size_t>(img.cols()));
  hist.hy.resize(static_cast<std::size_t>(h));
  const Eigen::VectorXi cols = img.cast<int>().colwise().sum().transpose();
  const Eigen::VectorXi rows = img.cast<int>().rowwise().sum();
  for (Eigen::Index x = 0; x < cols.size(); ++x) hist.hx[static_cast<std::size_t>(x)] = cols[x];
  for (Eigen::Index j = 0; j < h; ++j) hist.hy[static_cast<std::size_t>(j)] = rows[h - 1 - j];
  return hist;
}

std::vector<int> find_peaks(std::span<const int> hist) {
  std::vector<int> peaks;
  const std::size_t n = hist.size();
  std::size_t i = 1;
  while (i + 1 < n) {
    if (hist[i] > hist[i - 1]) {
      std::size_t j = i;
      while (j + 1 < n && hist[j + 1] == hist[i]) ++j;
      if (j + 1 < n && hist[j + 1] < hist[i]) peaks.push_back(static_cast<int>(i));
      i = j + 1;
    } else {
      ++i;
    }
  }
  return peaks;
}

namespace {

double mean_at(std::span<const int> hist, const std::vector<int>& peaks) {
  if (peaks.empty()) return 0.0;
  double s = 0.0;
  for (int p : peaks) s += hist[static_cast<std::size_t>(p)];
  return s / static_cast<double>(peaks.size());
}

}  // namespace

ScreenDecision decide(const BinaryImage& closed, const ScreenConfig& cfg) {
  const int w = static_cast<int>(closed.cols());
  const int h = static_cast<int>(closed.rows());
  const AxisHistograms hist = axis_histograms(closed);
  ScreenDecision d;
  d.peaks_x = find_peaks(hist.hx);
  d.peaks_y = find_peaks(hist.hy);
  d.mean_x = mean_at(hist.hx, d.peaks_x);
  d.mean_y = mean_at(hist.hy, d.peaks_y);

  const auto nx = static_cast<int>(d.peaks_x.size());
  const auto ny = static_cast<int>(d.peaks_y.size());
  if (nx <= cfg.theta || ny <= cfg.theta || d.mean_x <= cfg.alpha * h || d.mean_y <= cfg.alpha * w) {
    d.verdict = Verdict::Reject;
    return d;
  }
  if (nx >= cfg.busy_threshold && ny >= cfg.busy_threshold) {
    d.verdict = Verdict::AcceptWhole;
    return d;
  }
  const int xl = d.peaks_x.front(), xr = d.peaks_x.back();
  const int yb = d.peaks_y.front(), yt = d.peaks_y.back();
  if (xl == xr || yb == yt) {
    d.verdict = Verdict::AcceptWhole;
    return d;
  }
  d.rect = {std::max(0, xl - cfg.margin_px), std::max(0, yb - cfg.margin_px), std::min(w - 1, xr + cfg.margin_px),
            std::min(h - 1, yt + cfg.margin_px)};
  d.verdict = Verdict::AcceptCrop;
  return d;
}

ScreenResult screen_frame_detailed(const Frame& frame, const ScreenConfig& cfg) {
  if (frame.channels != 3) throw InvalidArgument("screen_frame: color frame required");
  ScreenResult r;
  r.closed = morph_close(edge_map_yuv(frame, cfg), cfg.close_w, cfg.close_h);
  r.decision = decide(r.closed, cfg);
  return r;
}

}  // namespace e2vts::textregion
