#include "e2vts/quality.hpp"

#include <algorithm>
#include <numeric>

namespace e2vts::quality {

void QualityConfig::validate() const {
  if (window_size < 1) throw InvalidArgument("quality.window_size must be >= 1");
  if (subsample_rate < 1) throw InvalidArgument("quality.subsample_rate must be >= 1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("quality.lambda must lie in [0, 1]");
  if (analysis_max_side < 16) throw InvalidArgument("quality.analysis_max_side must be >= 16");
}

std::vector<int> subsample(std::span<const int> indices, int rate) {
  if (rate < 1) throw InvalidArgument("subsample: rate must be >= 1");
  std::vector<int> out;
  out.reserve(indices.size() / static_cast<std::size_t>(rate) + 1);
  for (std::size_t i = 0; i < indices.size(); i += static_cast<std::size_t>(rate)) out.push_back(indices[i]);
  return out;
}

std::vector<std::vector<int>> sliding_windows(std::span<const int> indices, int window_size) {
  if (window_size < 1) throw InvalidArgument("sliding_windows: window size must be >= 1");
  std::vector<std::vector<int>> windows;
  for (std::size_t i = 0; i < indices.size(); i += static_cast<std::size_t>(window_size)) {
    const std::size_t end = std::min(indices.size(), i + static_cast<std::size_t>(window_size));
    windows.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(i), indices.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return windows;
}

double fft_mean_magnitude(const GrayImage& img, int max_side) {
  if (img.size() == 0) throw InvalidArgument("fft_mean_magnitude: empty image");
  return fft_mean_magnitude_raw(thumbnail(img, max_side));
}

std::vector<int> rank_ascending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<int> ranks(scores.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<int>(r) + 1;
  return ranks;
}

FrameScore score_frame(const Frame& frame, int analysis_max_side) {
  const GrayImage thumb = thumbnail(to_grayscale(frame), analysis_max_side);
  return {frame.index, fft_mean_magnitude_raw(thumb), laplacian_variance(thumb)};
}

WindowSelection select_highest_quality(std::span<const FrameScore> scores, double lambda, int window_id) {
  if (scores.empty()) throw InvalidArgument("select_highest_quality: empty window");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("select_highest_quality: lambda outside [0, 1]");
  WindowSelection sel;
  sel.window_id = window_id;
  sel.scores.assign(scores.begin(), scores.end());
  std::vector<double> fft, lv;
  for (const auto& s : scores) {
    sel.members.push_back(s.index);
    fft.push_back(s.fft);
    lv.push_back(s.lv);
  }
  sel.fft_ranks = rank_ascending(fft);
  sel.lv_ranks = rank_ascending(lv);
  std::size_t best = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    sel.fused.push_back(lambda * sel.fft_ranks[i] + (1.0 - lambda) * sel.lv_ranks[i]);
    if (sel.fused[i] > sel.fused[best]) best = i;
  }
  sel.selected = sel.members[best];
  return sel;
}

}  // namespace e2vts::quality
