#include "e2vts/keypoints.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace e2vts::autolabel {

namespace {

using FImage = Plane<float>;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kBorder = 5;
constexpr int kOriBins = 36;
constexpr int kDescWidth = 4;
constexpr int kDescBins = 8;

FImage blur(const FImage& src, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);

  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  FImage tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    const float* row = src.data() + static_cast<std::ptrdiff_t>(y) * w;
    float* dst = tmp.data() + static_cast<std::ptrdiff_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) acc += k[static_cast<std::size_t>(i + radius)] * row[std::clamp(x + i, 0, w - 1)];
      dst[x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    float* dst = out.data() + static_cast<std::ptrdiff_t>(y) * w;
    std::fill(dst, dst + w, 0.0f);
    for (int i = -radius; i <= radius; ++i) {
      const float kv = k[static_cast<std::size_t>(i + radius)];
      const float* row = tmp.data() + static_cast<std::ptrdiff_t>(std::clamp(y + i, 0, h - 1)) * w;
      for (int x = 0; x < w; ++x) dst[x] += kv * row[x];
    }
  }
  return out;
}

FImage downsample(const FImage& src) {
  const Eigen::Index h = src.rows() / 2, w = src.cols() / 2;
  FImage out(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) out(y, x) = src(2 * y, 2 * x);
  return out;
}

struct Octave {
  std::vector<FImage> gauss;
  std::vector<FImage> dog;
};

// Internal candidate in octave coordinates.
struct Candidate {
  int octave = 0;
  int layer = 0;
  double ox = 0.0;  // octave-space position
  double oy = 0.0;
  double osigma = 0.0;
  double response = 0.0;
  double orientation = 0.0;
};

std::vector<Octave> build_pyramid(const GrayImage& img, const DetectorOptions& opt) {
  const int s = opt.scales_per_octave;
  const int min_side = static_cast<int>(std::min(img.rows(), img.cols()));
  const int n_oct = std::max(1, static_cast<int>(std::floor(std::log2(static_cast<double>(min_side)))) - 2);
  const double k = std::pow(2.0, 1.0 / s);
  std::vector<double> inc(static_cast<std::size_t>(s + 3));
  inc[0] = opt.base_sigma;
  for (int i = 1; i < s + 3; ++i) {
    const double prev = opt.base_sigma * std::pow(k, i - 1);
    const double total = prev * k;
    inc[static_cast<std::size_t>(i)] = std::sqrt(total * total - prev * prev);
  }

  FImage base = img.cast<float>() / 255.0f;
  // Input assumed to carry sigma 0.5 of blur already.
  base = blur(base, std::sqrt(std::max(opt.base_sigma * opt.base_sigma - 0.25, 0.01)));

  std::vector<Octave> pyr(static_cast<std::size_t>(n_oct));
  for (int o = 0; o < n_oct; ++o) {
    Octave& oc = pyr[static_cast<std::size_t>(o)];
    oc.gauss.push_back(o == 0 ? base : downsample(pyr[static_cast<std::size_t>(o - 1)].gauss[static_cast<std::size_t>(s)]));
    for (int i = 1; i < s + 3; ++i) oc.gauss.push_back(blur(oc.gauss.back(), inc[static_cast<std::size_t>(i)]));
    for (int i = 0; i + 1 < s + 3; ++i)
      oc.dog.push_back(oc.gauss[static_cast<std::size_t>(i + 1)] - oc.gauss[static_cast<std::size_t>(i)]);
  }
  return pyr;
}

bool is_extremum(const std::vector<FImage>& dog, int layer, int y, int x) {
  const float v = dog[static_cast<std::size_t>(layer)](y, x);
  const bool want_max = v > 0;
  for (int l = layer - 1; l <= layer + 1; ++l) {
    const FImage& d = dog[static_cast<std::size_t>(l)];
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (l == layer && dy == 0 && dx == 0) continue;
        const float n = d(y + dy, x + dx);
        if (want_max ? n > v : n < v) return false;
      }
  }
  return true;
}

// Quadratic sub-pixel/sub-scale refinement with contrast and edge tests.
bool refine(const Octave& oc, int s, const DetectorOptions& opt, int& layer, int& y, int& x, Candidate& out) {
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  Eigen::Vector3d grad;
  double dxx = 0, dyy = 0, dxy = 0;
  bool converged = false;
  for (int iter = 0; iter < 5; ++iter) {
    const FImage& prev = oc.dog[static_cast<std::size_t>(layer - 1)];
    const FImage& cur = oc.dog[static_cast<std::size_t>(layer)];
    const FImage& next = oc.dog[static_cast<std::size_t>(layer + 1)];
    const double v2 = 2.0 * cur(y, x);
    grad << 0.5 * (cur(y, x + 1) - cur(y, x - 1)), 0.5 * (cur(y + 1, x) - cur(y - 1, x)),
        0.5 * (next(y, x) - prev(y, x));
    dxx = cur(y, x + 1) + cur(y, x - 1) - v2;
    dyy = cur(y + 1, x) + cur(y - 1, x) - v2;
    const double dss = next(y, x) + prev(y, x) - v2;
    dxy = 0.25 * (cur(y + 1, x + 1) - cur(y + 1, x - 1) - cur(y - 1, x + 1) + cur(y - 1, x - 1));
    const double dxs = 0.25 * (next(y, x + 1) - next(y, x - 1) - prev(y, x + 1) + prev(y, x - 1));
    const double dys = 0.25 * (next(y + 1, x) - next(y - 1, x) - prev(y + 1, x) + prev(y - 1, x));
    Eigen::Matrix3d hess;
    hess << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
    const Eigen::FullPivLU<Eigen::Matrix3d> lu(hess);
    if (!lu.isInvertible()) return false;
    offset = -lu.solve(grad);
    if ((offset.array().abs() < 0.5).all()) {
      converged = true;
      break;
    }
    if ((offset.array().abs() > 1e4).any()) return false;
    x += static_cast<int>(std::lround(offset[0]));
    y += static_cast<int>(std::lround(offset[1]));
    layer += static_cast<int>(std::lround(offset[2]));
    const int h = static_cast<int>(cur.rows()), w = static_cast<int>(cur.cols());
    if (layer < 1 || layer > s || x < kBorder || x >= w - kBorder || y < kBorder || y >= h - kBorder) return false;
  }
  if (!converged) return false;
  const double contrast = oc.dog[static_cast<std::size_t>(layer)](y, x) + 0.5 * grad.dot(offset);
  if (std::abs(contrast) < opt.contrast_threshold / s) return false;
  const double tr = dxx + dyy;
  const double det = dxx * dyy - dxy * dxy;
  const double r = opt.edge_ratio;
  if (det <= 0 || tr * tr * r >= (r + 1) * (r + 1) * det) return false;
  out.layer = layer;
  out.ox = x + offset[0];
  out.oy = y + offset[1];
  out.osigma = opt.base_sigma * std::pow(2.0, (layer + offset[2]) / s);
  out.response = std::abs(contrast);
  return true;
}

inline void gradient_at(const FImage& img, int y, int x, double& gx, double& gy) {
  gx = static_cast<double>(img(y, x + 1)) - img(y, x - 1);
  gy = static_cast<double>(img(y + 1, x)) - img(y - 1, x);
}

void orientations(const FImage& img, const Candidate& c, std::vector<Candidate>& out) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  const int cx = static_cast<int>(std::lround(c.ox));
  const int cy = static_cast<int>(std::lround(c.oy));
  const double sigma = 1.5 * c.osigma;
  const int radius = static_cast<int>(std::lround(3.0 * sigma));
  const double wscale = -1.0 / (2.0 * sigma * sigma);
  std::array<double, kOriBins> hist{};
  for (int dy = -radius; dy <= radius; ++dy) {
    const int y = cy + dy;
    if (y <= 0 || y >= h - 1) continue;
    for (int dx = -radius; dx <= radius; ++dx) {
      const int x = cx + dx;
      if (x <= 0 || x >= w - 1) continue;
      double gx, gy;
      gradient_at(img, y, x, gx, gy);
      double ang = std::atan2(gy, gx);
      if (ang < 0) ang += kTwoPi;
      int bin = static_cast<int>(std::lround(kOriBins * ang / kTwoPi));
      bin = (bin % kOriBins + kOriBins) % kOriBins;
      hist[static_cast<std::size_t>(bin)] += std::exp((dx * dx + dy * dy) * wscale) * std::hypot(gx, gy);
    }
  }
  std::array<double, kOriBins> smooth{};
  for (int i = 0; i < kOriBins; ++i) {
    auto at = [&](int j) { return hist[static_cast<std::size_t>((j % kOriBins + kOriBins) % kOriBins)]; };
    smooth[static_cast<std::size_t>(i)] =
        (at(i - 2) + at(i + 2)) * (1.0 / 16) + (at(i - 1) + at(i + 1)) * (4.0 / 16) + at(i) * (6.0 / 16);
  }
  const double peak = *std::max_element(smooth.begin(), smooth.end());
  if (peak <= 0) return;
  for (int i = 0; i < kOriBins; ++i) {
    const double l = smooth[static_cast<std::size_t>((i + kOriBins - 1) % kOriBins)];
    const double r = smooth[static_cast<std::size_t>((i + 1) % kOriBins)];
    const double v = smooth[static_cast<std::size_t>(i)];
    if (v > l && v > r && v >= 0.8 * peak) {
      double bin = i + 0.5 * (l - r) / (l - 2 * v + r);
      if (bin < 0) bin += kOriBins;
      if (bin >= kOriBins) bin -= kOriBins;
      Candidate oc = c;
      oc.orientation = kTwoPi * bin / kOriBins;
      out.push_back(oc);
    }
  }
}

bool describe(const FImage& img, const Candidate& c, Eigen::Ref<Eigen::Matrix<float, 1, 128>> desc) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  const int cx = static_cast<int>(std::lround(c.ox));
  const int cy = static_cast<int>(std::lround(c.oy));
  const double hist_width = 3.0 * c.osigma;
  int radius = static_cast<int>(std::lround(hist_width * std::sqrt(2.0) * (kDescWidth + 1) * 0.5));
  radius = std::min(radius, static_cast<int>(std::hypot(w, h)));
  const double cos_t = std::cos(c.orientation) / hist_width;
  const double sin_t = std::sin(c.orientation) / hist_width;
  const double bins_per_rad = kDescBins / kTwoPi;
  const double exp_scale = -1.0 / (kDescWidth * kDescWidth * 0.5);
  constexpr int kSide = kDescWidth + 2;
  std::array<double, kSide * kSide * kDescBins> hist{};

  for (int i = -radius; i <= radius; ++i) {
    const int y = cy + i;
    if (y <= 0 || y >= h - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int x = cx + j;
      if (x <= 0 || x >= w - 1) continue;
      // Offsets rotated into the keypoint frame (rotation by -orientation).
      const double c_rot = j * cos_t + i * sin_t;
      const double r_rot = -j * sin_t + i * cos_t;
      const double rbin = r_rot + kDescWidth / 2.0 - 0.5;
      const double cbin = c_rot + kDescWidth / 2.0 - 0.5;
      if (rbin <= -1 || rbin >= kDescWidth || cbin <= -1 || cbin >= kDescWidth) continue;
      double gx, gy;
      gradient_at(img, y, x, gx, gy);
      const double mag = std::hypot(gx, gy) * std::exp((c_rot * c_rot + r_rot * r_rot) * exp_scale);
      double obin = (std::atan2(gy, gx) - c.orientation) * bins_per_rad;
      obin = std::fmod(obin, static_cast<double>(kDescBins));
      if (obin < 0) obin += kDescBins;

      const int r0 = static_cast<int>(std::floor(rbin));
      const int c0 = static_cast<int>(std::floor(cbin));
      const int o0 = static_cast<int>(std::floor(obin));
      const double dr = rbin - r0, dc = cbin - c0, dor = obin - o0;
      for (int a = 0; a <= 1; ++a) {
        const double wr = a ? dr : 1.0 - dr;
        for (int b = 0; b <= 1; ++b) {
          const double wc = b ? dc : 1.0 - dc;
          for (int e = 0; e <= 1; ++e) {
            const double wo = e ? dor : 1.0 - dor;
            const int ob = (o0 + e) % kDescBins;
            hist[static_cast<std::size_t>(((r0 + 1 + a) * kSide + (c0 + 1 + b)) * kDescBins + ob)] += mag * wr * wc * wo;
          }
        }
      }
    }
  }

  Eigen::Matrix<double, 1, 128> v;
  for (int r = 0; r < kDescWidth; ++r)
    for (int cc = 0; cc < kDescWidth; ++cc)
      for (int o = 0; o < kDescBins; ++o)
        v[(r * kDescWidth + cc) * kDescBins + o] = hist[static_cast<std::size_t>(((r + 1) * kSide + (cc + 1)) * kDescBins + o)];
  double norm = v.norm();
  if (norm < 1e-12) return false;
  v = v.cwiseMin(0.2 * norm);
  norm = v.norm();
  if (norm < 1e-12) return false;
  desc = (v / norm).cast<float>();
  return true;
}

}  // namespace

KeypointSet detect_and_describe(const GrayImage& img, const DetectorOptions& opt) {
  KeypointSet result;
  result.descriptors.resize(0, 128);
  if (img.rows() < 32 || img.cols() < 32) return result;
  const int s = opt.scales_per_octave;
  const std::vector<Octave> pyr = build_pyramid(img, opt);
  const double prefilter = 0.5 * opt.contrast_threshold / s;

  std::vector<Candidate> oriented;
  for (int o = 0; o < static_cast<int>(pyr.size()); ++o) {
    const Octave& oc = pyr[static_cast<std::size_t>(o)];
    const int h = static_cast<int>(oc.dog[0].rows()), w = static_cast<int>(oc.dog[0].cols());
    for (int layer = 1; layer <= s; ++layer) {
      const FImage& d = oc.dog[static_cast<std::size_t>(layer)];
      for (int y = kBorder; y < h - kBorder; ++y)
        for (int x = kBorder; x < w - kBorder; ++x) {
          if (std::abs(d(y, x)) <= prefilter || !is_extremum(oc.dog, layer, y, x)) continue;
          int ly = layer, yy = y, xx = x;
          Candidate c;
          c.octave = o;
          if (!refine(oc, s, opt, ly, yy, xx, c)) continue;
          orientations(oc.gauss[static_cast<std::size_t>(c.layer)], c, oriented);
        }
    }
  }

  std::stable_sort(oriented.begin(), oriented.end(), [](const Candidate& a, const Candidate& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.octave != b.octave) return a.octave < b.octave;
    if (a.oy != b.oy) return a.oy < b.oy;
    return a.ox < b.ox;
  });
  if (opt.max_keypoints > 0 && oriented.size() > static_cast<std::size_t>(opt.max_keypoints))
    oriented.resize(static_cast<std::size_t>(opt.max_keypoints));

  result.descriptors.resize(static_cast<Eigen::Index>(oriented.size()), 128);
  Eigen::Index row = 0;
  for (const Candidate& c : oriented) {
    const FImage& g = pyr[static_cast<std::size_t>(c.octave)].gauss[static_cast<std::size_t>(c.layer)];
    if (!describe(g, c, result.descriptors.row(row))) continue;
    const double f = std::ldexp(1.0, c.octave);
    result.keypoints.push_back({c.ox * f, c.oy * f, c.osigma * f, c.orientation, c.response, c.octave});
    ++row;
  }
  result.descriptors.conservativeResize(row, 128);
  return result;
}

MatchSet match_descriptors(const KeypointSet& a, const KeypointSet& b, double ratio, double single_target_cap) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("match_descriptors: ratio must lie in (0, 1)");
  MatchSet out;
  if (a.size() == 0 || b.size() == 0) return out;
  const Eigen::MatrixXd bd = b.descriptors.cast<double>();
  const Eigen::MatrixXd ad = a.descriptors.cast<double>();
  for (Eigen::Index i = 0; i < ad.rows(); ++i) {
    const Eigen::VectorXd d2 = (bd.rowwise() - ad.row(i)).rowwise().squaredNorm();
    Eigen::Index best = 0;
    double b1 = d2[0], b2 = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 1; j < d2.size(); ++j) {
      if (d2[j] < b1) {
        b2 = b1;
        b1 = d2[j];
        best = j;
      } else if (d2[j] < b2) {
        b2 = d2[j];
      }
    }
    const double d1 = std::sqrt(b1);
    const bool keep = d2.size() == 1 ? d1 < single_target_cap : d1 < ratio * std::sqrt(b2);
    if (keep) out.push_back({static_cast<int>(i), static_cast<int>(best), d1});
  }
  return out;
}

}  // namespace e2vts::autolabel
