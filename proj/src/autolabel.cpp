#include "e2vts/autolabel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "e2vts/imgcore.hpp"

namespace e2vts::autolabel {

Homography normalize_homography(const Homography& h) {
  if (std::abs(h(2, 2)) > 1e-15) return h / h(2, 2);
  return h;
}

bool is_invertible(const Homography& h) { return std::abs(h.determinant()) > 1e-12; }

Eigen::Matrix3d hartley_normalization(std::span<const Point2> pts) {
  Point2 c = Point2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - c).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

Homography dlt_homography(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() != dst.size() || src.size() < 4) throw InvalidArgument("dlt_homography: need >= 4 correspondences");
  const Eigen::Matrix3d ts = hartley_normalization(src);
  const Eigen::Matrix3d td = hartley_normalization(dst);
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d p = ts * src[static_cast<std::size_t>(i)].homogeneous();
    const Eigen::Vector3d q = td * dst[static_cast<std::size_t>(i)].homogeneous();
    const double x = p.x(), y = p.y(), u = q.x(), v = q.y();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::Matrix<double, 9, 1> hv;
  if (n == 4) {
    // Square up the minimal system so the null vector comes from a full SVD.
    Eigen::Matrix<double, 9, 9> full = Eigen::Matrix<double, 9, 9>::Zero();
    full.topRows(8) = a;
    const Eigen::JacobiSVD<Eigen::Matrix<double, 9, 9>> svd(full, Eigen::ComputeFullV);
    hv = svd.matrixV().col(8);
  } else {
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    hv = svd.matrixV().col(8);
  }
  Eigen::Matrix3d hn;
  hn << hv[0], hv[1], hv[2], hv[3], hv[4], hv[5], hv[6], hv[7], hv[8];
  return normalize_homography(td.inverse() * hn * ts);
}

Point2 apply_homography(const Homography& h, const Point2& p) {
  const Eigen::Vector3d q = h * p.homogeneous();
  return q.hnormalized();
}

double reprojection_error(const Homography& h, const Point2& src, const Point2& dst) {
  const Eigen::Vector3d q = h * src.homogeneous();
  if (std::abs(q.z()) < 1e-12) return std::numeric_limits<double>::infinity();
  return (q.hnormalized() - dst).norm();
}

namespace {

bool collinear(const Point2& a, const Point2& b, const Point2& c) {
  const double area2 = std::abs(cross2(b - a, c - a));
  const double scale = std::max({(b - a).squaredNorm(), (c - a).squaredNorm(), (c - b).squaredNorm(), 1e-12});
  return area2 < 1e-6 * scale;
}

bool degenerate(const std::array<Point2, 4>& p) {
  return collinear(p[0], p[1], p[2]) || collinear(p[0], p[1], p[3]) || collinear(p[0], p[2], p[3]) ||
         collinear(p[1], p[2], p[3]);
}

int score(const Homography& h, std::span<const Point2> src, std::span<const Point2> dst, double thr,
          std::vector<std::uint8_t>& mask, double& mean_err) {
  int count = 0;
  double sum = 0.0;
  mask.assign(src.size(), 0);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double e = reprojection_error(h, src[i], dst[i]);
    if (e < thr) {
      mask[i] = 1;
      ++count;
      sum += e;
    }
  }
  mean_err = count ? sum / count : 0.0;
  return count;
}

}  // namespace

HomographyEstimate estimate_homography(std::span<const Point2> src, std::span<const Point2> dst,
                                       const RansacOptions& opt) {
  if (src.size() != dst.size()) throw InvalidArgument("estimate_homography: point lists differ in length");
  if (src.size() < 4) throw InvalidArgument("estimate_homography: at least 4 matches are required");
  const std::size_t n = src.size();
  std::mt19937_64 rng(opt.seed);
  HomographyEstimate best;
  best.inlier_count = -1;
  std::vector<std::uint8_t> mask;
  double mean_err = 0.0;
  long long needed = opt.max_iters;
  int iter = 0;
  for (; iter < std::min<long long>(needed, opt.max_iters); ++iter) {
    std::array<std::size_t, 4> idx{};
    for (std::size_t k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = static_cast<std::size_t>(rng() % n);
        fresh = std::find(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx[k]) ==
                idx.begin() + static_cast<std::ptrdiff_t>(k);
      }
    }
    std::array<Point2, 4> s{}, d{};
    for (std::size_t k = 0; k < 4; ++k) {
      s[k] = src[idx[k]];
      d[k] = dst[idx[k]];
    }
    if (degenerate(s) || degenerate(d)) continue;
    const Homography h = dlt_homography(s, d);
    if (!h.allFinite() || !is_invertible(h)) continue;
    const int count = score(h, src, dst, opt.inlier_px, mask, mean_err);
    if (count > best.inlier_count) {
      best.h = h;
      best.inlier_count = count;
      best.inlier_mask = mask;
      best.mean_inlier_error = mean_err;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double denom = std::log(std::max(1e-300, 1.0 - std::pow(w, 4.0)));
      if (w >= 1.0) {
        needed = iter + 1;
      } else if (denom < 0.0) {
        const double k = std::ceil(std::log(1.0 - opt.confidence) / denom);
        needed = std::isfinite(k) ? static_cast<long long>(std::min(k, 1e9)) : opt.max_iters;
      }
    }
  }
  if (best.inlier_count < 4) throw RuntimeFailure("estimate_homography: no non-degenerate model found");
  best.iterations = iter;

  // Refit on the consensus set and re-classify until the set is stable. The
  // returned model is always the refit of the returned set.
  constexpr int kRefitRounds = 10;
  for (int round = 0; round < kRefitRounds; ++round) {
    std::vector<Point2> is, id;
    for (std::size_t i = 0; i < n; ++i)
      if (best.inlier_mask[i]) {
        is.push_back(src[i]);
        id.push_back(dst[i]);
      }
    const Homography h = dlt_homography(is, id);
    if (!h.allFinite() || !is_invertible(h)) break;
    best.h = h;
    double sum = 0.0;
    for (std::size_t k = 0; k < is.size(); ++k) sum += reprojection_error(h, is[k], id[k]);
    best.mean_inlier_error = sum / static_cast<double>(is.size());
    const int count = score(h, src, dst, opt.inlier_px, mask, mean_err);
    if (count < 4 || mask == best.inlier_mask || round + 1 == kRefitRounds) break;
    best.inlier_count = count;
    best.inlier_mask = mask;
  }
  return best;
}

Quad warp_quad(const Quad& q, const Homography& h) {
  Quad out;
  for (std::size_t i = 0; i < 4; ++i) {
    const Eigen::Vector3d p = h * q.corners[i].homogeneous();
    if (std::abs(p.z()) <= 1e-9) throw InvalidArgument("warp_quad: corner maps to infinity");
    out.corners[i] = p.hnormalized();
  }
  return out;
}

namespace {

struct StepOutcome {
  StepDiagnostics diag;
  Homography h = Homography::Identity();
};

StepOutcome estimate_step(const KeypointSet& a, const KeypointSet& b, const PropagationOptions& opt) {
  StepOutcome out;
  const MatchSet m = match_descriptors(a, b, opt.lowe_ratio);
  out.diag.matches = static_cast<int>(m.size());
  if (m.size() < 4) {
    out.diag.failed = true;
    out.diag.reason = "fewer than 4 matches";
    return out;
  }
  std::vector<Point2> ps, pt;
  for (const Match& mm : m) {
    const auto& ka = a.keypoints[static_cast<std::size_t>(mm.source)];
    const auto& kb = b.keypoints[static_cast<std::size_t>(mm.target)];
    ps.emplace_back(ka.x, ka.y);
    pt.emplace_back(kb.x, kb.y);
  }
  try {
    const HomographyEstimate est = estimate_homography(ps, pt, opt.ransac);
    out.diag.inliers = est.inlier_count;
    out.diag.mean_reprojection_error = est.mean_inlier_error;
    out.h = est.h;
    const double ratio = static_cast<double>(est.inlier_count) / static_cast<double>(m.size());
    if (est.inlier_count < opt.min_inliers || ratio < opt.min_inlier_ratio) {
      out.diag.failed = true;
      std::ostringstream os;
      os << "insufficient consensus (" << est.inlier_count << " of " << m.size() << " matches)";
      out.diag.reason = os.str();
    }
  } catch (const RuntimeFailure& e) {
    out.diag.failed = true;
    out.diag.reason = e.what();
  }
  return out;
}

}  // namespace

PropagationResult propagate_annotations(const io::FrameSource& frames, std::span<const Annotation> seeds,
                                        const PropagationOptions& opt, const PropagationCallback& on_frame) {
  if (frames.size() == 0) throw InvalidArgument("propagate_annotations: empty frame list");
  if (seeds.empty()) throw InvalidArgument("propagate_annotations: at least one seed quad is required");
  PropagationResult result;

  FrameAnnotations first{frames.index_at(0), {seeds.begin(), seeds.end()}};
  result.frames.push_back(first);
  if (on_frame) on_frame(first, nullptr);
  if (frames.size() == 1) return result;

  KeypointSet source_kp;
  try {
    source_kp = detect_and_describe(to_grayscale(frames.load(0)), opt.detector);
  } catch (const std::exception& e) {
    StepDiagnostics d{first.index, first.index, 0, 0, 0.0, true, std::string("decode error: ") + e.what()};
    result.diagnostics.push_back(d);
    result.halted_at = first.index;
    result.halt_reason = d.reason;
    return result;
  }
  std::vector<Annotation> current(seeds.begin(), seeds.end());

  for (int pos = 1; pos < frames.size(); ++pos) {
    const int index = frames.index_at(pos);
    StepOutcome step;
    KeypointSet target_kp;
    try {
      target_kp = detect_and_describe(to_grayscale(frames.load(pos)), opt.detector);
      step = estimate_step(source_kp, target_kp, opt);
    } catch (const std::exception& e) {
      step.diag.failed = true;
      step.diag.reason = std::string("decode error: ") + e.what();
    }
    step.diag.from_index = frames.index_at(pos - 1);
    step.diag.to_index = index;

    FrameAnnotations fa{index, {}};
    if (!step.diag.failed) {
      try {
        for (const Annotation& a : current) {
          Annotation b = a;
          b.quad = warp_quad(a.quad, step.h);
          b.source = Provenance::Propagated;
          b.stale = false;
          b.origin = first.index;
          fa.annotations.push_back(std::move(b));
        }
      } catch (const InvalidArgument& e) {
        step.diag.failed = true;
        step.diag.reason = e.what();
      }
    }
    result.diagnostics.push_back(step.diag);
    if (step.diag.failed) {
      result.halted_at = index;
      result.halt_reason = step.diag.reason;
      if (on_frame) on_frame(FrameAnnotations{index, {}}, &result.diagnostics.back());
      break;
    }
    result.frames.push_back(fa);
    if (on_frame) on_frame(fa, &result.diagnostics.back());
    current = std::move(fa.annotations);
    source_kp = std::move(target_kp);
  }
  return result;
}

PropagationResult propagate_annotations(std::span<const Frame> frames, std::span<const Annotation> seeds,
                                        const PropagationOptions& opt, const PropagationCallback& on_frame) {
  return propagate_annotations(io::MemorySource({frames.begin(), frames.end()}), seeds, opt, on_frame);
}

AnnotationDocument to_document(const PropagationResult& r) {
  AnnotationDocument doc;
  doc.frames = r.frames;
  doc.diagnostics = r.diagnostics;
  doc.normalize();
  return doc;
}

}  // namespace e2vts::autolabel
