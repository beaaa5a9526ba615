#include "e2vts/imgcore.hpp"

#include <cmath>
#include <numbers>

namespace e2vts {

void Frame::validate() const {
  if (width < 1 || height < 1) throw InvalidArgument("frame dimensions must be >= 1");
  if (channels != 1 && channels != 3) throw InvalidArgument("frame must have 1 or 3 channels");
  if (pixels.size() != static_cast<std::size_t>(width) * height * channels)
    throw InvalidArgument("frame buffer length does not match dimensions");
}

Frame Frame::from_planes(int index, const GrayImage& r, const GrayImage& g, const GrayImage& b) {
  if (r.rows() != g.rows() || r.rows() != b.rows() || r.cols() != g.cols() || r.cols() != b.cols())
    throw InvalidArgument("from_planes: plane sizes differ");
  Frame f(index, static_cast<int>(r.cols()), static_cast<int>(r.rows()), 3);
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      f.at(x, y, 0) = r(y, x);
      f.at(x, y, 1) = g(y, x);
      f.at(x, y, 2) = b(y, x);
    }
  return f;
}

Frame Frame::from_gray(int index, const GrayImage& gray) {
  Frame f(index, static_cast<int>(gray.cols()), static_cast<int>(gray.rows()), 1);
  std::copy(gray.data(), gray.data() + gray.size(), f.pixels.begin());
  return f;
}

GrayImage Frame::channel(int c) const {
  GrayImage out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out(y, x) = at(x, y, c);
  return out;
}

Frame crop(const Frame& frame, const PixelRect& rect) {
  if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 > frame.width || rect.y1 > frame.height ||
      rect.width() < 1 || rect.height() < 1)
    throw InvalidArgument("crop: rectangle outside frame");
  Frame out(frame.index, rect.width(), rect.height(), frame.channels);
  out.timestamp = frame.timestamp;
  const auto row_bytes = static_cast<std::size_t>(rect.width()) * frame.channels;
  for (int y = 0; y < rect.height(); ++y) {
    const auto* src = &frame.pixels[(static_cast<std::size_t>(rect.y0 + y) * frame.width + rect.x0) * frame.channels];
    std::copy_n(src, row_bytes, &out.pixels[static_cast<std::size_t>(y) * row_bytes]);
  }
  return out;
}

GrayImage to_grayscale(const Frame& frame) {
  frame.validate();
  if (frame.channels == 1) return frame.channel(0);
  GrayImage out(frame.height, frame.width);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      out(y, x) = clamp_u8(0.299 * frame.at(x, y, 0) + 0.587 * frame.at(x, y, 1) + 0.114 * frame.at(x, y, 2));
  return out;
}

YuvPlanes rgb_to_yuv(const Frame& frame) {
  frame.validate();
  if (frame.channels != 3) throw InvalidArgument("rgb_to_yuv: 3-channel frame required");
  YuvPlanes p{GrayImage(frame.height, frame.width), GrayImage(frame.height, frame.width),
              GrayImage(frame.height, frame.width)};
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x) {
      const double r = frame.at(x, y, 0);
      const double g = frame.at(x, y, 1);
      const double b = frame.at(x, y, 2);
      p.y(y, x) = clamp_u8(0.299 * r + 0.587 * g + 0.114 * b);
      p.u(y, x) = clamp_u8(-0.168736 * r - 0.331264 * g + 0.5 * b + 128.0);
      p.v(y, x) = clamp_u8(0.5 * r - 0.418688 * g - 0.081312 * b + 128.0);
    }
  return p;
}

Eigen::VectorXd gaussian_kernel_1d(double sigma, int radius) {
  if (sigma <= 0.0) throw InvalidArgument("gaussian sigma must be positive");
  if (radius < 0) radius = static_cast<int>(std::ceil(3.0 * sigma));
  Eigen::VectorXd k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  return k / k.sum();
}

GrayImage gaussian_blur_u8(const GrayImage& img, double sigma) {
  return gaussian_blur(img, sigma).unaryExpr([](double v) { return clamp_u8(v); });
}

Frame gaussian_blur_frame(const Frame& frame, double sigma) {
  Frame out = frame;
  for (int c = 0; c < frame.channels; ++c) {
    const GrayImage blurred = gaussian_blur_u8(frame.channel(c), sigma);
    for (int y = 0; y < frame.height; ++y)
      for (int x = 0; x < frame.width; ++x) out.at(x, y, c) = blurred(y, x);
  }
  return out;
}

Kernel laplacian_kernel() {
  Kernel k(3, 3);
  k << 0, 1, 0, 1, -4, 1, 0, 1, 0;
  return k;
}

namespace {

using cplx = std::complex<double>;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Plain product; operator* on std::complex takes the slow Annex G path.
inline cplx mul(const cplx& a, const cplx& b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

}  // namespace

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n <= 1) return;
  std::size_t rest = n;
  for (std::size_t p : {4, 2, 3, 5, 7}) {
    while (rest % p == 0) {
      factors_.push_back(p);
      rest /= p;
    }
  }
  if (is_pow2(n)) {
    kind_ = Kind::Radix2;
    m_ = n;
  } else if (rest == 1) {
    kind_ = Kind::Mixed;
    m_ = n;
  } else {
    kind_ = Kind::Bluestein;
    m_ = 1;
    while (m_ < 2 * n - 1) m_ <<= 1;
  }
  // Twiddles evaluated directly; a recurrence drifts for long transforms.
  twiddles_.resize(m_);
  for (std::size_t k = 0; k < m_; ++k)
    twiddles_[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(m_));
  if (kind_ == Kind::Mixed) return;
  bitrev_.resize(m_);
  for (std::size_t i = 1, j = 0; i < m_; ++i) {
    std::size_t bit = m_ >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    bitrev_[i] = j;
  }
  if (kind_ == Kind::Radix2) return;

  // Chirp-z: X_k = c_k * sum_j (a_j c_j) conj(c_{k-j}), c_j = exp(-i pi j^2 / n).
  chirp_.resize(n_);
  for (std::size_t k = 0; k < n_; ++k) {
    // k^2 mod 2n keeps the angle argument small.
    const std::size_t k2 = (k * k) % (2 * n_);
    chirp_[k] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n_));
  }
  chirp_fft_.assign(m_, 0.0);
  chirp_fft_[0] = std::conj(chirp_[0]);
  for (std::size_t k = 1; k < n_; ++k) chirp_fft_[k] = chirp_fft_[m_ - k] = std::conj(chirp_[k]);
  radix2(chirp_fft_.data());
}

void FftPlan::radix2(cplx* a) const {
  const std::size_t n = m_;
  for (std::size_t i = 1; i < n; ++i)
    if (i < bitrev_[i]) std::swap(a[i], a[bitrev_[i]]);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len)
      for (std::size_t k = 0; k < half; ++k) {
        const cplx u = a[i + k];
        const cplx v = mul(a[i + k + half], twiddles_[k * stride]);
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
  }
}

// Decimation in time over factors_[level], recursing on the strided sub-sequences.
void FftPlan::mixed(const cplx* in, cplx* out, std::size_t len, std::size_t stride, std::size_t level) const {
  if (len == 1) {
    out[0] = in[0];
    return;
  }
  const std::size_t p = factors_[level];
  const std::size_t m = len / p;
  for (std::size_t r = 0; r < p; ++r) mixed(in + r * stride, out + r * m, m, stride * p, level + 1);
  const std::size_t step = n_ / len;
  const std::size_t pstep = n_ / p;
  cplx t[7];
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t r = 0; r < p; ++r) t[r] = r == 0 ? out[k] : mul(out[r * m + k], twiddles_[r * k * step]);
    if (p == 2) {
      out[k] = t[0] + t[1];
      out[k + m] = t[0] - t[1];
      continue;
    }
    if (p == 4) {
      const cplx a = t[0] + t[2], b = t[0] - t[2], c = t[1] + t[3];
      const cplx d = t[1] - t[3];
      const cplx md(d.imag(), -d.real());  // -i * d
      out[k] = a + c;
      out[k + m] = b + md;
      out[k + 2 * m] = a - c;
      out[k + 3 * m] = b - md;
      continue;
    }
    if (p == 3) {
      constexpr double kS = 0.86602540378443864676;  // sqrt(3) / 2
      const cplx sum = t[1] + t[2], diff = t[1] - t[2];
      const cplx base = t[0] - 0.5 * sum;
      const cplx rot(kS * diff.imag(), -kS * diff.real());  // -i * sqrt(3)/2 * diff
      out[k] = t[0] + sum;
      out[k + m] = base + rot;
      out[k + 2 * m] = base - rot;
      continue;
    }
    for (std::size_t q = 0; q < p; ++q) {
      cplx acc = t[0];
      for (std::size_t r = 1; r < p; ++r) acc += mul(t[r], twiddles_[((r * q) % p) * pstep]);
      out[k + q * m] = acc;
    }
  }
}

void FftPlan::transform(std::vector<cplx>& data, bool inverse) const {
  if (data.size() != n_) throw InvalidArgument("FftPlan: length mismatch");
  if (kind_ == Kind::Trivial) return;
  // Unnormalized inverse via conj(DFT(conj(x))).
  if (inverse)
    for (auto& v : data) v = std::conj(v);
  switch (kind_) {
    case Kind::Radix2:
      radix2(data.data());
      break;
    case Kind::Mixed: {
      const std::vector<cplx> in = data;
      mixed(in.data(), data.data(), n_, 1, 0);
      break;
    }
    case Kind::Bluestein: {
      std::vector<cplx> fa(m_, 0.0);
      for (std::size_t k = 0; k < n_; ++k) fa[k] = mul(data[k], chirp_[k]);
      radix2(fa.data());
      for (std::size_t i = 0; i < m_; ++i) fa[i] = std::conj(mul(fa[i], chirp_fft_[i]));
      radix2(fa.data());
      const double scale = 1.0 / static_cast<double>(m_);
      for (std::size_t k = 0; k < n_; ++k) data[k] = mul(std::conj(fa[k]) * scale, chirp_[k]);
      break;
    }
    case Kind::Trivial:
      break;
  }
  if (inverse)
    for (auto& v : data) v = std::conj(v);
}

RealImage dft2_magnitude(const RealImage& img) {
  const auto h = static_cast<std::size_t>(img.rows());
  const auto w = static_cast<std::size_t>(img.cols());
  RealImage mag(img.rows(), img.cols());
  if (h == 0 || w == 0) return mag;
  const FftPlan row_plan(w);
  const FftPlan col_plan(h);
  std::vector<cplx> grid(h * w);
  std::vector<cplx> line(w);
  // Two real rows per complex transform, separated by conjugate symmetry.
  for (std::size_t y = 0; y < h; y += 2) {
    const bool pair = y + 1 < h;
    for (std::size_t x = 0; x < w; ++x) line[x] = {img(y, x), pair ? img(y + 1, x) : 0.0};
    row_plan.transform(line);
    for (std::size_t k = 0; k < w; ++k) {
      const cplx zk = line[k];
      const cplx zn = std::conj(line[(w - k) % w]);
      grid[y * w + k] = 0.5 * (zk + zn);
      if (pair) grid[(y + 1) * w + k] = cplx(0.0, -0.5) * (zk - zn);
    }
  }
  line.resize(h);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) line[y] = grid[y * w + x];
    col_plan.transform(line);
    for (std::size_t y = 0; y < h; ++y) mag(y, x) = std::sqrt(line[y].real() * line[y].real() + line[y].imag() * line[y].imag());
  }
  return mag;
}

void fft_inplace(std::vector<cplx>& data, bool inverse) { FftPlan(data.size()).transform(data, inverse); }

BinaryImage canny(const GrayImage& img, double low, double high) {
  if (low < 0.0 || high < 0.0) throw InvalidArgument("canny: thresholds must be non-negative");
  if (low > high) throw InvalidArgument("canny: low threshold exceeds high threshold");
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  BinaryImage edges = BinaryImage::Zero(h, w);
  if (h == 0 || w == 0) return edges;

  // Integer 5x5 Gaussian, sigma 1.4, total weight 159.
  static constexpr int kGauss[5][5] = {{2, 4, 5, 4, 2},
                                       {4, 9, 12, 9, 4},
                                       {5, 12, 15, 12, 5},
                                       {4, 9, 12, 9, 4},
                                       {2, 4, 5, 4, 2}};
  constexpr double kGaussSum = 159.0;
  auto cy = [h](int y) { return std::clamp(y, 0, h - 1); };
  auto cx = [w](int x) { return std::clamp(x, 0, w - 1); };

  // Replicate-padded copies keep the inner loops free of bounds checks.
  Plane<std::int32_t> src(h + 4, w + 4);
  for (int y = 0; y < h + 4; ++y)
    for (int x = 0; x < w + 4; ++x) src(y, x) = img(cy(y - 2), cx(x - 2));
  // The kernel is mirror-symmetric on both axes: fold rows, then columns.
  const int fold[3][3] = {{kGauss[0][0], kGauss[0][1], kGauss[0][2]},
                          {kGauss[1][0], kGauss[1][1], kGauss[1][2]},
                          {kGauss[2][0], kGauss[2][1], kGauss[2][2]}};
  const Plane<std::int32_t> rows[3] = {src.middleRows(0, h) + src.middleRows(4, h),
                                       src.middleRows(1, h) + src.middleRows(3, h), src.middleRows(2, h)};
  Plane<std::int32_t> core = Plane<std::int32_t>::Zero(h, w);
  for (int j = 0; j < 3; ++j) {
    const auto& r = rows[j];
    core.array() += fold[j][0] * (r.middleCols(0, w) + r.middleCols(4, w)).array() +
                    fold[j][1] * (r.middleCols(1, w) + r.middleCols(3, w)).array() +
                    fold[j][2] * r.middleCols(2, w).array();
  }
  Plane<std::int32_t> smooth(h + 2, w + 2);
  for (int y = 0; y < h + 2; ++y)
    for (int x = 0; x < w + 2; ++x) smooth(y, x) = core(cy(y - 1), cx(x - 1));

  Plane<std::int64_t> gx(h, w), gy(h, w), mag2(h, w);
  for (int y = 0; y < h; ++y) {
    const std::int32_t* up = &smooth(y, 1);
    const std::int32_t* mid = &smooth(y + 1, 1);
    const std::int32_t* dn = &smooth(y + 2, 1);
    for (int x = 0; x < w; ++x) {
      const std::int64_t dx = (up[x + 1] + 2 * mid[x + 1] + dn[x + 1]) - (up[x - 1] + 2 * mid[x - 1] + dn[x - 1]);
      const std::int64_t dy = (dn[x - 1] + 2 * dn[x] + dn[x + 1]) - (up[x - 1] + 2 * up[x] + up[x + 1]);
      gx(y, x) = dx;
      gy(y, x) = dy;
      mag2(y, x) = dx * dx + dy * dy;
    }
  }

  // Thresholds are in units of the normalized smoothed image.
  const double lo_s = low * kGaussSum;
  const double hi_s = high * kGaussSum;
  const double lo2 = lo_s * lo_s;
  const double hi2 = hi_s * hi_s;

  // 0 = suppressed, 1 = weak, 2 = strong.
  Plane<std::uint8_t> klass = Plane<std::uint8_t>::Zero(h, w);
  const double t1 = std::tan(std::numbers::pi / 8.0);
  const double t2 = std::tan(3.0 * std::numbers::pi / 8.0);
  auto m2 = [&](int x, int y) -> std::int64_t {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0;
    return mag2(y, x);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::int64_t m = mag2(y, x);
      if (m == 0 || static_cast<double>(m) < lo2) continue;
      const double ax = std::abs(static_cast<double>(gx(y, x)));
      const double ay = std::abs(static_cast<double>(gy(y, x)));
      int ox = 0, oy = 0;
      if (ay <= t1 * ax) {
        ox = 1;
      } else if (ay >= t2 * ax) {
        oy = 1;
      } else if ((gx(y, x) > 0) == (gy(y, x) > 0)) {
        ox = 1;
        oy = 1;
      } else {
        ox = 1;
        oy = -1;
      }
      // Strict on the backward neighbour, non-strict forward: one pixel per symmetric ridge.
      if (m > m2(x - ox, y - oy) && m >= m2(x + ox, y + oy)) {
        klass(y, x) = static_cast<double>(m) >= hi2 ? 2 : 1;
      }
    }

  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (klass(y, x) == 2) {
        edges(y, x) = 1;
        stack.emplace_back(x, y);
      }
  while (!stack.empty()) {
    const auto [x, y] = stack.back();
    stack.pop_back();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        if (klass(ny, nx) != 0 && edges(ny, nx) == 0) {
          edges(ny, nx) = 1;
          stack.emplace_back(nx, ny);
        }
      }
  }
  return edges;
}

namespace {

// Running-window "any" (dilate) or "all" (erode) along one axis using prefix counts.
// Window covers [i - before, i + after]; outside samples count as `outside`.
void window_pass(const BinaryImage& in, BinaryImage& out, bool along_rows, int before, int after,
                 bool want_all, std::uint8_t outside) {
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  const int lines = along_rows ? h : w;
  const int len = along_rows ? w : h;
  std::vector<int> prefix(static_cast<std::size_t>(len) + 1);
  for (int l = 0; l < lines; ++l) {
    prefix[0] = 0;
    for (int i = 0; i < len; ++i) {
      const std::uint8_t v = along_rows ? in(l, i) : in(i, l);
      prefix[static_cast<std::size_t>(i) + 1] = prefix[static_cast<std::size_t>(i)] + (v ? 1 : 0);
    }
    for (int i = 0; i < len; ++i) {
      const int lo = i - before;
      const int hi = i + after;
      const int clo = std::max(lo, 0);
      const int chi = std::min(hi, len - 1);
      const int inside = chi - clo + 1;
      const int ones_inside = prefix[static_cast<std::size_t>(chi) + 1] - prefix[static_cast<std::size_t>(clo)];
      const int outside_count = (hi - lo + 1) - inside;
      const int ones = ones_inside + (outside ? outside_count : 0);
      const int total = hi - lo + 1;
      const std::uint8_t r = want_all ? (ones == total ? 1 : 0) : (ones > 0 ? 1 : 0);
      if (along_rows)
        out(l, i) = r;
      else
        out(i, l) = r;
    }
  }
}

}  // namespace

BinaryImage morph_dilate(const BinaryImage& img, int se_w, int se_h) {
  if (se_w < 1 || se_h < 1) throw InvalidArgument("structuring element dimensions must be >= 1");
  BinaryImage tmp(img.rows(), img.cols()), out(img.rows(), img.cols());
  window_pass(img, tmp, true, (se_w - 1) / 2, se_w / 2, false, 0);
  window_pass(tmp, out, false, (se_h - 1) / 2, se_h / 2, false, 0);
  return out;
}

BinaryImage morph_erode(const BinaryImage& img, int se_w, int se_h) {
  if (se_w < 1 || se_h < 1) throw InvalidArgument("structuring element dimensions must be >= 1");
  BinaryImage tmp(img.rows(), img.cols()), out(img.rows(), img.cols());
  // Reflected window so that erode(dilate(A)) contains A for even sizes too.
  window_pass(img, tmp, true, se_w / 2, (se_w - 1) / 2, true, 1);
  window_pass(tmp, out, false, se_h / 2, (se_h - 1) / 2, true, 1);
  return out;
}

BinaryImage morph_close(const BinaryImage& img, int se_w, int se_h) {
  if (se_w < 1 || se_h < 1) throw InvalidArgument("structuring element dimensions must be >= 1");
  // Zero margin wide enough to hold the dilation spill, so the erosion sees it.
  BinaryImage padded = BinaryImage::Zero(img.rows() + 2 * se_h, img.cols() + 2 * se_w);
  padded.block(se_h, se_w, img.rows(), img.cols()) = img;
  return morph_erode(morph_dilate(padded, se_w, se_h), se_w, se_h).block(se_h, se_w, img.rows(), img.cols());
}

BinaryImage bitwise_or(const BinaryImage& a, const BinaryImage& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("bitwise_or: size mismatch");
  return a.cwiseMax(b);
}

namespace {

template <typename Scalar, typename Store>
Plane<Scalar> resize_impl(const Plane<Scalar>& img, int new_w, int new_h, Store store) {
  if (new_w < 1 || new_h < 1) throw InvalidArgument("resize: target dimensions must be >= 1");
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  Plane<Scalar> out(new_h, new_w);
  const double sx = static_cast<double>(w) / new_w;
  const double sy = static_cast<double>(h) / new_h;
  for (int y = 0; y < new_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (int x = 0; x < new_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      const double top = (1.0 - tx) * static_cast<double>(img(y0, x0)) + tx * static_cast<double>(img(y0, x1));
      const double bot = (1.0 - tx) * static_cast<double>(img(y1, x0)) + tx * static_cast<double>(img(y1, x1));
      out(y, x) = store((1.0 - ty) * top + ty * bot);
    }
  }
  return out;
}

}  // namespace

GrayImage resize_bilinear(const GrayImage& img, int new_w, int new_h) {
  if (img.cols() == new_w && img.rows() == new_h) return img;
  return resize_impl(img, new_w, new_h, [](double v) { return clamp_u8(v); });
}

RealImage resize_bilinear(const RealImage& img, int new_w, int new_h) {
  if (img.cols() == new_w && img.rows() == new_h) return img;
  return resize_impl(img, new_w, new_h, [](double v) { return v; });
}

GrayImage thumbnail(const GrayImage& img, int max_side) {
  const auto longest = std::max(img.rows(), img.cols());
  if (longest <= max_side) return img;
  const double s = static_cast<double>(max_side) / static_cast<double>(longest);
  const int nw = std::max(1, static_cast<int>(std::lround(img.cols() * s)));
  const int nh = std::max(1, static_cast<int>(std::lround(img.rows() * s)));
  return resize_bilinear(img, std::min(nw, max_side), std::min(nh, max_side));
}

}  // namespace e2vts
