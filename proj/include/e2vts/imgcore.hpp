#pragma once

#include <algorithm>
#include <array>
#include <complex>
#include <vector>

#include "e2vts/image.hpp"

namespace e2vts {

/// BT.601 luma, rounded and clamped. A 1-channel frame is returned as-is.
GrayImage to_grayscale(const Frame& frame);

struct YuvPlanes {
  GrayImage y;
  GrayImage u;
  GrayImage v;
};

/// Full-range BT.601 YUV with chroma offset by 128. Requires 3 channels.
YuvPlanes rgb_to_yuv(const Frame& frame);

/// Correlation with replicate border; same-size real output, no clamping.
template <typename Scalar>
RealImage convolve2d(const Plane<Scalar>& img, const Kernel& k) {
  if (k.rows() % 2 == 0 || k.cols() % 2 == 0 || k.size() == 0) {
    throw InvalidArgument("convolve2d: kernel dimensions must be odd");
  }
  const Eigen::Index h = img.rows();
  const Eigen::Index w = img.cols();
  const Eigen::Index rh = k.rows() / 2;
  const Eigen::Index rw = k.cols() / 2;
  RealImage padded(h + 2 * rh, w + 2 * rw);
  for (Eigen::Index y = 0; y < padded.rows(); ++y) {
    const Eigen::Index sy = std::clamp<Eigen::Index>(y - rh, 0, h - 1);
    for (Eigen::Index x = 0; x < padded.cols(); ++x)
      padded(y, x) = static_cast<double>(img(sy, std::clamp<Eigen::Index>(x - rw, 0, w - 1)));
  }
  RealImage out = RealImage::Zero(h, w);
  for (Eigen::Index ky = 0; ky < k.rows(); ++ky)
    for (Eigen::Index kx = 0; kx < k.cols(); ++kx)
      if (k(ky, kx) != 0.0) out.noalias() += k(ky, kx) * padded.block(ky, kx, h, w);
  return out;
}

/// Separable correlation (row pass, then column pass) with replicate border.
template <typename Scalar>
RealImage convolve_separable(const Plane<Scalar>& img, const Eigen::VectorXd& kx,
                             const Eigen::VectorXd& ky) {
  const Eigen::Index h = img.rows();
  const Eigen::Index w = img.cols();
  const Eigen::Index rx = kx.size() / 2;
  const Eigen::Index ry = ky.size() / 2;
  RealImage tmp(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < kx.size(); ++i) {
        const Eigen::Index sx = std::clamp<Eigen::Index>(x + i - rx, 0, w - 1);
        acc += kx[i] * static_cast<double>(img(y, sx));
      }
      tmp(y, x) = acc;
    }
  }
  RealImage out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < ky.size(); ++i) {
        const Eigen::Index sy = std::clamp<Eigen::Index>(y + i - ry, 0, h - 1);
        acc += ky[i] * tmp(sy, x);
      }
      out(y, x) = acc;
    }
  }
  return out;
}

/// Normalized 1-D Gaussian with radius ceil(3 sigma) unless given explicitly.
Eigen::VectorXd gaussian_kernel_1d(double sigma, int radius = -1);

template <typename Scalar>
RealImage gaussian_blur(const Plane<Scalar>& img, double sigma) {
  if (sigma <= 0.0) return img.template cast<double>();
  const Eigen::VectorXd g = gaussian_kernel_1d(sigma);
  return convolve_separable(img, g, g);
}

GrayImage gaussian_blur_u8(const GrayImage& img, double sigma);
Frame gaussian_blur_frame(const Frame& frame, double sigma);

/// 3x3 four-neighbour Laplacian [[0,1,0],[1,-4,1],[0,1,0]].
Kernel laplacian_kernel();

/// Precomputed unnormalized complex DFT of one length: iterative radix-2,
/// mixed radix when every prime factor is small, Bluestein otherwise.
/// transform() is const and safe to share between threads.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  std::size_t size() const { return n_; }
  void transform(std::vector<std::complex<double>>& data, bool inverse = false) const;

 private:
  enum class Kind { Trivial, Radix2, Mixed, Bluestein };
  void radix2(std::complex<double>* a) const;
  void mixed(const std::complex<double>* in, std::complex<double>* out, std::size_t len, std::size_t stride,
             std::size_t level) const;

  Kind kind_ = Kind::Trivial;
  std::size_t n_ = 0;
  std::size_t m_ = 0;  ///< length handled by the inner radix-2 transform
  std::vector<std::complex<double>> twiddles_;  ///< exp(-2 pi i k / m_)
  std::vector<std::size_t> bitrev_;
  std::vector<std::size_t> factors_;
  std::vector<std::complex<double>> chirp_;
  std::vector<std::complex<double>> chirp_fft_;
};

/// In-place complex DFT of arbitrary length.
void fft_inplace(std::vector<std::complex<double>>& data, bool inverse = false);

/// |unnormalized 2-D DFT|, same shape as the input.
RealImage dft2_magnitude(const RealImage& img);

template <typename Scalar>
RealImage dft2_magnitude(const Plane<Scalar>& img) {
  return dft2_magnitude(RealImage(img.template cast<double>()));
}

struct CannyThresholds {
  double low = 50.0;
  double high = 120.0;
};

/// Gaussian (sigma 1.4, 5x5), Sobel, 4-direction NMS, hysteresis. Thresholds
/// apply to the L2 Sobel magnitude of the smoothed image. The whole chain runs
/// in integer arithmetic, so the result is exactly invariant to intensity offsets.
BinaryImage canny(const GrayImage& img, double low, double high);
inline BinaryImage canny(const GrayImage& img, const CannyThresholds& t) {
  return canny(img, t.low, t.high);
}

/// Dilation then erosion with a se_w x se_h rectangle, computed as if the image
/// were surrounded by zeros.
BinaryImage morph_close(const BinaryImage& img, int se_w, int se_h);
/// Outside pixels count as 0 for dilation and 1 for erosion.
BinaryImage morph_dilate(const BinaryImage& img, int se_w, int se_h);
BinaryImage morph_erode(const BinaryImage& img, int se_w, int se_h);

BinaryImage bitwise_or(const BinaryImage& a, const BinaryImage& b);

/// Bilinear with pixel-centre alignment, rounded to nearest.
GrayImage resize_bilinear(const GrayImage& img, int new_w, int new_h);
RealImage resize_bilinear(const RealImage& img, int new_w, int new_h);

/// Downscales (aspect preserved) so that max(w, h) <= max_side; no-op otherwise.
GrayImage thumbnail(const GrayImage& img, int max_side);

}  // namespace e2vts
