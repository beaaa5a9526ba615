#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace e2vts {

/// Thrown when caller-supplied input violates an operation's precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an operation fails on valid input (I/O, numerical breakdown).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major single-channel raster. Row index is y (top-down), column is x.
template <typename Scalar>
using Plane = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GrayImage = Plane<std::uint8_t>;
/// Samples are exactly 0 or 1.
using BinaryImage = Plane<std::uint8_t>;
using RealImage = Plane<double>;
/// Correlation kernel; both dimensions odd.
using Kernel = Eigen::MatrixXd;

/// A decoded video frame. Pixels are interleaved, row-major, 8 bit.
struct Frame {
  int index = 0;
  double timestamp = 0.0;
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Frame() = default;
  Frame(int index_, int width_, int height_, int channels_)
      : index(index_), width(width_), height(height_), channels(channels_),
        pixels(static_cast<std::size_t>(width_) * height_ * channels_, 0) {}

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t byte_size() const { return pixels.size(); }

  /// Throws InvalidArgument if dimensions or buffer length are inconsistent.
  void validate() const;

  /// Builds a 3-channel frame from three planes of equal size.
  static Frame from_planes(int index, const GrayImage& r, const GrayImage& g, const GrayImage& b);
  /// Builds a 1-channel frame.
  static Frame from_gray(int index, const GrayImage& gray);

  GrayImage channel(int c) const;
};

/// Axis-aligned pixel rectangle in top-left origin, half-open: [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const PixelRect&) const = default;
};

Frame crop(const Frame& frame, const PixelRect& rect);

inline std::uint8_t clamp_u8(double v) {
  if (v <= 0.0) return 0;
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(v + 0.5);
}

}  // namespace e2vts
