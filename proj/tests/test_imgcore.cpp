#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "e2vts/imgcore.hpp"
#include "support/oracles.hpp"
#include "support/testing.hpp"

using namespace e2vts;
using e2vts::testing::random_binary;
using e2vts::testing::random_gray;
using e2vts::testing::solid_frame;

namespace {

std::vector<std::complex<double>> direct_dft(const std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      out[k] += a[j] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) /
                                           static_cast<double>(n));
  return out;
}

}  // namespace

TEST_SUITE("imgcore") {

TEST_CASE("grayscale follows BT.601 luma") {
  CHECK(to_grayscale(solid_frame(2, 2, 77, 77, 77))(1, 1) == 77);
  CHECK(to_grayscale(solid_frame(1, 1, 255, 0, 0))(0, 0) == 76);
  GrayImage g(2, 3);
  g << 1, 2, 3, 4, 5, 6;
  CHECK(to_grayscale(Frame::from_gray(0, g)) == g);
}

TEST_CASE("yuv of black, white and red") {
  const auto black = rgb_to_yuv(solid_frame(1, 1, 0, 0, 0));
  CHECK(black.y(0, 0) == 0);
  CHECK(black.u(0, 0) == 128);
  CHECK(black.v(0, 0) == 128);
  const auto white = rgb_to_yuv(solid_frame(1, 1, 255, 255, 255));
  CHECK(white.y(0, 0) == 255);
  CHECK(white.u(0, 0) == 128);
  CHECK(white.v(0, 0) == 128);
  // Y = .299*255, U = -.168736*255 + 128, V = .5*255 + 128 clamped.
  const auto red = rgb_to_yuv(solid_frame(1, 1, 255, 0, 0));
  CHECK(red.y(0, 0) == 76);
  CHECK(red.u(0, 0) == 85);
  CHECK(red.v(0, 0) == 255);
  CHECK_THROWS_AS(rgb_to_yuv(Frame::from_gray(0, GrayImage::Zero(2, 2))), InvalidArgument);
}

TEST_CASE("convolve2d identity and Laplacian examples") {
  std::mt19937_64 rng(1);
  const GrayImage img = random_gray(7, 5, rng);
  CHECK(convolve2d(img, Kernel::Ones(1, 1)) == img.cast<double>());

  const GrayImage flat = GrayImage::Constant(6, 6, 42);
  CHECK(convolve2d(flat, laplacian_kernel()).cwiseAbs().maxCoeff() == 0.0);

  GrayImage center = GrayImage::Zero(3, 3);
  center(1, 1) = 9;
  RealImage want(3, 3);
  want << 0, 9, 0, 9, -36, 9, 0, 9, 0;
  CHECK(convolve2d(center, laplacian_kernel()) == want);

  CHECK_THROWS_AS(convolve2d(img, Kernel::Ones(2, 3)), InvalidArgument);
}

TEST_CASE("convolve2d with a delta kernel is identity") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> dim(1, 20);
  std::uniform_int_distribution<int> rad(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const GrayImage img = random_gray(dim(rng), dim(rng), rng);
    const int ry = rad(rng);
    const int rx = rad(rng);
    Kernel k = Kernel::Zero(2 * ry + 1, 2 * rx + 1);
    k(ry, rx) = 1.0;
    CHECK(convolve2d(img, k) == img.cast<double>());
  }
}

TEST_CASE("convolve2d matches a hand-rolled replicate-border loop") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> kv(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const GrayImage img = random_gray(9 + trial % 4, 6 + trial % 3, rng);
    Kernel k(3, 5);
    for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = kv(rng);
    const RealImage got = convolve2d(img, k);
    for (int y = 0; y < img.rows(); ++y)
      for (int x = 0; x < img.cols(); ++x) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -2; dx <= 2; ++dx) {
            const int sy = std::clamp(y + dy, 0, static_cast<int>(img.rows()) - 1);
            const int sx = std::clamp(x + dx, 0, static_cast<int>(img.cols()) - 1);
            acc += k(dy + 1, dx + 2) * img(sy, sx);
          }
        CHECK(got(y, x) == doctest::Approx(acc).epsilon(1e-12));
      }
  }
}

TEST_CASE("separable blur equals the full outer-product kernel") {
  std::mt19937_64 rng(4);
  const GrayImage img = random_gray(16, 11, rng);
  const Eigen::VectorXd g = gaussian_kernel_1d(1.2);
  CHECK(g.sum() == doctest::Approx(1.0));
  const Kernel full = g * g.transpose();
  CHECK((gaussian_blur(img, 1.2) - convolve2d(img, full)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("1-D transform matches the direct DFT for every length up to 130") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (std::size_t n = 1; n <= 130; ++n) {
    std::vector<std::complex<double>> a(n);
    for (auto& v : a) v = {nd(rng), nd(rng)};
    const auto want = direct_dft(a);
    auto got = a;
    fft_inplace(got);
    double err = 0.0;
    double scale = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      err = std::max(err, std::abs(got[k] - want[k]));
      scale = std::max(scale, std::abs(want[k]));
    }
    CHECK_MESSAGE(err / scale < 1e-10, "n = " << n);
    fft_inplace(got, true);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(got[k] / static_cast<double>(n) - a[k]) < 1e-9);
  }
}

TEST_CASE("DFT magnitude of constants and impulses") {
  const GrayImage c = GrayImage::Constant(4, 6, 7);
  const RealImage m = dft2_magnitude(c);
  CHECK(m(0, 0) == doctest::Approx(4 * 6 * 7));
  RealImage rest = m;
  rest(0, 0) = 0.0;
  CHECK(rest.maxCoeff() < 1e-9);

  GrayImage delta = GrayImage::Zero(5, 3);
  delta(0, 0) = 1;
  CHECK((dft2_magnitude(delta).array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("DFT magnitude matches the direct double sum on all sizes up to 16x16") {
  std::mt19937_64 rng(6);
  for (int h = 1; h <= 16; ++h)
    for (int w = 1; w <= 16; ++w) {
      const RealImage img = random_gray(w, h, rng).cast<double>();
      CHECK_MESSAGE(oracle::max_rel_error(dft2_magnitude(img), oracle::direct_dft_magnitude(img)) <= 1e-6, h << "x" << w);
    }
  const RealImage img = random_gray(7, 5, rng).cast<double>();
  CHECK(oracle::max_rel_error(dft2_magnitude(img), oracle::direct_dft_magnitude(img)) <= 1e-12);
}

TEST_CASE("canny on flat, step and weak-step images") {
  CHECK(canny(GrayImage::Constant(20, 20, 90), 50, 120).sum() == 0);

  GrayImage step = GrayImage::Zero(32, 32);
  step.rightCols(16).setConstant(255);
  const BinaryImage e = canny(step, 50, 120);
  for (int y = 4; y < 28; ++y) {
    int count = 0;
    for (int x = 0; x < 32; ++x)
      if (e(y, x)) {
        ++count;
        CHECK(std::abs(x - 15.5) <= 1.0);
      }
    CHECK(count == 1);
  }

  GrayImage weak = GrayImage::Constant(32, 32, 100);
  weak.rightCols(16).setConstant(108);
  CHECK(canny(weak, 50, 120).sum() == 0);
}

TEST_CASE("canny output is binary and invariant to an intensity offset") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> off(1, 55);
  for (int trial = 0; trial < 30; ++trial) {
    GrayImage img = random_gray(24 + trial, 20, rng);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<std::uint8_t>(img.data()[i] * 200 / 255);
    const int o = off(rng);
    const GrayImage shifted = (img.cast<int>().array() + o).cast<std::uint8_t>();
    const BinaryImage a = canny(img, 50, 120);
    CHECK(((a.array() == 0) || (a.array() == 1)).all());
    CHECK(a == canny(shifted, 50, 120));
  }
}

TEST_CASE("morphological closing examples") {
  CHECK(morph_close(BinaryImage::Zero(8, 8), 5, 3).sum() == 0);

  BinaryImage pair = BinaryImage::Zero(1, 14);
  pair(0, 5) = 1;
  pair(0, 8) = 1;
  const BinaryImage closed = morph_close(pair, 5, 1);
  for (int x = 0; x < 14; ++x) CHECK(closed(0, x) == ((x >= 5 && x <= 8) ? 1 : 0));

  BinaryImage rect = BinaryImage::Zero(20, 20);
  rect.block(5, 4, 6, 9).setOnes();
  CHECK(morph_close(rect, 9, 3) == rect);
}

TEST_CASE("closing is extensive and increasing") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const BinaryImage a = random_binary(30, 18, 0.08, rng);
    const BinaryImage b = bitwise_or(a, random_binary(30, 18, 0.05, rng));
    const BinaryImage ca = morph_close(a, 1 + 2 * (trial % 5), 1 + 2 * (trial % 3));
    const BinaryImage cb = morph_close(b, 1 + 2 * (trial % 5), 1 + 2 * (trial % 3));
    CHECK((ca.array() <= cb.array()).all());
    CHECK((a.array() <= ca.array()).all());
  }
}

TEST_CASE("bilinear resize") {
  std::mt19937_64 rng(9);
  const GrayImage img = random_gray(13, 9, rng);
  CHECK(resize_bilinear(img, 13, 9) == img);

  GrayImage checker(2, 2);
  checker << 0, 255, 255, 0;
  CHECK(resize_bilinear(checker, 1, 1)(0, 0) == 128);

  const GrayImage c = resize_bilinear(GrayImage(GrayImage::Constant(7, 5, 33)), 17, 3);
  CHECK(c.rows() == 3);
  CHECK(c.cols() == 17);
  CHECK((c.array() == 33).all());

  const GrayImage t = thumbnail(GrayImage(GrayImage::Zero(300, 600)), 256);
  CHECK(t.cols() == 256);
  CHECK(t.rows() == 128);
}

}  // TEST_SUITE
