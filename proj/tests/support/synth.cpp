#include "synth.hpp"

#include <algorithm>
#include <cmath>

namespace e2vts::synth {

namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

RealImage value_noise(int w, int h, double cell, std::mt19937_64& rng) {
  const int gw = static_cast<int>(std::ceil(w / cell)) + 2;
  const int gh = static_cast<int>(std::ceil(h / cell)) + 2;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd grid(gh, gw);
  for (int i = 0; i < gh; ++i)
    for (int j = 0; j < gw; ++j) grid(i, j) = u(rng);
  RealImage out(h, w);
  for (int y = 0; y < h; ++y) {
    const double gy = y / cell;
    const int y0 = static_cast<int>(gy);
    const double ty = smoothstep(gy - y0);
    for (int x = 0; x < w; ++x) {
      const double gx = x / cell;
      const int x0 = static_cast<int>(gx);
      const double tx = smoothstep(gx - x0);
      const double a = grid(y0, x0) * (1 - tx) + grid(y0, x0 + 1) * tx;
      const double b = grid(y0 + 1, x0) * (1 - tx) + grid(y0 + 1, x0 + 1) * tx;
      out(y, x) = a * (1 - ty) + b * ty;
    }
  }
  return out;
}

double sample_bilinear(const GrayImage& img, double x, double y) {
  const int w = static_cast<int>(img.cols());
  const int h = static_cast<int>(img.rows());
  x = std::clamp(x, 0.0, w - 1.0);
  y = std::clamp(y, 0.0, h - 1.0);
  const int x0 = std::min(static_cast<int>(x), w - 2);
  const int y0 = std::min(static_cast<int>(y), h - 2);
  const double tx = x - x0;
  const double ty = y - y0;
  const double a = img(y0, x0) * (1 - tx) + img(y0, x0 + 1) * tx;
  const double b = img(y0 + 1, x0) * (1 - tx) + img(y0 + 1, x0 + 1) * tx;
  return a * (1 - ty) + b * ty;
}

// Squared distance from p to segment ab.
double segment_dist2(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax;
  const double dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = ax + t * dx - px;
  const double ey = ay + t * dy - py;
  return ex * ex + ey * ey;
}

void draw_segment(BinaryImage& mask, double ax, double ay, double bx, double by, double thickness) {
  const double r = thickness / 2.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - r)));
  const int x1 = std::min(static_cast<int>(mask.cols()) - 1, static_cast<int>(std::ceil(std::max(ax, bx) + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - r)));
  const int y1 = std::min(static_cast<int>(mask.rows()) - 1, static_cast<int>(std::ceil(std::max(ay, by) + r)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (segment_dist2(x, y, ax, ay, bx, by) <= r * r) mask(y, x) = 1;
}

// One glyph in the cell [x, x+gw) x [y, y+gh): a few strokes from a small alphabet.
void draw_glyph(BinaryImage& mask, double x, double y, double gw, double gh, double t, std::mt19937_64& rng) {
  const double l = x + t / 2, r = x + gw - t / 2, top = y + t / 2, bot = y + gh - t / 2;
  const double mx = (l + r) / 2, my = (top + bot) / 2;
  const double strokes[][4] = {{l, top, l, bot},  {r, top, r, bot},  {l, top, r, top}, {l, my, r, my},
                               {l, bot, r, bot},  {l, bot, r, top},  {l, top, r, bot}, {mx, top, mx, bot},
                               {l, top, mx, bot}, {mx, bot, r, top}};
  std::uniform_int_distribution<int> pick(0, 9);
  std::uniform_int_distribution<int> count(2, 4);
  const int k = count(rng);
  for (int i = 0; i < k; ++i) {
    const auto& s = strokes[pick(rng)];
    draw_segment(mask, s[0], s[1], s[2], s[3], t);
  }
}

}  // namespace

GrayImage textured_canvas(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RealImage acc = RealImage::Zero(h, w);
  double amp = 1.0;
  for (double cell : {64.0, 24.0, 9.0, 4.0}) {
    acc += amp * value_noise(w, h, cell, rng);
    amp *= 0.6;
  }
  acc = (acc.array() - acc.minCoeff()) / (acc.maxCoeff() - acc.minCoeff()) * 200.0 + 28.0;

  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h), size(6.0, 40.0), shade(0.0, 255.0), coin(0.0, 1.0);
  const int shapes = w * h / 900;
  for (int s = 0; s < shapes; ++s) {
    const double cx = ux(rng), cy = uy(rng), rx = size(rng), ry = size(rng), v = shade(rng);
    const bool ellipse = coin(rng) < 0.5;
    const int x0 = std::max(0, static_cast<int>(cx - rx)), x1 = std::min(w - 1, static_cast<int>(cx + rx));
    const int y0 = std::max(0, static_cast<int>(cy - ry)), y1 = std::min(h - 1, static_cast<int>(cy + ry));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        if (ellipse) {
          const double dx = (x - cx) / rx, dy = (y - cy) / ry;
          if (dx * dx + dy * dy > 1.0) continue;
        }
        acc(y, x) = 0.35 * acc(y, x) + 0.65 * v;
      }
  }
  GrayImage out(h, w);
  for (Eigen::Index i = 0; i < acc.size(); ++i) out.data()[i] = clamp_u8(acc.data()[i]);
  return out;
}

GrayImage render_view(const GrayImage& canvas, const Eigen::Matrix3d& view_to_canvas, int w, int h) {
  GrayImage out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d p = view_to_canvas * Eigen::Vector3d(x, y, 1.0);
      out(y, x) = clamp_u8(sample_bilinear(canvas, p.x() / p.z(), p.y() / p.z()));
    }
  return out;
}

TextFrame text_frame(int w, int h, int index, std::uint64_t seed, std::optional<PixelRect> block) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (!block) {
    const int bw = static_cast<int>(w * (0.35 + 0.2 * u(rng)));
    const int bh = static_cast<int>(h * (0.25 + 0.15 * u(rng)));
    const int bx = static_cast<int>((w - bw) * (0.15 + 0.7 * u(rng)));
    const int by = static_cast<int>((h - bh) * (0.15 + 0.7 * u(rng)));
    block = PixelRect{bx, by, bx + bw, by + bh};
  }
  TextFrame tf;
  tf.block = *block;
  tf.strokes = BinaryImage::Zero(h, w);
  const double gw = 9.0 + 4.0 * u(rng);
  const double gh = gw * 1.4;
  const double thickness = 2.0 + u(rng);
  const double line_gap = gh * 0.6;
  const double gap = gw * 0.35;
  for (double y = block->y0; y + gh <= block->y1; y += gh + line_gap)
    for (double x = block->x0; x + gw <= block->x1; x += gw + gap)
      if (u(rng) > 0.12) draw_glyph(tf.strokes, x, y, gw, gh, thickness, rng);

  const std::uint8_t bg[3] = {static_cast<std::uint8_t>(215 + 40 * u(rng)), static_cast<std::uint8_t>(215 + 40 * u(rng)),
                              static_cast<std::uint8_t>(215 + 40 * u(rng))};
  const std::uint8_t fg[3] = {static_cast<std::uint8_t>(50 * u(rng)), static_cast<std::uint8_t>(50 * u(rng)),
                              static_cast<std::uint8_t>(50 * u(rng))};
  tf.frame = Frame(index, w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) tf.frame.at(x, y, c) = tf.strokes(y, x) ? fg[c] : bg[c];
  return tf;
}

Frame blank_frame(int w, int h, int index, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double top[3] = {120 + 100 * u(rng), 120 + 100 * u(rng), 150 + 100 * u(rng)};
  const double bot[3] = {100 + 100 * u(rng), 100 + 100 * u(rng), 100 + 100 * u(rng)};
  Frame f(index, w, h, 3);
  for (int y = 0; y < h; ++y) {
    const double t = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) f.at(x, y, c) = clamp_u8(top[c] * (1 - t) + bot[c] * t);
  }
  return f;
}

Frame noise_frame(int w, int h, int index, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, 255);
  Frame f(index, w, h, 3);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(u(rng));
  return f;
}

Video text_video(int frame_count, int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> scene_len(14, 26), gap_len(6, 14);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Video v;
  int pos = 0;
  bool in_scene = false;
  while (pos < frame_count) {
    const int len = std::min(frame_count - pos, in_scene ? scene_len(rng) : gap_len(rng));
    const std::uint64_t base = rng();
    if (in_scene) {
      const int id = v.scene_count++;
      const TextFrame proto = text_frame(w, h, 0, base);
      for (int k = 0; k < len; ++k) {
        // Camera shake: some frames sharp, some mildly blurred.
        const double sigma = u(rng) < 0.5 ? 0.0 : 0.6 + 1.2 * u(rng);
        Frame f = sigma > 0 ? gaussian_blur_frame(proto.frame, sigma) : proto.frame;
        f.index = pos + k;
        v.frames.push_back(std::move(f));
        v.scene.push_back(id);
      }
    } else {
      const bool blurred = u(rng) < 0.5;
      const Frame src = blurred ? gaussian_blur_frame(text_frame(w, h, 0, base).frame, 7.0) : blank_frame(w, h, 0, base);
      for (int k = 0; k < len; ++k) {
        Frame f = src;
        f.index = pos + k;
        v.frames.push_back(std::move(f));
        v.scene.push_back(-1);
      }
    }
    pos += len;
    in_scene = !in_scene;
  }
  return v;
}

namespace {

Sequence pan_from(const std::vector<std::pair<const GrayImage*, Point2>>& views, int w, int h, const Quad& seed_quad) {
  Sequence s;
  const Point2 origin = views.front().second;
  for (std::size_t t = 0; t < views.size(); ++t) {
    const auto& [canvas, offset] = views[t];
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 2) = offset.x();
    m(1, 2) = offset.y();
    const GrayImage g = render_view(*canvas, m, w, h);
    Frame f = Frame::from_planes(static_cast<int>(t), g, g, g);
    s.frames.push_back(std::move(f));
    Quad q = seed_quad;
    for (auto& c : q.corners) c -= offset - origin;
    s.truth.push_back(q);
  }
  return s;
}

}  // namespace

Sequence pan_sequence(int n, int w, int h, Point2 step, const Quad& seed_quad, std::uint64_t seed) {
  const Point2 span = step.cwiseAbs() * std::max(n - 1, 0);
  const int cw = w + static_cast<int>(std::ceil(span.x())) + 8;
  const int ch = h + static_cast<int>(std::ceil(span.y())) + 8;
  const GrayImage canvas = textured_canvas(cw, ch, seed);
  const Point2 start(step.x() < 0 ? span.x() + 4 : 4, step.y() < 0 ? span.y() + 4 : 4);
  std::vector<std::pair<const GrayImage*, Point2>> views;
  for (int t = 0; t < n; ++t) views.emplace_back(&canvas, start + step * t);
  return pan_from(views, w, h, seed_quad);
}

Sequence scene_cut_sequence(int n, int cut, int w, int h, const Quad& seed_quad, std::uint64_t seed) {
  const Point2 step(1.5, 1.0);
  const int cw = w + static_cast<int>(std::ceil(step.x() * n)) + 8;
  const int ch = h + static_cast<int>(std::ceil(step.y() * n)) + 8;
  const GrayImage a = textured_canvas(cw, ch, seed);
  const GrayImage b = textured_canvas(cw, ch, seed + 7919);
  std::vector<std::pair<const GrayImage*, Point2>> views;
  for (int t = 0; t < n; ++t) views.emplace_back(t < cut ? &a : &b, Point2(4, 4) + step * t);
  return pan_from(views, w, h, seed_quad);
}

LabelledFrames ood_training_frames(int pairs, int w, int h) {
  LabelledFrames out;
  for (int s = 0; s < pairs; ++s) {
    Frame pos = text_frame(w, h, 0, 5000 + static_cast<std::uint64_t>(s)).frame;
    if (s % 2) pos = gaussian_blur_frame(pos, 0.6 + 0.02 * s);
    out.frames.push_back(std::move(pos));
    out.labels.push_back(1);
    out.frames.push_back(s % 2 == 0 ? blank_frame(w, h, 0, static_cast<std::uint64_t>(s))
                                    : gaussian_blur_frame(text_frame(w, h, 0, 9000 + static_cast<std::uint64_t>(s)).frame,
                                                          3.0 + 0.1 * s));
    out.labels.push_back(-1);
  }
  return out;
}

ood::SvmModel train_ood_model(const ood::FeatureExtractor& extractor, int pairs, int w, int h, std::uint64_t seed) {
  const LabelledFrames set = ood_training_frames(pairs, w, h);
  std::vector<ood::FeatureVector> x;
  for (const auto& f : set.frames) x.push_back(extractor.extract(f));
  ood::TrainOptions opt;
  opt.seed = seed;
  ood::SvmModel m = ood::svm_train(x, set.labels, opt);
  m.extractor_id = extractor.id();
  return m;
}

}  // namespace e2vts::synth
