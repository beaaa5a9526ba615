#include "e2vts/io.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace e2vts::io {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

}  // namespace

Frame decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw RuntimeFailure(std::string("png decode: ") + image.message);
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Frame f(0, static_cast<int>(image.width), static_cast<int>(image.height), gray ? 1 : 3);
  if (!png_image_finish_read(&image, nullptr, f.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw RuntimeFailure(std::string("png decode: ") + image.message);
  }
  return f;
}

Frame read_png(const fs::path& path) { return decode_png(slurp(path)); }

std::vector<std::uint8_t> encode_png(const Frame& frame) {
  frame.validate();
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.width);
  image.height = static_cast<png_uint_32>(frame.height);
  image.format = frame.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, frame.pixels.data(), 0, nullptr))
    throw RuntimeFailure(std::string("png encode: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, frame.pixels.data(), 0, nullptr))
    throw RuntimeFailure(std::string("png encode: ") + image.message);
  out.resize(size);
  return out;
}

void write_png(const fs::path& path, const Frame& frame) {
  const auto bytes = encode_png(frame);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Frame read_ppm(const fs::path& path) {
  const auto bytes = slurp(path);
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_ws();
    int v = 0;
    const auto* first = reinterpret_cast<const char*>(bytes.data()) + pos;
    const auto* last = reinterpret_cast<const char*>(bytes.data()) + bytes.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc()) throw RuntimeFailure("ppm: malformed header in " + path.string());
    pos += static_cast<std::size_t>(ptr - first);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5'))
    throw RuntimeFailure("ppm: unsupported magic in " + path.string());
  const int channels = bytes[1] == '6' ? 3 : 1;
  pos = 2;
  const int w = read_int();
  const int h = read_int();
  const int maxval = read_int();
  if (w < 1 || h < 1 || maxval != 255) throw RuntimeFailure("ppm: unsupported dimensions or maxval");
  ++pos;  // single whitespace before raster
  Frame f(0, w, h, channels);
  if (bytes.size() < pos + f.pixels.size()) throw RuntimeFailure("ppm: truncated raster in " + path.string());
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), f.pixels.size(), f.pixels.begin());
  return f;
}

void write_ppm(const fs::path& path, const Frame& frame) {
  frame.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << (frame.channels == 3 ? "P6\n" : "P5\n") << frame.width << ' ' << frame.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.pixels.data()), static_cast<std::streamsize>(frame.pixels.size()));
}

Frame read_image(const fs::path& path) {
  const auto ext = lower_ext(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm" || ext == ".pgm") return read_ppm(path);
  throw RuntimeFailure("unsupported image format: " + path.string());
}

void write_image(const fs::path& path, const Frame& frame) {
  const auto ext = lower_ext(path);
  if (ext == ".png") return write_png(path, frame);
  if (ext == ".ppm" || ext == ".pgm") return write_ppm(path, frame);
  throw InvalidArgument("unsupported image format: " + path.string());
}

DirectorySource::DirectorySource(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw RuntimeFailure("not a directory: " + dir.string());
  std::vector<std::pair<int, fs::path>> entries;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = lower_ext(e.path());
    if (ext != ".png" && ext != ".ppm" && ext != ".pgm") continue;
    const std::string stem = e.path().stem().string();
    int idx = 0;
    auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), idx);
    if (ec != std::errc() || ptr != stem.data() + stem.size()) continue;
    entries.emplace_back(idx, e.path());
  }
  std::sort(entries.begin(), entries.end());
  for (auto& [idx, p] : entries) {
    indices_.push_back(idx);
    files_.push_back(std::move(p));
  }
}

Frame DirectorySource::load(int position) const {
  Frame f = read_image(files_.at(static_cast<std::size_t>(position)));
  f.index = indices_[static_cast<std::size_t>(position)];
  f.timestamp = static_cast<double>(f.index);
  return f;
}

Y4mSource::Y4mSource(const fs::path& file) : file_(file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open " + file.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string tok;
  hs >> tok;
  if (tok != "YUV4MPEG2") throw RuntimeFailure("y4m: bad signature");
  std::string colorspace = "420";
  while (hs >> tok) {
    switch (tok[0]) {
      case 'W': width_ = std::stoi(tok.substr(1)); break;
      case 'H': height_ = std::stoi(tok.substr(1)); break;
      case 'F': {
        const auto colon = tok.find(':');
        if (colon != std::string::npos) {
          const double num = std::stod(tok.substr(1, colon - 1));
          const double den = std::stod(tok.substr(colon + 1));
          if (den > 0) fps_ = num / den;
        }
        break;
      }
      case 'C': colorspace = tok.substr(1); break;
      default: break;
    }
  }
  if (width_ < 1 || height_ < 1) throw RuntimeFailure("y4m: missing dimensions");
  if (colorspace.rfind("420", 0) != 0) throw RuntimeFailure("y4m: only 4:2:0 is supported");
  const auto cw = static_cast<std::streamoff>((width_ + 1) / 2);
  const auto ch = static_cast<std::streamoff>((height_ + 1) / 2);
  const std::streamoff frame_bytes = static_cast<std::streamoff>(width_) * height_ + 2 * cw * ch;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("FRAME", 0) != 0) throw RuntimeFailure("y4m: expected FRAME marker");
    const std::streamoff start = in.tellg();
    in.seekg(frame_bytes, std::ios::cur);
    if (!in || in.tellg() - start != frame_bytes) break;
    offsets_.push_back(start);
  }
}

Frame Y4mSource::load(int position) const {
  std::ifstream in(file_, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open " + file_.string());
  in.seekg(offsets_.at(static_cast<std::size_t>(position)));
  const int cw = (width_ + 1) / 2;
  const int ch = (height_ + 1) / 2;
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(width_) * height_ + 2 * static_cast<std::size_t>(cw) * ch);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw RuntimeFailure("y4m: truncated frame");
  const std::uint8_t* yp = buf.data();
  const std::uint8_t* up = yp + static_cast<std::size_t>(width_) * height_;
  const std::uint8_t* vp = up + static_cast<std::size_t>(cw) * ch;
  Frame f(position, width_, height_, 3);
  f.timestamp = position / fps_;
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) {
      const double Y = yp[static_cast<std::size_t>(y) * width_ + x];
      const double U = up[static_cast<std::size_t>(y / 2) * cw + x / 2] - 128.0;
      const double V = vp[static_cast<std::size_t>(y / 2) * cw + x / 2] - 128.0;
      f.at(x, y, 0) = clamp_u8(Y + 1.402 * V);
      f.at(x, y, 1) = clamp_u8(Y - 0.344136 * U - 0.714136 * V);
      f.at(x, y, 2) = clamp_u8(Y + 1.772 * U);
    }
  return f;
}

std::unique_ptr<FrameSource> open_source(const fs::path& path) {
  if (fs::is_directory(path)) return std::make_unique<DirectorySource>(path);
  if (lower_ext(path) == ".y4m") return std::make_unique<Y4mSource>(path);
  throw InvalidArgument("frames must be a directory or a .y4m file: " + path.string());
}

void write_y4m(const fs::path& path, const std::vector<Frame>& frames, int fps) {
  if (frames.empty()) throw InvalidArgument("write_y4m: no frames");
  const int w = frames.front().width;
  const int h = frames.front().height;
  const int cw = (w + 1) / 2;
  const int ch = (h + 1) / 2;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << "YUV4MPEG2 W" << w << " H" << h << " F" << fps << ":1 Ip A1:1 C420jpeg\n";
  for (const Frame& f : frames) {
    if (f.width != w || f.height != h || f.channels != 3) throw InvalidArgument("write_y4m: inconsistent frames");
    std::vector<std::uint8_t> Y(static_cast<std::size_t>(w) * h), U(static_cast<std::size_t>(cw) * ch),
        V(static_cast<std::size_t>(cw) * ch);
    std::vector<double> us(U.size(), 0.0), vs(V.size(), 0.0), cnt(U.size(), 0.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double r = f.at(x, y, 0), g = f.at(x, y, 1), b = f.at(x, y, 2);
        Y[static_cast<std::size_t>(y) * w + x] = clamp_u8(0.299 * r + 0.587 * g + 0.114 * b);
        const auto ci = static_cast<std::size_t>(y / 2) * cw + x / 2;
        us[ci] += -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
        vs[ci] += 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
        cnt[ci] += 1.0;
      }
    for (std::size_t i = 0; i < U.size(); ++i) {
      U[i] = clamp_u8(us[i] / cnt[i]);
      V[i] = clamp_u8(vs[i] / cnt[i]);
    }
    out << "FRAME\n";
    out.write(reinterpret_cast<const char*>(Y.data()), static_cast<std::streamsize>(Y.size()));
    out.write(reinterpret_cast<const char*>(U.data()), static_cast<std::streamsize>(U.size()));
    out.write(reinterpret_cast<const char*>(V.data()), static_cast<std::streamsize>(V.size()));
  }
}

SliceSource::SliceSource(const FrameSource& base, int begin, int end) : base_(base), begin_(begin), end_(end) {
  if (begin < 0 || end > base.size() || begin > end) throw InvalidArgument("SliceSource: range out of bounds");
}

int position_of(const FrameSource& source, int index) {
  for (int p = 0; p < source.size(); ++p)
    if (source.index_at(p) == index) return p;
  return -1;
}

}  // namespace e2vts::io
