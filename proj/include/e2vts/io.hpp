#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "e2vts/image.hpp"

namespace e2vts::io {

Frame read_png(const std::filesystem::path& path);
Frame decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const Frame& frame);
void write_png(const std::filesystem::path& path, const Frame& frame);

/// Binary P6 (RGB) and P5 (gray), maxval 255.
Frame read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Frame& frame);

/// Dispatches on extension (.png, .ppm, .pgm).
Frame read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Frame& frame);

/// Random-access sequence of frames. load() throws RuntimeFailure on decode errors
/// so that callers can record and skip a bad frame.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual int size() const = 0;
  virtual Frame load(int position) const = 0;
  /// Original frame index reported for a position.
  virtual int index_at(int position) const { return position; }
};

/// Image files in a directory whose stems are integers, ordered numerically.
class DirectorySource : public FrameSource {
 public:
  explicit DirectorySource(const std::filesystem::path& dir);
  int size() const override { return static_cast<int>(files_.size()); }
  Frame load(int position) const override;
  int index_at(int position) const override { return indices_.at(static_cast<std::size_t>(position)); }
  const std::vector<std::filesystem::path>& files() const { return files_; }

 private:
  std::vector<std::filesystem::path> files_;
  std::vector<int> indices_;
};

/// YUV4MPEG2, 8-bit 4:2:0, converted to RGB with full-range BT.601.
class Y4mSource : public FrameSource {
 public:
  explicit Y4mSource(const std::filesystem::path& file);
  int size() const override { return static_cast<int>(offsets_.size()); }
  Frame load(int position) const override;
  int width() const { return width_; }
  int height() const { return height_; }
  double fps() const { return fps_; }

 private:
  std::filesystem::path file_;
  int width_ = 0;
  int height_ = 0;
  double fps_ = 30.0;
  std::vector<std::streamoff> offsets_;
};

/// In-memory frames; useful for tests and synthetic sequences.
class MemorySource : public FrameSource {
 public:
  explicit MemorySource(std::vector<Frame> frames) : frames_(std::move(frames)) {}
  int size() const override { return static_cast<int>(frames_.size()); }
  Frame load(int position) const override { return frames_.at(static_cast<std::size_t>(position)); }
  int index_at(int position) const override { return frames_.at(static_cast<std::size_t>(position)).index; }

 private:
  std::vector<Frame> frames_;
};

/// Positions [begin, end) of another source, which must outlive the slice.
class SliceSource : public FrameSource {
 public:
  SliceSource(const FrameSource& base, int begin, int end);
  int size() const override { return end_ - begin_; }
  Frame load(int position) const override { return base_.load(begin_ + position); }
  int index_at(int position) const override { return base_.index_at(begin_ + position); }

 private:
  const FrameSource& base_;
  int begin_;
  int end_;
};

/// Position of the frame with the given index, or -1.
int position_of(const FrameSource& source, int index);

/// Directory or .y4m file, decided by the path.
std::unique_ptr<FrameSource> open_source(const std::filesystem::path& path);

void write_y4m(const std::filesystem::path& path, const std::vector<Frame>& frames, int fps = 30);

}  // namespace e2vts::io
