#pragma once

// Run-length encoded binary masks on a fixed image grid, plus the pixel-set
// algebra the tracker needs: IoU, union/complement (untracked region), tight
// boxes and box/region overlap.
//
// Encoding: row-major, alternating background/foreground run lengths, the
// first run is background and may be 0. Every other run is > 0, so each pixel
// set has exactly one encoding.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ranges>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sam2mot/error.hpp"

namespace sam2mot {

struct ImageGrid {
  int width = 1;
  int height = 1;

  std::int64_t area() const { return std::int64_t{width} * height; }
  bool valid() const { return width >= 1 && height >= 1; }

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;
};

inline void require_valid(const ImageGrid& grid) {
  if (!grid.valid()) {
    throw InputError("image grid must be at least 1x1, got " + std::to_string(grid.width) + "x" +
                     std::to_string(grid.height));
  }
}

/// Integer pixel rectangle, half-open: [x, x + w) x [y, y + h).
struct Box {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;

  std::int64_t area() const { return std::int64_t{w} * h; }
  int right() const { return x + w; }
  int bottom() const { return y + h; }
  bool valid() const { return w >= 1 && h >= 1; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Intersection of `box` with the grid; absent when nothing is left.
inline std::optional<Box> clamp_box(const Box& box, const ImageGrid& grid) {
  const int x0 = std::max(box.x, 0);
  const int y0 = std::max(box.y, 0);
  const int x1 = std::min(box.right(), grid.width);
  const int y1 = std::min(box.bottom(), grid.height);
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  return Box{x0, y0, x1 - x0, y1 - y0};
}

inline std::int64_t box_intersection_area(const Box& a, const Box& b) {
  const std::int64_t iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const std::int64_t ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0 || ih <= 0) return 0;
  return iw * ih;
}

inline double box_iou(const Box& a, const Box& b) {
  const std::int64_t inter = box_intersection_area(a, b);
  const std::int64_t uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace detail {

// Accumulates (value, length) segments into canonical runs.
class RunBuilder {
 public:
  void push(bool value, std::uint64_t length) {
    if (length == 0) return;
    if (runs_.empty()) {
      if (value) runs_.push_back(0);
      runs_.push_back(static_cast<std::uint32_t>(length));
      current_ = value;
      return;
    }
    if (value == current_) {
      runs_.back() += static_cast<std::uint32_t>(length);
    } else {
      runs_.push_back(static_cast<std::uint32_t>(length));
      current_ = value;
    }
  }

  std::vector<std::uint32_t> finish() && { return std::move(runs_); }

 private:
  std::vector<std::uint32_t> runs_;
  bool current_ = false;
};

}  // namespace detail

class Mask {
 public:
  /// Validates the run list; throws CorruptMaskError when it is not the
  /// canonical encoding of a pixel set on `grid`.
  Mask(ImageGrid grid, std::vector<std::uint32_t> runs) : grid_(grid), runs_(std::move(runs)) {
    require_valid(grid_);
    validate();
  }

  static Mask empty(ImageGrid grid) {
    require_valid(grid);
    return Mask(grid, {static_cast<std::uint32_t>(grid.area())}, Trusted{});
  }

  static Mask full(ImageGrid grid) {
    require_valid(grid);
    return Mask(grid, {0, static_cast<std::uint32_t>(grid.area())}, Trusted{});
  }

  /// Rasterizes `box` (clamped to the grid).
  static Mask from_box(ImageGrid grid, const Box& box) {
    require_valid(grid);
    const auto clamped = clamp_box(box, grid);
    if (!clamped) return empty(grid);
    detail::RunBuilder builder;
    const std::uint64_t w = static_cast<std::uint64_t>(grid.width);
    builder.push(false, static_cast<std::uint64_t>(clamped->y) * w + clamped->x);
    for (int row = 0; row < clamped->h; ++row) {
      builder.push(true, static_cast<std::uint64_t>(clamped->w));
      if (row + 1 < clamped->h) builder.push(false, w - clamped->w);
    }
    const std::uint64_t end =
        static_cast<std::uint64_t>(clamped->bottom() - 1) * w + clamped->right();
    builder.push(false, static_cast<std::uint64_t>(grid.area()) - end);
    return Mask(grid, std::move(builder).finish(), Trusted{});
  }

  const ImageGrid& grid() const { return grid_; }
  const std::vector<std::uint32_t>& runs() const { return runs_; }

  /// Number of foreground pixels.
  std::int64_t area() const {
    std::int64_t total = 0;
    for (std::size_t i = 1; i < runs_.size(); i += 2) total += runs_[i];
    return total;
  }

  bool is_empty() const { return runs_.size() <= 1; }

  /// Calls `fn(begin, end)` for every foreground run, as half-open linear
  /// pixel index ranges in row-major order.
  template <typename Fn>
  void for_each_run(Fn&& fn) const {
    std::int64_t pos = 0;
    for (std::size_t i = 0; i < runs_.size(); ++i) {
      const std::int64_t next = pos + runs_[i];
      if (i % 2 == 1) fn(pos, next);
      pos = next;
    }
  }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  struct Trusted {};
  Mask(ImageGrid grid, std::vector<std::uint32_t> runs, Trusted)
      : grid_(grid), runs_(std::move(runs)) {}

  friend Mask make_trusted_mask(ImageGrid, std::vector<std::uint32_t>);

  void validate() const {
    if (runs_.empty()) throw CorruptMaskError("mask has no runs");
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < runs_.size(); ++i) {
      if (i > 0 && runs_[i] == 0) {
        throw CorruptMaskError("zero-length run at position " + std::to_string(i));
      }
      sum += runs_[i];
    }
    if (sum != static_cast<std::uint64_t>(grid_.area())) {
      throw CorruptMaskError("runs sum to " + std::to_string(sum) + " but grid has " +
                             std::to_string(grid_.area()) + " pixels");
    }
  }

  ImageGrid grid_;
  std::vector<std::uint32_t> runs_;
};

inline Mask make_trusted_mask(ImageGrid grid, std::vector<std::uint32_t> runs) {
  return Mask(grid, std::move(runs), Mask::Trusted{});
}

template <std::ranges::sized_range R>
Mask encode_mask(const R& bitmap, ImageGrid grid) {
  require_valid(grid);
  if (static_cast<std::int64_t>(std::ranges::size(bitmap)) != grid.area()) {
    throw InputError("bitmap has " + std::to_string(std::ranges::size(bitmap)) +
                     " pixels, grid expects " + std::to_string(grid.area()));
  }
  detail::RunBuilder builder;
  for (const auto& px : bitmap) builder.push(static_cast<bool>(px), 1);
  return make_trusted_mask(grid, std::move(builder).finish());
}

inline std::vector<bool> decode_mask(const Mask& mask) {
  std::uint64_t sum = 0;
  for (auto r : mask.runs()) sum += r;
  if (sum != static_cast<std::uint64_t>(mask.grid().area())) {
    throw CorruptMaskError("run sum does not match grid");
  }
  std::vector<bool> bits(static_cast<std::size_t>(mask.grid().area()), false);
  mask.for_each_run([&](std::int64_t b, std::int64_t e) {
    std::fill(bits.begin() + b, bits.begin() + e, true);
  });
  return bits;
}

namespace detail {

inline void require_same_grid(const Mask& a, const Mask& b) {
  if (a.grid() != b.grid()) throw InputError("masks live on different grids");
}

// Walks the merged run boundaries of two masks on one grid, calling
// fn(bit_a, bit_b, length) for each maximal segment.
template <typename Fn>
void sweep(const Mask& a, const Mask& b, Fn&& fn) {
  const auto& ra = a.runs();
  const auto& rb = b.runs();
  std::size_t ia = 0;
  std::size_t ib = 0;
  std::uint64_t left_a = ra[0];
  std::uint64_t left_b = rb[0];
  const auto advance = [](const std::vector<std::uint32_t>& runs, std::size_t& idx,
                          std::uint64_t& left) {
    while (left == 0 && idx + 1 < runs.size()) left = runs[++idx];
  };
  advance(ra, ia, left_a);
  advance(rb, ib, left_b);
  while (left_a > 0 && left_b > 0) {
    const std::uint64_t step = std::min(left_a, left_b);
    fn(ia % 2 == 1, ib % 2 == 1, step);
    left_a -= step;
    left_b -= step;
    advance(ra, ia, left_a);
    advance(rb, ib, left_b);
  }
}

template <typename Op>
Mask combine(const Mask& a, const Mask& b, Op op) {
  require_same_grid(a, b);
  RunBuilder builder;
  sweep(a, b, [&](bool x, bool y, std::uint64_t len) { builder.push(op(x, y), len); });
  return make_trusted_mask(a.grid(), std::move(builder).finish());
}

}  // namespace detail

inline Mask mask_and(const Mask& a, const Mask& b) {
  return detail::combine(a, b, [](bool x, bool y) { return x && y; });
}

inline Mask mask_or(const Mask& a, const Mask& b) {
  return detail::combine(a, b, [](bool x, bool y) { return x || y; });
}

inline Mask mask_not(const Mask& m) {
  const auto& runs = m.runs();
  std::vector<std::uint32_t> out;
  if (runs[0] == 0) {
    out.assign(runs.begin() + 1, runs.end());
  } else {
    out.reserve(runs.size() + 1);
    out.push_back(0);
    out.insert(out.end(), runs.begin(), runs.end());
  }
  return make_trusted_mask(m.grid(), std::move(out));
}

inline std::int64_t intersection_area(const Mask& a, const Mask& b) {
  detail::require_same_grid(a, b);
  std::int64_t n = 0;
  detail::sweep(a, b, [&](bool x, bool y, std::uint64_t len) {
    if (x && y) n += static_cast<std::int64_t>(len);
  });
  return n;
}

/// |a ∩ b| / |a ∪ b|; 0 when both masks are empty.
inline double mask_iou(const Mask& a, const Mask& b) {
  detail::require_same_grid(a, b);
  std::int64_t inter = 0;
  std::int64_t uni = 0;
  detail::sweep(a, b, [&](bool x, bool y, std::uint64_t len) {
    if (x && y) inter += static_cast<std::int64_t>(len);
    if (x || y) uni += static_cast<std::int64_t>(len);
  });
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Pixels of the grid covered by none of `masks`.
inline Mask untracked_region(ImageGrid grid, std::span<const Mask> masks) {
  Mask covered = Mask::empty(grid);
  for (const auto& m : masks) {
    if (m.grid() != grid) throw InputError("mask grid differs from the image grid");
    covered = mask_or(covered, m);
  }
  return mask_not(covered);
}

/// Tight bounds of the foreground; absent for an empty mask.
inline std::optional<Box> box_from_mask(const Mask& mask) {
  if (mask.is_empty()) return std::nullopt;
  const std::int64_t w = mask.grid().width;
  std::int64_t min_r = mask.grid().height, max_r = -1, min_c = w, max_c = -1;
  mask.for_each_run([&](std::int64_t b, std::int64_t e) {
    const std::int64_t r0 = b / w, c0 = b % w;
    const std::int64_t r1 = (e - 1) / w, c1 = (e - 1) % w;
    min_r = std::min(min_r, r0);
    max_r = std::max(max_r, r1);
    if (r0 == r1) {
      min_c = std::min(min_c, c0);
      max_c = std::max(max_c, c1);
    } else {
      min_c = 0;
      max_c = w - 1;
    }
  });
  return Box{static_cast<int>(min_c), static_cast<int>(min_r), static_cast<int>(max_c - min_c + 1),
             static_cast<int>(max_r - min_r + 1)};
}

/// Foreground pixels of `region` inside `box`, over the box area. The box is
/// clamped to the grid first; a box entirely off the grid overlaps nothing.
inline double box_region_overlap(const Box& box, const Mask& region) {
  if (!box.valid()) throw InputError("box must have positive width and height");
  const auto clamped = clamp_box(box, region.grid());
  if (!clamped) return 0.0;
  const std::int64_t w = region.grid().width;
  std::int64_t inside = 0;
  region.for_each_run([&](std::int64_t b, std::int64_t e) {
    const std::int64_t first_row = std::max<std::int64_t>(b / w, clamped->y);
    const std::int64_t last_row = std::min<std::int64_t>((e - 1) / w, clamped->bottom() - 1);
    for (std::int64_t row = first_row; row <= last_row; ++row) {
      const std::int64_t lo = std::max(b, row * w + clamped->x);
      const std::int64_t hi = std::min(e, row * w + clamped->right());
      if (hi > lo) inside += hi - lo;
    }
  });
  return static_cast<double>(inside) / static_cast<double>(clamped->area());
}

/// Golden-file text form: `w h r0 r1 ...`.
inline std::string to_rle_text(const Mask& mask) {
  std::string out = std::to_string(mask.grid().width) + " " + std::to_string(mask.grid().height);
  for (auto r : mask.runs()) {
    out += ' ';
    out += std::to_string(r);
  }
  return out;
}

inline Mask parse_rle_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  long long w = 0, h = 0;
  if (!(in >> w >> h)) throw ParseError("RLE text must start with width and height", 0);
  if (w < 1 || h < 1 || w > INT32_MAX || h > INT32_MAX) {
    throw ParseError("RLE grid dimensions out of range", 0);
  }
  std::vector<std::uint32_t> runs;
  long long r = 0;
  while (in >> r) {
    if (r < 0 || r > UINT32_MAX) throw ParseError("RLE run out of range", 0);
    runs.push_back(static_cast<std::uint32_t>(r));
  }
  if (!in.eof()) throw ParseError("RLE text contains a non-integer token", 0);
  return Mask(ImageGrid{static_cast<int>(w), static_cast<int>(h)}, std::move(runs));
}

}  // namespace sam2mot
