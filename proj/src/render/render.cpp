#include "rwl/render/render.hpp"

#include <png.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace rwl::render {
namespace {

using namespace rwl::envs;

// Subpixel units per pixel for integer scan conversion.
constexpr std::int64_t kSub = 256;

struct FixedPoint {
  std::int64_t x = 0, y = 0;
};

// Maps a square world window [-half, half]^2 (y up) onto the pixel grid.
class Canvas {
 public:
  Canvas(int resolution, double half_extent, Rgb background)
      : img_(resolution, resolution, background), scale_(resolution / (2.0 * half_extent)), half_(half_extent) {}

  FixedPoint to_fixed(double wx, double wy) const {
    return {std::llround((wx + half_) * scale_ * kSub), std::llround((half_ - wy) * scale_ * kSub)};
  }
  std::int64_t to_fixed_len(double w) const { return std::llround(w * scale_ * kSub); }

  void disk(double wx, double wy, double radius, Rgb c, bool blend = false) {
    capsule(wx, wy, wx, wy, radius, c, blend);
  }

  // Filled segment with round caps of the given half-width. With `blend` each
  // covered pixel becomes the integer mean of `c` and what was there.
  void capsule(double ax, double ay, double bx, double by, double half_width, Rgb c, bool blend = false) {
    const FixedPoint a = to_fixed(ax, ay);
    const FixedPoint b = to_fixed(bx, by);
    const std::int64_t w = to_fixed_len(half_width);
    const std::int64_t lo_x = std::min(a.x, b.x) - w, hi_x = std::max(a.x, b.x) + w;
    const std::int64_t lo_y = std::min(a.y, b.y) - w, hi_y = std::max(a.y, b.y) + w;
    const int n = img_.width;
    const int x0 = static_cast<int>(std::max<std::int64_t>(0, lo_x / kSub - 1));
    const int x1 = static_cast<int>(std::min<std::int64_t>(n - 1, hi_x / kSub + 1));
    const int y0 = static_cast<int>(std::max<std::int64_t>(0, lo_y / kSub - 1));
    const int y1 = static_cast<int>(std::min<std::int64_t>(n - 1, hi_y / kSub + 1));
    const __int128 dx = b.x - a.x, dy = b.y - a.y;
    const __int128 len2 = dx * dx + dy * dy;
    const __int128 w2 = static_cast<__int128>(w) * w;
    for (int py = y0; py <= y1; ++py) {
      for (int px = x0; px <= x1; ++px) {
        const __int128 cx = px * kSub + kSub / 2, cy = py * kSub + kSub / 2;
        const __int128 ex = cx - a.x, ey = cy - a.y;
        const __int128 t = ex * dx + ey * dy;
        bool inside;
        if (len2 == 0 || t <= 0) {
          inside = ex * ex + ey * ey <= w2;
        } else if (t >= len2) {
          const __int128 fx = cx - b.x, fy = cy - b.y;
          inside = fx * fx + fy * fy <= w2;
        } else {
          const __int128 cross = ex * dy - ey * dx;
          inside = cross * cross <= w2 * len2;
        }
        if (!inside) continue;
        if (blend) {
          const Rgb under = img_.at(px, py);
          img_.set(px, py,
                   Rgb{static_cast<std::uint8_t>((under.r + c.r) / 2), static_cast<std::uint8_t>((under.g + c.g) / 2),
                       static_cast<std::uint8_t>((under.b + c.b) / 2)});
        } else {
          img_.set(px, py, c);
        }
      }
    }
  }

  Image take() { return std::move(img_); }

 private:
  Image img_;
  double scale_;
  double half_;
};

Image render_pendulum(const PendulumState& s, int res) {
  Canvas cv(res, 1.3, palette::kBackground);
  const double tx = pendulum::kLength * std::sin(s.phi);
  const double ty = pendulum::kLength * std::cos(s.phi);
  cv.capsule(0.0, 0.0, tx, ty, 0.06, palette::kPendulumRod);
  cv.disk(tx, ty, 0.1, palette::kPendulumRod);
  cv.disk(0.0, 0.0, 0.12, palette::kPendulumPivot);
  return cv.take();
}

Image render_reacher(const ReacherState& s, const RenderConfig& cfg) {
  Canvas cv(cfg.resolution, 0.25, palette::kBackground);
  const Point2 elbow = elbow_position(s.q1);
  const Point2 tip = forward_kinematics(s.q1, s.q2);
  auto target = [&] { cv.disk(s.target_x, s.target_y, 0.012, palette::kTarget, !cfg.occlude_target); };
  if (cfg.occlude_target) target();
  cv.capsule(0.0, 0.0, elbow.x, elbow.y, 0.012, palette::kArm);
  cv.capsule(elbow.x, elbow.y, tip.x, tip.y, 0.012, palette::kArm);
  cv.disk(0.0, 0.0, 0.016, palette::kJoint);
  cv.disk(elbow.x, elbow.y, 0.014, palette::kJoint);
  cv.disk(tip.x, tip.y, 0.016, palette::kFingertip);
  if (!cfg.occlude_target) target();
  return cv.take();
}

Image render_pusher(const PusherState& s, const RenderConfig& cfg) {
  Canvas cv(cfg.resolution, 0.32, palette::kTable);
  auto target = [&] { cv.disk(s.target_x, s.target_y, 0.012, palette::kTarget, !cfg.occlude_target); };
  if (cfg.occlude_target) target();
  cv.disk(s.object_x, s.object_y, pusher::kObjectRadius, palette::kObject);
  cv.disk(s.effector_x, s.effector_y, pusher::kEffectorRadius, palette::kEffector);
  if (!cfg.occlude_target) target();
  return cv.take();
}

// Fixed oblique view: depth (y) shifts points up and to the right. Shadows
// on the workspace floor make the height recoverable from one image.
Image render_fetch(const FetchState& s, const RenderConfig& cfg) {
  constexpr double kShear = 0.3;
  const double floor_z = -fetch::kHalfExtent - 0.02;
  Canvas cv(cfg.resolution, 0.24, palette::kBackground);
  auto project = [&](double x, double y, double z) { return Point2{x + kShear * y, z + kShear * y}; };
  const Point2 g = project(s.gripper_x, s.gripper_y, s.gripper_z);
  const Point2 t = project(s.target_x, s.target_y, s.target_z);
  const Point2 gs = project(s.gripper_x, s.gripper_y, floor_z);
  const Point2 ts = project(s.target_x, s.target_y, floor_z);
  cv.disk(ts.x, ts.y, 0.012, palette::kShadow);
  cv.disk(gs.x, gs.y, 0.016, palette::kShadow);
  auto target = [&] { cv.disk(t.x, t.y, 0.012, palette::kTarget, !cfg.occlude_target); };
  if (cfg.occlude_target) target();
  cv.disk(g.x, g.y, 0.016, palette::kGripper);
  if (!cfg.occlude_target) target();
  return cv.take();
}

}  // namespace

Image::Image(int w, int h, Rgb fill) : width(w), height(h), pixels(static_cast<std::size_t>(3) * w * h) {
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill.r;
    pixels[i + 1] = fill.g;
    pixels[i + 2] = fill.b;
  }
}

Rgb Image::at(int x, int y) const {
  const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
  pixels[i] = c.r;
  pixels[i + 1] = c.g;
  pixels[i + 2] = c.b;
}

bool is_supported_resolution(int r) { return r == 64 || r == 96 || r == 160; }

Image render(const EnvState& state, const RenderConfig& cfg) {
  if (!is_supported_resolution(cfg.resolution)) {
    throw std::invalid_argument("render: unsupported resolution " + std::to_string(cfg.resolution) +
                                " (expected 64, 96 or 160)");
  }
  return std::visit(
      [&](const auto& s) -> Image {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PendulumState>) return render_pendulum(s, cfg.resolution);
        if constexpr (std::is_same_v<T, ReacherState>) return render_reacher(s, cfg);
        if constexpr (std::is_same_v<T, PusherState>) return render_pusher(s, cfg);
        if constexpr (std::is_same_v<T, FetchState>) return render_fetch(s, cfg);
      },
      state);
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(3) * img.width * img.height) {
    throw PngError("encode_png: malformed image");
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw PngError(std::string("encode_png: ") + png.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw PngError(std::string("encode_png: ") + png.message);
  }
  out.resize(size);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw PngError(std::string("decode_png: ") + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  Image img(static_cast<int>(png.width), static_cast<int>(png.height));
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw PngError(std::string("decode_png: ") + png.message);
  }
  return img;
}

void save_png(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw PngError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw PngError("failed writing " + path.string());
}

Image load_png(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PngError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

}  // namespace rwl::render
