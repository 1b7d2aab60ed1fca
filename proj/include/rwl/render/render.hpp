#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "rwl/envs/envs.hpp"

namespace rwl::render {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // RGB, row-major, 3 * width * height

  Image() = default;
  Image(int w, int h, Rgb fill = {});

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  bool operator==(const Image&) const = default;
};

inline constexpr int kDefaultResolution = 64;
bool is_supported_resolution(int resolution);

struct RenderConfig {
  int resolution = kDefaultResolution;
  // Draw the arm / gripper above the goal marker so that it can hide it.
  bool occlude_target = false;
};

// Fixed per-task palette.
namespace palette {
inline constexpr Rgb kBackground{40, 40, 48};
inline constexpr Rgb kPendulumRod{230, 180, 60};
inline constexpr Rgb kPendulumPivot{120, 120, 130};
inline constexpr Rgb kArm{150, 150, 160};
inline constexpr Rgb kJoint{100, 100, 110};
inline constexpr Rgb kFingertip{40, 200, 70};
inline constexpr Rgb kTarget{220, 40, 40};
inline constexpr Rgb kObject{245, 245, 245};
inline constexpr Rgb kEffector{60, 110, 220};
inline constexpr Rgb kTable{70, 60, 50};
inline constexpr Rgb kShadow{110, 110, 120};
inline constexpr Rgb kGripper{40, 200, 70};
}  // namespace palette

// Pure function of (state, cfg). Throws std::invalid_argument on an
// unsupported resolution.
Image render(const envs::EnvState& state, const RenderConfig& cfg = {});

class PngError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(std::span<const std::uint8_t> bytes);
void save_png(const std::filesystem::path& path, const Image& img);
Image load_png(const std::filesystem::path& path);

}  // namespace rwl::render
