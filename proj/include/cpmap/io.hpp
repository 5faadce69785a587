#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cpmap {

/// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h);

  std::uint8_t* at(int x, int y) { return &pixels[3 * (static_cast<std::size_t>(y) * width + x)]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[3 * (static_cast<std::size_t>(y) * width + x)];
  }
  bool operator==(const Image&) const = default;
};

Image read_image(const std::filesystem::path& path);
void write_image(const Image& image, const std::filesystem::path& path);
Image parse_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Image& image);

/// Bilinear sample at continuous pixel coordinates (clamped at the border).
std::array<double, 3> sample_bilinear(const Image& image, double px, double py);

struct ColoredPoint {
  double x, y, z;
  std::uint8_t r, g, b;
};

/// ASCII PLY with `x y z red green blue` vertices and no faces.
void write_ply(const std::filesystem::path& path, std::span<const ColoredPoint> points);

struct ReportRow {
  double dx = 0;
  std::string method;
  double error = 0;
  double rate = 0;  // NaN for the first row of a method
  double seconds = 0;
  double speedup = 0;  // NaN when not applicable
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  int realizations = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> notes;  // aborted realizations and other diagnostics
};

/// log2(prev/cur) for consecutive rows of the same method.
void fill_rates(ExperimentReport& report);
std::string format_csv(const ExperimentReport& report);
void write_csv(const ExperimentReport& report, const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace cpmap
