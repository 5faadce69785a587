#include "cpmap/io.hpp"

#include "cpmap/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace cpmap {

Image::Image(int w, int h) : width(w), height(h) {
  if (w < 1 || h < 1) throw ValidationError("image", "image dimensions must be >= 1");
  pixels.assign(3 * static_cast<std::size_t>(w) * h, 0);
}

namespace {

class PpmCursor {
 public:
  explicit PpmCursor(std::span<const std::uint8_t> b) : bytes_(b) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("PPM: " + msg + " at byte offset " + std::to_string(pos_));
  }

  // Whitespace and '#' comments (to end of line) separate header tokens.
  void skip_separators() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_uint() {
    skip_separators();
    if (pos_ >= bytes_.size()) fail("unexpected end of header");
    if (!std::isdigit(bytes_[pos_])) fail("expected a decimal integer");
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000) fail("integer too large");
      ++pos_;
    }
    return static_cast<int>(v);
  }

  std::size_t pos_ = 0;
  std::span<const std::uint8_t> bytes_;
};

}  // namespace

Image parse_ppm(std::span<const std::uint8_t> bytes) {
  PpmCursor cur(bytes);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') cur.fail("missing P6 magic");
  cur.pos_ = 2;
  const int w = cur.read_uint();
  const int h = cur.read_uint();
  const int maxval = cur.read_uint();
  if (w < 1 || h < 1) cur.fail("image dimensions must be >= 1");
  if (maxval < 1 || maxval > 255) cur.fail("only 8-bit PPM (maxval <= 255) is supported");
  if (cur.pos_ >= bytes.size() || !std::isspace(bytes[cur.pos_])) cur.fail("expected whitespace after maxval");
  ++cur.pos_;
  const std::size_t need = 3 * static_cast<std::size_t>(w) * h;
  if (bytes.size() - cur.pos_ < need) cur.fail("truncated pixel data");
  Image img(w, h);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos_), need, img.pixels.begin());
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_ppm(bytes);
}

void write_image(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  const auto bytes = encode_ppm(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::array<double, 3> sample_bilinear(const Image& image, double px, double py) {
  px = std::clamp(px, 0.0, static_cast<double>(image.width - 1));
  py = std::clamp(py, 0.0, static_cast<double>(image.height - 1));
  const int x0 = std::min(static_cast<int>(px), image.width - 1);
  const int y0 = std::min(static_cast<int>(py), image.height - 1);
  const int x1 = std::min(x0 + 1, image.width - 1);
  const int y1 = std::min(y0 + 1, image.height - 1);
  const double fx = px - x0, fy = py - y0;
  std::array<double, 3> c{};
  for (int k = 0; k < 3; ++k) {
    const double top = (1 - fx) * image.at(x0, y0)[k] + fx * image.at(x1, y0)[k];
    const double bot = (1 - fx) * image.at(x0, y1)[k] + fx * image.at(x1, y1)[k];
    c[k] = (1 - fy) * top + fy * bot;
  }
  return c;
}

void write_ply(const std::filesystem::path& path, std::span<const ColoredPoint> points) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  char line[128];
  for (const auto& p : points) {
    std::snprintf(line, sizeof line, "%.9g %.9g %.9g %u %u %u\n", p.x, p.y, p.z, p.r, p.g, p.b);
    out << line;
  }
  if (!out) throw IoError("short write to " + path.string());
}

void fill_rates(ExperimentReport& report) {
  std::map<std::string, double> last;
  for (auto& row : report.rows) {
    auto it = last.find(row.method);
    row.rate = (it == last.end()) ? std::nan("") : std::log2(it->second / row.error);
    last[row.method] = row.error;
  }
}

namespace {
std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

std::string format_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << "dx,method,error,rate,seconds,speedup\n";
  for (const auto& r : report.rows)
    os << num(r.dx) << ',' << r.method << ',' << num(r.error) << ',' << num(r.rate) << ','
       << num(r.seconds) << ',' << num(r.speedup) << '\n';
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

void write_csv(const ExperimentReport& report, const std::filesystem::path& path) {
  write_text(path, format_csv(report));
}

}  // namespace cpmap
