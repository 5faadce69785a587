#include "cpmap/config.hpp"
#include "cpmap/error.hpp"
#include "cpmap/experiments.hpp"
#include "cpmap/io.hpp"
#include "cpmap/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

using namespace cpmap;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cpmap_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

TEST_SUITE("rng") {
  // Known-answer vectors published with Random123 (kat_vectors, philox4x32_10).
  TEST_CASE("philox4x32-10 known answers") {
    using A4 = std::array<std::uint32_t, 4>;
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
  }

  TEST_CASE("golden normal draws") {
    auto rng = rng_stream(7, 0);
    CHECK(rng.normal() == 0.22970816457153004);
    CHECK(rng.normal() == 0.20041439038511158);
  }

  TEST_CASE("identical seed and stream reproduce; distinct streams differ") {
    auto a = rng_stream(42, 3), b = rng_stream(42, 3), c = rng_stream(42, 4), d = rng_stream(43, 3);
    int same_c = 0, same_d = 0;
    for (int i = 0; i < 1000; ++i) {
      const auto x = a.next_u32();
      CHECK(x == b.next_u32());
      same_c += x == c.next_u32();
      same_d += x == d.next_u32();
    }
    CHECK(same_c < 3);
    CHECK(same_d < 3);
  }

  TEST_CASE("copying a stream forks it") {
    auto a = rng_stream(1, 1);
    a.normal();
    auto b = a;
    for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
  }

  TEST_CASE("uniform lies in the open unit interval with the right moments") {
    auto rng = rng_stream(5, 0);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform();
      REQUIRE(u > 0);
      REQUIRE(u < 1);
      s += u;
      s2 += u * u;
    }
    CHECK(s / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(s2 / n - (s / n) * (s / n) == doctest::Approx(1.0 / 12).epsilon(0.02));
  }

  TEST_CASE("normal deviates have zero mean and unit variance") {
    auto rng = rng_stream(11, 2);
    const int n = 200000;
    double s = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
      const double z = rng.normal();
      s += z;
      s2 += z * z;
      s4 += z * z * z * z;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(s4 / n == doctest::Approx(3.0).epsilon(0.05));
  }

  TEST_CASE("stream id mixing separates argument tuples") {
    std::set<std::uint64_t> ids;
    for (std::uint64_t a = 0; a < 20; ++a)
      for (std::uint64_t b = 0; b < 20; ++b) ids.insert(mix_stream_id(a, b));
    CHECK(ids.size() == 400);
    CHECK(mix_stream_id(1, 2) != mix_stream_id(2, 1));
    CHECK(mix_stream_id(1, 2, 3) == mix_stream_id(1, 2, 3));
  }
}

TEST_SUITE("io") {
  TEST_CASE("1x1 white pixel encodes to 255,255,255") {
    Image img(1, 1);
    img.pixels = {255, 255, 255};
    const auto bytes = encode_ppm(img);
    REQUIRE(bytes.size() >= 3);
    CHECK(std::vector<std::uint8_t>(bytes.end() - 3, bytes.end()) == std::vector<std::uint8_t>{255, 255, 255});
    CHECK(parse_ppm(bytes) == img);
  }

  TEST_CASE("PPM round trip of a seeded random image") {
    Image img(64, 64);
    auto rng = rng_stream(3, 0);
    for (auto& b : img.pixels) b = static_cast<std::uint8_t>(rng.next_u32() & 0xff);
    const auto dir = temp_dir("ppm");
    write_image(img, dir / "a.ppm");
    CHECK(read_image(dir / "a.ppm") == img);
    write_image(read_image(dir / "a.ppm"), dir / "b.ppm");
    std::ifstream a(dir / "a.ppm", std::ios::binary), b(dir / "b.ppm", std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
  }

  TEST_CASE("PPM header comments and whitespace are tolerated") {
    const std::string text = "P6\n# a comment\n 2\t1 # width height\n255\n";
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    for (int i = 0; i < 6; ++i) bytes.push_back(static_cast<std::uint8_t>(10 * i));
    const Image img = parse_ppm(bytes);
    CHECK(img.width == 2);
    CHECK(img.height == 1);
    CHECK(img.at(1, 0)[2] == 50);
  }

  TEST_CASE("truncated or malformed PPM raises ParseError") {
    const std::string text = "P6 4 4 255\n";
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    bytes.resize(bytes.size() + 20, 7);
    CHECK_THROWS_AS(parse_ppm(bytes), ParseError);
    try {
      parse_ppm(bytes);
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
    const std::string p3 = "P3 1 1 255\n1 2 3\n";
    CHECK_THROWS_AS(parse_ppm(std::vector<std::uint8_t>(p3.begin(), p3.end())), ParseError);
    const std::string wide = "P6 1 1 65535\n";
    CHECK_THROWS_AS(parse_ppm(std::vector<std::uint8_t>(wide.begin(), wide.end())), ParseError);
  }

  TEST_CASE("missing image file raises IoError") {
    CHECK_THROWS_AS(read_image("/nonexistent/cpmap.ppm"), IoError);
  }

  TEST_CASE("bilinear sampling interpolates and clamps") {
    Image img(2, 1);
    img.pixels = {0, 0, 0, 100, 200, 50};
    const auto mid = sample_bilinear(img, 0.5, 0);
    CHECK(mid[0] == doctest::Approx(50));
    CHECK(mid[1] == doctest::Approx(100));
    const auto out = sample_bilinear(img, 7, -3);
    CHECK(out[0] == doctest::Approx(100));
  }

  TEST_CASE("CSV rate column is recomputable from the error column") {
    ExperimentReport rep;
    for (const char* m : {"CPM", "LSM"})
      for (double dx : {0.2, 0.1, 0.05}) {
        ReportRow r;
        r.dx = dx;
        r.method = m;
        r.error = 0.3 * dx * (1 + 0.1 * std::sin(17 * dx)) * (m[0] == 'L' ? 1.1 : 1.0);
        r.seconds = dx;
        r.speedup = std::nan("");
        rep.rows.push_back(r);
      }
    fill_rates(rep);
    const auto dir = temp_dir("csv");
    write_csv(rep, dir / "r.csv");
    std::ifstream in(dir / "r.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "dx,method,error,rate,seconds,speedup");
    std::map<std::string, double> prev;
    int rows = 0;
    while (std::getline(in, line)) {
      const auto c = split(line);
      REQUIRE(c.size() == 6);
      const double err = std::stod(c[2]);
      if (prev.count(c[1])) {
        CHECK(std::abs(std::stod(c[3]) - std::log2(prev[c[1]] / err)) < 1e-12);
      } else {
        CHECK(c[3].empty());
      }
      prev[c[1]] = err;
      ++rows;
    }
    CHECK(rows == 6);
  }

  TEST_CASE("PLY output has a header and one line per point") {
    const auto dir = temp_dir("ply");
    std::vector<ColoredPoint> pts{{0, 0, 1, 255, 0, 0}, {1, 0, 0, 0, 255, 0}};
    write_ply(dir / "p.ply", pts);
    std::ifstream in(dir / "p.ply");
    std::string all((std::istreambuf_iterator<char>(in)), {});
    CHECK(all.rfind("ply\nformat ascii 1.0\n", 0) == 0);
    CHECK(all.find("element vertex 2") != std::string::npos);
    CHECK(all.find("end_header") != std::string::npos);
  }
}

TEST_SUITE("config") {
  TEST_CASE("sections, comments and overrides") {
    auto cfg = Config::parse("# top\nsurface = torus\n[torus]\nR = 2  # major\nr=0.5\n");
    CHECK(cfg.str("surface") == "torus");
    CHECK(cfg.real("torus.R") == 2.0);
    CHECK(cfg.real("torus.r") == 0.5);
    cfg.set("torus.R=3");
    CHECK(cfg.real("torus.R") == 3.0);
    cfg.set("dx=0.2,0.1");
    CHECK(cfg.reals("dx") == std::vector<double>{0.2, 0.1});
  }

  TEST_CASE("missing required dx names the key") {
    const auto cfg = Config::parse("surface = sphere\n");
    try {
      IdentityStudyParams::from_config(cfg);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.key() == "dx");
    }
  }

  TEST_CASE("malformed values and unknown keys are rejected") {
    auto cfg = Config::parse("dx = abc\nbogus = 1\n");
    CHECK_THROWS_AS(cfg.real("dx"), ValidationError);
    try {
      cfg.require_known({"dx"});
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.key() == "bogus");
    }
  }

  TEST_CASE("physical parameters are validated at load") {
    auto cfg = Config::parse("dx = 0.1\nrealizations = 0\n");
    CHECK_THROWS_AS(IdentityStudyParams::from_config(cfg), ValidationError);
    cfg = Config::parse("dx = -0.1\n");
    CHECK_THROWS_AS(IdentityStudyParams::from_config(cfg), ValidationError);
    cfg = Config::parse("dx = 0.1\ndx_ref = 0.03\n");
    CHECK_THROWS_AS(PlaneSphereParams::from_config(cfg), ValidationError);
  }

  TEST_CASE("dump is canonical and reparses") {
    const auto cfg = Config::parse("b = 2\na = 1\n[s]\nk = v\n");
    const auto again = Config::parse(cfg.dump());
    CHECK(again.entries() == cfg.entries());
    CHECK(cfg.dump() == again.dump());
  }
}
