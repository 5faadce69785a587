// Writes the stand-in meshes used by the tests and presets.
//   make_standin [output-dir]

#include "cpmap/error.hpp"
#include "cpmap/trimesh.hpp"

#include <filesystem>
#include <iostream>

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "data";
  try {
    std::filesystem::create_directories(dir);
    const auto bunny = cpmap::make_standin_bunny();
    cpmap::write_off(bunny, dir / "bunny_standin.off");
    const auto sphere = cpmap::make_icosphere(3);
    cpmap::write_off(sphere, dir / "icosphere3.off");
    std::cout << "bunny_standin.off vertices=" << bunny.vertices.size() << " faces=" << bunny.faces.size()
              << " boundary_edges=" << bunny.boundary_edge_count() << "\n"
              << "icosphere3.off vertices=" << sphere.vertices.size() << " faces=" << sphere.faces.size() << "\n";
  } catch (const cpmap::Error& e) {
    std::cerr << "error kind=" << e.kind() << " message=\"" << e.what() << "\"\n";
    return 4;
  }
}
