#include "cpmap/error.hpp"

#include <sstream>

namespace cpmap {

namespace {
std::string describe_faces(const std::vector<std::size_t>& faces) {
  std::ostringstream os;
  os << "degenerate (zero-area) faces:";
  for (std::size_t i = 0; i < faces.size() && i < 20; ++i) os << ' ' << faces[i];
  if (faces.size() > 20) os << " ... (" << faces.size() << " total)";
  return os.str();
}
}  // namespace

DegenerateFace::DegenerateFace(std::vector<std::size_t> faces)
    : Error("DegenerateFace", describe_faces(faces)), faces_(std::move(faces)) {}

}  // namespace cpmap
