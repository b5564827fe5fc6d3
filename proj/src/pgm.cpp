#include "ttaseg/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ttaseg/error.hpp"
#include "ttaseg/ntf.hpp"

namespace ttaseg {

void write_pgm(const std::filesystem::path& path, const Tensor& map, double scale) {
  if (map.rank() != 2) throw ShapeError("write_pgm expects an H x W map");
  std::string bytes = "P5\n" + std::to_string(map.dim(1)) + " " + std::to_string(map.dim(0)) + "\n255\n";
  bytes.reserve(bytes.size() + map.size());
  for (double v : map.data()) {
    const double level = scale > 0.0 ? std::clamp(v / scale, 0.0, 1.0) : 0.0;
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * level))));
  }
  write_file_bytes(path, bytes);
}

}  // namespace ttaseg
