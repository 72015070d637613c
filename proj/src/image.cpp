#include "tubelab/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tubelab {

void Image::clamp01() {
  for (float& p : pixels) p = std::clamp(p, 0.0f, 1.0f);
}

double Image::mean() const {
  if (pixels.empty()) return 0.0;
  double s = 0.0;
  for (float p : pixels) s += p;
  return s / static_cast<double>(pixels.size());
}

double Image::variance() const {
  if (pixels.empty()) return 0.0;
  const double m = mean();
  double s = 0.0;
  for (float p : pixels) s += (p - m) * (p - m);
  return s / static_cast<double>(pixels.size());
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), bytes.begin(), [](float p) {
    return static_cast<unsigned char>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f));
  });
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) throw Error(ErrorCode::Io, "unsupported PGM " + path.string());
  in.get();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw Error(ErrorCode::Io, "truncated PGM " + path.string());
  Image img(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

}  // namespace tubelab
