#include "seqseg/pgm.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace seqseg {

void write_pgm(const std::string& path, int height, int width,
               const std::vector<std::uint8_t>& gray) {
  if (gray.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("write_pgm: buffer size does not match extents");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!out) throw std::runtime_error("write_pgm: write failed for " + path);
}

std::vector<std::uint8_t> read_pgm(const std::string& path, int& height, int& width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm: cannot open " + path);
  std::string magic;
  int maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (magic != "P5" || maxval != 255) throw std::runtime_error("read_pgm: unsupported format in " + path);
  in.get();  // single whitespace after the header
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(height) * width);
  in.read(reinterpret_cast<char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!in) throw std::runtime_error("read_pgm: truncated file " + path);
  return gray;
}

std::vector<std::uint8_t> gray_from_channel(const Tensor& channel, double lo, double hi) {
  if (channel.ndim() != 2) throw std::invalid_argument("gray_from_channel: expected [H,W]");
  if (hi <= lo) throw std::invalid_argument("gray_from_channel: empty value range");
  std::vector<std::uint8_t> gray(channel.size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const double t = std::clamp((channel.data()[i] - lo) / (hi - lo), 0.0, 1.0);
    gray[i] = static_cast<std::uint8_t>(t * 255.0 + 0.5);
  }
  return gray;
}

std::vector<std::uint8_t> gray_from_mask(const ClassMask& mask) {
  static constexpr std::uint8_t palette[4] = {0, 255, 150, 80};
  std::vector<std::uint8_t> gray(mask.size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = palette[mask.values[i] < 4 ? mask.values[i] : 0];
  }
  return gray;
}

}  // namespace seqseg
