#include "seqseg/image_io.hpp"

#include <fstream>
#include <sstream>

#include <zlib.h>

#include "seqseg/errors.hpp"

namespace seqseg {

void write_pgm(const std::string& path, const GrayImage& img) {
  if (img.height < 1 || img.width < 1 ||
      img.pixels.size() != static_cast<std::size_t>(img.height) * img.width) {
    throw std::invalid_argument("write_pgm: bad image dimensions for " + path);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("write_pgm: cannot open " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw FormatError("write_pgm: short write to " + path);
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("read_pgm: cannot open " + path);
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (!in || magic != "P5" || width < 1 || height < 1 || maxval != 255) {
    throw FormatError("read_pgm: not an 8-bit binary PGM: " + path);
  }
  in.get();  // single whitespace after header
  GrayImage img;
  img.height = height;
  img.width = width;
  img.pixels.resize(static_cast<std::size_t>(height) * width);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw FormatError("read_pgm: truncated pixel data: " + path);
  return img;
}

std::uint32_t crc32_bytes(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, data, static_cast<uInt>(n)));
}

std::uint32_t crc32_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("crc32_file: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  return crc32_bytes(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
}

}  // namespace seqseg
