#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace seqseg {

struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

// Binary 8-bit PGM (P5), maxval 255. Lossless grayscale, viewable anywhere.
void write_pgm(const std::string& path, const GrayImage& img);
GrayImage read_pgm(const std::string& path);

std::uint32_t crc32_bytes(const std::uint8_t* data, std::size_t n);
std::uint32_t crc32_file(const std::string& path);

}  // namespace seqseg
