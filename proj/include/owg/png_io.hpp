#pragma once
#include <string>
#include <vector>

#include "owg/raster.hpp"

namespace owg {

// Readers accept any libpng-decodable file and convert to the requested layout.
RgbImage read_png_rgb8(const std::string& path);
GrayU8 read_png_gray8(const std::string& path);
GrayU16 read_png_gray16(const std::string& path);

// Encoders emit fixed stored-block deflate streams: output bytes depend only on
// the pixels, never on the zlib version, so hashes and goldens stay stable.
std::vector<uint8_t> encode_png(const RgbImage& img);
std::vector<uint8_t> encode_png(const GrayU8& img);
std::vector<uint8_t> encode_png(const GrayU16& img);

void write_png(const std::string& path, const RgbImage& img);
void write_png(const std::string& path, const GrayU8& img);
void write_png(const std::string& path, const GrayU16& img);

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_bytes(const std::string& path);

}  // namespace owg
