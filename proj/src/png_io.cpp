#include "owg/png_io.hpp"

#include <png.h>
#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>

namespace owg {
namespace {

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;

  explicit PngReader(const std::string& path) {
    fp = std::fopen(path.c_str(), "rb");
    if (!fp) raise(Err::MissingFile, path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8)) {
      std::fclose(fp);
      raise(Err::FormatError, path + " is not a PNG file");
    }
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
      cleanup();
      raise(Err::FormatError, path + ": libpng decode error");
    }
    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
  }

  ~PngReader() { cleanup(); }

  void cleanup() {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    if (fp) std::fclose(fp);
    png = nullptr;
    fp = nullptr;
  }

  std::vector<std::vector<uint8_t>> read_rows() {
    png_read_update_info(png, info);
    const size_t rowbytes = png_get_rowbytes(png, info);
    const int h = png_get_image_height(png, info);
    std::vector<std::vector<uint8_t>> rows(h, std::vector<uint8_t>(rowbytes));
    std::vector<png_bytep> ptrs(h);
    for (int i = 0; i < h; ++i) ptrs[i] = rows[i].data();
    png_read_image(png, ptrs.data());
    return rows;
  }
};

void append_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& body) {
  append_be32(out, static_cast<uint32_t>(body.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
  append_be32(out, crc);
}

// zlib stream of uncompressed (stored) deflate blocks. Framing is fixed by the
// deflate spec itself, so the bytes never vary with zlib version or settings.
std::vector<uint8_t> stored_zlib(const std::vector<uint8_t>& raw) {
  std::vector<uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  size_t pos = 0;
  do {
    const size_t n = std::min<size_t>(raw.size() - pos, 65535);
    const bool final = pos + n == raw.size();
    z.push_back(final ? 1 : 0);
    z.push_back(static_cast<uint8_t>(n & 0xff));
    z.push_back(static_cast<uint8_t>(n >> 8));
    z.push_back(static_cast<uint8_t>(~n & 0xff));
    z.push_back(static_cast<uint8_t>((~n >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + pos, raw.begin() + pos + n);
    pos += n;
  } while (pos < raw.size());
  const uint32_t a = static_cast<uint32_t>(adler32(1, raw.data(), static_cast<uInt>(raw.size())));
  append_be32(z, a);
  return z;
}

std::vector<uint8_t> encode_impl(int width, int height, int color_type, int bit_depth,
                                 const std::vector<uint8_t>& scanline_data) {
  std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<uint8_t> ihdr;
  append_be32(ihdr, static_cast<uint32_t>(width));
  append_be32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(static_cast<uint8_t>(bit_depth));
  ihdr.push_back(static_cast<uint8_t>(color_type));
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", stored_zlib(scanline_data));
  append_chunk(out, "IEND", {});
  return out;
}

}  // namespace

RgbImage read_png_rgb8(const std::string& path) {
  PngReader r(path);
  png_set_expand(r.png);
  png_set_strip_16(r.png);
  png_set_strip_alpha(r.png);
  png_set_gray_to_rgb(r.png);
  const int w = png_get_image_width(r.png, r.info);
  const int h = png_get_image_height(r.png, r.info);
  auto rows = r.read_rows();
  RgbImage img(w, h);
  for (int v = 0; v < h; ++v) {
    if (rows[v].size() < static_cast<size_t>(w) * 3) raise(Err::FormatError, path + ": short row");
    for (int u = 0; u < w; ++u)
      img.at(u, v) = Rgb{rows[v][u * 3], rows[v][u * 3 + 1], rows[v][u * 3 + 2]};
  }
  return img;
}

GrayU8 read_png_gray8(const std::string& path) {
  PngReader r(path);
  const int ct = png_get_color_type(r.png, r.info);
  if (ct != PNG_COLOR_TYPE_GRAY)
    raise(Err::FormatError, path + ": expected 8-bit grayscale PNG");
  png_set_expand_gray_1_2_4_to_8(r.png);
  png_set_strip_16(r.png);
  const int w = png_get_image_width(r.png, r.info);
  const int h = png_get_image_height(r.png, r.info);
  auto rows = r.read_rows();
  GrayU8 img(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) img.at(u, v) = rows[v][u];
  return img;
}

GrayU16 read_png_gray16(const std::string& path) {
  PngReader r(path);
  const int ct = png_get_color_type(r.png, r.info);
  const int depth = png_get_bit_depth(r.png, r.info);
  if (ct != PNG_COLOR_TYPE_GRAY || depth != 16)
    raise(Err::FormatError, path + ": expected 16-bit grayscale PNG");
  const int w = png_get_image_width(r.png, r.info);
  const int h = png_get_image_height(r.png, r.info);
  auto rows = r.read_rows();
  GrayU16 img(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      img.at(u, v) = static_cast<uint16_t>((rows[v][u * 2] << 8) | rows[v][u * 2 + 1]);
  return img;
}

std::vector<uint8_t> encode_png(const RgbImage& img) {
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.height()) * (1 + img.width() * 3));
  for (int v = 0; v < img.height(); ++v) {
    raw.push_back(0);  // filter: none
    for (int u = 0; u < img.width(); ++u) {
      const Rgb& p = img.at(u, v);
      raw.push_back(p.r);
      raw.push_back(p.g);
      raw.push_back(p.b);
    }
  }
  return encode_impl(img.width(), img.height(), PNG_COLOR_TYPE_RGB, 8, raw);
}

std::vector<uint8_t> encode_png(const GrayU8& img) {
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.height()) * (1 + img.width()));
  for (int v = 0; v < img.height(); ++v) {
    raw.push_back(0);
    for (int u = 0; u < img.width(); ++u) raw.push_back(img.at(u, v));
  }
  return encode_impl(img.width(), img.height(), PNG_COLOR_TYPE_GRAY, 8, raw);
}

std::vector<uint8_t> encode_png(const GrayU16& img) {
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.height()) * (1 + img.width() * 2));
  for (int v = 0; v < img.height(); ++v) {
    raw.push_back(0);
    for (int u = 0; u < img.width(); ++u) {
      const uint16_t p = img.at(u, v);
      raw.push_back(static_cast<uint8_t>(p >> 8));
      raw.push_back(static_cast<uint8_t>(p & 0xff));
    }
  }
  return encode_impl(img.width(), img.height(), PNG_COLOR_TYPE_GRAY, 16, raw);
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) raise(Err::MissingFile, "cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) raise(Err::FormatError, "short write: " + path);
}

std::vector<uint8_t> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(Err::MissingFile, path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_png(const std::string& path, const RgbImage& img) { write_bytes(path, encode_png(img)); }
void write_png(const std::string& path, const GrayU8& img) { write_bytes(path, encode_png(img)); }
void write_png(const std::string& path, const GrayU16& img) { write_bytes(path, encode_png(img)); }

}  // namespace owg
