#include "bev/png.hpp"

#include <cstdint>
#include <fstream>

#include "core/error.hpp"

namespace ap::bev {

namespace {

uint32_t crc32_table_entry(uint32_t n) {
  uint32_t c = n;
  for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
  return c;
}

uint32_t crc32(const unsigned char* data, size_t len, uint32_t crc = 0xffffffffu) {
  static uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (uint32_t n = 0; n < 256; ++n) table[n] = crc32_table_entry(n);
    init = true;
  }
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return crc;
}

uint32_t adler32(const unsigned char* data, size_t len) {
  uint32_t a = 1, b = 0;
  for (size_t i = 0; i < len; ++i) {
    a = (a + data[i]) % 65521;
    b = (b + a) % 65521;
  }
  return (b << 16) | a;
}

void put_be32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

void put_chunk(std::string& out, const char type[4], const std::string& payload) {
  put_be32(out, static_cast<uint32_t>(payload.size()));
  std::string body(type, 4);
  body += payload;
  out += body;
  put_be32(out, crc32(reinterpret_cast<const unsigned char*>(body.data()), body.size()) ^
                    0xffffffffu);
}

// zlib stream of stored (uncompressed) deflate blocks
std::string zlib_stored(const std::string& raw) {
  std::string out;
  out.push_back(0x78);
  out.push_back(0x01);
  size_t pos = 0;
  while (pos < raw.size()) {
    size_t n = std::min<size_t>(65535, raw.size() - pos);
    bool final = pos + n == raw.size();
    out.push_back(final ? 1 : 0);
    out.push_back(static_cast<char>(n & 0xff));
    out.push_back(static_cast<char>((n >> 8) & 0xff));
    out.push_back(static_cast<char>(~n & 0xff));
    out.push_back(static_cast<char>((~n >> 8) & 0xff));
    out.append(raw, pos, n);
    pos += n;
  }
  put_be32(out, adler32(reinterpret_cast<const unsigned char*>(raw.data()), raw.size()));
  return out;
}

void write_png(const std::string& path, size_t width, size_t height, int color_type,
               size_t bytes_per_pixel, const std::vector<unsigned char>& pixels) {
  if (pixels.size() != width * height * bytes_per_pixel)
    raise(ErrorKind::Contract, "png: pixel buffer size mismatch");
  std::string ihdr;
  put_be32(ihdr, static_cast<uint32_t>(width));
  put_be32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);                             // bit depth
  ihdr.push_back(static_cast<char>(color_type));  // 0 gray, 2 rgb
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);

  std::string raw;
  raw.reserve(height * (1 + width * bytes_per_pixel));
  for (size_t v = 0; v < height; ++v) {
    raw.push_back(0);  // filter none
    raw.append(reinterpret_cast<const char*>(&pixels[v * width * bytes_per_pixel]),
               width * bytes_per_pixel);
  }

  std::string out("\x89PNG\r\n\x1a\n", 8);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", zlib_stored(raw));
  put_chunk(out, "IEND", "");

  std::ofstream os(path, std::ios::binary);
  if (!os) raise(ErrorKind::Io, "png: cannot open for write: " + path);
  os << out;
  if (!os) raise(ErrorKind::Io, "png: write failed: " + path);
}

}  // namespace

void write_png_gray(const std::string& path, size_t width, size_t height,
                    const std::vector<unsigned char>& pixels) {
  write_png(path, width, height, 0, 1, pixels);
}

void write_png_rgb(const std::string& path, size_t width, size_t height,
                   const std::vector<unsigned char>& pixels) {
  write_png(path, width, height, 2, 3, pixels);
}

}  // namespace ap::bev
