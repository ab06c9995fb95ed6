#pragma once

#include <string>
#include <vector>

namespace ap::bev {

// Minimal PNG writer (8-bit gray / RGB, zlib stream with stored deflate
// blocks). Debug-path plumbing; no compression.
void write_png_gray(const std::string& path, size_t width, size_t height,
                    const std::vector<unsigned char>& pixels);
void write_png_rgb(const std::string& path, size_t width, size_t height,
                   const std::vector<unsigned char>& pixels);  // interleaved rgb

}  // namespace ap::bev
