#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace deltaseg {

// 8-bit image buffer, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

// Decodes any libpng-readable file to 8-bit gray or RGB (alpha stripped,
// palette expanded, 16-bit narrowed).
Image8 read_png(const std::string& path);

// channels must be 1 or 3
void write_png(const std::string& path, const Image8& img);

}  // namespace deltaseg
