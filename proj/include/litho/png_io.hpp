#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace litho {

/// Grayscale raster as stored on disk: 16-bit samples.
struct RawImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint16_t> pixels;  // row-major
};

/// Reads a grayscale PNG; 8-bit files are widened to 16 bits.
RawImage read_png16(const std::string& path);

/// Writes a 16-bit grayscale PNG.
void write_png16(const RawImage& image, const std::string& path);

}  // namespace litho
