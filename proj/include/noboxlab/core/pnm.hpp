#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace noboxlab {

// 8-bit raster image. channels is 1 (grayscale, PGM P5) or 3 (RGB, PPM P6).
// Pixels are interleaved row-major: [h][w][c].
struct RasterImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;
};

// Reads a binary PGM (P5) or PPM (P6) file with maxval 255.
// Throws IngestionError on malformed input.
RasterImage read_pnm(const std::string& path);

// Writes img as P5 (channels==1) or P6 (channels==3).
// Throws PersistenceError on I/O failure, DomainError on bad channel count.
void write_pnm(const std::string& path, const RasterImage& img);

}
