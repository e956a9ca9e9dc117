#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace semvox {

// Single-channel grayscale image; pixels widened to 16 bit regardless of the
// file's bit depth.
struct GrayImage {
    int width = 0;
    int height = 0;
    int bit_depth = 8;  // 8 or 16 as stored on disk
    std::vector<uint16_t> pixels;

    uint16_t at(int u, int v) const { return pixels[static_cast<size_t>(v) * width + u]; }
};

GrayImage read_png_gray(const std::string& path);

void write_png_gray8(const std::string& path, int width, int height, const uint8_t* data);
void write_png_gray16(const std::string& path, int width, int height, const uint16_t* data);

// Debug export of a real-valued range/height image: round(F * (value + O))
// clamped to [0, 65535].
void export_png16(const std::string& path, const std::vector<float>& image, int width,
                  int height, double scale_f, double offset_o);

}  // namespace semvox
