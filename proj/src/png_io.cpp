#include "semvox/png_io.hpp"

#include "semvox/types.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace semvox {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

GrayImage read_png_gray(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("cannot open: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw DataError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("failed to decode PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    GrayImage img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.bit_depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color != PNG_COLOR_TYPE_GRAY) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    if (img.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (img.bit_depth == 16) png_set_swap(png);  // file is big-endian
    png_read_update_info(png, info);

    img.pixels.resize(static_cast<size_t>(img.width) * img.height);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    std::vector<uint8_t> row8;
    if (img.bit_depth == 16) {
        for (int v = 0; v < img.height; ++v)
            rows[static_cast<size_t>(v)] =
                reinterpret_cast<png_bytep>(img.pixels.data() + static_cast<size_t>(v) * img.width);
        png_read_image(png, rows.data());
    } else {
        row8.resize(static_cast<size_t>(img.width) * img.height);
        for (int v = 0; v < img.height; ++v)
            rows[static_cast<size_t>(v)] = row8.data() + static_cast<size_t>(v) * img.width;
        png_read_image(png, rows.data());
        for (size_t i = 0; i < row8.size(); ++i) img.pixels[i] = row8[i];
        img.bit_depth = 8;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

namespace {

void write_png_gray(const std::string& path, int width, int height, int bit_depth,
                    const void* data) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw DataError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("failed to encode PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);

    const size_t stride = static_cast<size_t>(width) * (bit_depth / 8);
    const auto* bytes = static_cast<const uint8_t*>(data);
    for (int v = 0; v < height; ++v)
        png_write_row(png, const_cast<png_bytep>(bytes + static_cast<size_t>(v) * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray8(const std::string& path, int width, int height, const uint8_t* data) {
    write_png_gray(path, width, height, 8, data);
}

void write_png_gray16(const std::string& path, int width, int height, const uint16_t* data) {
    write_png_gray(path, width, height, 16, data);
}

void export_png16(const std::string& path, const std::vector<float>& image, int width,
                  int height, double scale_f, double offset_o) {
    std::vector<uint16_t> quantized(image.size());
    for (size_t i = 0; i < image.size(); ++i) {
        const double v = std::round(scale_f * (image[i] + offset_o));
        quantized[i] = static_cast<uint16_t>(std::clamp(v, 0.0, 65535.0));
    }
    write_png_gray16(path, width, height, quantized.data());
}

}  // namespace semvox
