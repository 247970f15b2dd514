#include "image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace dlove {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors via longjmp; the default error handler also prints
// to stderr. Route both through exceptions instead.
[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
    (void)msg;
    longjmp(png_jmpbuf(png), 1);
}

void png_warn_fn(png_structp, png_const_charp) {}

} // namespace

Image convert_channels(const Image& img, int target_channels) {
    if (target_channels != 1 && target_channels != 3)
        throw InvalidArgument("convert_channels: target must be 1 or 3, got " +
                              std::to_string(target_channels));
    if (img.c == target_channels) return img;
    Image out(img.h, img.w, target_channels);
    if (target_channels == 3) { // replicate gray
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                for (int ch = 0; ch < 3; ++ch)
                    out.at(y, x, ch) = img.at(y, x, 0);
    } else { // Rec.601 luma
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                out.at(y, x, 0) = std::clamp(0.299 * img.at(y, x, 0) +
                                             0.587 * img.at(y, x, 1) +
                                             0.114 * img.at(y, x, 2), 0.0, 1.0);
    }
    return out;
}

Image load_image(const std::string& path, int target_channels) {
    if (target_channels != 0 && target_channels != 1 && target_channels != 3)
        throw InvalidArgument("load_image: target_channels must be 0, 1 or 3");
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open for reading: " + path);

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw FormatError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             png_error_fn, png_warn_fn);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }

    std::vector<unsigned char> pixels;
    std::vector<png_bytep> rows;
    int width = 0, height = 0, channels = 0;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("corrupt PNG: " + path);
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    if (bit_depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnsupportedError("16-bit PNG not supported: " + path);
    }

    // Normalize every input variant to 8-bit gray or RGB.
    const int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    channels = static_cast<int>(png_get_channels(png, info));
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnsupportedError("unsupported channel count " + std::to_string(channels) +
                               ": " + path);
    }

    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * height);
    rows.resize(height);
    for (int y = 0; y < height; ++y) rows[y] = pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(height, width, channels);
    for (int y = 0; y < height; ++y) {
        const unsigned char* row = pixels.data() + y * stride;
        for (int x = 0; x < width; ++x)
            for (int ch = 0; ch < channels; ++ch)
                img.at(y, x, ch) = row[x * channels + ch] / 255.0;
    }
    if (target_channels != 0 && target_channels != channels)
        return convert_channels(img, target_channels);
    return img;
}

void save_image(const Image& img, const std::string& path) {
    require_valid_image(img, "save_image");

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              png_error_fn, png_warn_fn);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }

    std::vector<unsigned char> pixels(static_cast<std::size_t>(img.h) * img.w * img.c);
    std::vector<png_bytep> rows(img.h);

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path);
    }

    png_init_io(png, fp.get());
    const int color = (img.c == 1) ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, img.w, img.h, 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    for (std::size_t i = 0; i < img.data.size(); ++i)
        pixels[i] = static_cast<unsigned char>(std::lround(img.data[i] * 255.0));
    for (int y = 0; y < img.h; ++y)
        rows[y] = pixels.data() + static_cast<std::size_t>(y) * img.w * img.c;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace dlove
