#include "llie/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace llie {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

[[noreturn]] void png_error_handler(png_structp png, png_const_charp msg) {
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text) *text = msg;
    png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

}  // namespace

Tensor read_png(const std::filesystem::path& path) {
    FilePtr file = open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw IoError(path.string() + " is not a PNG file");
    }
    std::string message;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler,
                                             png_warning_handler);
    png_infop info = png_create_info_struct(png);
    std::vector<unsigned char> buffer;
    std::vector<png_bytep> rows;
    Tensor out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode " + path.string() + ": " + message);
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (png_get_bit_depth(png, info) == 16) png_set_swap(png);  // little-endian uint16 rows
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    const int depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * height);
    rows.resize(height);
    for (int y = 0; y < height; ++y) rows[y] = buffer.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (channels != 1 && channels != 3) {
        throw IoError(path.string() + ": unsupported channel count " + std::to_string(channels));
    }
    out = Tensor({1, channels, height, width});
    const double scale = depth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                const std::size_t k = static_cast<std::size_t>(x) * channels + c;
                double v;
                if (depth == 16) {
                    const auto* p = reinterpret_cast<const std::uint16_t*>(rows[y]);
                    v = p[k];
                } else {
                    v = rows[y][k];
                }
                out.at(0, c, y, x) = v / scale;
            }
        }
    }
    return out;
}

namespace {

void write_rows(const std::filesystem::path& path, int width, int height, int channels, int depth,
                std::vector<png_bytep>& rows) {
    FilePtr file = open_file(path, "wb");
    std::string message;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler,
                                              png_warning_handler);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode " + path.string() + ": " + message);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, depth, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (depth == 16) png_set_swap(png);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png(const std::filesystem::path& path, const Tensor& img, int bit_depth) {
    if (img.n() != 1 || (img.c() != 1 && img.c() != 3)) {
        throw UsageError("write_png expects (1, 1|3, H, W), got " + img.shape().str());
    }
    if (bit_depth != 8 && bit_depth != 16) throw UsageError("PNG bit depth must be 8 or 16");
    const int w = img.w(), h = img.h(), c = img.c();
    const int bytes = bit_depth / 8;
    const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
    std::vector<unsigned char> buffer(static_cast<std::size_t>(w) * h * c * bytes);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) {
        rows[y] = buffer.data() + static_cast<std::size_t>(y) * w * c * bytes;
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                const double v = std::clamp(img.at(0, ch, y, x), 0.0, 1.0);
                const auto q = static_cast<unsigned>(std::lround(v * maxv));
                const std::size_t k = static_cast<std::size_t>(x) * c + ch;
                if (bytes == 2) {
                    reinterpret_cast<std::uint16_t*>(rows[y])[k] = static_cast<std::uint16_t>(q);
                } else {
                    rows[y][k] = static_cast<unsigned char>(q);
                }
            }
        }
    }
    write_rows(path, w, h, c, bit_depth, rows);
}

void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                    const std::vector<unsigned char>& rgb) {
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
        throw UsageError("write_png_rgb8 buffer size mismatch");
    }
    std::vector<unsigned char> copy = rgb;
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = copy.data() + static_cast<std::size_t>(y) * width * 3;
    write_rows(path, width, height, 3, 8, rows);
}

}  // namespace llie
