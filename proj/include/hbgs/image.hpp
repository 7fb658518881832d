#pragma once

// RGB rasters stored as row-major doubles in [0, 1], plus 8-bit PNG I/O and
// the 2x box downsampling used by the coarse-to-fine pyramid.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace hbgs {

struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;  // row-major, channel-interleaved

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, fill) {}

    double& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }

    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
    size_t size() const { return data.size(); }

    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

namespace detail {
struct PngReadCloser {
    FILE* f = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (f) std::fclose(f);
    }
};
struct PngWriteCloser {
    FILE* f = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (f) std::fclose(f);
    }
};
}  // namespace detail

// Reads a PNG and normalizes it to 8-bit RGB in [0, 1].
inline Image read_png(const std::string& path) {
    detail::PngReadCloser ctx;
    ctx.f = std::fopen(path.c_str(), "rb");
    if (!ctx.f) throw std::runtime_error("cannot open image " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw std::runtime_error("png init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("png init failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("corrupt png " + path);

    png_init_io(ctx.png, ctx.f);
    png_read_info(ctx.png, ctx.info);

    png_set_expand(ctx.png);          // palette / gray / low-depth -> 8-bit
    png_set_strip_16(ctx.png);
    png_set_strip_alpha(ctx.png);
    png_set_gray_to_rgb(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    const int h = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    const int w = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    if (png_get_channels(ctx.png, ctx.info) != 3)
        throw std::runtime_error("unsupported png layout " + path);

    std::vector<png_byte> rowbuf(static_cast<size_t>(w) * 3);
    Image img(h, w, 3);
    for (int y = 0; y < h; ++y) {
        png_read_row(ctx.png, rowbuf.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = static_cast<double>(rowbuf[3 * x + c]) / 255.0;
    }
    return img;
}

inline void write_png(const Image& img, const std::string& path) {
    if (img.channels != 3) throw std::runtime_error("write_png expects RGB");
    detail::PngWriteCloser ctx;
    ctx.f = std::fopen(path.c_str(), "wb");
    if (!ctx.f) throw std::runtime_error("cannot write image " + path);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw std::runtime_error("png init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("png init failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("png write failed " + path);

    png_init_io(ctx.png, ctx.f);
    png_set_IHDR(ctx.png, ctx.info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);

    std::vector<png_byte> rowbuf(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at(y, x, c), 0.0, 1.0);
                rowbuf[3 * x + c] = static_cast<png_byte>(std::lround(v * 255.0));
            }
        png_write_row(ctx.png, rowbuf.data());
    }
    png_write_end(ctx.png, ctx.info);
}

// 2x2 box mean; odd trailing rows/columns average whatever pixels exist.
inline Image downsample2x(const Image& img) {
    const int h2 = (img.height + 1) / 2;
    const int w2 = (img.width + 1) / 2;
    Image out(h2, w2, img.channels);
    for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x) {
            const int y1 = std::min(2 * y + 1, img.height - 1);
            const int x1 = std::min(2 * x + 1, img.width - 1);
            const int ny = (y1 > 2 * y) ? 2 : 1;
            const int nx = (x1 > 2 * x) ? 2 : 1;
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int yy = 2 * y; yy <= y1; ++yy)
                    for (int xx = 2 * x; xx <= x1; ++xx) acc += img.at(yy, xx, c);
                out.at(y, x, c) = acc / (ny * nx);
            }
        }
    return out;
}

inline Image downsample_levels(const Image& img, int levels) {
    Image out = img;
    for (int l = 0; l < levels; ++l) out = downsample2x(out);
    return out;
}

}  // namespace hbgs
