#include "cpfc/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace cpfc {

namespace {

std::uint8_t quantize(float v) {
    float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(255.0f * c));
}

struct PngWriteCloser {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngReadCloser {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

}  // namespace

void save_image(const std::string& path, const Tensor& image) {
    int channels, h, w;
    if (image.ndim() == 3 && image.dim(0) == 3) {
        channels = 3;
        h = image.dim(1);
        w = image.dim(2);
    } else if (image.ndim() == 2) {
        channels = 1;
        h = image.dim(0);
        w = image.dim(1);
    } else if (image.ndim() == 3 && image.dim(0) == 1) {
        channels = 1;
        h = image.dim(1);
        w = image.dim(2);
    } else {
        throw std::invalid_argument("save_image: tensor must be {3,H,W}, {1,H,W} or {H,W}");
    }

    std::string tmp = path + ".tmp";
    PngWriteCloser ctx;
    ctx.fp = std::fopen(tmp.c_str(), "wb");
    if (!ctx.fp) throw std::runtime_error("save_image: cannot open " + tmp);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw std::runtime_error("save_image: png init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("save_image: png info init failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("save_image: png write failed for " + path);

    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);

    std::vector<std::uint8_t> row(static_cast<size_t>(w) * channels);
    const float* data = image.data().data();
    size_t plane = static_cast<size_t>(h) * w;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (channels == 3) {
                for (int c = 0; c < 3; ++c)
                    row[static_cast<size_t>(x) * 3 + c] =
                        quantize(data[static_cast<size_t>(c) * plane + static_cast<size_t>(y) * w + x]);
            } else {
                row[static_cast<size_t>(x)] = quantize(data[static_cast<size_t>(y) * w + x]);
            }
        }
        png_write_row(ctx.png, row.data());
    }
    png_write_end(ctx.png, nullptr);
    std::fclose(ctx.fp);
    ctx.fp = nullptr;
    std::filesystem::rename(tmp, path);
}

Tensor load_image(const std::string& path) {
    PngReadCloser ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw std::runtime_error("load_image: cannot open " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw std::runtime_error("load_image: png init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("load_image: png info init failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("load_image: not a readable PNG: " + path);

    png_init_io(ctx.png, ctx.fp);
    png_read_info(ctx.png, ctx.info);
    png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
    png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
    int bit_depth = png_get_bit_depth(ctx.png, ctx.info);
    int color_type = png_get_color_type(ctx.png, ctx.info);
    if (bit_depth != 8)
        throw std::runtime_error("load_image: unsupported bit depth " + std::to_string(bit_depth) +
                                 " in " + path);
    if (color_type != PNG_COLOR_TYPE_RGB && color_type != PNG_COLOR_TYPE_GRAY)
        throw std::runtime_error("load_image: unsupported color type in " + path +
                                 " (only 8-bit RGB or grayscale)");
    int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;

    std::vector<std::uint8_t> rowbuf(static_cast<size_t>(w) * channels);
    Tensor out = channels == 3 ? Tensor({3, static_cast<int>(h), static_cast<int>(w)})
                               : Tensor({static_cast<int>(h), static_cast<int>(w)});
    size_t plane = static_cast<size_t>(h) * w;
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(ctx.png, rowbuf.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x) {
            if (channels == 3) {
                for (int c = 0; c < 3; ++c)
                    out.data()[static_cast<size_t>(c) * plane + static_cast<size_t>(y) * w + x] =
                        static_cast<float>(rowbuf[static_cast<size_t>(x) * 3 + c]) / 255.0f;
            } else {
                out.data()[static_cast<size_t>(y) * w + x] =
                    static_cast<float>(rowbuf[static_cast<size_t>(x)]) / 255.0f;
            }
        }
    }
    return out;
}

void save_raw(const std::string& path, const Tensor& tensor) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("save_raw: cannot open " + tmp);
        os.write(reinterpret_cast<const char*>(tensor.data().data()),
                 static_cast<std::streamsize>(tensor.data().size() * sizeof(float)));
        if (!os) throw std::runtime_error("save_raw: write failed for " + path);
    }
    std::filesystem::rename(tmp, path);
}

Tensor load_raw(const std::string& path, std::vector<int> shape) {
    Tensor out(shape);
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_raw: cannot open " + path);
    is.seekg(0, std::ios::end);
    auto size = is.tellg();
    if (static_cast<size_t>(size) != out.data().size() * sizeof(float))
        throw std::runtime_error("load_raw: " + path + " holds " + std::to_string(size) +
                                 " bytes, expected " +
                                 std::to_string(out.data().size() * sizeof(float)));
    is.seekg(0);
    is.read(reinterpret_cast<char*>(out.data().data()), size);
    if (!is) throw std::runtime_error("load_raw: read failed for " + path);
    return out;
}

void atomic_write_text(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("atomic_write_text: cannot open " + tmp);
        os << content;
        if (!os) throw std::runtime_error("atomic_write_text: write failed for " + path);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace cpfc
