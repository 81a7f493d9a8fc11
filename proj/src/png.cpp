#include "skelimg/png.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>
#include <string>

#include "skelimg/error.hpp"

namespace skelimg {

namespace {

// libpng reports errors by longjmp; the setjmp frames below hold only
// trivially destructible locals, and errors become exceptions afterwards.
struct PngState {
    std::vector<std::uint8_t>* out = nullptr;
    std::span<const std::uint8_t> in;
    std::size_t pos = 0;
    char message[256] = {};
};

void on_png_error(png_structp png, png_const_charp msg) {
    auto* state = static_cast<PngState*>(png_get_error_ptr(png));
    std::strncpy(state->message, msg, sizeof state->message - 1);
    png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

void write_to_vector(png_structp png, png_bytep data, png_size_t length) {
    auto* state = static_cast<PngState*>(png_get_io_ptr(png));
    state->out->insert(state->out->end(), data, data + length);
}

void flush_noop(png_structp) {}

void read_from_span(png_structp png, png_bytep data, png_size_t length) {
    auto* state = static_cast<PngState*>(png_get_io_ptr(png));
    if (state->pos + length > state->in.size()) png_error(png, "unexpected end of data");
    std::memcpy(data, state->in.data() + state->pos, length);
    state->pos += length;
}

bool write_png(PngState& state, int width, int height, int channels, const std::uint8_t* pixels) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state, on_png_error, on_png_warning);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_set_write_fn(png, &state, write_to_vector, flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, pixels + static_cast<std::size_t>(y) * stride);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

bool read_png_header(PngState& state, png_structp png, png_infop info, DecodedPng& result) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_set_read_fn(png, &state, read_from_span);
    png_read_info(png, info);
    result.width = static_cast<int>(png_get_image_width(png, info));
    result.height = static_cast<int>(png_get_image_height(png, info));
    result.channels = static_cast<int>(png_get_channels(png, info));
    if (png_get_bit_depth(png, info) != 8) png_error(png, "only 8-bit images are supported");
    return true;
}

bool read_png_rows(png_structp png, png_infop info, std::uint8_t* pixels, int height) {
    if (setjmp(png_jmpbuf(png))) return false;
    const std::size_t stride = png_get_rowbytes(png, info);
    for (int y = 0; y < height; ++y) png_read_row(png, pixels + static_cast<std::size_t>(y) * stride, nullptr);
    png_read_end(png, nullptr);
    return true;
}

}  // namespace

std::vector<std::uint8_t> encode_png(int width, int height, int channels, std::span<const std::uint8_t> pixels) {
    if (channels != 1 && channels != 3) throw Error(ErrorCode::invalid_argument, "png: channels must be 1 or 3");
    if (width < 1 || height < 1 ||
        pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                             static_cast<std::size_t>(channels)) {
        throw Error(ErrorCode::shape_mismatch, "png: pixel buffer does not match dimensions");
    }
    std::vector<std::uint8_t> out;
    PngState state;
    state.out = &out;
    if (!write_png(state, width, height, channels, pixels.data())) {
        throw Error(ErrorCode::io_error, std::string("png: ") + state.message);
    }
    return out;
}

DecodedPng decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw Error(ErrorCode::io_error, "png: bad signature");
    }
    PngState state;
    state.in = bytes;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state, on_png_error, on_png_warning);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    DecodedPng result;
    bool ok = png && info && read_png_header(state, png, info, result);
    if (ok) {
        result.pixels.resize(static_cast<std::size_t>(png_get_rowbytes(png, info)) *
                             static_cast<std::size_t>(result.height));
        ok = read_png_rows(png, info, result.pixels.data(), result.height);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (!ok) throw Error(ErrorCode::io_error, std::string("png: ") + state.message);
    return result;
}

}  // namespace skelimg
