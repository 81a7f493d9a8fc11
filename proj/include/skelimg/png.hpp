#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace skelimg {

/// 8-bit PNG; `channels` is 1 (gray) or 3 (RGB), pixels row-major interleaved.
std::vector<std::uint8_t> encode_png(int width, int height, int channels, std::span<const std::uint8_t> pixels);

struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

DecodedPng decode_png(std::span<const std::uint8_t> bytes);

}  // namespace skelimg
