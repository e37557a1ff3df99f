#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "slipfuse/errors.hpp"

namespace slipfuse {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;  // size == width * height * 3

    Image() = default;
    Image(int w, int h, uint8_t fill = 0)
        : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {}

    uint8_t& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    uint8_t at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }

    size_t pixel_count() const { return static_cast<size_t>(width) * height; }

    bool same_shape(const Image& o) const { return width == o.width && height == o.height; }

    bool operator==(const Image& o) const {
        return width == o.width && height == o.height && data == o.data;
    }
};

inline float luminance(const Image& img, int x, int y) {
    return 0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) + 0.114f * img.at(x, y, 2);
}

inline uint8_t clamp_u8(int v) {
    return static_cast<uint8_t>(std::clamp(v, 0, 255));
}

// Bilinear resize; used by pretrained-backbone adapters that require a fixed
// input size. Aspect ratio is not preserved (plain squash).
inline Image resize_bilinear(const Image& src, int out_w, int out_h) {
    if (src.width <= 0 || src.height <= 0)
        throw UnsupportedImage("resize of empty image");
    if (out_w <= 0 || out_h <= 0)
        throw UnsupportedImage("resize to non-positive size");
    Image dst(out_w, out_h);
    const double sx = static_cast<double>(src.width) / out_w;
    const double sy = static_cast<double>(src.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::min((y + 0.5) * sy - 0.5, src.height - 1.0);
        const double cy = std::max(fy, 0.0);
        const int y0 = static_cast<int>(cy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = cy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::min((x + 0.5) * sx - 0.5, src.width - 1.0);
            const double cx = std::max(fx, 0.0);
            const int x0 = static_cast<int>(cx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = cx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = src.at(x0, y0, c) * (1 - wx) + src.at(x1, y0, c) * wx;
                const double bot = src.at(x0, y1, c) * (1 - wx) + src.at(x1, y1, c) * wx;
                dst.at(x, y, c) = clamp_u8(static_cast<int>(std::lround(top * (1 - wy) + bot * wy)));
            }
        }
    }
    return dst;
}

}  // namespace slipfuse
