#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hadit {

// 8-bit RGB raster. Metrics normalize channels to [0,1] at evaluation time.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // row-major, 3 bytes per pixel

    RgbImage() = default;
    RgbImage(int w, int h, uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, fill) {}

    uint8_t* px(int x, int y) { return pixels.data() + (static_cast<size_t>(y) * width + x) * 3; }
    const uint8_t* px(int x, int y) const {
        return pixels.data() + (static_cast<size_t>(y) * width + x) * 3;
    }
    void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
        uint8_t* p = px(x, y);
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }
    double channel(int x, int y, int c) const { return px(x, y)[c] / 255.0; }

    bool same_shape(const RgbImage& o) const {
        return width == o.width && height == o.height;
    }
};

// Binary PPM (P6), the portable lossless raster format used throughout.
void write_ppm(const RgbImage& img, const std::string& path);
RgbImage read_ppm(const std::string& path);

}  // namespace hadit
