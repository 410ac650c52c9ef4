#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diptych/common.hpp"

namespace diptych {

// H x W x C image with values in [0, 1], C = 3 for scene images and 1 for
// masks. Row-major, channel-interleaved: values[(y * width + x) * channels + c].
struct RasterImage {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<double> values;

    RasterImage() = default;
    RasterImage(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), values(static_cast<size_t>(h) * w * c, fill) {}

    double& at(int y, int x, int c) { return values[(static_cast<size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c) const { return values[(static_cast<size_t>(y) * width + x) * channels + c]; }

    size_t size() const { return values.size(); }
    bool same_shape(const RasterImage& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    void clamp() {
        for (double& v : values) v = clamp01(v);
    }

    bool finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline bool operator==(const RasterImage& a, const RasterImage& b) {
    return a.same_shape(b) && a.values == b.values;
}

// Mean absolute difference over the whole image, or over pixels where
// region(y, x) != 0 when a region mask is given. Throws on shape mismatch.
double mean_l1(const RasterImage& a, const RasterImage& b, const RasterImage* region = nullptr);

// 8-bit PNG I/O (RGB for 3-channel, grayscale for 1-channel). Values are
// quantized with round(v * 255) on write and mapped back as v / 255 on read.
void write_png(const std::string& path, const RasterImage& img);
RasterImage read_png(const std::string& path);
std::vector<uint8_t> encode_png(const RasterImage& img);

// Lossless float32 mirror: raw little-endian f32 array, row-major, no header.
// Shape comes from the caller (record sidecars store it).
void write_raw_f32(const std::string& path, const RasterImage& img);
RasterImage read_raw_f32(const std::string& path, int height, int width, int channels);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, size_t n);
uint32_t crc32_of_file(const std::string& path);

}  // namespace diptych
