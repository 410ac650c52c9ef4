#include "diptych/image.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace diptych {

double mean_l1(const RasterImage& a, const RasterImage& b, const RasterImage* region) {
    if (!a.same_shape(b)) throw std::invalid_argument("mean_l1: shape mismatch");
    if (region && (region->height != a.height || region->width != a.width))
        throw std::invalid_argument("mean_l1: region mask shape mismatch");
    double sum = 0.0;
    size_t count = 0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            if (region && region->at(y, x, 0) == 0.0) continue;
            for (int c = 0; c < a.channels; ++c) {
                sum += std::abs(a.at(y, x, c) - b.at(y, x, c));
                ++count;
            }
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    std::vector<uint8_t> bytes(static_cast<size_t>(f.tellg()));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("short read: " + path);
    return bytes;
}

void write_file_bytes(const std::string& path, const void* data, size_t n) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open file for writing: " + path);
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!f) throw DataError("short write: " + path);
}

uint32_t crc32_of_file(const std::string& path) {
    auto bytes = read_file_bytes(path);
    return static_cast<uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

namespace {

void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32be(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
    put_u32be(out, static_cast<uint32_t>(payload.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = static_cast<uint32_t>(::crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start)));
    put_u32be(out, crc);
}

std::vector<uint8_t> zlib_deflate(const std::vector<uint8_t>& in) {
    uLongf bound = compressBound(static_cast<uLong>(in.size()));
    std::vector<uint8_t> out(bound);
    if (compress2(out.data(), &bound, in.data(), static_cast<uLong>(in.size()), 6) != Z_OK)
        throw std::runtime_error("png: deflate failed");
    out.resize(bound);
    return out;
}

std::vector<uint8_t> zlib_inflate(const std::vector<uint8_t>& in, size_t expected) {
    std::vector<uint8_t> out(expected);
    uLongf outlen = static_cast<uLongf>(expected);
    if (uncompress(out.data(), &outlen, in.data(), static_cast<uLong>(in.size())) != Z_OK || outlen != expected)
        throw DataError("png: inflate failed or size mismatch");
    return out;
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

constexpr uint8_t kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

}  // namespace

std::vector<uint8_t> encode_png(const RasterImage& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("encode_png: only 1- or 3-channel images supported");
    const int bpp = img.channels;
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (1 + static_cast<size_t>(img.width) * bpp));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter type: none
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < bpp; ++c)
                raw.push_back(static_cast<uint8_t>(std::lround(clamp01(img.at(y, x, c)) * 255.0)));
    }

    std::vector<uint8_t> out(kPngSig, kPngSig + 8);
    std::vector<uint8_t> ihdr;
    put_u32be(ihdr, static_cast<uint32_t>(img.width));
    put_u32be(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);                                 // bit depth
    ihdr.push_back(img.channels == 3 ? 2 : 0);         // color type: RGB / gray
    ihdr.push_back(0);                                 // compression
    ihdr.push_back(0);                                 // filter
    ihdr.push_back(0);                                 // interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", zlib_deflate(raw));
    put_chunk(out, "IEND", {});
    return out;
}

void write_png(const std::string& path, const RasterImage& img) {
    auto bytes = encode_png(img);
    write_file_bytes(path, bytes.data(), bytes.size());
}

RasterImage read_png(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
        throw DataError("png: bad signature: " + path);

    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 12 <= bytes.size()) {
        uint32_t len = get_u32be(&bytes[pos]);
        if (pos + 12 + len > bytes.size()) throw DataError("png: truncated chunk: " + path);
        std::string type(reinterpret_cast<const char*>(&bytes[pos + 4]), 4);
        const uint8_t* payload = &bytes[pos + 8];
        uint32_t crc_stored = get_u32be(&bytes[pos + 8 + len]);
        uint32_t crc_actual =
            static_cast<uint32_t>(::crc32(0L, &bytes[pos + 4], static_cast<uInt>(len + 4)));
        if (crc_stored != crc_actual) throw DataError("png: chunk crc mismatch: " + path);
        if (type == "IHDR") {
            width = static_cast<int>(get_u32be(payload));
            height = static_cast<int>(get_u32be(payload + 4));
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) throw DataError("png: interlaced images unsupported");
        } else if (type == "IDAT") {
            idat.insert(idat.end(), payload, payload + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (width <= 0 || height <= 0) throw DataError("png: missing IHDR: " + path);
    if (bit_depth != 8 || (color_type != 2 && color_type != 0))
        throw DataError("png: only 8-bit RGB/gray supported: " + path);

    const int bpp = color_type == 2 ? 3 : 1;
    const size_t stride = static_cast<size_t>(width) * bpp;
    auto raw = zlib_inflate(idat, static_cast<size_t>(height) * (stride + 1));

    std::vector<uint8_t> pixels(static_cast<size_t>(height) * stride);
    for (int y = 0; y < height; ++y) {
        uint8_t filter = raw[static_cast<size_t>(y) * (stride + 1)];
        const uint8_t* src = &raw[static_cast<size_t>(y) * (stride + 1) + 1];
        uint8_t* dst = &pixels[static_cast<size_t>(y) * stride];
        const uint8_t* up = y > 0 ? &pixels[static_cast<size_t>(y - 1) * stride] : nullptr;
        for (size_t i = 0; i < stride; ++i) {
            int a = i >= static_cast<size_t>(bpp) ? dst[i - bpp] : 0;
            int b = up ? up[i] : 0;
            int c = (up && i >= static_cast<size_t>(bpp)) ? up[i - bpp] : 0;
            int x = src[i];
            switch (filter) {
                case 0: break;
                case 1: x += a; break;
                case 2: x += b; break;
                case 3: x += (a + b) / 2; break;
                case 4: x += paeth(a, b, c); break;
                default: throw DataError("png: bad filter type");
            }
            dst[i] = static_cast<uint8_t>(x & 0xff);
        }
    }

    RasterImage img(height, width, bpp);
    for (size_t i = 0; i < pixels.size(); ++i) img.values[i] = pixels[i] / 255.0;
    return img;
}

void write_raw_f32(const std::string& path, const RasterImage& img) {
    static_assert(std::endian::native == std::endian::little, "raw f32 files assume little-endian host");
    std::vector<float> buf(img.values.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(img.values[i]);
    write_file_bytes(path, buf.data(), buf.size() * sizeof(float));
}

RasterImage read_raw_f32(const std::string& path, int height, int width, int channels) {
    auto bytes = read_file_bytes(path);
    size_t expected = static_cast<size_t>(height) * width * channels * sizeof(float);
    if (bytes.size() != expected) throw DataError("raw f32: size mismatch: " + path);
    RasterImage img(height, width, channels);
    const float* p = reinterpret_cast<const float*>(bytes.data());
    for (size_t i = 0; i < img.values.size(); ++i) img.values[i] = p[i];
    return img;
}

}  // namespace diptych
