#pragma once

#include <zlib.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "slipfuse/errors.hpp"
#include "slipfuse/image.hpp"

// Minimal PNG reader/writer for the dataset's on-disk frame format.
// Writer emits 8-bit RGB (color type 2), filter 0, zlib-compressed, which is
// all the pipeline produces. Reader additionally accepts grayscale and RGBA
// 8-bit non-interlaced files so `ingest` can pick up camera dumps.

namespace slipfuse::png {

namespace detail {

inline void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

inline uint32_t get_u32_be(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

inline void append_chunk(std::vector<uint8_t>& out, const char type[4],
                         const uint8_t* data, size_t len) {
    put_u32_be(out, static_cast<uint32_t>(len));
    const size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    if (len) out.insert(out.end(), data, data + len);
    const uLong crc = ::crc32(0L, out.data() + crc_start, static_cast<uInt>(4 + len));
    put_u32_be(out, static_cast<uint32_t>(crc));
}

inline std::vector<uint8_t> zlib_compress(const uint8_t* data, size_t len) {
    uLongf bound = ::compressBound(static_cast<uLong>(len));
    std::vector<uint8_t> out(bound);
    // Fixed level so repeated encodes of identical pixels are byte-identical.
    if (::compress2(out.data(), &bound, data, static_cast<uLong>(len), 6) != Z_OK)
        throw IoError("zlib compression failed");
    out.resize(bound);
    return out;
}

inline std::vector<uint8_t> zlib_decompress(const uint8_t* data, size_t len,
                                            size_t expected) {
    std::vector<uint8_t> out(expected);
    uLongf out_len = static_cast<uLongf>(expected);
    const int rc = ::uncompress(out.data(), &out_len, data, static_cast<uLong>(len));
    if (rc != Z_OK || out_len != expected)
        throw UnsupportedImage("corrupt PNG: inflate failed");
    return out;
}

inline int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

constexpr uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

struct Header {
    uint32_t width = 0, height = 0;
    uint8_t bit_depth = 0, color_type = 0, interlace = 0;
};

inline Header parse_header(const std::vector<uint8_t>& bytes, const std::string& origin) {
    if (bytes.size() < 33 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw UnsupportedImage("not a PNG file: " + origin);
    if (std::memcmp(bytes.data() + 12, "IHDR", 4) != 0)
        throw UnsupportedImage("malformed PNG (no IHDR): " + origin);
    Header h;
    h.width = get_u32_be(bytes.data() + 16);
    h.height = get_u32_be(bytes.data() + 20);
    h.bit_depth = bytes[24];
    h.color_type = bytes[25];
    h.interlace = bytes[28];
    return h;
}

}  // namespace detail

inline std::vector<uint8_t> encode(const Image& img) {
    if (img.width <= 0 || img.height <= 0)
        throw UnsupportedImage("cannot encode empty image");
    const size_t stride = static_cast<size_t>(img.width) * 3;
    std::vector<uint8_t> raw;
    raw.reserve((stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter type 0 per scanline
        raw.insert(raw.end(), img.data.begin() + y * stride, img.data.begin() + (y + 1) * stride);
    }
    const std::vector<uint8_t> idat = detail::zlib_compress(raw.data(), raw.size());

    std::vector<uint8_t> out(detail::kSignature, detail::kSignature + 8);
    uint8_t ihdr[13];
    ihdr[0] = static_cast<uint8_t>(img.width >> 24);
    ihdr[1] = static_cast<uint8_t>(img.width >> 16);
    ihdr[2] = static_cast<uint8_t>(img.width >> 8);
    ihdr[3] = static_cast<uint8_t>(img.width);
    ihdr[4] = static_cast<uint8_t>(img.height >> 24);
    ihdr[5] = static_cast<uint8_t>(img.height >> 16);
    ihdr[6] = static_cast<uint8_t>(img.height >> 8);
    ihdr[7] = static_cast<uint8_t>(img.height);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type RGB
    ihdr[10] = 0;  // compression
    ihdr[11] = 0;  // filter
    ihdr[12] = 0;  // interlace
    detail::append_chunk(out, "IHDR", ihdr, sizeof ihdr);
    detail::append_chunk(out, "IDAT", idat.data(), idat.size());
    detail::append_chunk(out, "IEND", nullptr, 0);
    return out;
}

inline Image decode(const std::vector<uint8_t>& bytes, const std::string& origin = "<memory>") {
    const detail::Header h = detail::parse_header(bytes, origin);
    if (h.bit_depth != 8)
        throw UnsupportedImage("unsupported PNG bit depth in " + origin);
    if (h.interlace != 0)
        throw UnsupportedImage("interlaced PNG not supported: " + origin);
    int channels;
    switch (h.color_type) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 6: channels = 4; break;
        default: throw UnsupportedImage("unsupported PNG color type in " + origin);
    }

    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 12 <= bytes.size()) {
        const uint32_t len = detail::get_u32_be(bytes.data() + pos);
        if (pos + 12 + len > bytes.size())
            throw UnsupportedImage("truncated PNG chunk in " + origin);
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        if (std::memcmp(type, "IDAT", 4) == 0)
            idat.insert(idat.end(), bytes.begin() + pos + 8, bytes.begin() + pos + 8 + len);
        else if (std::memcmp(type, "IEND", 4) == 0)
            break;
        pos += 12 + len;
    }
    if (idat.empty()) throw UnsupportedImage("PNG has no image data: " + origin);

    const size_t stride = static_cast<size_t>(h.width) * channels;
    const size_t raw_size = (stride + 1) * h.height;
    std::vector<uint8_t> raw = detail::zlib_decompress(idat.data(), idat.size(), raw_size);

    // Undo per-scanline filters in place.
    std::vector<uint8_t> prev(stride, 0);
    Image img(static_cast<int>(h.width), static_cast<int>(h.height));
    for (uint32_t y = 0; y < h.height; ++y) {
        uint8_t* row = raw.data() + y * (stride + 1);
        const uint8_t filter = row[0];
        uint8_t* cur = row + 1;
        for (size_t i = 0; i < stride; ++i) {
            const int left = i >= static_cast<size_t>(channels) ? cur[i - channels] : 0;
            const int up = prev[i];
            const int ul = i >= static_cast<size_t>(channels) ? prev[i - channels] : 0;
            int v = cur[i];
            switch (filter) {
                case 0: break;
                case 1: v += left; break;
                case 2: v += up; break;
                case 3: v += (left + up) / 2; break;
                case 4: v += detail::paeth(left, up, ul); break;
                default: throw UnsupportedImage("bad PNG filter type in " + origin);
            }
            cur[i] = static_cast<uint8_t>(v & 0xff);
        }
        std::memcpy(prev.data(), cur, stride);
        for (uint32_t x = 0; x < h.width; ++x) {
            const uint8_t* px = cur + static_cast<size_t>(x) * channels;
            uint8_t r, g, b;
            if (channels == 1) r = g = b = px[0];
            else { r = px[0]; g = px[1]; b = px[2]; }  // alpha dropped for RGBA
            img.at(static_cast<int>(x), static_cast<int>(y), 0) = r;
            img.at(static_cast<int>(x), static_cast<int>(y), 1) = g;
            img.at(static_cast<int>(x), static_cast<int>(y), 2) = b;
        }
    }
    return img;
}

inline std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path.string());
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), {});
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write file: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write: " + path.string());
}

inline Image read(const std::filesystem::path& path) {
    return decode(read_file_bytes(path), path.string());
}

inline void write(const std::filesystem::path& path, const Image& img) {
    write_file_bytes(path, encode(img));
}

// Width/height/shape check without a full decode; the manifest loader uses
// this so validation stays cheap on large datasets.
struct Info {
    int width = 0, height = 0;
    int channels = 0;
};

inline Info read_info(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path.string());
    std::vector<uint8_t> head(33);
    f.read(reinterpret_cast<char*>(head.data()), 33);
    if (f.gcount() < 33) throw UnsupportedImage("not a PNG file: " + path.string());
    const detail::Header h = detail::parse_header(head, path.string());
    Info info;
    info.width = static_cast<int>(h.width);
    info.height = static_cast<int>(h.height);
    info.channels = h.color_type == 0 ? 1 : h.color_type == 2 ? 3 : h.color_type == 6 ? 4 : 0;
    return info;
}

}  // namespace slipfuse::png
