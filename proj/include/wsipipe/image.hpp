#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "wsipipe/common.hpp"

namespace wsipipe {

// An RGB raster of a whole slide, 3 bytes per pixel, row-major.
struct SlideRaster {
    std::string id;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int x, int y) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
};

inline void validate_raster(const SlideRaster& s) {
    if (s.width < 1 || s.height < 1)
        throw ValidationError("raster dimensions must be >= 1, got " + std::to_string(s.width) + "x" +
                              std::to_string(s.height));
    const std::size_t expect = static_cast<std::size_t>(s.width) * s.height * 3;
    if (s.pixels.size() != expect)
        throw ValidationError("raster pixel buffer has " + std::to_string(s.pixels.size()) +
                              " bytes, expected " + std::to_string(expect));
}

namespace detail {

inline void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32_be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::uint8_t* data, std::size_t len) {
    put_u32_be(out, static_cast<std::uint32_t>(len));
    const std::size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    if (len) out.insert(out.end(), data, data + len);
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0L, out.data() + type_at, static_cast<uInt>(4 + len)));
    put_u32_be(out, crc);
}

inline int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a);
    const int pb = std::abs(p - b);
    const int pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

} // namespace detail

inline std::vector<std::uint8_t> encode_png_rgb8(int width, int height,
                                                 const std::vector<std::uint8_t>& pixels) {
    if (width < 1 || height < 1) throw ValidationError("png: dimensions must be >= 1");
    if (pixels.size() != static_cast<std::size_t>(width) * height * 3)
        throw ValidationError("png: pixel buffer size mismatch");

    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<std::uint8_t> out(sig, sig + 8);

    std::uint8_t ihdr[13];
    ihdr[0] = static_cast<std::uint8_t>(width >> 24);
    ihdr[1] = static_cast<std::uint8_t>(width >> 16);
    ihdr[2] = static_cast<std::uint8_t>(width >> 8);
    ihdr[3] = static_cast<std::uint8_t>(width);
    ihdr[4] = static_cast<std::uint8_t>(height >> 24);
    ihdr[5] = static_cast<std::uint8_t>(height >> 16);
    ihdr[6] = static_cast<std::uint8_t>(height >> 8);
    ihdr[7] = static_cast<std::uint8_t>(height);
    ihdr[8] = 8;  // bit depth
    ihdr[9] = 2;  // color type RGB
    ihdr[10] = 0; // compression
    ihdr[11] = 0; // filter method
    ihdr[12] = 0; // no interlace
    detail::append_chunk(out, "IHDR", ihdr, sizeof(ihdr));

    // Filter type 0 (none) on every scanline, then one zlib stream.
    const std::size_t row_bytes = static_cast<std::size_t>(width) * 3;
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(height) * (row_bytes + 1));
    for (int y = 0; y < height; ++y) {
        std::uint8_t* dst = raw.data() + static_cast<std::size_t>(y) * (row_bytes + 1);
        dst[0] = 0;
        std::memcpy(dst + 1, pixels.data() + static_cast<std::size_t>(y) * row_bytes, row_bytes);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw Error("png: zlib compression failed");
    compressed.resize(bound);
    detail::append_chunk(out, "IDAT", compressed.data(), compressed.size());
    detail::append_chunk(out, "IEND", nullptr, 0);
    return out;
}

// Decodes 8-bit RGB or RGBA PNG (non-interlaced); RGBA alpha is dropped.
inline void decode_png_rgb8(const std::vector<std::uint8_t>& file, int& width, int& height,
                            std::vector<std::uint8_t>& pixels) {
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
        throw Error("png: bad signature");

    std::size_t pos = 8;
    bool saw_ihdr = false, saw_iend = false;
    int channels = 0;
    std::vector<std::uint8_t> idat;
    while (pos + 12 <= file.size()) {
        const std::uint32_t len = detail::get_u32_be(file.data() + pos);
        if (pos + 12 + len > file.size()) throw Error("png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(file.data() + pos + 4);
        const std::uint8_t* data = file.data() + pos + 8;
        const std::uint32_t stored_crc = detail::get_u32_be(data + len);
        const std::uint32_t crc =
            static_cast<std::uint32_t>(::crc32(0L, file.data() + pos + 4, static_cast<uInt>(4 + len)));
        if (crc != stored_crc) throw Error("png: chunk crc mismatch");
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw Error("png: bad IHDR");
            width = static_cast<int>(detail::get_u32_be(data));
            height = static_cast<int>(detail::get_u32_be(data + 4));
            if (width < 1 || height < 1 || width > (1 << 24) || height > (1 << 24))
                throw Error("png: dimension out of range");
            if (data[8] != 8) throw Error("png: unsupported bit depth");
            if (data[9] == 2) channels = 3;
            else if (data[9] == 6) channels = 4;
            else throw Error("png: unsupported color type");
            if (data[12] != 0) throw Error("png: interlaced images unsupported");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || !saw_iend || idat.empty()) throw Error("png: missing chunks (truncated file?)");

    const std::size_t row_bytes = static_cast<std::size_t>(width) * channels;
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(height) * (row_bytes + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    const int zrc = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || raw_len != raw.size()) throw Error("png: zlib inflate failed");

    // Undo per-row filters.
    const int bpp = channels;
    std::vector<std::uint8_t> prev(row_bytes, 0);
    std::vector<std::uint8_t> cur(row_bytes);
    pixels.assign(static_cast<std::size_t>(width) * height * 3, 0);
    for (int y = 0; y < height; ++y) {
        const std::uint8_t* src = raw.data() + static_cast<std::size_t>(y) * (row_bytes + 1);
        const int filter = src[0];
        const std::uint8_t* line = src + 1;
        for (std::size_t i = 0; i < row_bytes; ++i) {
            const int a = i >= static_cast<std::size_t>(bpp) ? cur[i - bpp] : 0;
            const int b = prev[i];
            const int c = i >= static_cast<std::size_t>(bpp) ? prev[i - bpp] : 0;
            int v = line[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += detail::paeth(a, b, c); break;
                default: throw Error("png: unknown filter type");
            }
            cur[i] = static_cast<std::uint8_t>(v & 0xFF);
        }
        std::uint8_t* dst = pixels.data() + static_cast<std::size_t>(y) * width * 3;
        if (channels == 3) {
            std::memcpy(dst, cur.data(), row_bytes);
        } else {
            for (int x = 0; x < width; ++x) std::memcpy(dst + x * 3, cur.data() + x * 4, 3);
        }
        std::swap(prev, cur);
    }
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file '" + path + "'");
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& data) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open file '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write failure on '" + path + "'");
}

inline void save_slide_png(const SlideRaster& slide, const std::string& path) {
    validate_raster(slide);
    write_file_bytes(path, encode_png_rgb8(slide.width, slide.height, slide.pixels));
}

inline void save_slide_ppm(const SlideRaster& slide, const std::string& path) {
    validate_raster(slide);
    std::string header = "P6\n" + std::to_string(slide.width) + " " + std::to_string(slide.height) + "\n255\n";
    std::vector<std::uint8_t> data(header.begin(), header.end());
    data.insert(data.end(), slide.pixels.begin(), slide.pixels.end());
    write_file_bytes(path, data);
}

namespace detail {

inline SlideRaster decode_ppm(const std::vector<std::uint8_t>& file) {
    // P6, ASCII header with whitespace/comments, then raw RGB.
    std::size_t pos = 2;
    auto next_token = [&]() -> long {
        while (pos < file.size()) {
            if (file[pos] == '#') {
                while (pos < file.size() && file[pos] != '\n') ++pos;
            } else if (std::isspace(file[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        long v = 0;
        bool any = false;
        while (pos < file.size() && std::isdigit(file[pos])) {
            v = v * 10 + (file[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw Error("ppm: malformed header");
        return v;
    };
    SlideRaster s;
    s.width = static_cast<int>(next_token());
    s.height = static_cast<int>(next_token());
    const long maxval = next_token();
    if (maxval != 255) throw Error("ppm: only maxval 255 supported");
    ++pos; // single whitespace after maxval
    const std::size_t need = static_cast<std::size_t>(s.width) * s.height * 3;
    if (s.width < 1 || s.height < 1 || file.size() < pos + need) throw Error("ppm: truncated pixel data");
    s.pixels.assign(file.begin() + pos, file.begin() + pos + need);
    return s;
}

} // namespace detail

// Loads a PNG or PPM (P6) raster; the slide id is the file stem unless overridden.
inline SlideRaster load_slide(const std::string& path, const std::string& id = "") {
    const std::vector<std::uint8_t> file = read_file_bytes(path);
    SlideRaster s;
    if (file.size() >= 8 && file[0] == 137 && file[1] == 'P' && file[2] == 'N' && file[3] == 'G') {
        decode_png_rgb8(file, s.width, s.height, s.pixels);
    } else if (file.size() >= 2 && file[0] == 'P' && file[1] == '6') {
        s = detail::decode_ppm(file);
    } else {
        throw Error("unsupported raster format in '" + path + "' (PNG or PPM P6 expected)");
    }
    s.id = id.empty() ? std::filesystem::path(path).stem().string() : id;
    validate_raster(s);
    return s;
}

} // namespace wsipipe
