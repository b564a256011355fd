#include "fieldgen/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fieldgen {

namespace {

void put_u32_be(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(x >> 24);
    v.push_back((x >> 16) & 0xff);
    v.push_back((x >> 8) & 0xff);
    v.push_back(x & 0xff);
}

void write_chunk(std::ofstream& os, const char type[4],
                 const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> hdr;
    put_u32_be(hdr, static_cast<uint32_t>(payload.size()));
    os.write(reinterpret_cast<const char*>(hdr.data()), 4);
    os.write(type, 4);
    if (!payload.empty())
        os.write(reinterpret_cast<const char*>(payload.data()), payload.size());
    uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
    if (!payload.empty()) crc = crc32(crc, payload.data(), payload.size());
    std::vector<uint8_t> tail;
    put_u32_be(tail, static_cast<uint32_t>(crc));
    os.write(reinterpret_cast<const char*>(tail.data()), 4);
}

uint8_t to_byte(float v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

}  // namespace

void write_png_rgba(const std::string& path, const Image& img) {
    if (img.width <= 0 || img.height <= 0 || img.channels < 3)
        throw std::invalid_argument("write_png_rgba: need >=3 channels");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_png_rgba: cannot open " + path);
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    os.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr;
    put_u32_be(ihdr, img.width);
    put_u32_be(ihdr, img.height);
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(6);   // RGBA
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    write_chunk(os, "IHDR", ihdr);

    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (1 + img.width * 4));
    for (int i = 0; i < img.height; ++i) {
        raw.push_back(0);  // filter: none
        for (int j = 0; j < img.width; ++j) {
            raw.push_back(to_byte(img.at(i, j, 0)));
            raw.push_back(to_byte(img.at(i, j, 1)));
            raw.push_back(to_byte(img.at(i, j, 2)));
            raw.push_back(img.channels >= 4 ? to_byte(img.at(i, j, 3)) : 255);
        }
    }
    uLongf bound = compressBound(raw.size());
    std::vector<uint8_t> idat(bound);
    if (compress2(idat.data(), &bound, raw.data(), raw.size(), 9) != Z_OK)
        throw std::runtime_error("write_png_rgba: deflate failed");
    idat.resize(bound);
    write_chunk(os, "IDAT", idat);
    write_chunk(os, "IEND", {});
    if (!os) throw std::runtime_error("write_png_rgba: write failed for " + path);
}

void write_channels_f32(const std::string& path, const Image& img, int first_channel,
                        int count) {
    if (first_channel + count > img.channels)
        throw std::invalid_argument("write_channels_f32: channel range out of bounds");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_channels_f32: cannot open " + path);
    for (int i = 0; i < img.height; ++i)
        for (int j = 0; j < img.width; ++j)
            for (int c = 0; c < count; ++c) {
                float v = img.at(i, j, first_channel + c);
                os.write(reinterpret_cast<const char*>(&v), 4);
            }
    if (!os) throw std::runtime_error("write_channels_f32: write failed for " + path);
}

}  // namespace fieldgen
