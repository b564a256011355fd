#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fieldgen {

// Float image, row-major, interleaved channels, values in [0,1] for
// color/alpha planes (coordinate planes are unbounded).
struct Image {
    int width = 0, height = 0, channels = 0;
    std::vector<float> pix;

    Image() = default;
    Image(int w, int h, int c) : width(w), height(h), channels(c), pix(w * h * c, 0.f) {}
    float& at(int row, int col, int c) { return pix[(row * width + col) * channels + c]; }
    float at(int row, int col, int c) const {
        return pix[(row * width + col) * channels + c];
    }
};

// 8-bit RGBA PNG. Channels beyond the first four are ignored; a 3-channel
// image gets alpha 255.
void write_png_rgba(const std::string& path, const Image& img);

// Raw 32-bit little-endian floats for the given channel range, row-major.
void write_channels_f32(const std::string& path, const Image& img, int first_channel,
                        int count);

}  // namespace fieldgen
