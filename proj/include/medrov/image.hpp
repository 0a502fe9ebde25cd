#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "medrov/geometry.hpp"

namespace medrov {

/// 8-bit 3-channel image, RGB interleaved, row-major.
struct ImageU8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;  // height * width * 3

    ImageU8() = default;
    ImageU8(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0) {}

    std::uint8_t& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    bool empty() const { return data.empty(); }
};

/// Integer-pixel crop of a continuous box, clamped to the image. The crop
/// spans floor(x_min)..ceil(x_max)-1 inclusive and always keeps at least one
/// pixel per axis when the box touches the image at all.
ImageU8 crop_image(const ImageU8& image, const Box& box);

/// Fraction of crop pixels whose mean channel intensity is <= threshold.
double near_zero_fraction(const ImageU8& image, int intensity_threshold);

}  // namespace medrov
