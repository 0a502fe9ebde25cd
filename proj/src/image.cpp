#include "medrov/image.hpp"

#include <algorithm>
#include <cmath>

namespace medrov {

ImageU8 crop_image(const ImageU8& image, const Box& box) {
    if (image.empty()) {
        throw std::invalid_argument("crop_image: empty image");
    }
    int x0 = static_cast<int>(std::floor(box.x_min));
    int y0 = static_cast<int>(std::floor(box.y_min));
    int x1 = static_cast<int>(std::ceil(box.x_max));
    int y1 = static_cast<int>(std::ceil(box.y_max));
    x0 = std::clamp(x0, 0, image.width - 1);
    y0 = std::clamp(y0, 0, image.height - 1);
    x1 = std::clamp(x1, x0 + 1, image.width);
    y1 = std::clamp(y1, y0 + 1, image.height);

    ImageU8 out(y1 - y0, x1 - x0);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(y - y0, x - x0, c) = image.at(y, x, c);
            }
        }
    }
    return out;
}

double near_zero_fraction(const ImageU8& image, int intensity_threshold) {
    if (image.empty()) {
        return 1.0;
    }
    std::size_t dark = 0;
    const std::size_t pixels = static_cast<std::size_t>(image.height) * image.width;
    for (std::size_t p = 0; p < pixels; ++p) {
        const int sum = image.data[p * 3] + image.data[p * 3 + 1] + image.data[p * 3 + 2];
        if (sum <= 3 * intensity_threshold) {
            ++dark;
        }
    }
    return static_cast<double>(dark) / static_cast<double>(pixels);
}

}  // namespace medrov
