#include "medrov/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "medrov/rng.hpp"

namespace medrov {

namespace {

struct PaletteEntry {
    const char* name;
    std::array<std::uint8_t, 3> color;
    int shape;  // 0 ellipse, 1 rectangle, 2 triangle, 3 circle
};

constexpr PaletteEntry kPalette[] = {
    {"liver", {230, 120, 60}, 0},
    {"kidney", {60, 200, 180}, 1},
    {"spleen", {170, 80, 220}, 2},
    {"tumor", {240, 220, 70}, 3},
    {"vessel", {220, 60, 100}, 1},
    {"cyst", {90, 130, 240}, 3},
    {"nodule", {140, 240, 90}, 0},
    {"mass", {250, 250, 250}, 2},
};
constexpr int kPaletteSize = static_cast<int>(sizeof(kPalette) / sizeof(kPalette[0]));

bool inside_shape(int shape, double nx, double ny) {
    // nx, ny in [-1, 1] relative to the shape's bounding box
    switch (shape) {
        case 0:  // ellipse
            return nx * nx + ny * ny <= 1.0;
        case 1:  // rectangle
            return std::abs(nx) <= 1.0 && std::abs(ny) <= 1.0;
        case 2:  // triangle (apex up)
            return ny >= -1.0 && ny <= 1.0 && std::abs(nx) <= (ny + 1.0) * 0.5;
        case 3:  // circle
            return nx * nx + ny * ny <= 1.0;
        default:
            return false;
    }
}

}  // namespace

std::vector<AlignedClass> synthetic_palette(int classes) {
    if (classes < 1 || classes > kPaletteSize) {
        throw std::invalid_argument("synthetic_palette: classes must be in [1, " +
                                    std::to_string(kPaletteSize) + "]");
    }
    std::vector<AlignedClass> out;
    for (int i = 0; i < classes; ++i) {
        out.push_back({kPalette[i].name, kPalette[i].color});
    }
    return out;
}

std::vector<std::string> synthetic_class_names(int classes) {
    std::vector<std::string> names;
    for (const auto& c : synthetic_palette(classes)) names.push_back(c.name);
    return names;
}

std::vector<SliceSample> generate_synthetic_corpus(const SyntheticConfig& config) {
    if (config.objects_min < 1 || config.objects_max < config.objects_min) {
        throw std::invalid_argument("generate_synthetic_corpus: bad object count range");
    }
    const auto palette = synthetic_palette(config.classes);
    const int size = config.image_size;

    std::vector<SliceSample> samples;
    samples.reserve(static_cast<std::size_t>(config.images));
    for (int idx = 0; idx < config.images; ++idx) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(idx)));

        SliceSample s;
        char sid[32];
        std::snprintf(sid, sizeof(sid), "synth_%05d", idx);
        s.sample_id = sid;
        s.dataset_id = config.dataset_id;
        s.modality = Modality::CT;
        s.source_volume_id = s.sample_id;
        s.image = ImageU8(size, size);

        // dark noisy background
        for (auto& b : s.image.data) {
            b = static_cast<std::uint8_t>(rng.uniform_int(0, 22));
        }

        const int count = rng.uniform_int(config.objects_min, config.objects_max);
        for (int obj = 0; obj < count; ++obj) {
            const int cls = rng.uniform_int(0, config.classes - 1);
            const auto& entry = kPalette[cls];

            Box box;
            bool placed = false;
            for (int attempt = 0; attempt < 12 && !placed; ++attempt) {
                const double w = rng.uniform(26.0, 64.0);
                const double h = rng.uniform(26.0, 64.0);
                const double x0 = rng.uniform(2.0, size - 2.0 - w);
                const double y0 = rng.uniform(2.0, size - 2.0 - h);
                box = Box{x0, y0, x0 + w, y0 + h};
                placed = true;
                for (const auto& existing : s.annotations) {
                    if (iou(box, existing.box) > 0.15) {
                        placed = false;
                        break;
                    }
                }
            }
            if (!placed) continue;

            const int px0 = static_cast<int>(std::floor(box.x_min));
            const int py0 = static_cast<int>(std::floor(box.y_min));
            const int px1 = static_cast<int>(std::ceil(box.x_max));
            const int py1 = static_cast<int>(std::ceil(box.y_max));
            const double cx = 0.5 * (box.x_min + box.x_max);
            const double cy = 0.5 * (box.y_min + box.y_max);
            const double rx = 0.5 * box.width();
            const double ry = 0.5 * box.height();

            int min_x = size, min_y = size, max_x = -1, max_y = -1;
            for (int y = std::max(0, py0); y < std::min(size, py1); ++y) {
                for (int x = std::max(0, px0); x < std::min(size, px1); ++x) {
                    const double nx = (x + 0.5 - cx) / rx;
                    const double ny = (y + 0.5 - cy) / ry;
                    if (!inside_shape(entry.shape, nx, ny)) continue;
                    for (int c = 0; c < 3; ++c) {
                        const int noisy = entry.color[c] + rng.uniform_int(-18, 18);
                        s.image.at(y, x, c) =
                            static_cast<std::uint8_t>(std::clamp(noisy, 0, 255));
                    }
                    min_x = std::min(min_x, x);
                    min_y = std::min(min_y, y);
                    max_x = std::max(max_x, x);
                    max_y = std::max(max_y, y);
                }
            }
            if (max_x < 0) continue;  // degenerate draw, drop the object

            s.annotations.push_back(
                {Box{static_cast<double>(min_x), static_cast<double>(min_y),
                     static_cast<double>(max_x + 1), static_cast<double>(max_y + 1)},
                 entry.name, false});
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

VolumeRecord generate_synthetic_volume(const std::string& volume_id,
                                       const std::string& dataset_id, Modality modality,
                                       const std::vector<std::string>& class_labels,
                                       int depth, int height, int width,
                                       std::uint64_t seed) {
    Rng rng(seed);
    VolumeRecord vol;
    vol.volume_id = volume_id;
    vol.dataset_id = dataset_id;
    vol.modality = modality;
    vol.image_data.dims = {depth, height, width};
    vol.image_data.values.assign(static_cast<std::size_t>(depth) * height * width, 0.0);
    vol.label_data.dims = vol.image_data.dims;
    vol.label_data.values.assign(vol.image_data.size(), 0);

    // CT-like background noise
    for (auto& v : vol.image_data.values) v = rng.uniform(-80.0, 40.0);

    for (std::size_t li = 0; li < class_labels.size(); ++li) {
        vol.label_names[static_cast<int>(li) + 1] = class_labels[li];
        const double cz = rng.uniform(0.2 * depth, 0.8 * depth);
        const double cy = rng.uniform(0.25 * height, 0.75 * height);
        const double cx = rng.uniform(0.25 * width, 0.75 * width);
        const double rz = rng.uniform(std::max(1.0, 0.1 * depth), std::max(1.5, 0.25 * depth));
        const double ry = rng.uniform(0.08 * height, 0.2 * height);
        const double rx = rng.uniform(0.08 * width, 0.2 * width);
        const double intensity = rng.uniform(150.0, 700.0);

        for (int z = 0; z < depth; ++z) {
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    const double dz = (z - cz) / rz;
                    const double dy = (y - cy) / ry;
                    const double dx = (x - cx) / rx;
                    if (dz * dz + dy * dy + dx * dx <= 1.0) {
                        const std::size_t p =
                            (static_cast<std::size_t>(z) * height + y) * width + x;
                        vol.image_data.values[p] = intensity + rng.uniform(-30.0, 30.0);
                        vol.label_data.values[p] = static_cast<int>(li) + 1;
                    }
                }
            }
        }
    }
    return vol;
}

}  // namespace medrov
