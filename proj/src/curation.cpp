#include "medrov/curation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "medrov/rng.hpp"

namespace medrov {

Modality modality_from_string(const std::string& s) {
    if (s == "CT") return Modality::CT;
    if (s == "MRI") return Modality::MRI;
    if (s == "XRay") return Modality::XRay;
    if (s == "Ultrasound") return Modality::Ultrasound;
    if (s == "Histopathology") return Modality::Histopathology;
    if (s == "Dermoscopy") return Modality::Dermoscopy;
    if (s == "Fundoscopy") return Modality::Fundoscopy;
    if (s == "Endoscopy") return Modality::Endoscopy;
    if (s == "Microscopy") return Modality::Microscopy;
    throw std::invalid_argument("unknown modality: '" + s + "'");
}

std::string modality_to_string(Modality m) {
    switch (m) {
        case Modality::CT: return "CT";
        case Modality::MRI: return "MRI";
        case Modality::XRay: return "XRay";
        case Modality::Ultrasound: return "Ultrasound";
        case Modality::Histopathology: return "Histopathology";
        case Modality::Dermoscopy: return "Dermoscopy";
        case Modality::Fundoscopy: return "Fundoscopy";
        case Modality::Endoscopy: return "Endoscopy";
        case Modality::Microscopy: return "Microscopy";
    }
    throw std::logic_error("unreachable modality");
}

double percentile_linear(std::vector<double> values, double p) {
    if (values.empty()) {
        throw std::invalid_argument("percentile_linear: empty input");
    }
    if (p < 0.0 || p > 100.0) {
        throw std::invalid_argument("percentile_linear: p outside [0,100]");
    }
    std::sort(values.begin(), values.end());
    const double idx = p / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(idx));
    const double frac = idx - static_cast<double>(lo);
    if (lo + 1 >= values.size()) {
        return values.back();
    }
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

namespace {

std::uint8_t round_half_away(double v) {
    const double r = v >= 0.0 ? std::floor(v + 0.5) : std::ceil(v - 0.5);
    return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

}  // namespace

std::vector<std::uint8_t> normalize_intensities(const ArrayD& raw, Modality modality) {
    if (raw.values.empty()) {
        throw std::invalid_argument("normalize_intensities: empty array");
    }
    double lo = 0.0;
    double hi = 0.0;
    switch (modality) {
        case Modality::CT:
            lo = -500.0;
            hi = 1000.0;
            break;
        case Modality::MRI:
            lo = percentile_linear(raw.values, 0.5);
            hi = percentile_linear(raw.values, 99.5);
            break;
        default: {
            auto [mn, mx] = std::minmax_element(raw.values.begin(), raw.values.end());
            lo = *mn;
            hi = *mx;
            break;
        }
    }

    std::vector<std::uint8_t> out(raw.values.size(), 0);
    if (hi <= lo) {
        return out;  // degenerate clip range
    }
    const double scale = 255.0 / (hi - lo);
    for (std::size_t i = 0; i < raw.values.size(); ++i) {
        const double clipped = std::clamp(raw.values[i], lo, hi);
        out[i] = round_half_away((clipped - lo) * scale);
    }
    return out;
}

ImageU8 to_three_channel(const std::vector<std::uint8_t>& gray, int height, int width) {
    if (static_cast<std::size_t>(height) * width != gray.size()) {
        throw std::invalid_argument("to_three_channel: plane size mismatch");
    }
    ImageU8 img(height, width);
    for (std::size_t p = 0; p < gray.size(); ++p) {
        img.data[p * 3] = gray[p];
        img.data[p * 3 + 1] = gray[p];
        img.data[p * 3 + 2] = gray[p];
    }
    return img;
}

std::vector<GroundTruthBox> mask_to_boxes(const ArrayI& label_slice,
                                          const std::map<int, std::string>& label_names) {
    if (label_slice.dims.size() != 2) {
        throw std::invalid_argument("mask_to_boxes: expected a 2D slice");
    }
    const int h = label_slice.dims[0];
    const int w = label_slice.dims[1];

    struct Extent {
        int min_x, min_y, max_x, max_y;
    };
    std::map<int, Extent> extents;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int label = label_slice.values[static_cast<std::size_t>(y) * w + x];
            if (label == 0) continue;
            if (label < 0) {
                throw std::invalid_argument("mask_to_boxes: negative label value");
            }
            auto [it, inserted] = extents.try_emplace(label, Extent{x, y, x, y});
            if (!inserted) {
                Extent& e = it->second;
                e.min_x = std::min(e.min_x, x);
                e.min_y = std::min(e.min_y, y);
                e.max_x = std::max(e.max_x, x);
                e.max_y = std::max(e.max_y, y);
            }
        }
    }

    std::vector<GroundTruthBox> boxes;
    for (const auto& [label, e] : extents) {
        auto name = label_names.find(label);
        if (name == label_names.end()) {
            throw std::runtime_error("mask_to_boxes: label value " + std::to_string(label) +
                                     " has no class name");
        }
        boxes.push_back({Box{static_cast<double>(e.min_x), static_cast<double>(e.min_y),
                             static_cast<double>(e.max_x), static_cast<double>(e.max_y)},
                         name->second, false});
    }
    return boxes;
}

std::vector<SliceSample> slice_volume(const VolumeRecord& volume) {
    if (volume.image_data.dims != volume.label_data.dims) {
        throw std::runtime_error("slice_volume: image/label shape mismatch for volume '" +
                                 volume.volume_id + "'");
    }
    const auto& dims = volume.image_data.dims;
    if (dims.size() != 2 && dims.size() != 3) {
        throw std::runtime_error("slice_volume: expected a 2D or 3D array");
    }

    const std::vector<std::uint8_t> normalized =
        normalize_intensities(volume.image_data, volume.modality);

    const int depth = dims.size() == 3 ? dims[0] : 1;
    const int h = dims.size() == 3 ? dims[1] : dims[0];
    const int w = dims.size() == 3 ? dims[2] : dims[1];
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    std::vector<SliceSample> samples;
    samples.reserve(static_cast<std::size_t>(depth));
    for (int d = 0; d < depth; ++d) {
        std::vector<std::uint8_t> gray(normalized.begin() + static_cast<std::ptrdiff_t>(d * plane),
                                       normalized.begin() +
                                           static_cast<std::ptrdiff_t>((d + 1) * plane));
        ArrayI label_slice;
        label_slice.dims = {h, w};
        label_slice.values.assign(
            volume.label_data.values.begin() + static_cast<std::ptrdiff_t>(d * plane),
            volume.label_data.values.begin() + static_cast<std::ptrdiff_t>((d + 1) * plane));

        SliceSample s;
        char suffix[16];
        std::snprintf(suffix, sizeof(suffix), "_s%04d", d);
        s.sample_id = volume.volume_id + suffix;
        s.dataset_id = volume.dataset_id;
        s.modality = volume.modality;
        s.image = to_three_channel(gray, h, w);
        s.annotations = mask_to_boxes(label_slice, volume.label_names);
        s.source_volume_id = volume.volume_id;
        samples.push_back(std::move(s));
    }
    return samples;
}

SplitManifest volume_level_split(const std::vector<VolumeSummary>& volumes,
                                 double val_fraction,
                                 const std::set<std::string>& holdout_classes,
                                 std::uint64_t seed) {
    if (val_fraction <= 0.0 || val_fraction >= 1.0) {
        throw std::invalid_argument("volume_level_split: val_fraction must be in (0,1)");
    }
    {
        std::set<std::string> ids;
        for (const auto& v : volumes) {
            if (!ids.insert(v.volume_id).second) {
                throw std::invalid_argument("volume_level_split: duplicate volume id '" +
                                            v.volume_id + "'");
            }
        }
    }

    SplitManifest manifest;
    manifest.holdout_classes = holdout_classes;

    std::vector<std::string> eligible;
    for (const auto& v : volumes) {
        bool has_holdout = false;
        for (const auto& c : v.class_names) {
            if (holdout_classes.count(c)) {
                has_holdout = true;
                break;
            }
        }
        if (has_holdout) {
            manifest.val_volume_ids.push_back(v.volume_id);
        } else {
            eligible.push_back(v.volume_id);
        }
    }
    if (eligible.empty()) {
        throw std::runtime_error(
            "volume_level_split: every volume contains a holdout class, training set empty");
    }

    Rng rng(seed);
    std::shuffle(eligible.begin(), eligible.end(), rng.engine());

    const auto n = static_cast<double>(eligible.size());
    const auto n_train = static_cast<std::size_t>(std::ceil((1.0 - val_fraction) * n));
    for (std::size_t i = 0; i < eligible.size(); ++i) {
        if (i < n_train) {
            manifest.train_volume_ids.push_back(eligible[i]);
        } else {
            manifest.val_volume_ids.push_back(eligible[i]);
        }
    }
    std::sort(manifest.train_volume_ids.begin(), manifest.train_volume_ids.end());
    std::sort(manifest.val_volume_ids.begin(), manifest.val_volume_ids.end());
    return manifest;
}

}  // namespace medrov
