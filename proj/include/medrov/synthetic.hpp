#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "medrov/curation.hpp"
#include "medrov/encoders.hpp"

namespace medrov {

/// Procedural corpus of colored geometric "organs" on dark noisy backgrounds.
/// Each class owns a shape kind and a distinctive color, so the aligned mock
/// encoder can recognize crops by color statistics. Deterministic from a seed.
struct SyntheticConfig {
    int images = 200;
    int image_size = 160;
    int classes = 4;       // uses the first n entries of the standard palette
    int objects_min = 1;
    int objects_max = 3;
    std::uint64_t seed = 11;
    std::string dataset_id = "synthorg";
};

/// The standard palette (8 classes) shared by the generator and the aligned
/// mock encoder.
std::vector<AlignedClass> synthetic_palette(int classes);

std::vector<std::string> synthetic_class_names(int classes);

std::vector<SliceSample> generate_synthetic_corpus(const SyntheticConfig& config);

/// One synthetic 3D volume (ellipsoid blobs, one per listed class) for
/// exercising the curation pipeline. Label value i+1 maps to class_labels[i].
VolumeRecord generate_synthetic_volume(const std::string& volume_id,
                                       const std::string& dataset_id, Modality modality,
                                       const std::vector<std::string>& class_labels,
                                       int depth, int height, int width,
                                       std::uint64_t seed);

}  // namespace medrov
