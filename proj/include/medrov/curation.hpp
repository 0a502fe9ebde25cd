#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "medrov/geometry.hpp"
#include "medrov/image.hpp"

namespace medrov {

enum class Modality { CT, MRI, XRay, Ultrasound, Histopathology, Dermoscopy,
                      Fundoscopy, Endoscopy, Microscopy };

Modality modality_from_string(const std::string& s);
std::string modality_to_string(Modality m);

/// N-dimensional double array (2D H,W or 3D D,H,W), row-major.
struct ArrayD {
    std::vector<int> dims;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

/// Same-shape integer label array; 0 is background.
struct ArrayI {
    std::vector<int> dims;
    std::vector<std::int32_t> values;

    std::size_t size() const { return values.size(); }
};

struct VolumeRecord {
    std::string volume_id;
    std::string dataset_id;
    Modality modality = Modality::CT;
    ArrayD image_data;
    ArrayI label_data;
    std::map<int, std::string> label_names;  // label integer -> class name
};

struct SliceSample {
    std::string sample_id;
    std::string dataset_id;
    Modality modality = Modality::CT;
    ImageU8 image;
    std::vector<GroundTruthBox> annotations;
    std::string source_volume_id;
};

struct SplitManifest {
    std::vector<std::string> train_volume_ids;
    std::vector<std::string> val_volume_ids;
    std::set<std::string> holdout_classes;
};

/// Modality-specific windowing to 8 bits. CT clips to [-500, 1000]; MRI clips
/// to the input's [0.5, 99.5] percentile range (linear-interpolated order
/// statistics); other modalities clip to [min, max]. The clip range maps
/// linearly onto [0, 255], rounded half away from zero. A constant input maps
/// to all zeros.
std::vector<std::uint8_t> normalize_intensities(const ArrayD& raw, Modality modality);

/// Percentile with linear interpolation between order statistics (p in [0,100]).
double percentile_linear(std::vector<double> values, double p);

/// Replicates a single-channel H x W byte plane into RGB.
ImageU8 to_three_channel(const std::vector<std::uint8_t>& gray, int height, int width);

/// One box per label value present in the slice, spanning the min/max pixel
/// coordinates of that label. Coordinates are inclusive pixel indices.
std::vector<GroundTruthBox> mask_to_boxes(const ArrayI& label_slice,
                                          const std::map<int, std::string>& label_names);

/// Normalizes the whole volume, then emits one SliceSample per in-plane slice
/// (first axis). A 2D record passes through as a single sample.
std::vector<SliceSample> slice_volume(const VolumeRecord& volume);

/// Identity of a volume for splitting purposes.
struct VolumeSummary {
    std::string volume_id;
    std::set<std::string> class_names;
};

/// Seeded volume-level split. Volumes containing a holdout class all land on
/// the validation side; the rest are shuffled and split so the training share
/// is at least (1 - val_fraction) of the eligible volumes.
SplitManifest volume_level_split(const std::vector<VolumeSummary>& volumes,
                                 double val_fraction,
                                 const std::set<std::string>& holdout_classes,
                                 std::uint64_t seed);

}  // namespace medrov
