#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "medrov/curation.hpp"
#include "medrov/image.hpp"

namespace medrov {

/// One volume entry from a dataset descriptor file.
struct VolumeEntry {
    std::string volume_id;
    std::string image_path;
    std::string label_path;
    Modality modality = Modality::CT;
    std::map<int, std::string> label_names;
};

/// Dataset descriptor: one per source dataset, JSON:
///   { "dataset_id": "...", "modality": "CT",
///     "volumes": [ { "volume_id": "...", "image": "vol.npy",
///                    "labels": "seg.npy", "label_names": {"1": "liver"} } ] }
/// Per-volume "modality" overrides the dataset default. Relative paths are
/// resolved against the descriptor's directory.
struct DatasetDescriptor {
    std::string dataset_id;
    std::vector<VolumeEntry> volumes;
};

DatasetDescriptor load_descriptor(const std::string& path);

/// Pluggable array loaders keyed by file extension. ".npy" ships built in.
using ImageArrayLoader = std::function<ArrayD(const std::string&)>;
using LabelArrayLoader = std::function<ArrayI(const std::string&)>;

struct ArrayLoaderRegistry {
    std::map<std::string, ImageArrayLoader> image_loaders;
    std::map<std::string, LabelArrayLoader> label_loaders;

    static ArrayLoaderRegistry with_builtins();

    ArrayD load_image(const std::string& path) const;
    ArrayI load_labels(const std::string& path) const;
};

VolumeRecord load_volume(const DatasetDescriptor& dataset, const VolumeEntry& entry,
                         const ArrayLoaderRegistry& loaders);

// Minimal NumPy .npy support: little-endian C-order arrays of
// f8/f4/i4/i2/u2/u1.
ArrayD read_npy_double(const std::string& path);
ArrayI read_npy_int(const std::string& path);
void write_npy(const std::string& path, const ArrayD& array);   // stored as <f4
void write_npy(const std::string& path, const ArrayI& array);   // stored as <i4

// PNG, 8-bit 3-channel.
void write_png(const std::string& path, const ImageU8& image);
ImageU8 read_png(const std::string& path);

/// One curated detection record. Serialized as UTF-8 JSON lines, one record
/// per line:
///   {"sample_id":..., "dataset_id":..., "modality":..., "image":...,
///    "boxes":[[x_min,y_min,x_max,y_max],...], "classes":[...],
///    "source_volume_id":...}
struct DetectionRecord {
    std::string sample_id;
    std::string dataset_id;
    std::string modality;
    std::string image_path;
    std::vector<Box> boxes;
    std::vector<std::string> class_names;
    std::string source_volume_id;
};

void write_records(const std::string& path, const std::vector<DetectionRecord>& records);
std::vector<DetectionRecord> read_records(const std::string& path);

void write_manifest(const std::string& path, const SplitManifest& manifest);
SplitManifest read_manifest(const std::string& path);

/// Renders detections onto a copy of the image: colored rectangles with
/// "label score" captions. Detections at or below the threshold are skipped.
ImageU8 render_detections(const ImageU8& image, const std::vector<Detection>& detections,
                          const std::vector<std::string>& class_names, double threshold);

}  // namespace medrov
