#pragma once

#include <map>
#include <string>
#include <vector>

#include "medrov/geometry.hpp"

namespace medrov {

/// Detections and ground truth of one image, with class indices resolved
/// against a shared class list.
struct EvalImage {
    std::vector<Detection> detections;          // class_index into the class universe
    std::vector<GroundTruthBox> ground_truth;   // class_name must be in the class universe
};

struct MapTable {
    double map50 = 0.0;
    double map50_95 = 0.0;
    std::map<double, double> map_by_threshold;            // iou threshold -> mAP
    std::map<std::string, double> ap50_by_class;          // classes evaluated at 0.50
    int evaluated_classes = 0;                            // classes entering the mean
};

/// 101-point interpolated AP for one class on one image collection.
/// Detections are ranked by confidence; greedy matching to unmatched GTs at
/// IoU >= threshold, each GT matched at most once. Returns -1 when there are
/// neither ground truths nor detections (class excluded from any mean).
double average_precision(const std::vector<Detection>& dets,
                         const std::vector<GroundTruthBox>& gts,
                         double iou_threshold);

/// Pooled multi-image variant: detections/GTs carry the index of the image
/// they belong to; matching never crosses images.
double average_precision_pooled(const std::vector<std::pair<int, Detection>>& dets,
                                const std::vector<std::pair<int, GroundTruthBox>>& gts,
                                double iou_threshold);

/// mAP over a class universe at each requested IoU threshold. map50 uses 0.50,
/// map50_95 averages {0.50, 0.55, ..., 0.95}; pass those thresholds in.
/// Classes with no GT and no detection anywhere are excluded from the mean.
/// Throws on an empty class universe.
MapTable map_at(const std::vector<EvalImage>& images,
                const std::vector<std::string>& class_names,
                const std::vector<double>& thresholds);

/// The 10 COCO-style thresholds 0.50..0.95.
std::vector<double> coco_thresholds();

/// Largest-gap threshold on a descending confidence list: returns the midpoint
/// of the earliest maximal drop between consecutive scores. A single score (or
/// an all-equal list) yields a value just below the minimum so everything is
/// kept. Visualization-only.
double elbow_threshold(const std::vector<double>& confidences_desc);

}  // namespace medrov
