#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace medrov {

using EmbeddingVector = std::vector<double>;

/// Axis-aligned box in image coordinates, origin top-left, continuous pixels.
struct Box {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }

    bool valid() const {
        return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
               std::isfinite(y_max) && x_min <= x_max && y_min <= y_max;
    }
};

struct Detection {
    Box box;
    int class_index = 0;   // index into the vocabulary this detection was scored against
    double confidence = 0.0;
    std::optional<EmbeddingVector> embedding;
};

struct GroundTruthBox {
    Box box;
    std::string class_name;
    bool is_pseudo = false;
};

/// Intersection over union. Degenerate pair (union area 0) maps to 0.
double iou(const Box& a, const Box& b);

/// Greedy per-class NMS. Input order does not matter; output is sorted by
/// confidence descending (stable on ties).
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

}  // namespace medrov
