#include "medrov/geometry.hpp"

#include <algorithm>

namespace medrov {

double iou(const Box& a, const Box& b) {
    if (!a.valid() || !b.valid()) {
        throw std::invalid_argument("iou: invalid box");
    }
    const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) {
        return 0.0;
    }
    return inter / uni;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
    std::vector<std::size_t> order(dets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].confidence > dets[b].confidence;
    });

    std::vector<Detection> kept;
    kept.reserve(dets.size());
    for (std::size_t idx : order) {
        const Detection& cand = dets[idx];
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (k.class_index == cand.class_index && iou(k.box, cand.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            kept.push_back(cand);
        }
    }
    return kept;
}

}  // namespace medrov
