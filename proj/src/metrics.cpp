#include "medrov/metrics.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace medrov {

namespace {

// Precision/recall points of the ranked detection list, then 101-point
// interpolation. Detections already filtered to one class.
double interpolated_ap(const std::vector<std::pair<int, Detection>>& dets,
                       const std::vector<std::pair<int, GroundTruthBox>>& gts,
                       double iou_threshold) {
    if (gts.empty() && dets.empty()) {
        return -1.0;
    }
    if (gts.empty()) {
        return 0.0;  // detections but nothing to hit
    }

    std::vector<std::size_t> order(dets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].second.confidence > dets[b].second.confidence;
    });

    std::vector<bool> gt_matched(gts.size(), false);
    std::vector<double> precision;
    std::vector<double> recall;
    precision.reserve(dets.size());
    recall.reserve(dets.size());

    int tp = 0;
    int fp = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const auto& [img, det] = dets[order[rank]];
        double best_iou = 0.0;
        int best_gt = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (gt_matched[g] || gts[g].first != img) continue;
            const double v = iou(det.box, gts[g].second.box);
            if (v >= iou_threshold && v > best_iou) {
                best_iou = v;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0) {
            gt_matched[best_gt] = true;
            ++tp;
        } else {
            ++fp;
        }
        precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
    }

    double ap = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double r = static_cast<double>(i) / 100.0;
        double p_best = 0.0;
        for (std::size_t k = 0; k < recall.size(); ++k) {
            if (recall[k] >= r - 1e-12) {
                p_best = std::max(p_best, precision[k]);
            }
        }
        ap += p_best;
    }
    return ap / 101.0;
}

}  // namespace

double average_precision_pooled(const std::vector<std::pair<int, Detection>>& dets,
                                const std::vector<std::pair<int, GroundTruthBox>>& gts,
                                double iou_threshold) {
    return interpolated_ap(dets, gts, iou_threshold);
}

double average_precision(const std::vector<Detection>& dets,
                         const std::vector<GroundTruthBox>& gts,
                         double iou_threshold) {
    std::vector<std::pair<int, Detection>> d;
    std::vector<std::pair<int, GroundTruthBox>> g;
    d.reserve(dets.size());
    g.reserve(gts.size());
    for (const auto& x : dets) d.emplace_back(0, x);
    for (const auto& x : gts) g.emplace_back(0, x);
    return interpolated_ap(d, g, iou_threshold);
}

std::vector<double> coco_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back(0.50 + 0.05 * i);
    return t;
}

MapTable map_at(const std::vector<EvalImage>& images,
                const std::vector<std::string>& class_names,
                const std::vector<double>& thresholds) {
    if (class_names.empty()) {
        throw std::invalid_argument("map_at: empty class universe, nothing to evaluate");
    }

    // Pool detections / GTs per class across images.
    const int n_classes = static_cast<int>(class_names.size());
    std::vector<std::vector<std::pair<int, Detection>>> dets_by_class(n_classes);
    std::vector<std::vector<std::pair<int, GroundTruthBox>>> gts_by_class(n_classes);
    std::map<std::string, int> class_index;
    for (int c = 0; c < n_classes; ++c) class_index[class_names[c]] = c;

    for (std::size_t i = 0; i < images.size(); ++i) {
        const int img = static_cast<int>(i);
        for (const Detection& d : images[i].detections) {
            if (d.class_index < 0 || d.class_index >= n_classes) {
                throw std::invalid_argument("map_at: detection class_index outside class universe");
            }
            dets_by_class[d.class_index].emplace_back(img, d);
        }
        for (const GroundTruthBox& g : images[i].ground_truth) {
            auto it = class_index.find(g.class_name);
            if (it == class_index.end()) {
                throw std::invalid_argument("map_at: ground-truth class '" + g.class_name +
                                            "' not in class universe");
            }
            gts_by_class[it->second].emplace_back(img, g);
        }
    }

    MapTable table;
    for (double thr : thresholds) {
        double sum = 0.0;
        int counted = 0;
        for (int c = 0; c < n_classes; ++c) {
            const double ap = interpolated_ap(dets_by_class[c], gts_by_class[c], thr);
            if (ap < 0.0) continue;  // no GTs, no detections: excluded
            sum += ap;
            ++counted;
            if (thr == 0.50) {
                table.ap50_by_class[class_names[c]] = ap;
            }
        }
        table.map_by_threshold[thr] = counted > 0 ? sum / counted : 0.0;
        if (thr == 0.50) {
            table.evaluated_classes = counted;
        }
    }

    if (table.map_by_threshold.count(0.50)) {
        table.map50 = table.map_by_threshold.at(0.50);
    }
    // 50:95 = mean over the requested thresholds when the full ladder is present.
    const auto ladder = coco_thresholds();
    bool full = true;
    double acc = 0.0;
    for (double t : ladder) {
        auto it = table.map_by_threshold.find(t);
        if (it == table.map_by_threshold.end()) {
            full = false;
            break;
        }
        acc += it->second;
    }
    table.map50_95 = full ? acc / static_cast<double>(ladder.size()) : table.map50;
    return table;
}

double elbow_threshold(const std::vector<double>& confidences_desc) {
    if (confidences_desc.empty()) {
        throw std::invalid_argument("elbow_threshold: empty confidence list");
    }
    for (std::size_t i = 1; i < confidences_desc.size(); ++i) {
        if (confidences_desc[i] > confidences_desc[i - 1]) {
            throw std::invalid_argument("elbow_threshold: list not sorted descending");
        }
    }
    constexpr double kBelow = 1e-9;
    if (confidences_desc.size() == 1) {
        return confidences_desc.front() - kBelow;
    }
    double best_gap = 0.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i + 1 < confidences_desc.size(); ++i) {
        const double gap = confidences_desc[i] - confidences_desc[i + 1];
        if (gap > best_gap) {  // strict: earliest maximal gap wins
            best_gap = gap;
            best_i = i;
        }
    }
    if (best_gap <= 0.0) {
        return confidences_desc.back() - kBelow;  // all equal: keep everything
    }
    return 0.5 * (confidences_desc[best_i] + confidences_desc[best_i + 1]);
}

}  // namespace medrov
