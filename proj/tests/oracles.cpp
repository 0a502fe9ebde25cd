#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace medrov::testing {

namespace {

double oracle_iou(const Box& a, const Box& b) {
    const double x0 = std::max(a.x_min, b.x_min);
    const double y0 = std::max(a.y_min, b.y_min);
    const double x1 = std::min(a.x_max, b.x_max);
    const double y1 = std::min(a.y_max, b.y_max);
    double inter = 0.0;
    if (x1 > x0 && y1 > y0) inter = (x1 - x0) * (y1 - y0);
    const double area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min);
    const double area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min);
    const double uni = area_a + area_b - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

// Greedy matching of the first `prefix` ranked detections; returns TP count.
int prefix_true_positives(const std::vector<std::pair<int, Detection>>& ranked,
                          const std::vector<std::pair<int, GroundTruthBox>>& gts,
                          double thr, std::size_t prefix) {
    std::vector<bool> taken(gts.size(), false);
    int tp = 0;
    for (std::size_t r = 0; r < prefix; ++r) {
        const auto& [img, det] = ranked[r];
        int best = -1;
        double best_iou = 0.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g] || gts[g].first != img) continue;
            const double v = oracle_iou(det.box, gts[g].second.box);
            if (v >= thr && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            taken[static_cast<std::size_t>(best)] = true;
            ++tp;
        }
    }
    return tp;
}

}  // namespace

double reference_average_precision(const std::vector<std::pair<int, Detection>>& dets,
                                   const std::vector<std::pair<int, GroundTruthBox>>& gts,
                                   double iou_threshold) {
    if (gts.empty() && dets.empty()) return -1.0;
    if (gts.empty()) return 0.0;

    std::vector<std::pair<int, Detection>> ranked = dets;
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second.confidence > b.second.confidence;
    });

    std::vector<double> precision, recall;
    for (std::size_t prefix = 1; prefix <= ranked.size(); ++prefix) {
        const int tp = prefix_true_positives(ranked, gts, iou_threshold, prefix);
        precision.push_back(static_cast<double>(tp) / static_cast<double>(prefix));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
    }

    double ap = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double r = i / 100.0;
        double best = 0.0;
        for (std::size_t k = 0; k < recall.size(); ++k) {
            if (recall[k] >= r - 1e-12) best = std::max(best, precision[k]);
        }
        ap += best;
    }
    return ap / 101.0;
}

double reference_average_precision(const std::vector<Detection>& dets,
                                   const std::vector<GroundTruthBox>& gts,
                                   double iou_threshold) {
    std::vector<std::pair<int, Detection>> d;
    std::vector<std::pair<int, GroundTruthBox>> g;
    for (const auto& x : dets) d.emplace_back(0, x);
    for (const auto& x : gts) g.emplace_back(0, x);
    return reference_average_precision(d, g, iou_threshold);
}

TrainingTargets reference_apply(const std::vector<Detection>& preds, const ImageU8& image,
                                const std::string& dataset_id, const PresenceMatrix& matrix,
                                TrainingTargets targets, const ImageEncoder& image_encoder,
                                const PseudoLabelConfig& cfg) {
    if (cfg.selection != SubstituteSelection::lowest_index) {
        throw std::invalid_argument("reference_apply covers the lowest-index policy only");
    }
    const std::vector<GroundTruthBox> originals = targets.boxes;

    // step 1: class-agnostic unmatched set
    std::vector<Detection> unmatched;
    for (const Detection& p : preds) {
        double best = 0.0;
        for (const auto& g : originals) best = std::max(best, oracle_iou(p.box, g.box));
        if (best < cfg.iou_threshold_t) unmatched.push_back(p);
    }

    // step 2: route through the matrix
    std::vector<Detection> substitution_pool;
    for (const Detection& p : unmatched) {
        const std::string& label =
            targets.vocabulary.entries[static_cast<std::size_t>(p.class_index)].label;
        const int m = matrix.lookup(dataset_id, label);
        if (m == 0) {
            if (p.confidence > cfg.confidence_threshold_c) {
                targets.boxes.push_back({p.box, label, true});
                targets.entry_indices.push_back(p.class_index);
            }
        } else {
            substitution_pool.push_back(p);
        }
    }

    // step 3: substitution, highest confidence first, stable on ties
    std::stable_sort(substitution_pool.begin(), substitution_pool.end(),
                     [](const Detection& a, const Detection& b) {
                         return a.confidence > b.confidence;
                     });
    int substituted = 0;
    for (const Detection& p : substitution_pool) {
        // filters, recomputed from first principles
        const double image_area = static_cast<double>(image.width) * image.height;
        const double box_area =
            (p.box.x_max - p.box.x_min) * (p.box.y_max - p.box.y_min);
        if (box_area / image_area < cfg.filter.min_area_fraction) continue;
        if (box_area / image_area > cfg.filter.max_area_fraction) continue;
        {
            int cx0 = std::clamp(static_cast<int>(std::floor(p.box.x_min)), 0, image.width - 1);
            int cy0 = std::clamp(static_cast<int>(std::floor(p.box.y_min)), 0, image.height - 1);
            int cx1 = std::clamp(static_cast<int>(std::ceil(p.box.x_max)), cx0 + 1, image.width);
            int cy1 = std::clamp(static_cast<int>(std::ceil(p.box.y_max)), cy0 + 1, image.height);
            long dark = 0, total = 0;
            for (int y = cy0; y < cy1; ++y) {
                for (int x = cx0; x < cx1; ++x) {
                    const int sum = image.at(y, x, 0) + image.at(y, x, 1) + image.at(y, x, 2);
                    if (sum <= 3 * cfg.filter.near_zero_intensity) ++dark;
                    ++total;
                }
            }
            if (static_cast<double>(dark) / static_cast<double>(total) >
                cfg.filter.max_background_fraction) {
                continue;
            }
        }
        if (substituted >= cfg.max_substitutions) continue;

        int entry = -1;
        for (int i = 0; i < targets.vocabulary.size(); ++i) {
            const auto& e = targets.vocabulary.entries[static_cast<std::size_t>(i)];
            if (!e.is_positive && !e.substituted) {
                entry = i;
                break;
            }
        }
        if (entry < 0) continue;

        // expand about the center, clamp, crop, encode
        const double cx = 0.5 * (p.box.x_min + p.box.x_max);
        const double cy = 0.5 * (p.box.y_min + p.box.y_max);
        const double hw = 0.5 * (p.box.x_max - p.box.x_min) * cfg.expand_factor_f;
        const double hh = 0.5 * (p.box.y_max - p.box.y_min) * cfg.expand_factor_f;
        const double ex0 = std::clamp(cx - hw, 0.0, static_cast<double>(image.width));
        const double ey0 = std::clamp(cy - hh, 0.0, static_cast<double>(image.height));
        const double ex1 = std::clamp(cx + hw, 0.0, static_cast<double>(image.width));
        const double ey1 = std::clamp(cy + hh, 0.0, static_cast<double>(image.height));

        int px0 = std::clamp(static_cast<int>(std::floor(ex0)), 0, image.width - 1);
        int py0 = std::clamp(static_cast<int>(std::floor(ey0)), 0, image.height - 1);
        int px1 = std::clamp(static_cast<int>(std::ceil(ex1)), px0 + 1, image.width);
        int py1 = std::clamp(static_cast<int>(std::ceil(ey1)), py0 + 1, image.height);
        ImageU8 crop(py1 - py0, px1 - px0);
        for (int y = py0; y < py1; ++y) {
            for (int x = px0; x < px1; ++x) {
                for (int c = 0; c < 3; ++c) crop.at(y - py0, x - px0, c) = image.at(y, x, c);
            }
        }
        const EmbeddingVector features = image_encoder.encode_image(crop);

        auto& ve = targets.vocabulary.entries[static_cast<std::size_t>(entry)];
        ve.embedding = features;
        ve.substituted = true;
        ve.label = kSubstitutedLabel;
        targets.boxes.push_back({p.box, kSubstitutedLabel, true});
        targets.entry_indices.push_back(entry);
        ++substituted;
    }
    return targets;
}

std::vector<std::uint8_t> reference_normalize(const ArrayD& raw, Modality modality) {
    double lo, hi;
    if (modality == Modality::CT) {
        lo = -500.0;
        hi = 1000.0;
    } else if (modality == Modality::MRI) {
        std::vector<double> sorted = raw.values;
        std::sort(sorted.begin(), sorted.end());
        auto pct = [&](double p) {
            const double pos = p / 100.0 * (static_cast<double>(sorted.size()) - 1.0);
            const auto lo_i = static_cast<std::size_t>(std::floor(pos));
            if (lo_i + 1 >= sorted.size()) return sorted.back();
            const double frac = pos - static_cast<double>(lo_i);
            return sorted[lo_i] + (sorted[lo_i + 1] - sorted[lo_i]) * frac;
        };
        lo = pct(0.5);
        hi = pct(99.5);
    } else {
        lo = *std::min_element(raw.values.begin(), raw.values.end());
        hi = *std::max_element(raw.values.begin(), raw.values.end());
    }
    std::vector<std::uint8_t> out(raw.values.size(), 0);
    if (hi <= lo) return out;
    for (std::size_t i = 0; i < raw.values.size(); ++i) {
        double v = raw.values[i];
        v = std::min(std::max(v, lo), hi);
        const double scaled = (v - lo) / (hi - lo) * 255.0;
        const double rounded = scaled >= 0.0 ? std::floor(scaled + 0.5) : std::ceil(scaled - 0.5);
        out[i] = static_cast<std::uint8_t>(std::min(std::max(rounded, 0.0), 255.0));
    }
    return out;
}

std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double eps) {
    std::vector<double> grad(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + eps;
        const double hi = f(x);
        x[i] = keep - eps;
        const double lo = f(x);
        x[i] = keep;
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    return grad;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                          double floor) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("max_relative_error: size mismatch");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace medrov::testing
