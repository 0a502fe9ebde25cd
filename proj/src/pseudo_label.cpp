#include "medrov/pseudo_label.hpp"

#include <algorithm>
#include <stdexcept>

#include "medrov/rng.hpp"

namespace medrov {

namespace {

int pick_free_negative(const Vocabulary& vocab, SubstituteSelection selection, Rng& rng) {
    if (selection == SubstituteSelection::lowest_index) {
        return first_free_negative(vocab);
    }
    std::vector<int> free_entries;
    for (int i = 0; i < vocab.size(); ++i) {
        const auto& e = vocab.entries[static_cast<std::size_t>(i)];
        if (!e.is_positive && !e.substituted) free_entries.push_back(i);
    }
    if (free_entries.empty()) return -1;
    return free_entries[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(free_entries.size()) - 1))];
}

}  // namespace

std::vector<Detection> find_unmatched(const std::vector<Detection>& preds,
                                      const std::vector<GroundTruthBox>& gts,
                                      double iou_threshold_t) {
    std::vector<Detection> unmatched;
    for (const Detection& p : preds) {
        double max_iou = 0.0;
        for (const GroundTruthBox& g : gts) {
            max_iou = std::max(max_iou, iou(p.box, g.box));  // class-agnostic
        }
        if (max_iou < iou_threshold_t) {
            unmatched.push_back(p);
        }
    }
    return unmatched;
}

PseudoLabelDecision decide(const Detection& pred, const std::string& predicted_class,
                           const std::string& dataset_id, const PresenceMatrix& matrix,
                           double confidence_threshold_c) {
    PseudoLabelDecision d;
    d.detection = pred;
    const int value = matrix.lookup(dataset_id, predicted_class);
    switch (value) {
        case 0:
            if (pred.confidence > confidence_threshold_c) {
                d.action = PseudoAction::INJECT_PSEUDO_LABEL;
                d.reason = PseudoReason::matrix_allows_injection;
            } else {
                d.action = PseudoAction::DISCARD;
                d.reason = PseudoReason::low_confidence;
            }
            break;
        case 1:
            d.action = PseudoAction::FEATURE_SUBSTITUTE;
            d.reason = PseudoReason::class_annotated;
            break;
        case -1:
            d.action = PseudoAction::FEATURE_SUBSTITUTE;
            d.reason = PseudoReason::class_impossible;
            break;
        default:
            throw std::logic_error("presence matrix returned a value outside {1,0,-1}");
    }
    return d;
}

BoxFilterResult filter_box(const Box& box, const ImageU8& image, const BoxFilterConfig& cfg) {
    const double image_area = static_cast<double>(image.width) * image.height;
    if (image_area <= 0.0) {
        return {false, "too-small"};
    }
    const double fraction = box.area() / image_area;
    if (fraction < cfg.min_area_fraction) {
        return {false, "too-small"};
    }
    if (fraction > cfg.max_area_fraction) {
        return {false, "full-image"};
    }
    const ImageU8 crop = crop_image(image, box);
    if (near_zero_fraction(crop, cfg.near_zero_intensity) > cfg.max_background_fraction) {
        return {false, "background"};
    }
    return {true, ""};
}

Box expand_box(const Box& box, double factor, int image_width, int image_height) {
    if (factor < 1.0) {
        throw std::invalid_argument("expand_box: factor must be >= 1");
    }
    const double cx = 0.5 * (box.x_min + box.x_max);
    const double cy = 0.5 * (box.y_min + box.y_max);
    const double hw = 0.5 * box.width() * factor;
    const double hh = 0.5 * box.height() * factor;
    Box out{cx - hw, cy - hh, cx + hw, cy + hh};
    out.x_min = std::clamp(out.x_min, 0.0, static_cast<double>(image_width));
    out.x_max = std::clamp(out.x_max, 0.0, static_cast<double>(image_width));
    out.y_min = std::clamp(out.y_min, 0.0, static_cast<double>(image_height));
    out.y_max = std::clamp(out.y_max, 0.0, static_cast<double>(image_height));
    return out;
}

TrainingTargets apply_pseudo_labels(const std::vector<Detection>& preds_after_nms,
                                    const ImageU8& image, const std::string& dataset_id,
                                    const PresenceMatrix& matrix, TrainingTargets targets,
                                    const ImageEncoder& image_encoder,
                                    const PseudoLabelConfig& cfg, PseudoLabelAudit* audit) {
    PseudoLabelAudit local;

    // Unmatched predictions against the original (pre-injection) ground truth.
    const std::vector<GroundTruthBox> original_gts = targets.boxes;
    const std::vector<Detection> unmatched =
        find_unmatched(preds_after_nms, original_gts, cfg.iou_threshold_t);
    local.unmatched = static_cast<int>(unmatched.size());

    std::vector<Detection> substitute_candidates;
    for (const Detection& pred : unmatched) {
        if (pred.class_index < 0 || pred.class_index >= targets.vocabulary.size()) {
            throw std::out_of_range("apply_pseudo_labels: prediction class outside vocabulary");
        }
        const std::string& label =
            targets.vocabulary.entries[static_cast<std::size_t>(pred.class_index)].label;
        const PseudoLabelDecision d =
            decide(pred, label, dataset_id, matrix, cfg.confidence_threshold_c);
        switch (d.action) {
            case PseudoAction::INJECT_PSEUDO_LABEL:
                targets.boxes.push_back({pred.box, label, true});
                targets.entry_indices.push_back(pred.class_index);
                ++local.injected;
                break;
            case PseudoAction::FEATURE_SUBSTITUTE:
                substitute_candidates.push_back(pred);
                break;
            case PseudoAction::DISCARD:
                ++local.discarded_low_confidence;
                break;
        }
    }

    std::stable_sort(substitute_candidates.begin(), substitute_candidates.end(),
                     [](const Detection& a, const Detection& b) {
                         return a.confidence > b.confidence;
                     });

    Rng selection_rng(cfg.selection_seed);
    for (const Detection& cand : substitute_candidates) {
        const BoxFilterResult f = filter_box(cand.box, image, cfg.filter);
        if (!f.accepted) {
            ++local.discarded_box_filtered;
            continue;
        }
        if (local.substituted >= cfg.max_substitutions) {
            ++local.discarded_over_cap;
            continue;
        }
        const int entry = pick_free_negative(targets.vocabulary, cfg.selection, selection_rng);
        if (entry < 0) {
            ++local.discarded_no_free_negative;
            continue;
        }
        const Box expanded = expand_box(cand.box, cfg.expand_factor_f, image.width,
                                        image.height);
        const ImageU8 crop = crop_image(image, expanded);
        const EmbeddingVector features = image_encoder.encode_image(crop);
        substitute_entry(targets.vocabulary, entry, features);
        targets.boxes.push_back({cand.box, kSubstitutedLabel, true});
        targets.entry_indices.push_back(entry);
        ++local.substituted;
    }

    if (audit) *audit += local;
    return targets;
}

std::string to_string(PseudoAction a) {
    switch (a) {
        case PseudoAction::INJECT_PSEUDO_LABEL: return "inject";
        case PseudoAction::FEATURE_SUBSTITUTE: return "substitute";
        case PseudoAction::DISCARD: return "discard";
    }
    return "?";
}

std::string to_string(PseudoReason r) {
    switch (r) {
        case PseudoReason::low_confidence: return "low-confidence";
        case PseudoReason::matrix_allows_injection: return "matrix-0";
        case PseudoReason::class_annotated: return "matrix-1";
        case PseudoReason::class_impossible: return "matrix--1";
        case PseudoReason::box_filtered: return "box-filtered";
    }
    return "?";
}

}  // namespace medrov
