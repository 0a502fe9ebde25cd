#pragma once

#include <string>
#include <vector>

#include "medrov/encoders.hpp"
#include "medrov/geometry.hpp"
#include "medrov/image.hpp"
#include "medrov/presence_matrix.hpp"
#include "medrov/vocabulary.hpp"

namespace medrov {

enum class PseudoAction { INJECT_PSEUDO_LABEL, FEATURE_SUBSTITUTE, DISCARD };

enum class PseudoReason {
    low_confidence,
    matrix_allows_injection,   // value 0, confidence above C
    class_annotated,           // value 1
    class_impossible,          // value -1
    box_filtered,
};

struct PseudoLabelDecision {
    Detection detection;
    PseudoAction action = PseudoAction::DISCARD;
    PseudoReason reason = PseudoReason::low_confidence;
};

struct BoxFilterConfig {
    double min_area_fraction = 0.001;   // reject smaller
    double max_area_fraction = 0.95;    // reject larger (full-image boxes)
    double max_background_fraction = 0.8;
    int near_zero_intensity = 5;        // 8-bit value counted as background
};

enum class SubstituteSelection { lowest_index, random };

struct PseudoLabelConfig {
    double iou_threshold_t = 0.3;       // unmatched when max IoU < T
    double confidence_threshold_c = 0.9;
    double expand_factor_f = 1.3;
    int max_substitutions = 5;
    BoxFilterConfig filter;
    SubstituteSelection selection = SubstituteSelection::lowest_index;
    std::uint64_t selection_seed = 0;   // only used by the random policy
};

struct BoxFilterResult {
    bool accepted = false;
    std::string reason;  // "too-small" | "full-image" | "background" | ""
};

/// Counters for one apply() call; summed into the per-epoch audit log.
struct PseudoLabelAudit {
    int unmatched = 0;
    int injected = 0;
    int substituted = 0;
    int discarded_low_confidence = 0;
    int discarded_box_filtered = 0;
    int discarded_no_free_negative = 0;
    int discarded_over_cap = 0;

    PseudoLabelAudit& operator+=(const PseudoLabelAudit& o) {
        unmatched += o.unmatched;
        injected += o.injected;
        substituted += o.substituted;
        discarded_low_confidence += o.discarded_low_confidence;
        discarded_box_filtered += o.discarded_box_filtered;
        discarded_no_free_negative += o.discarded_no_free_negative;
        discarded_over_cap += o.discarded_over_cap;
        return *this;
    }
};

/// Ground truth as the training step sees it: original boxes, injected pseudo
/// labels and substitution boxes, each bound to a vocabulary entry.
struct TrainingTargets {
    std::vector<GroundTruthBox> boxes;
    std::vector<int> entry_indices;  // per box, index into vocabulary.entries
    Vocabulary vocabulary;
};

/// Predictions whose class-agnostic max IoU against every ground truth box is
/// below T. An empty ground truth set returns all predictions.
std::vector<Detection> find_unmatched(const std::vector<Detection>& preds,
                                      const std::vector<GroundTruthBox>& gts,
                                      double iou_threshold_t);

/// Routes one unmatched prediction through the presence matrix:
/// 0 and confident -> inject; 0 and not confident -> discard; 1 or -1 ->
/// substitution candidate. The predicted class name indexes the matrix;
/// unregistered classes propagate the matrix lookup error.
PseudoLabelDecision decide(const Detection& pred, const std::string& predicted_class,
                           const std::string& dataset_id, const PresenceMatrix& matrix,
                           double confidence_threshold_c);

/// Size and background screening for substitution candidates.
BoxFilterResult filter_box(const Box& box, const ImageU8& image, const BoxFilterConfig& cfg);

/// Scales width/height by factor about the box center, clamped to the image.
Box expand_box(const Box& box, double factor, int image_width, int image_height);

/// The full per-sample mechanism: injection of confident matrix-0 predictions
/// plus feature substitution for up to max_substitutions filtered matrix-1/-1
/// boxes (highest confidence first). Returns updated targets and vocabulary
/// for the second forward pass. `targets` enters with the original annotations
/// already bound to vocabulary entries.
TrainingTargets apply_pseudo_labels(const std::vector<Detection>& preds_after_nms,
                                    const ImageU8& image, const std::string& dataset_id,
                                    const PresenceMatrix& matrix, TrainingTargets targets,
                                    const ImageEncoder& image_encoder,
                                    const PseudoLabelConfig& cfg,
                                    PseudoLabelAudit* audit = nullptr);

std::string to_string(PseudoAction a);
std::string to_string(PseudoReason r);

}  // namespace medrov
