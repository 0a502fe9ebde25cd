#pragma once

#include <array>
#include <vector>

#include "medrov/geometry.hpp"
#include "medrov/tensor.hpp"

namespace medrov {

/// Learnable scale/shift of the region-text similarity.
struct SimilarityParams {
    double alpha = 1.0;
    double beta = 0.0;
};

/// s = alpha * cosine(e, w) + beta. Throws on a zero vector.
double similarity(const EmbeddingVector& e, const EmbeddingVector& w,
                  const SimilarityParams& params);

/// Gradient of `similarity` wrt e, alpha and beta (w is a constant input).
struct SimilarityGrad {
    EmbeddingVector d_e;
    double d_alpha = 0.0;
    double d_beta = 0.0;
};
SimilarityGrad similarity_grad(const EmbeddingVector& e, const EmbeddingVector& w,
                               const SimilarityParams& params);

struct LossBreakdown {
    double contrastive = 0.0;
    double iou_loss = 0.0;
    double dfl = 0.0;
    int lambda_indicator = 1;
    double total = 0.0;
};

/// Softmax cross-entropy between each assigned region's similarity row and its
/// target entry, averaged over assigned regions. assignments[k] is the target
/// vocabulary index or -1 for unassigned regions (which contribute nothing
/// here; their suppression lives in `objectness_bce`). Zero assigned regions
/// yield 0 and set *no_assigned.
/// grad, when given, receives d(loss)/d(similarities) (same shape, overwritten).
double contrastive_loss(const Tensor& similarities, const std::vector<int>& assignments,
                        Tensor* grad = nullptr, bool* no_assigned = nullptr);

/// Binary cross-entropy of per-region objectness logits against the assignment
/// mask, averaged over all regions. pos_weight rescales the assigned-region
/// terms (grids carry far more background than object cells).
double objectness_bce(const Tensor& logits, const std::vector<int>& assignments,
                      Tensor* grad = nullptr, double pos_weight = 1.0);

enum class IouLossVariant { plain, ciou };

/// Mean over matched pairs of (1 - IoU) or the complete-IoU loss. No matches
/// yield 0. grad, when given, receives d(loss)/d(pred coords) per box as
/// (x_min, y_min, x_max, y_max). The CIoU aspect term's coupling factor is
/// kept differentiable so the analytic gradient matches finite differences.
double iou_loss(const std::vector<Box>& pred, const std::vector<Box>& target,
                IouLossVariant variant,
                std::vector<std::array<double, 4>>* grad = nullptr);

/// Distribution focal loss over `bins` per side: cross-entropy against the two
/// bins bracketing each continuous target offset, linearly weighted, averaged
/// over regions and sides. logits shape {K, 4, bins}; targets[k][side] in bin
/// units. Out-of-range targets are clamped and counted in *clamp_count.
double dfl_loss(const Tensor& logits, const std::vector<std::array<double, 4>>& targets,
                Tensor* grad = nullptr, int* clamp_count = nullptr);

/// total = contrastive + lambda * (iou + dfl), lambda in {0, 1}.
LossBreakdown total_loss(double contrastive, double iou, double dfl, int lambda_indicator);

}  // namespace medrov
