#include "medrov/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace medrov {

namespace {

constexpr double kPi = 3.14159265358979323846;

double vector_norm(const EmbeddingVector& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    return std::sqrt(n);
}

}  // namespace

double similarity(const EmbeddingVector& e, const EmbeddingVector& w,
                  const SimilarityParams& params) {
    if (e.size() != w.size() || e.empty()) {
        throw std::invalid_argument("similarity: dimension mismatch");
    }
    const double ne = vector_norm(e);
    const double nw = vector_norm(w);
    if (ne == 0.0 || nw == 0.0) {
        throw std::invalid_argument("similarity: zero vector, normalization undefined");
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) dot += e[i] * w[i];
    return params.alpha * dot / (ne * nw) + params.beta;
}

SimilarityGrad similarity_grad(const EmbeddingVector& e, const EmbeddingVector& w,
                               const SimilarityParams& params) {
    const double ne = vector_norm(e);
    const double nw = vector_norm(w);
    if (ne == 0.0 || nw == 0.0) {
        throw std::invalid_argument("similarity_grad: zero vector");
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) dot += e[i] * w[i];
    const double cos = dot / (ne * nw);

    SimilarityGrad g;
    g.d_e.resize(e.size());
    // d cos / d e = w/(|e||w|) - cos * e/|e|^2
    for (std::size_t i = 0; i < e.size(); ++i) {
        g.d_e[i] = params.alpha * (w[i] / (ne * nw) - cos * e[i] / (ne * ne));
    }
    g.d_alpha = cos;
    g.d_beta = 1.0;
    return g;
}

double contrastive_loss(const Tensor& similarities, const std::vector<int>& assignments,
                        Tensor* grad, bool* no_assigned) {
    if (similarities.shape.size() != 2) {
        throw std::invalid_argument("contrastive_loss: expected a K x V matrix");
    }
    const int k_regions = similarities.dim(0);
    const int vocab = similarities.dim(1);
    if (static_cast<int>(assignments.size()) != k_regions) {
        throw std::invalid_argument("contrastive_loss: assignments length mismatch");
    }
    if (grad) {
        *grad = Tensor(similarities.shape);
    }

    int assigned = 0;
    double loss = 0.0;
    for (int k = 0; k < k_regions; ++k) {
        if (assignments[static_cast<std::size_t>(k)] < 0) continue;
        ++assigned;
    }
    if (no_assigned) *no_assigned = (assigned == 0);
    if (assigned == 0) {
        return 0.0;
    }

    for (int k = 0; k < k_regions; ++k) {
        const int target = assignments[static_cast<std::size_t>(k)];
        if (target < 0) continue;
        if (target >= vocab) {
            throw std::invalid_argument("contrastive_loss: target index outside vocabulary");
        }
        const double* row = similarities.ptr() + static_cast<std::size_t>(k) * vocab;
        double row_max = row[0];
        for (int j = 1; j < vocab; ++j) row_max = std::max(row_max, row[j]);
        double z = 0.0;
        for (int j = 0; j < vocab; ++j) z += std::exp(row[j] - row_max);
        const double log_z = std::log(z) + row_max;
        loss += log_z - row[target];

        if (grad) {
            double* grow = grad->ptr() + static_cast<std::size_t>(k) * vocab;
            for (int j = 0; j < vocab; ++j) {
                const double p = std::exp(row[j] - log_z);
                grow[j] = (p - (j == target ? 1.0 : 0.0)) / assigned;
            }
        }
    }
    return loss / assigned;
}

double objectness_bce(const Tensor& logits, const std::vector<int>& assignments,
                      Tensor* grad, double pos_weight) {
    const int k_regions = static_cast<int>(logits.size());
    if (static_cast<int>(assignments.size()) != k_regions) {
        throw std::invalid_argument("objectness_bce: assignments length mismatch");
    }
    if (k_regions == 0) return 0.0;
    if (grad) *grad = Tensor(logits.shape);

    double loss = 0.0;
    for (int k = 0; k < k_regions; ++k) {
        const double x = logits.at(k);
        const bool assigned = assignments[static_cast<std::size_t>(k)] >= 0;
        const double y = assigned ? 1.0 : 0.0;
        const double w = assigned ? pos_weight : 1.0;
        // log(1 + e^-|x|) form keeps this stable for large |x|
        loss += w * (std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x))));
        if (grad) {
            const double p = 1.0 / (1.0 + std::exp(-x));
            grad->at(k) = w * (p - y) / k_regions;
        }
    }
    return loss / k_regions;
}

namespace {

struct IouPieces {
    double value = 0.0;                    // IoU
    std::array<double, 4> d = {0, 0, 0, 0};  // dIoU / d(pred x0,y0,x1,y1)
};

IouPieces iou_with_grad(const Box& p, const Box& t) {
    const double iw = std::min(p.x_max, t.x_max) - std::max(p.x_min, t.x_min);
    const double ih = std::min(p.y_max, t.y_max) - std::max(p.y_min, t.y_min);
    const double inter = std::max(iw, 0.0) * std::max(ih, 0.0);
    const double area_p = p.area();
    const double uni = area_p + t.area() - inter;

    IouPieces out;
    if (uni <= 0.0) {
        return out;
    }
    out.value = inter / uni;

    // d inter / d pred coords (zero where the clamp is inactive)
    std::array<double, 4> di = {0, 0, 0, 0};
    if (iw > 0.0 && ih > 0.0) {
        if (p.x_min > t.x_min) di[0] = -ih;
        if (p.y_min > t.y_min) di[1] = -iw;
        if (p.x_max < t.x_max) di[2] = ih;
        if (p.y_max < t.y_max) di[3] = iw;
    }
    const std::array<double, 4> da = {-(p.y_max - p.y_min), -(p.x_max - p.x_min),
                                      (p.y_max - p.y_min), (p.x_max - p.x_min)};
    for (int i = 0; i < 4; ++i) {
        const double du = da[i] - di[i];
        out.d[i] = (di[i] * uni - inter * du) / (uni * uni);
    }
    return out;
}

}  // namespace

double iou_loss(const std::vector<Box>& pred, const std::vector<Box>& target,
                IouLossVariant variant, std::vector<std::array<double, 4>>* grad) {
    if (pred.size() != target.size()) {
        throw std::invalid_argument("iou_loss: pred/target count mismatch");
    }
    if (grad) {
        grad->assign(pred.size(), {0, 0, 0, 0});
    }
    if (pred.empty()) {
        return 0.0;
    }

    const double inv_n = 1.0 / static_cast<double>(pred.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const Box& p = pred[i];
        const Box& t = target[i];
        const IouPieces iou_p = iou_with_grad(p, t);
        double term = 1.0 - iou_p.value;
        std::array<double, 4> d = {-iou_p.d[0], -iou_p.d[1], -iou_p.d[2], -iou_p.d[3]};

        if (variant == IouLossVariant::ciou) {
            // center distance over enclosing diagonal
            const double pcx = 0.5 * (p.x_min + p.x_max);
            const double pcy = 0.5 * (p.y_min + p.y_max);
            const double tcx = 0.5 * (t.x_min + t.x_max);
            const double tcy = 0.5 * (t.y_min + t.y_max);
            const double rho2 = (pcx - tcx) * (pcx - tcx) + (pcy - tcy) * (pcy - tcy);
            const double cw = std::max(p.x_max, t.x_max) - std::min(p.x_min, t.x_min);
            const double ch = std::max(p.y_max, t.y_max) - std::min(p.y_min, t.y_min);
            const double c2 = cw * cw + ch * ch + 1e-12;

            std::array<double, 4> d_rho2 = {(pcx - tcx), (pcy - tcy), (pcx - tcx),
                                            (pcy - tcy)};
            std::array<double, 4> d_c2 = {0, 0, 0, 0};
            if (p.x_min < t.x_min) d_c2[0] = -2.0 * cw;
            if (p.y_min < t.y_min) d_c2[1] = -2.0 * ch;
            if (p.x_max > t.x_max) d_c2[2] = 2.0 * cw;
            if (p.y_max > t.y_max) d_c2[3] = 2.0 * ch;

            term += rho2 / c2;
            for (int k = 0; k < 4; ++k) {
                d[k] += (d_rho2[k] * c2 - rho2 * d_c2[k]) / (c2 * c2);
            }

            // aspect term v^2 / (1 - IoU + v), with v differentiable end to end
            const double pw = p.x_max - p.x_min;
            const double ph = p.y_max - p.y_min;
            const double tw = t.x_max - t.x_min;
            const double th = t.y_max - t.y_min;
            if (pw > 0.0 && ph > 0.0 && tw > 0.0 && th > 0.0) {
                const double at_t = std::atan(tw / th);
                const double at_p = std::atan(pw / ph);
                const double diff = at_t - at_p;
                const double v = 4.0 / (kPi * kPi) * diff * diff;
                const double s = 1.0 - iou_p.value + v + 1e-12;

                // d at_p / d coords
                const double denom = 1.0 + (pw / ph) * (pw / ph);
                const double datp_dpw = (1.0 / denom) / ph;
                const double datp_dph = (1.0 / denom) * (-pw / (ph * ph));
                std::array<double, 4> d_v;
                const double dv_datp = 4.0 / (kPi * kPi) * 2.0 * diff * (-1.0);
                d_v[0] = dv_datp * (-datp_dpw);
                d_v[1] = dv_datp * (-datp_dph);
                d_v[2] = dv_datp * (datp_dpw);
                d_v[3] = dv_datp * (datp_dph);

                term += v * v / s;
                for (int k = 0; k < 4; ++k) {
                    const double ds = -iou_p.d[k] + d_v[k];
                    d[k] += (2.0 * v * d_v[k] * s - v * v * ds) / (s * s);
                }
            }
        }

        loss += term;
        if (grad) {
            for (int k = 0; k < 4; ++k) {
                (*grad)[i][k] = d[k] * inv_n;
            }
        }
    }
    return loss * inv_n;
}

double dfl_loss(const Tensor& logits, const std::vector<std::array<double, 4>>& targets,
                Tensor* grad, int* clamp_count) {
    if (logits.shape.size() != 3 || logits.dim(1) != 4) {
        throw std::invalid_argument("dfl_loss: expected logits of shape {K, 4, bins}");
    }
    const int k_regions = logits.dim(0);
    const int bins = logits.dim(2);
    if (bins < 2) {
        throw std::invalid_argument("dfl_loss: need at least two bins");
    }
    if (static_cast<int>(targets.size()) != k_regions) {
        throw std::invalid_argument("dfl_loss: targets length mismatch");
    }
    if (grad) *grad = Tensor(logits.shape);
    if (clamp_count) *clamp_count = 0;
    if (k_regions == 0) return 0.0;

    const double inv_n = 1.0 / (static_cast<double>(k_regions) * 4.0);
    double loss = 0.0;
    for (int k = 0; k < k_regions; ++k) {
        for (int side = 0; side < 4; ++side) {
            double t = targets[static_cast<std::size_t>(k)][static_cast<std::size_t>(side)];
            if (t < 0.0 || t > static_cast<double>(bins - 1)) {
                t = std::clamp(t, 0.0, static_cast<double>(bins - 1));
                if (clamp_count) ++(*clamp_count);
            }
            int lo = std::min(static_cast<int>(std::floor(t)), bins - 2);
            const int hi = lo + 1;
            const double w_hi = t - static_cast<double>(lo);
            const double w_lo = 1.0 - w_hi;

            const double* row =
                logits.ptr() + (static_cast<std::size_t>(k) * 4 + side) * bins;
            double row_max = row[0];
            for (int b = 1; b < bins; ++b) row_max = std::max(row_max, row[b]);
            double z = 0.0;
            for (int b = 0; b < bins; ++b) z += std::exp(row[b] - row_max);
            const double log_z = std::log(z) + row_max;

            loss += w_lo * (log_z - row[lo]) + w_hi * (log_z - row[hi]);
            if (grad) {
                double* grow = grad->ptr() + (static_cast<std::size_t>(k) * 4 + side) * bins;
                for (int b = 0; b < bins; ++b) {
                    const double p = std::exp(row[b] - log_z);
                    double g = p;
                    if (b == lo) g -= w_lo;
                    if (b == hi) g -= w_hi;
                    grow[b] = g * inv_n;
                }
            }
        }
    }
    return loss * inv_n;
}

LossBreakdown total_loss(double contrastive, double iou, double dfl, int lambda_indicator) {
    if (lambda_indicator != 0 && lambda_indicator != 1) {
        throw std::invalid_argument("total_loss: lambda indicator must be 0 or 1");
    }
    LossBreakdown b;
    b.contrastive = contrastive;
    b.iou_loss = iou;
    b.dfl = dfl;
    b.lambda_indicator = lambda_indicator;
    b.total = contrastive + lambda_indicator * (iou + dfl);
    return b;
}

}  // namespace medrov
