#include "medrov/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "medrov/rng.hpp"

namespace medrov {

namespace {

constexpr int kStride = 8;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void silu_forward(const Tensor& z, Tensor& a) {
    a = Tensor(z.shape);
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double x = z.data[i];
        a.data[i] = x * sigmoid(x);
    }
}

void silu_backward(const Tensor& z, const Tensor& d_a, Tensor& d_z) {
    d_z = Tensor(z.shape);
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double s = sigmoid(z.data[i]);
        d_z.data[i] = d_a.data[i] * s * (1.0 + z.data[i] * (1.0 - s));
    }
}

void avgpool_forward(const Tensor& in, int factor, Tensor& out) {
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    out = Tensor({c, h / factor, w / factor});
    const double inv = 1.0 / (factor * factor);
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < h / factor; ++oy) {
            for (int ox = 0; ox < w / factor; ++ox) {
                double acc = 0.0;
                for (int dy = 0; dy < factor; ++dy) {
                    for (int dx = 0; dx < factor; ++dx) {
                        acc += in.at3(ch, oy * factor + dy, ox * factor + dx);
                    }
                }
                out.at3(ch, oy, ox) = acc * inv;
            }
        }
    }
}

void avgpool_backward(const Tensor& d_out, int factor, const std::vector<int>& in_shape,
                      Tensor& d_in) {
    d_in = Tensor(in_shape);
    const int c = in_shape[0];
    const int oh = d_out.dim(1), ow = d_out.dim(2);
    const double inv = 1.0 / (factor * factor);
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const double g = d_out.at3(ch, oy, ox) * inv;
                for (int dy = 0; dy < factor; ++dy) {
                    for (int dx = 0; dx < factor; ++dx) {
                        d_in.at3(ch, oy * factor + dy, ox * factor + dx) = g;
                    }
                }
            }
        }
    }
}

kernels::ConvShape conv_shape(const Tensor& in, const Tensor& weights, int stride, int pad) {
    kernels::ConvShape s;
    s.in_channels = in.dim(0);
    s.in_h = in.dim(1);
    s.in_w = in.dim(2);
    s.out_channels = weights.dim(0);
    s.kernel = weights.dim(2);
    s.stride = stride;
    s.pad = pad;
    return s;
}

void conv_forward(const Tensor& in, const ModelParam& w, const ModelParam& b, int stride,
                  int pad, Tensor& out) {
    const auto s = conv_shape(in, w.value, stride, pad);
    out = Tensor({s.out_channels, s.out_h(), s.out_w()});
    kernels::conv2d_forward(in.ptr(), w.value.ptr(), b.value.ptr(), s, out.ptr());
}

}  // namespace

DetectorModel::DetectorModel(const DetectorConfig& config) : config_(config) {
    if (config_.input_size % 8 != 0 || config_.input_size < 16) {
        throw std::invalid_argument("DetectorModel: input_size must be a multiple of 8");
    }
    if (config_.dfl_bins < 2) {
        throw std::invalid_argument("DetectorModel: dfl_bins must be >= 2");
    }
    init_params();
}

void DetectorModel::init_params() {
    const int c1 = config_.stage1_channels;
    const int c2 = config_.stage2_channels;
    const int c3 = config_.stage3_channels;
    const int d = config_.embed_dim;
    const int nb = config_.dfl_bins;

    auto make = [](ModelParam& p, const std::string& name, std::vector<int> shape) {
        p.name = name;
        p.value = Tensor(shape);
        p.grad = Tensor(shape);
    };
    make(conv1_w_, "conv1.w", {c1, 3, 3, 3});
    make(conv1_b_, "conv1.b", {c1});
    make(conv2_w_, "conv2.w", {c2, c1, 3, 3});
    make(conv2_b_, "conv2.b", {c2});
    make(conv3_w_, "conv3.w", {c3, c2, 3, 3});
    make(conv3_b_, "conv3.b", {c3});
    make(proj1_, "neck.proj1", {c1, d});
    make(proj2_, "neck.proj2", {c2, d});
    make(proj3_, "neck.proj3", {c3, d});
    make(fuse_w_, "fuse.w", {c3, c1 + c2 + c3, 1, 1});
    make(fuse_b_, "fuse.b", {c3});
    make(head_box_w_, "head.box.w", {4 * nb, c3, 1, 1});
    make(head_box_b_, "head.box.b", {4 * nb});
    make(head_obj_w_, "head.obj.w", {1, c3, 1, 1});
    make(head_obj_b_, "head.obj.b", {1});
    make(head_emb_w_, "head.emb.w", {d, c3, 1, 1});
    make(head_emb_b_, "head.emb.b", {d});
    make(alpha_, "sim.alpha", {1});
    make(beta_, "sim.beta", {1});

    Rng rng(config_.init_seed);
    auto he_fill = [&](Tensor& t, int fan_in) {
        const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (double& x : t.data) x = rng.normal(0.0, std_dev);
    };
    he_fill(conv1_w_.value, 3 * 9);
    he_fill(conv2_w_.value, c1 * 9);
    he_fill(conv3_w_.value, c2 * 9);
    he_fill(proj1_.value, d);
    he_fill(proj2_.value, d);
    he_fill(proj3_.value, d);
    he_fill(fuse_w_.value, c1 + c2 + c3);
    he_fill(head_box_w_.value, c3);
    he_fill(head_obj_w_.value, c3);
    he_fill(head_emb_w_.value, c3);
    head_obj_b_.value.at(0) = -2.0;  // start regions as unlikely objects
    alpha_.value.at(0) = config_.alpha_init;
    beta_.value.at(0) = config_.beta_init;
}

std::vector<ModelParam*> DetectorModel::params() {
    return {&conv1_w_, &conv1_b_, &conv2_w_, &conv2_b_, &conv3_w_, &conv3_b_,
            &proj1_,  &proj2_,   &proj3_,   &fuse_w_,  &fuse_b_,
            &head_box_w_, &head_box_b_, &head_obj_w_, &head_obj_b_,
            &head_emb_w_, &head_emb_b_, &alpha_, &beta_};
}

const std::vector<ModelParam*> DetectorModel::params() const {
    return const_cast<DetectorModel*>(this)->params();
}

void DetectorModel::zero_grad() {
    for (ModelParam* p : params()) p->grad.zero();
}

SimilarityParams DetectorModel::similarity_params() const {
    return {alpha_.value.at(0), beta_.value.at(0)};
}

void DetectorModel::forward(const ImageU8& image, const Vocabulary& vocab,
                            DetectorWorkspace& ws) const {
    const int s = config_.input_size;
    if (image.height != s || image.width != s) {
        throw std::invalid_argument("forward: image must match the configured input size");
    }
    const int vsize = vocab.size();
    if (vsize == 0) {
        throw std::invalid_argument("forward: empty vocabulary");
    }
    const int d = config_.embed_dim;
    ws.vocab_embeddings.clear();
    ws.gate_embeddings.clear();
    for (const auto& entry : vocab.entries) {
        if (static_cast<int>(entry.embedding.size()) != d) {
            throw std::invalid_argument(
                "forward: vocabulary embedding dimension does not match the network (" +
                std::to_string(entry.embedding.size()) + " vs " + std::to_string(d) + ")");
        }
        ws.vocab_embeddings.push_back(entry.embedding);
        const EmbeddingVector& gate_side =
            entry.text_embedding.empty() ? entry.embedding : entry.text_embedding;
        if (static_cast<int>(gate_side.size()) != d) {
            throw std::invalid_argument("forward: text embedding dimension mismatch");
        }
        ws.gate_embeddings.push_back(gate_side);
    }

    // image to [0,1] CHW
    ws.input = Tensor({3, s, s});
    for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
            for (int c = 0; c < 3; ++c) {
                ws.input.at3(c, y, x) = image.at(y, x, c) / 255.0;
            }
        }
    }

    conv_forward(ws.input, conv1_w_, conv1_b_, 2, 1, ws.z1);
    silu_forward(ws.z1, ws.a1);
    conv_forward(ws.a1, conv2_w_, conv2_b_, 2, 1, ws.z2);
    silu_forward(ws.z2, ws.a2);
    conv_forward(ws.a2, conv3_w_, conv3_b_, 2, 1, ws.z3);
    silu_forward(ws.z3, ws.a3);

    // project vocabulary embeddings into each scale's channel space
    auto project = [&](const ModelParam& proj, Tensor& out) {
        const int channels = proj.value.dim(0);
        out = Tensor({vsize, channels});
        for (int j = 0; j < vsize; ++j) {
            const EmbeddingVector& w = ws.gate_embeddings[static_cast<std::size_t>(j)];
            for (int c = 0; c < channels; ++c) {
                double acc = 0.0;
                const double* row = proj.value.ptr() + static_cast<std::size_t>(c) * d;
                for (int k = 0; k < d; ++k) acc += row[k] * w[static_cast<std::size_t>(k)];
                out.at(j * channels + c) = acc;
            }
        }
    };
    project(proj1_, ws.proj_vocab1);
    project(proj2_, ws.proj_vocab2);
    project(proj3_, ws.proj_vocab3);

    auto gate = [&](const Tensor& feat, const Tensor& pv, Tensor& out, Tensor& g,
                    std::vector<int>& arg) {
        const int c = feat.dim(0), h = feat.dim(1), w = feat.dim(2);
        out = Tensor({c, h, w});
        g = Tensor({h, w});
        arg.assign(static_cast<std::size_t>(h) * w, 0);
        kernels::text_gate_forward(feat.ptr(), c, h, w, pv.ptr(), vsize, out.ptr(), g.ptr(),
                                   arg.data());
    };
    gate(ws.a1, ws.proj_vocab1, ws.m1, ws.gate1, ws.argmax1);
    gate(ws.a2, ws.proj_vocab2, ws.m2, ws.gate2, ws.argmax2);
    gate(ws.a3, ws.proj_vocab3, ws.m3, ws.gate3, ws.argmax3);

    avgpool_forward(ws.m1, 4, ws.p1);
    avgpool_forward(ws.m2, 2, ws.p2);

    const int c1 = config_.stage1_channels, c2 = config_.stage2_channels,
              c3 = config_.stage3_channels;
    const int g = config_.grid();
    ws.cat = Tensor({c1 + c2 + c3, g, g});
    std::memcpy(ws.cat.ptr(), ws.p1.ptr(), ws.p1.size() * sizeof(double));
    std::memcpy(ws.cat.ptr() + ws.p1.size(), ws.p2.ptr(), ws.p2.size() * sizeof(double));
    std::memcpy(ws.cat.ptr() + ws.p1.size() + ws.p2.size(), ws.m3.ptr(),
                ws.m3.size() * sizeof(double));

    conv_forward(ws.cat, fuse_w_, fuse_b_, 1, 0, ws.zf);
    silu_forward(ws.zf, ws.f);

    conv_forward(ws.f, head_box_w_, head_box_b_, 1, 0, ws.box_logits_map);
    conv_forward(ws.f, head_obj_w_, head_obj_b_, 1, 0, ws.obj_map);
    conv_forward(ws.f, head_emb_w_, head_emb_b_, 1, 0, ws.emb_map);

    // per-region views + decode
    const int k_regions = config_.regions();
    const int nb = config_.dfl_bins;
    ws.similarities = Tensor({k_regions, vsize});
    ws.obj_logits = Tensor({k_regions});
    ws.box_logits = Tensor({k_regions, 4, nb});
    ws.embeddings = Tensor({k_regions, d});
    ws.pred_boxes.assign(static_cast<std::size_t>(k_regions), Box{});
    ws.detections.assign(static_cast<std::size_t>(k_regions), Detection{});

    const double alpha = alpha_.value.at(0);
    const double beta = beta_.value.at(0);

    std::vector<double> vocab_norms(static_cast<std::size_t>(vsize));
    for (int j = 0; j < vsize; ++j) {
        double n = 0.0;
        for (double x : ws.vocab_embeddings[static_cast<std::size_t>(j)]) n += x * x;
        vocab_norms[static_cast<std::size_t>(j)] = std::max(std::sqrt(n), 1e-12);
    }

    for (int gy = 0; gy < g; ++gy) {
        for (int gx = 0; gx < g; ++gx) {
            const int k = gy * g + gx;
            const double cx = (gx + 0.5) * kStride;
            const double cy = (gy + 0.5) * kStride;

            // DFL expectation decode
            std::array<double, 4> offsets{};
            for (int side = 0; side < 4; ++side) {
                double row_max = -1e300;
                for (int b = 0; b < nb; ++b) {
                    const double v = ws.box_logits_map.at3(side * nb + b, gy, gx);
                    ws.box_logits.at((static_cast<std::size_t>(k) * 4 + side) * nb + b) = v;
                    row_max = std::max(row_max, v);
                }
                double z = 0.0;
                for (int b = 0; b < nb; ++b) {
                    z += std::exp(ws.box_logits.at((static_cast<std::size_t>(k) * 4 + side) * nb + b) -
                                  row_max);
                }
                double expect = 0.0;
                for (int b = 0; b < nb; ++b) {
                    const double p =
                        std::exp(ws.box_logits.at((static_cast<std::size_t>(k) * 4 + side) * nb + b) -
                                 row_max) / z;
                    expect += p * b;
                }
                offsets[static_cast<std::size_t>(side)] = expect;
            }
            Box raw{cx - offsets[0] * kStride, cy - offsets[1] * kStride,
                    cx + offsets[2] * kStride, cy + offsets[3] * kStride};
            ws.pred_boxes[static_cast<std::size_t>(k)] = raw;

            for (int dd = 0; dd < d; ++dd) {
                ws.embeddings.at(k * d + dd) = ws.emb_map.at3(dd, gy, gx);
            }
            ws.obj_logits.at(k) = ws.obj_map.at3(0, gy, gx);

            double e_norm = 0.0;
            for (int dd = 0; dd < d; ++dd) {
                const double v = ws.embeddings.at(k * d + dd);
                e_norm += v * v;
            }
            e_norm = std::max(std::sqrt(e_norm), 1e-12);

            double best_sim = -1e300;
            int best_j = 0;
            for (int j = 0; j < vsize; ++j) {
                double dot = 0.0;
                const EmbeddingVector& w = ws.vocab_embeddings[static_cast<std::size_t>(j)];
                for (int dd = 0; dd < d; ++dd) {
                    dot += ws.embeddings.at(k * d + dd) * w[static_cast<std::size_t>(dd)];
                }
                const double sim =
                    alpha * dot / (e_norm * vocab_norms[static_cast<std::size_t>(j)]) + beta;
                ws.similarities.at(k * vsize + j) = sim;
                if (sim > best_sim) {
                    best_sim = sim;
                    best_j = j;
                }
            }

            // softmax over the row for the class probability
            double z = 0.0;
            for (int j = 0; j < vsize; ++j) {
                z += std::exp(ws.similarities.at(k * vsize + j) - best_sim);
            }
            const double p_best = 1.0 / z;  // exp(0) over the partition

            Detection det;
            det.box = Box{std::clamp(raw.x_min, 0.0, static_cast<double>(s)),
                          std::clamp(raw.y_min, 0.0, static_cast<double>(s)),
                          std::clamp(raw.x_max, 0.0, static_cast<double>(s)),
                          std::clamp(raw.y_max, 0.0, static_cast<double>(s))};
            if (det.box.x_min > det.box.x_max) std::swap(det.box.x_min, det.box.x_max);
            if (det.box.y_min > det.box.y_max) std::swap(det.box.y_min, det.box.y_max);
            det.class_index = best_j;
            det.confidence = sigmoid(ws.obj_logits.at(k)) * p_best;
            det.embedding = EmbeddingVector(
                ws.embeddings.ptr() + static_cast<std::size_t>(k) * d,
                ws.embeddings.ptr() + static_cast<std::size_t>(k + 1) * d);
            ws.detections[static_cast<std::size_t>(k)] = std::move(det);
        }
    }
}

void DetectorModel::backward(const DetectorWorkspace& ws, const HeadGradients& grads) {
    const int g = config_.grid();
    const int k_regions = config_.regions();
    const int d = config_.embed_dim;
    const int nb = config_.dfl_bins;
    const int vsize = static_cast<int>(ws.vocab_embeddings.size());

    // --- similarity branch: d_sim -> d_emb_map, d_alpha, d_beta
    Tensor d_emb_map(ws.emb_map.shape);
    const double alpha = alpha_.value.at(0);
    double d_alpha = 0.0;
    double d_beta = 0.0;

    std::vector<double> vocab_norms(static_cast<std::size_t>(vsize));
    for (int j = 0; j < vsize; ++j) {
        double n = 0.0;
        for (double x : ws.vocab_embeddings[static_cast<std::size_t>(j)]) n += x * x;
        vocab_norms[static_cast<std::size_t>(j)] = std::max(std::sqrt(n), 1e-12);
    }

    const bool has_sim = grads.d_similarities.size() > 0;
    const bool has_obj = grads.d_obj_logits.size() > 0;
    const bool has_dfl = grads.d_box_logits.size() > 0;
    const bool has_box = !grads.d_pred_boxes.empty();

    for (int k = 0; k < k_regions; ++k) {
        if (!has_sim) break;
        const int gy = k / g;
        const int gx = k % g;
        const double* e = ws.embeddings.ptr() + static_cast<std::size_t>(k) * d;
        double e_norm = 0.0;
        for (int dd = 0; dd < d; ++dd) e_norm += e[dd] * e[dd];
        e_norm = std::max(std::sqrt(e_norm), 1e-12);

        for (int j = 0; j < vsize; ++j) {
            const double up = grads.d_similarities.at(k * vsize + j);
            if (up == 0.0) continue;
            const EmbeddingVector& w = ws.vocab_embeddings[static_cast<std::size_t>(j)];
            const double wn = vocab_norms[static_cast<std::size_t>(j)];
            double dot = 0.0;
            for (int dd = 0; dd < d; ++dd) dot += e[dd] * w[static_cast<std::size_t>(dd)];
            const double cos = dot / (e_norm * wn);
            d_alpha += up * cos;
            d_beta += up;
            const double scale = up * alpha;
            for (int dd = 0; dd < d; ++dd) {
                d_emb_map.at3(dd, gy, gx) +=
                    scale * (w[static_cast<std::size_t>(dd)] / (e_norm * wn) -
                             cos * e[dd] / (e_norm * e_norm));
            }
        }
    }
    alpha_.grad.at(0) += d_alpha;
    beta_.grad.at(0) += d_beta;

    // --- box branch: DFL grads plus the IoU-loss chain through the decode
    Tensor d_box_map(ws.box_logits_map.shape);
    for (int k = 0; k < k_regions; ++k) {
        const int gy = k / g;
        const int gx = k % g;
        std::array<double, 4> d_offsets{0.0, 0.0, 0.0, 0.0};
        if (has_box) {
            const auto& db = grads.d_pred_boxes[static_cast<std::size_t>(k)];
            d_offsets[0] = -kStride * db[0];
            d_offsets[1] = -kStride * db[1];
            d_offsets[2] = kStride * db[2];
            d_offsets[3] = kStride * db[3];
        }
        for (int side = 0; side < 4; ++side) {
            const double* row =
                ws.box_logits.ptr() + (static_cast<std::size_t>(k) * 4 + side) * nb;
            double row_max = row[0];
            for (int b = 1; b < nb; ++b) row_max = std::max(row_max, row[b]);
            double z = 0.0;
            for (int b = 0; b < nb; ++b) z += std::exp(row[b] - row_max);
            double expect = 0.0;
            for (int b = 0; b < nb; ++b) {
                expect += std::exp(row[b] - row_max) / z * b;
            }
            for (int b = 0; b < nb; ++b) {
                double acc = 0.0;
                if (has_dfl) {
                    acc += grads.d_box_logits.at((static_cast<std::size_t>(k) * 4 + side) * nb + b);
                }
                if (d_offsets[static_cast<std::size_t>(side)] != 0.0) {
                    const double p = std::exp(row[b] - row_max) / z;
                    acc += d_offsets[static_cast<std::size_t>(side)] * p *
                           (static_cast<double>(b) - expect);
                }
                d_box_map.at3(side * nb + b, gy, gx) = acc;
            }
        }
    }

    Tensor d_obj_map(ws.obj_map.shape);
    if (has_obj) {
        for (int k = 0; k < k_regions; ++k) {
            d_obj_map.at3(0, k / g, k % g) = grads.d_obj_logits.at(k);
        }
    }

    // --- heads back to the fused features
    Tensor d_f(ws.f.shape);
    auto head_backward = [&](const Tensor& d_map, ModelParam& w, ModelParam& b) {
        const auto s = conv_shape(ws.f, w.value, 1, 0);
        kernels::conv2d_backward_weights(ws.f.ptr(), d_map.ptr(), s, w.grad.ptr(),
                                         b.grad.ptr());
        Tensor d_in(ws.f.shape);
        kernels::conv2d_backward_input(d_map.ptr(), w.value.ptr(), s, d_in.ptr());
        for (std::size_t i = 0; i < d_f.size(); ++i) d_f.data[i] += d_in.data[i];
    };
    head_backward(d_box_map, head_box_w_, head_box_b_);
    head_backward(d_obj_map, head_obj_w_, head_obj_b_);
    head_backward(d_emb_map, head_emb_w_, head_emb_b_);

    Tensor d_zf;
    silu_backward(ws.zf, d_f, d_zf);
    {
        const auto s = conv_shape(ws.cat, fuse_w_.value, 1, 0);
        kernels::conv2d_backward_weights(ws.cat.ptr(), d_zf.ptr(), s, fuse_w_.grad.ptr(),
                                         fuse_b_.grad.ptr());
    }
    Tensor d_cat(ws.cat.shape);
    {
        const auto s = conv_shape(ws.cat, fuse_w_.value, 1, 0);
        kernels::conv2d_backward_input(d_zf.ptr(), fuse_w_.value.ptr(), s, d_cat.ptr());
    }

    // split the concatenation
    Tensor d_p1(ws.p1.shape), d_p2(ws.p2.shape), d_m3(ws.m3.shape);
    std::memcpy(d_p1.ptr(), d_cat.ptr(), d_p1.size() * sizeof(double));
    std::memcpy(d_p2.ptr(), d_cat.ptr() + d_p1.size(), d_p2.size() * sizeof(double));
    std::memcpy(d_m3.ptr(), d_cat.ptr() + d_p1.size() + d_p2.size(),
                d_m3.size() * sizeof(double));

    Tensor d_m1, d_m2;
    avgpool_backward(d_p1, 4, ws.m1.shape, d_m1);
    avgpool_backward(d_p2, 2, ws.m2.shape, d_m2);

    // text gates: feature grads plus projected-vocabulary grads
    auto gate_backward = [&](const Tensor& feat, const Tensor& pv, const Tensor& gate_map,
                             const std::vector<int>& argmax, const Tensor& d_out,
                             ModelParam& proj, Tensor& d_feat) {
        const int c = feat.dim(0), h = feat.dim(1), w = feat.dim(2);
        d_feat = Tensor(feat.shape);
        Tensor d_pv(pv.shape);
        kernels::text_gate_backward(feat.ptr(), c, h, w, pv.ptr(),
                                    static_cast<int>(ws.vocab_embeddings.size()),
                                    gate_map.ptr(), argmax.data(), d_out.ptr(), d_feat.ptr(),
                                    d_pv.ptr());
        // pv[j][c] = sum_d proj[c][d] * gate_text[j][d]
        const int dloc = config_.embed_dim;
        for (int cc = 0; cc < c; ++cc) {
            for (int dd = 0; dd < dloc; ++dd) {
                double acc = 0.0;
                for (std::size_t j = 0; j < ws.gate_embeddings.size(); ++j) {
                    acc += d_pv.at(static_cast<int>(j) * c + cc) *
                           ws.gate_embeddings[j][static_cast<std::size_t>(dd)];
                }
                proj.grad.at(cc * dloc + dd) += acc;
            }
        }
    };

    Tensor d_a3_gate, d_a2_gate, d_a1_gate;
    gate_backward(ws.a3, ws.proj_vocab3, ws.gate3, ws.argmax3, d_m3, proj3_, d_a3_gate);
    gate_backward(ws.a2, ws.proj_vocab2, ws.gate2, ws.argmax2, d_m2, proj2_, d_a2_gate);
    gate_backward(ws.a1, ws.proj_vocab1, ws.gate1, ws.argmax1, d_m1, proj1_, d_a1_gate);

    // backbone chain
    Tensor d_z3;
    silu_backward(ws.z3, d_a3_gate, d_z3);
    Tensor d_a2_conv(ws.a2.shape);
    {
        const auto s = conv_shape(ws.a2, conv3_w_.value, 2, 1);
        kernels::conv2d_backward_weights(ws.a2.ptr(), d_z3.ptr(), s, conv3_w_.grad.ptr(),
                                         conv3_b_.grad.ptr());
        kernels::conv2d_backward_input(d_z3.ptr(), conv3_w_.value.ptr(), s, d_a2_conv.ptr());
    }
    for (std::size_t i = 0; i < d_a2_conv.size(); ++i) d_a2_conv.data[i] += d_a2_gate.data[i];

    Tensor d_z2;
    silu_backward(ws.z2, d_a2_conv, d_z2);
    Tensor d_a1_conv(ws.a1.shape);
    {
        const auto s = conv_shape(ws.a1, conv2_w_.value, 2, 1);
        kernels::conv2d_backward_weights(ws.a1.ptr(), d_z2.ptr(), s, conv2_w_.grad.ptr(),
                                         conv2_b_.grad.ptr());
        kernels::conv2d_backward_input(d_z2.ptr(), conv2_w_.value.ptr(), s, d_a1_conv.ptr());
    }
    for (std::size_t i = 0; i < d_a1_conv.size(); ++i) d_a1_conv.data[i] += d_a1_gate.data[i];

    Tensor d_z1;
    silu_backward(ws.z1, d_a1_conv, d_z1);
    {
        const auto s = conv_shape(ws.input, conv1_w_.value, 2, 1);
        kernels::conv2d_backward_weights(ws.input.ptr(), d_z1.ptr(), s, conv1_w_.grad.ptr(),
                                         conv1_b_.grad.ptr());
    }
}

// ---------------------------------------------------------------------------

std::string DetectorModel::config_fingerprint() const {
    std::ostringstream os;
    os << "input=" << config_.input_size << ";c1=" << config_.stage1_channels
       << ";c2=" << config_.stage2_channels << ";c3=" << config_.stage3_channels
       << ";d=" << config_.embed_dim << ";bins=" << config_.dfl_bins;
    return os.str();
}

void DetectorModel::save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write checkpoint: " + path);
    }
    out.write("MRVCKPT1", 8);
    const std::string fp = config_fingerprint();
    const std::uint32_t fp_len = static_cast<std::uint32_t>(fp.size());
    out.write(reinterpret_cast<const char*>(&fp_len), 4);
    out.write(fp.data(), fp_len);

    const auto ps = params();
    const std::uint32_t count = static_cast<std::uint32_t>(ps.size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    for (const ModelParam* p : ps) {
        const std::uint32_t name_len = static_cast<std::uint32_t>(p->name.size());
        out.write(reinterpret_cast<const char*>(&name_len), 4);
        out.write(p->name.data(), name_len);
        const std::uint32_t ndims = static_cast<std::uint32_t>(p->value.shape.size());
        out.write(reinterpret_cast<const char*>(&ndims), 4);
        for (int dim : p->value.shape) {
            const std::int32_t d32 = dim;
            out.write(reinterpret_cast<const char*>(&d32), 4);
        }
        out.write(reinterpret_cast<const char*>(p->value.ptr()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
}

void DetectorModel::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint: " + path);
    }
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "MRVCKPT1", 8) != 0) {
        throw std::runtime_error("not a checkpoint file: " + path);
    }
    std::uint32_t fp_len = 0;
    in.read(reinterpret_cast<char*>(&fp_len), 4);
    std::string fp(fp_len, '\0');
    in.read(fp.data(), fp_len);
    if (fp != config_fingerprint()) {
        throw std::runtime_error("checkpoint fingerprint mismatch: file has [" + fp +
                                 "], model is [" + config_fingerprint() + "]");
    }
    std::uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 4);
    auto ps = params();
    if (count != ps.size()) {
        throw std::runtime_error("checkpoint parameter count mismatch");
    }
    for (ModelParam* p : ps) {
        std::uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), 4);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (name != p->name) {
            throw std::runtime_error("checkpoint layout mismatch at '" + name + "'");
        }
        std::uint32_t ndims = 0;
        in.read(reinterpret_cast<char*>(&ndims), 4);
        std::vector<int> shape(ndims);
        for (auto& dim : shape) {
            std::int32_t d32 = 0;
            in.read(reinterpret_cast<char*>(&d32), 4);
            dim = d32;
        }
        if (shape != p->value.shape) {
            throw std::runtime_error("checkpoint shape mismatch at '" + name + "'");
        }
        in.read(reinterpret_cast<char*>(p->value.ptr()),
                static_cast<std::streamsize>(p->value.size() * sizeof(double)));
        if (!in) {
            throw std::runtime_error("truncated checkpoint: " + path);
        }
    }
}

// ---------------------------------------------------------------------------

std::vector<int> assign_cells(const std::vector<Box>& target_boxes, int grid, double stride) {
    const int k_regions = grid * grid;
    std::vector<int> assign(static_cast<std::size_t>(k_regions), -1);
    std::vector<double> best_cost(static_cast<std::size_t>(k_regions), 0.0);

    for (int k = 0; k < k_regions; ++k) {
        const double cx = (k % grid + 0.5) * stride;
        const double cy = (k / grid + 0.5) * stride;
        for (std::size_t i = 0; i < target_boxes.size(); ++i) {
            const Box& b = target_boxes[i];
            if (cx < b.x_min || cx > b.x_max || cy < b.y_min || cy > b.y_max) continue;
            const double bcx = 0.5 * (b.x_min + b.x_max);
            const double bcy = 0.5 * (b.y_min + b.y_max);
            const double cost = (cx - bcx) * (cx - bcx) + (cy - bcy) * (cy - bcy);
            if (assign[static_cast<std::size_t>(k)] < 0 ||
                cost < best_cost[static_cast<std::size_t>(k)]) {
                assign[static_cast<std::size_t>(k)] = static_cast<int>(i);
                best_cost[static_cast<std::size_t>(k)] = cost;
            }
        }
    }

    // Every target keeps at least one cell: unclaimed boxes take their nearest.
    for (std::size_t i = 0; i < target_boxes.size(); ++i) {
        bool claimed = false;
        for (int v : assign) {
            if (v == static_cast<int>(i)) {
                claimed = true;
                break;
            }
        }
        if (claimed) continue;
        const Box& b = target_boxes[i];
        const double bcx = 0.5 * (b.x_min + b.x_max);
        const double bcy = 0.5 * (b.y_min + b.y_max);
        int best_k = 0;
        double best = 1e300;
        for (int k = 0; k < k_regions; ++k) {
            const double cx = (k % grid + 0.5) * stride;
            const double cy = (k / grid + 0.5) * stride;
            const double cost = (cx - bcx) * (cx - bcx) + (cy - bcy) * (cy - bcy);
            if (cost < best) {
                best = cost;
                best_k = k;
            }
        }
        assign[static_cast<std::size_t>(best_k)] = static_cast<int>(i);
    }
    return assign;
}

std::array<double, 4> box_to_offsets(const Box& box, double cx, double cy, double stride) {
    return {(cx - box.x_min) / stride, (cy - box.y_min) / stride,
            (box.x_max - cx) / stride, (box.y_max - cy) / stride};
}

}  // namespace medrov
