#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "medrov/geometry.hpp"
#include "medrov/image.hpp"
#include "medrov/kernels.hpp"
#include "medrov/losses.hpp"
#include "medrov/tensor.hpp"
#include "medrov/vocabulary.hpp"

namespace medrov {

struct DetectorConfig {
    int input_size = 160;     // square input, must be divisible by 8
    int stage1_channels = 8;
    int stage2_channels = 16;
    int stage3_channels = 32;
    int embed_dim = 64;       // must match the text/image encoder dimension
    int dfl_bins = 16;
    double alpha_init = 1.0;  // similarity scale
    double beta_init = 0.0;   // similarity shift
    std::uint64_t init_seed = 1;

    int grid() const { return input_size / 8; }
    int regions() const { return grid() * grid(); }
};

struct ModelParam {
    std::string name;
    Tensor value;
    Tensor grad;
};

/// Everything one forward pass produces, plus the activations the backward
/// pass needs. Owning it outside the model keeps forward const and lets
/// evaluation run one workspace per thread.
struct DetectorWorkspace {
    // activations
    Tensor input;                      // 3 x S x S
    Tensor z1, a1, z2, a2, z3, a3;     // backbone pre/post activations
    Tensor proj_vocab1, proj_vocab2, proj_vocab3;  // V x c_i projected embeddings
    Tensor m1, m2, m3;                 // gated features
    Tensor gate1, gate2, gate3;        // sigmoid gates (H x W planes)
    std::vector<int> argmax1, argmax2, argmax3;
    Tensor p1, p2;                     // pooled to the head grid
    Tensor cat, zf, f;                 // fused head input
    Tensor box_logits_map, obj_map, emb_map;  // raw head maps

    // per-region views
    Tensor similarities;               // K x V
    Tensor obj_logits;                 // K
    Tensor box_logits;                 // K x 4 x bins
    Tensor embeddings;                 // K x D
    std::vector<Box> pred_boxes;       // unclamped, for the loss path
    std::vector<Detection> detections; // clamped boxes, argmax class, confidence

    // vocabulary embeddings used by this pass: scoring side (substitutions
    // visible) and gating side (always the prompt text, so substituting one
    // entry moves only that similarity column)
    std::vector<EmbeddingVector> vocab_embeddings;
    std::vector<EmbeddingVector> gate_embeddings;
};

/// Gradient seeds the loss layer hands back to the network.
struct HeadGradients {
    Tensor d_similarities;     // K x V (zeros when unused)
    Tensor d_obj_logits;       // K
    Tensor d_box_logits;       // K x 4 x bins (direct DFL part)
    std::vector<std::array<double, 4>> d_pred_boxes;  // routed through the decode
};

/// Toy-scale text-conditioned detector: three strided conv stages, per-scale
/// max-sigmoid text gating, pooled multi-scale fusion, anchor-free head with a
/// DFL box branch, an objectness branch and an object-embedding branch scored
/// against the vocabulary as alpha*cosine+beta.
class DetectorModel {
public:
    explicit DetectorModel(const DetectorConfig& config);

    const DetectorConfig& config() const { return config_; }

    /// Deterministic full forward pass. Throws when the vocabulary embedding
    /// dimension does not match embed_dim.
    void forward(const ImageU8& image, const Vocabulary& vocab,
                 DetectorWorkspace& ws) const;

    /// Backpropagates the head gradients through the workspace's cached
    /// activations, accumulating into every parameter's grad buffer.
    void backward(const DetectorWorkspace& ws, const HeadGradients& grads);

    void zero_grad();

    std::vector<ModelParam*> params();
    const std::vector<ModelParam*> params() const;

    SimilarityParams similarity_params() const;

    /// Binary checkpoint with a config fingerprint; loading into a model built
    /// from a different architecture config fails loudly.
    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);
    std::string config_fingerprint() const;

private:
    void init_params();

    DetectorConfig config_;
    ModelParam conv1_w_, conv1_b_, conv2_w_, conv2_b_, conv3_w_, conv3_b_;
    ModelParam proj1_, proj2_, proj3_;      // c_i x D text projections
    ModelParam fuse_w_, fuse_b_;
    ModelParam head_box_w_, head_box_b_;
    ModelParam head_obj_w_, head_obj_b_;
    ModelParam head_emb_w_, head_emb_b_;
    ModelParam alpha_, beta_;
};

/// Region-to-target assignment: each cell whose center falls inside a target
/// box goes to the box with the nearest center; a box containing no cell
/// center claims its nearest cell. Returns per-cell target box index or -1.
std::vector<int> assign_cells(const std::vector<Box>& target_boxes, int grid, double stride);

/// Per-side DFL offsets (in bin units = stride pixels) of a box seen from a
/// cell center.
std::array<double, 4> box_to_offsets(const Box& box, double cx, double cy, double stride);

}  // namespace medrov
