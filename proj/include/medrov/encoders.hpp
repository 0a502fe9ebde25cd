#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "medrov/geometry.hpp"
#include "medrov/image.hpp"

namespace medrov {

/// Text side of the shared embedding space. Implementations are deterministic:
/// the same prompt always yields the same vector.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual int dimension() const = 0;
    virtual EmbeddingVector encode_text(const std::string& prompt) const = 0;
};

/// Image side; dimension() must match the paired text encoder.
class ImageEncoder {
public:
    virtual ~ImageEncoder() = default;
    virtual int dimension() const = 0;
    virtual EmbeddingVector encode_image(const ImageU8& crop) const = 0;
};

/// Unit vector derived from raw bytes: mt19937_64 seeded with
/// derive_seed(seed, fnv1a64(bytes)), D standard-normal draws, L2-normalized.
EmbeddingVector hash_unit_vector(std::uint64_t seed, const std::string& bytes, int dimension);

std::uint64_t fnv1a64(const std::string& bytes);

/// Deterministic stand-in text encoder: embedding = hash_unit_vector of the
/// prompt bytes. Distinct prompts map to distinct vectors.
class MockTextEncoder : public TextEncoder {
public:
    MockTextEncoder(std::uint64_t seed, int dimension);
    int dimension() const override { return dimension_; }
    EmbeddingVector encode_text(const std::string& prompt) const override;

private:
    std::uint64_t seed_;
    int dimension_;
};

/// Deterministic stand-in image encoder. The crop is sampled onto a fixed
/// grid_size x grid_size grid by nearest pixel (src = floor((g+0.5)*extent/grid)),
/// values scaled to [0,1], flattened channel-last, multiplied by a fixed
/// seeded random projection (row-major standard-normal draws from
/// mt19937_64(seed)), then L2-normalized. The formula is the test oracle.
class MockImageEncoder : public ImageEncoder {
public:
    MockImageEncoder(std::uint64_t seed, int dimension, int grid_size = 8);
    int dimension() const override { return dimension_; }
    int grid_size() const { return grid_size_; }
    EmbeddingVector encode_image(const ImageU8& crop) const override;

private:
    int dimension_;
    int grid_size_;
    std::vector<double> projection_;  // dimension x (grid*grid*3)
    std::uint64_t seed_;
};

/// A class the aligned mock can recognize: its label plus the dominant RGB
/// color the synthetic corpus draws it with.
struct AlignedClass {
    std::string name;
    std::array<std::uint8_t, 3> color;
};

/// Contrived encoder pair for end-to-end synthetic experiments: class-name
/// text and crops of that class land near each other (cosine > 0.9), every
/// other class pair near orthogonal (|cosine| < 0.2). Class directions are an
/// orthonormal basis; crops are classified by mean foreground color.
class AlignedMockEncoder : public TextEncoder, public ImageEncoder {
public:
    AlignedMockEncoder(std::uint64_t seed, int dimension, std::vector<AlignedClass> classes);

    int dimension() const override { return dimension_; }
    EmbeddingVector encode_text(const std::string& prompt) const override;
    EmbeddingVector encode_image(const ImageU8& crop) const override;

    const EmbeddingVector& class_direction(int class_idx) const {
        return directions_.at(static_cast<std::size_t>(class_idx));
    }

private:
    int classify_crop(const ImageU8& crop) const;  // -1 when no clear foreground

    std::uint64_t seed_;
    int dimension_;
    std::vector<AlignedClass> classes_;
    std::vector<EmbeddingVector> directions_;
};

/// Adapter for exported foundation-encoder weights. The bundle is a JSON file:
///   { "dimension": D, "grid_size": G,
///     "text_table": { "<prompt>": [D doubles], ... },
///     "image_projection": [D*(G*G*3) doubles, row-major] }
/// encode_text looks prompts up in the table (unknown prompt -> error);
/// encode_image applies the grid-flatten-project-normalize pipeline of the
/// mock with the loaded matrix.
class PretrainedEncoderBundle : public TextEncoder, public ImageEncoder {
public:
    explicit PretrainedEncoderBundle(const std::string& weights_path);
    int dimension() const override { return dimension_; }
    EmbeddingVector encode_text(const std::string& prompt) const override;
    EmbeddingVector encode_image(const ImageU8& crop) const override;

private:
    int dimension_ = 0;
    int grid_size_ = 8;
    std::vector<double> projection_;
    std::vector<std::pair<std::string, EmbeddingVector>> text_table_;
};

struct EncoderConfig {
    std::string backend = "mock";  // mock | aligned-mock | pretrained
    std::uint64_t seed = 7;
    int dimension = 64;
    std::string weights_path;                   // pretrained only
    std::vector<AlignedClass> aligned_classes;  // aligned-mock only
};

struct EncoderPair {
    std::shared_ptr<TextEncoder> text;
    std::shared_ptr<ImageEncoder> image;
};

EncoderPair make_encoders(const EncoderConfig& config);

/// Grid sampling shared by the projected image encoders: values in [0,1],
/// layout (gy, gx, channel).
std::vector<double> sample_grid(const ImageU8& crop, int grid_size);

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

}  // namespace medrov
