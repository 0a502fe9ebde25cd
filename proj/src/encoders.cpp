#include "medrov/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "medrov/rng.hpp"

namespace medrov {

namespace {

void l2_normalize(EmbeddingVector& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        throw std::runtime_error("encoder produced a zero vector, cannot normalize");
    }
    for (double& x : v) x /= norm;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

EmbeddingVector hash_unit_vector(std::uint64_t seed, const std::string& bytes, int dimension) {
    Rng rng(derive_seed(seed, fnv1a64(bytes)));
    EmbeddingVector v(static_cast<std::size_t>(dimension));
    for (double& x : v) x = rng.normal();
    l2_normalize(v);
    return v;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine: dimension mismatch");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw std::invalid_argument("cosine: zero vector");
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> sample_grid(const ImageU8& crop, int grid_size) {
    if (crop.height < 1 || crop.width < 1 || crop.empty()) {
        throw std::invalid_argument("sample_grid: degenerate crop");
    }
    std::vector<double> flat(static_cast<std::size_t>(grid_size) * grid_size * 3);
    std::size_t k = 0;
    for (int gy = 0; gy < grid_size; ++gy) {
        const int sy = std::min(crop.height - 1,
                                static_cast<int>((gy + 0.5) * crop.height / grid_size));
        for (int gx = 0; gx < grid_size; ++gx) {
            const int sx = std::min(crop.width - 1,
                                    static_cast<int>((gx + 0.5) * crop.width / grid_size));
            for (int c = 0; c < 3; ++c) {
                flat[k++] = crop.at(sy, sx, c) / 255.0;
            }
        }
    }
    return flat;
}

// ---------------------------------------------------------------------------
// MockTextEncoder

MockTextEncoder::MockTextEncoder(std::uint64_t seed, int dimension)
    : seed_(seed), dimension_(dimension) {
    if (dimension < 1) throw std::invalid_argument("MockTextEncoder: dimension < 1");
}

EmbeddingVector MockTextEncoder::encode_text(const std::string& prompt) const {
    if (prompt.empty()) {
        throw std::invalid_argument("encode_text: empty prompt");
    }
    return hash_unit_vector(seed_, prompt, dimension_);
}

// ---------------------------------------------------------------------------
// MockImageEncoder

MockImageEncoder::MockImageEncoder(std::uint64_t seed, int dimension, int grid_size)
    : dimension_(dimension), grid_size_(grid_size), seed_(seed) {
    if (dimension < 1 || grid_size < 1) {
        throw std::invalid_argument("MockImageEncoder: bad dimension or grid");
    }
    Rng rng(seed);
    projection_.resize(static_cast<std::size_t>(dimension) * grid_size * grid_size * 3);
    for (double& x : projection_) x = rng.normal();
}

EmbeddingVector MockImageEncoder::encode_image(const ImageU8& crop) const {
    const std::vector<double> flat = sample_grid(crop, grid_size_);
    EmbeddingVector out(static_cast<std::size_t>(dimension_), 0.0);
    const std::size_t cols = flat.size();
    for (int d = 0; d < dimension_; ++d) {
        double acc = 0.0;
        const double* row = projection_.data() + static_cast<std::size_t>(d) * cols;
        for (std::size_t i = 0; i < cols; ++i) acc += row[i] * flat[i];
        out[static_cast<std::size_t>(d)] = acc;
    }
    l2_normalize(out);
    return out;
}

// ---------------------------------------------------------------------------
// AlignedMockEncoder

AlignedMockEncoder::AlignedMockEncoder(std::uint64_t seed, int dimension,
                                       std::vector<AlignedClass> classes)
    : seed_(seed), dimension_(dimension), classes_(std::move(classes)) {
    if (static_cast<int>(classes_.size()) > dimension_) {
        throw std::invalid_argument(
            "AlignedMockEncoder: more classes than embedding dimensions");
    }
    // Orthonormal class directions via Gram-Schmidt on seeded Gaussian vectors.
    Rng rng(seed_);
    for (std::size_t c = 0; c < classes_.size(); ++c) {
        EmbeddingVector v(static_cast<std::size_t>(dimension_));
        for (double& x : v) x = rng.normal();
        for (const EmbeddingVector& u : directions_) {
            double dot = 0.0;
            for (int i = 0; i < dimension_; ++i) dot += v[i] * u[i];
            for (int i = 0; i < dimension_; ++i) v[i] -= dot * u[i];
        }
        l2_normalize(v);
        directions_.push_back(std::move(v));
    }
}

EmbeddingVector AlignedMockEncoder::encode_text(const std::string& prompt) const {
    if (prompt.empty()) {
        throw std::invalid_argument("encode_text: empty prompt");
    }
    for (std::size_t c = 0; c < classes_.size(); ++c) {
        if (classes_[c].name == prompt) {
            return directions_[c];
        }
    }
    return hash_unit_vector(seed_ ^ 0x5eedULL, prompt, dimension_);
}

int AlignedMockEncoder::classify_crop(const ImageU8& crop) const {
    constexpr int kForegroundMin = 40;
    double r = 0.0, g = 0.0, b = 0.0;
    std::size_t fg = 0;
    const std::size_t pixels = static_cast<std::size_t>(crop.height) * crop.width;
    for (std::size_t p = 0; p < pixels; ++p) {
        const std::uint8_t pr = crop.data[p * 3];
        const std::uint8_t pg = crop.data[p * 3 + 1];
        const std::uint8_t pb = crop.data[p * 3 + 2];
        if (std::max({pr, pg, pb}) >= kForegroundMin) {
            r += pr;
            g += pg;
            b += pb;
            ++fg;
        }
    }
    if (pixels == 0 || static_cast<double>(fg) / pixels < 0.02) {
        return -1;
    }
    r /= fg;
    g /= fg;
    b /= fg;
    int best = -1;
    double best_d = 0.0;
    for (std::size_t c = 0; c < classes_.size(); ++c) {
        const auto& col = classes_[c].color;
        const double d = (r - col[0]) * (r - col[0]) + (g - col[1]) * (g - col[1]) +
                         (b - col[2]) * (b - col[2]);
        if (best < 0 || d < best_d) {
            best = static_cast<int>(c);
            best_d = d;
        }
    }
    return best;
}

EmbeddingVector AlignedMockEncoder::encode_image(const ImageU8& crop) const {
    if (crop.height < 1 || crop.width < 1 || crop.empty()) {
        throw std::invalid_argument("encode_image: degenerate crop");
    }
    const std::string bytes(reinterpret_cast<const char*>(crop.data.data()),
                            std::min<std::size_t>(crop.data.size(), 4096));
    const int cls = classify_crop(crop);
    if (cls < 0) {
        return hash_unit_vector(seed_ ^ 0xbac6ULL, bytes, dimension_);
    }
    // Class direction plus a small crop-specific perturbation; cosine with the
    // class text stays above 0.99.
    EmbeddingVector v = directions_[static_cast<std::size_t>(cls)];
    const EmbeddingVector h = hash_unit_vector(seed_ ^ 0xcafeULL, bytes, dimension_);
    for (int i = 0; i < dimension_; ++i) v[i] += 0.05 * h[i];
    l2_normalize(v);
    return v;
}

// ---------------------------------------------------------------------------
// PretrainedEncoderBundle

PretrainedEncoderBundle::PretrainedEncoderBundle(const std::string& weights_path) {
    std::ifstream in(weights_path);
    if (!in) {
        throw std::runtime_error("cannot open encoder weights bundle: " + weights_path);
    }
    nlohmann::json j;
    in >> j;
    dimension_ = j.at("dimension").get<int>();
    grid_size_ = j.value("grid_size", 8);
    projection_ = j.at("image_projection").get<std::vector<double>>();
    const std::size_t expect =
        static_cast<std::size_t>(dimension_) * grid_size_ * grid_size_ * 3;
    if (projection_.size() != expect) {
        throw std::runtime_error("encoder bundle: image_projection has wrong size");
    }
    for (const auto& [key, value] : j.at("text_table").items()) {
        EmbeddingVector v = value.get<EmbeddingVector>();
        if (static_cast<int>(v.size()) != dimension_) {
            throw std::runtime_error("encoder bundle: text embedding dimension mismatch for '" +
                                     key + "'");
        }
        text_table_.emplace_back(key, std::move(v));
    }
}

EmbeddingVector PretrainedEncoderBundle::encode_text(const std::string& prompt) const {
    if (prompt.empty()) {
        throw std::invalid_argument("encode_text: empty prompt");
    }
    for (const auto& [key, v] : text_table_) {
        if (key == prompt) return v;
    }
    throw std::runtime_error("encoder bundle: prompt not in text table: '" + prompt + "'");
}

EmbeddingVector PretrainedEncoderBundle::encode_image(const ImageU8& crop) const {
    const std::vector<double> flat = sample_grid(crop, grid_size_);
    EmbeddingVector out(static_cast<std::size_t>(dimension_), 0.0);
    for (int d = 0; d < dimension_; ++d) {
        double acc = 0.0;
        const double* row = projection_.data() + static_cast<std::size_t>(d) * flat.size();
        for (std::size_t i = 0; i < flat.size(); ++i) acc += row[i] * flat[i];
        out[static_cast<std::size_t>(d)] = acc;
    }
    l2_normalize(out);
    return out;
}

// ---------------------------------------------------------------------------

EncoderPair make_encoders(const EncoderConfig& config) {
    if (config.backend == "mock") {
        return {std::make_shared<MockTextEncoder>(config.seed, config.dimension),
                std::make_shared<MockImageEncoder>(config.seed + 1, config.dimension)};
    }
    if (config.backend == "aligned-mock") {
        auto enc = std::make_shared<AlignedMockEncoder>(config.seed, config.dimension,
                                                        config.aligned_classes);
        return {enc, enc};
    }
    if (config.backend == "pretrained") {
        auto enc = std::make_shared<PretrainedEncoderBundle>(config.weights_path);
        return {enc, enc};
    }
    throw std::invalid_argument("unknown encoder backend: '" + config.backend + "'");
}

}  // namespace medrov
