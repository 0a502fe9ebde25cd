#pragma once

#include <string>
#include <vector>

#include "medrov/encoders.hpp"
#include "medrov/geometry.hpp"
#include "medrov/rng.hpp"

namespace medrov {

/// Label of entries whose text embedding was replaced by image features.
inline const std::string kSubstitutedLabel = "image-feature-substituted";

struct VocabularyEntry {
    std::string label;
    EmbeddingVector embedding;       // what the detector scores against
    EmbeddingVector text_embedding;  // original prompt embedding, survives substitution
    bool is_positive = false;
    bool substituted = false;
};

/// Per-image ordered label list: all positives first, then sampled negatives.
struct Vocabulary {
    std::vector<VocabularyEntry> entries;

    int size() const { return static_cast<int>(entries.size()); }

    int index_of(const std::string& label) const {
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].label == label) return static_cast<int>(i);
        }
        return -1;
    }

    int count_positives() const {
        int n = 0;
        for (const auto& e : entries) n += e.is_positive ? 1 : 0;
        return n;
    }
};

/// Positives plus (target_size - |positives|) negatives sampled uniformly
/// without replacement from class_pool minus positives. A pool too small to
/// fill target_size yields the maximal achievable vocabulary and sets
/// *underfilled (when given). Deterministic under a fixed rng state.
Vocabulary build_vocabulary(const std::vector<std::string>& positive_labels,
                            const std::vector<std::string>& class_pool, int target_size,
                            Rng& rng, bool* underfilled = nullptr);

/// Fills every entry's embedding with encode_text(template applied to label).
/// The default template is the bare label lower-cased.
void encode_labels(const TextEncoder& encoder, Vocabulary& vocab,
                   const std::string& prompt_template = "{}");

std::string apply_prompt_template(const std::string& prompt_template, const std::string& label);

/// Replaces the embedding of the negative entry at negative_index with
/// image_embedding; marks it substituted and relabels it with the sentinel.
/// Positives and already-substituted entries are rejected.
void substitute_entry(Vocabulary& vocab, int negative_index,
                      const EmbeddingVector& image_embedding);

/// Lowest-index negative entry that has not been substituted, or -1.
int first_free_negative(const Vocabulary& vocab);

}  // namespace medrov
