#include "medrov/vocabulary.hpp"

#include <algorithm>
#include <iostream>
#include <set>
#include <stdexcept>

namespace medrov {

Vocabulary build_vocabulary(const std::vector<std::string>& positive_labels,
                            const std::vector<std::string>& class_pool, int target_size,
                            Rng& rng, bool* underfilled) {
    std::set<std::string> positive_set(positive_labels.begin(), positive_labels.end());
    if (target_size < static_cast<int>(positive_set.size())) {
        throw std::invalid_argument("build_vocabulary: target size smaller than positive count");
    }
    for (const std::string& p : positive_set) {
        if (std::find(class_pool.begin(), class_pool.end(), p) == class_pool.end()) {
            throw std::invalid_argument("build_vocabulary: positive '" + p +
                                        "' missing from class pool");
        }
    }

    Vocabulary vocab;
    for (const std::string& label : positive_labels) {
        if (vocab.index_of(label) >= 0) continue;  // dedupe, keep first occurrence order
        vocab.entries.push_back({label, {}, {}, true, false});
    }

    std::vector<std::string> negatives_pool;
    for (const std::string& c : class_pool) {
        if (!positive_set.count(c) &&
            std::find(negatives_pool.begin(), negatives_pool.end(), c) == negatives_pool.end()) {
            negatives_pool.push_back(c);
        }
    }

    const int wanted = target_size - vocab.size();
    const auto picks = rng.sample_without_replacement(static_cast<int>(negatives_pool.size()),
                                                      wanted);
    for (int idx : picks) {
        vocab.entries.push_back({negatives_pool[static_cast<std::size_t>(idx)], {}, {}, false, false});
    }

    const bool short_of_target = vocab.size() < target_size;
    if (underfilled) {
        *underfilled = short_of_target;
    } else if (short_of_target) {
        std::cerr << "warning: class pool too small, vocabulary has " << vocab.size()
                  << " of " << target_size << " entries\n";
    }
    return vocab;
}

std::string apply_prompt_template(const std::string& prompt_template,
                                  const std::string& label) {
    std::string lowered = label;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const auto pos = prompt_template.find("{}");
    if (pos == std::string::npos) {
        return prompt_template + lowered;
    }
    std::string out = prompt_template;
    out.replace(pos, 2, lowered);
    return out;
}

void encode_labels(const TextEncoder& encoder, Vocabulary& vocab,
                   const std::string& prompt_template) {
    for (auto& entry : vocab.entries) {
        if (entry.substituted) continue;
        entry.embedding = encoder.encode_text(apply_prompt_template(prompt_template, entry.label));
        if (static_cast<int>(entry.embedding.size()) != encoder.dimension()) {
            throw std::runtime_error("encode_labels: encoder returned wrong dimension");
        }
        entry.text_embedding = entry.embedding;
    }
}

void substitute_entry(Vocabulary& vocab, int negative_index,
                      const EmbeddingVector& image_embedding) {
    if (negative_index < 0 || negative_index >= vocab.size()) {
        throw std::out_of_range("substitute_entry: index out of range");
    }
    VocabularyEntry& entry = vocab.entries[static_cast<std::size_t>(negative_index)];
    if (entry.is_positive) {
        throw std::invalid_argument("substitute_entry: refusing to substitute a positive entry");
    }
    if (entry.substituted) {
        throw std::invalid_argument("substitute_entry: entry already substituted");
    }
    if (!entry.embedding.empty() && entry.embedding.size() != image_embedding.size()) {
        throw std::invalid_argument("substitute_entry: embedding dimension mismatch");
    }
    entry.embedding = image_embedding;
    entry.substituted = true;
    entry.label = kSubstitutedLabel;
}

int first_free_negative(const Vocabulary& vocab) {
    for (int i = 0; i < vocab.size(); ++i) {
        const auto& e = vocab.entries[static_cast<std::size_t>(i)];
        if (!e.is_positive && !e.substituted) return i;
    }
    return -1;
}

}  // namespace medrov
