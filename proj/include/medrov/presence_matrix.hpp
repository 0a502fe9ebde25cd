#pragma once

#include <map>
#include <string>
#include <vector>

namespace medrov {

/// Dataset-class annotation availability: 1 annotated, 0 possibly present but
/// unannotated, -1 cannot exist. Every (dataset, class) pair has an entry;
/// unknown lookups are errors, never a silent 0.
class PresenceMatrix {
public:
    PresenceMatrix() = default;
    PresenceMatrix(std::vector<std::string> datasets, std::vector<std::string> classes);

    int lookup(const std::string& dataset_id, const std::string& class_name) const;
    void set(const std::string& dataset_id, const std::string& class_name, int value);

    const std::vector<std::string>& datasets() const { return datasets_; }
    const std::vector<std::string>& classes() const { return classes_; }

    bool has_dataset(const std::string& dataset_id) const;
    bool has_class(const std::string& class_name) const;

    bool operator==(const PresenceMatrix& other) const = default;

    /// CSV-like table: header `dataset,<class>,...`, one row per dataset,
    /// values restricted to {1,0,-1}.
    static PresenceMatrix load(const std::string& path);
    void save(const std::string& path) const;

    static PresenceMatrix parse(const std::string& text, const std::string& origin = "<memory>");
    std::string serialize() const;

private:
    std::size_t offset(const std::string& dataset_id, const std::string& class_name) const;

    std::vector<std::string> datasets_;
    std::vector<std::string> classes_;
    std::map<std::string, std::size_t> dataset_index_;
    std::map<std::string, std::size_t> class_index_;
    std::vector<int> values_;  // datasets x classes, row-major
};

struct PresenceViolation {
    std::string dataset_id;
    std::string class_name;
    bool hard = false;  // annotation observed where the matrix says impossible
    std::string detail;
};

struct PresenceValidationReport {
    std::vector<PresenceViolation> violations;
    bool ok() const { return violations.empty(); }
};

/// One curated sample's identity for validation purposes.
struct AnnotatedSampleInfo {
    std::string dataset_id;
    std::vector<std::string> class_names;
};

/// Checks every class observed annotated in dataset d has M(d,c)=1 and that no
/// annotation exists where M(d,c)=-1; unregistered datasets/classes are also
/// reported. The caller decides whether violations abort.
PresenceValidationReport validate_presence(const PresenceMatrix& matrix,
                                           const std::vector<AnnotatedSampleInfo>& samples);

}  // namespace medrov
