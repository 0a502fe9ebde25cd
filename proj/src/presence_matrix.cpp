#include "medrov/presence_matrix.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace medrov {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

}  // namespace

PresenceMatrix::PresenceMatrix(std::vector<std::string> datasets,
                               std::vector<std::string> classes)
    : datasets_(std::move(datasets)), classes_(std::move(classes)) {
    for (std::size_t i = 0; i < datasets_.size(); ++i) {
        if (!dataset_index_.emplace(datasets_[i], i).second) {
            throw std::invalid_argument("PresenceMatrix: duplicate dataset '" + datasets_[i] + "'");
        }
    }
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        if (!class_index_.emplace(classes_[i], i).second) {
            throw std::invalid_argument("PresenceMatrix: duplicate class '" + classes_[i] + "'");
        }
    }
    values_.assign(datasets_.size() * classes_.size(), 0);
}

std::size_t PresenceMatrix::offset(const std::string& dataset_id,
                                   const std::string& class_name) const {
    auto d = dataset_index_.find(dataset_id);
    if (d == dataset_index_.end()) {
        throw std::out_of_range("presence matrix: unknown dataset '" + dataset_id + "'");
    }
    auto c = class_index_.find(class_name);
    if (c == class_index_.end()) {
        throw std::out_of_range("presence matrix: unknown class '" + class_name + "'");
    }
    return d->second * classes_.size() + c->second;
}

int PresenceMatrix::lookup(const std::string& dataset_id, const std::string& class_name) const {
    return values_[offset(dataset_id, class_name)];
}

void PresenceMatrix::set(const std::string& dataset_id, const std::string& class_name,
                         int value) {
    if (value != 1 && value != 0 && value != -1) {
        throw std::invalid_argument("presence matrix: value must be 1, 0 or -1");
    }
    values_[offset(dataset_id, class_name)] = value;
}

bool PresenceMatrix::has_dataset(const std::string& dataset_id) const {
    return dataset_index_.count(dataset_id) > 0;
}

bool PresenceMatrix::has_class(const std::string& class_name) const {
    return class_index_.count(class_name) > 0;
}

PresenceMatrix PresenceMatrix::parse(const std::string& text, const std::string& origin) {
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    if (!std::getline(ss, line)) {
        throw std::runtime_error(origin + ": empty presence matrix file");
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line);
    if (header.size() < 2) {
        throw std::runtime_error(origin + ":1: header must list at least one class");
    }
    std::vector<std::string> classes(header.begin() + 1, header.end());
    for (const auto& c : classes) {
        if (c.empty()) {
            throw std::runtime_error(origin + ":1: empty class name in header");
        }
    }

    std::vector<std::string> datasets;
    std::vector<std::vector<int>> rows;
    while (std::getline(ss, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != classes.size() + 1) {
            throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                     ": expected " + std::to_string(classes.size() + 1) +
                                     " fields, got " + std::to_string(fields.size()));
        }
        datasets.push_back(fields[0]);
        std::vector<int> row;
        for (std::size_t i = 1; i < fields.size(); ++i) {
            const std::string& f = fields[i];
            int v = 0;
            if (f == "1") {
                v = 1;
            } else if (f == "0") {
                v = 0;
            } else if (f == "-1") {
                v = -1;
            } else {
                throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": column " +
                                         std::to_string(i + 1) + " ('" + classes[i - 1] +
                                         "'): value '" + f + "' not in {1,0,-1}");
            }
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }

    PresenceMatrix m(datasets, classes);
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        for (std::size_t c = 0; c < classes.size(); ++c) {
            m.values_[d * classes.size() + c] = rows[d][c];
        }
    }
    return m;
}

std::string PresenceMatrix::serialize() const {
    std::stringstream out;
    out << "dataset";
    for (const auto& c : classes_) out << ',' << c;
    out << '\n';
    for (std::size_t d = 0; d < datasets_.size(); ++d) {
        out << datasets_[d];
        for (std::size_t c = 0; c < classes_.size(); ++c) {
            out << ',' << values_[d * classes_.size() + c];
        }
        out << '\n';
    }
    return out.str();
}

PresenceMatrix PresenceMatrix::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open presence matrix: " + path);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
}

void PresenceMatrix::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write presence matrix: " + path);
    }
    out << serialize();
}

PresenceValidationReport validate_presence(const PresenceMatrix& matrix,
                                           const std::vector<AnnotatedSampleInfo>& samples) {
    PresenceValidationReport report;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& sample : samples) {
        for (const auto& cls : sample.class_names) {
            if (!seen.emplace(sample.dataset_id, cls).second) continue;
            if (!matrix.has_dataset(sample.dataset_id)) {
                report.violations.push_back({sample.dataset_id, cls, true,
                                             "dataset not registered in the matrix"});
                continue;
            }
            if (!matrix.has_class(cls)) {
                report.violations.push_back({sample.dataset_id, cls, true,
                                             "class not registered in the matrix"});
                continue;
            }
            const int v = matrix.lookup(sample.dataset_id, cls);
            if (v == -1) {
                report.violations.push_back({sample.dataset_id, cls, true,
                                             "annotation present where matrix says impossible"});
            } else if (v == 0) {
                report.violations.push_back({sample.dataset_id, cls, false,
                                             "annotated class marked 0 (unannotated)"});
            }
        }
    }
    return report;
}

}  // namespace medrov
