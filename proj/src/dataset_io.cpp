#include "medrov/dataset_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace medrov {

// ---------------------------------------------------------------------------
// Descriptors

DatasetDescriptor load_descriptor(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open dataset descriptor: " + path);
    }
    json j;
    in >> j;

    DatasetDescriptor d;
    d.dataset_id = j.at("dataset_id").get<std::string>();
    const std::string default_modality = j.value("modality", "CT");
    const fs::path base = fs::path(path).parent_path();

    for (const auto& v : j.at("volumes")) {
        VolumeEntry e;
        e.volume_id = v.at("volume_id").get<std::string>();
        e.image_path = (base / v.at("image").get<std::string>()).string();
        e.label_path = (base / v.at("labels").get<std::string>()).string();
        e.modality = modality_from_string(v.value("modality", default_modality));
        for (const auto& [key, value] : v.at("label_names").items()) {
            e.label_names[std::stoi(key)] = value.get<std::string>();
        }
        d.volumes.push_back(std::move(e));
    }
    return d;
}

ArrayLoaderRegistry ArrayLoaderRegistry::with_builtins() {
    ArrayLoaderRegistry reg;
    reg.image_loaders[".npy"] = read_npy_double;
    reg.label_loaders[".npy"] = read_npy_int;
    return reg;
}

namespace {

std::string extension_of(const std::string& path) {
    return fs::path(path).extension().string();
}

}  // namespace

ArrayD ArrayLoaderRegistry::load_image(const std::string& path) const {
    const std::string ext = extension_of(path);
    auto it = image_loaders.find(ext);
    if (it == image_loaders.end()) {
        throw std::runtime_error("no image array loader registered for '" + ext + "'");
    }
    return it->second(path);
}

ArrayI ArrayLoaderRegistry::load_labels(const std::string& path) const {
    const std::string ext = extension_of(path);
    auto it = label_loaders.find(ext);
    if (it == label_loaders.end()) {
        throw std::runtime_error("no label array loader registered for '" + ext + "'");
    }
    return it->second(path);
}

VolumeRecord load_volume(const DatasetDescriptor& dataset, const VolumeEntry& entry,
                         const ArrayLoaderRegistry& loaders) {
    VolumeRecord rec;
    rec.volume_id = entry.volume_id;
    rec.dataset_id = dataset.dataset_id;
    rec.modality = entry.modality;
    rec.image_data = loaders.load_image(entry.image_path);
    rec.label_data = loaders.load_labels(entry.label_path);
    rec.label_names = entry.label_names;
    return rec;
}

// ---------------------------------------------------------------------------
// npy

namespace {

struct NpyHeader {
    std::string dtype;
    bool fortran = false;
    std::vector<int> dims;
    std::size_t payload_offset = 0;
};

NpyHeader parse_npy_header(std::ifstream& in, const std::string& path) {
    char magic[6];
    in.read(magic, 6);
    if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
        throw std::runtime_error(path + ": not an npy file");
    }
    unsigned char ver[2];
    in.read(reinterpret_cast<char*>(ver), 2);
    std::size_t header_len = 0;
    if (ver[0] == 1) {
        unsigned char lenbuf[2];
        in.read(reinterpret_cast<char*>(lenbuf), 2);
        header_len = lenbuf[0] | (lenbuf[1] << 8);
    } else {
        unsigned char lenbuf[4];
        in.read(reinterpret_cast<char*>(lenbuf), 4);
        header_len = static_cast<std::size_t>(lenbuf[0]) | (lenbuf[1] << 8) |
                     (lenbuf[2] << 16) | (static_cast<std::size_t>(lenbuf[3]) << 24);
    }
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) {
        throw std::runtime_error(path + ": truncated npy header");
    }

    NpyHeader h;
    auto find_value = [&](const std::string& key) -> std::string {
        const auto kpos = header.find("'" + key + "'");
        if (kpos == std::string::npos) {
            throw std::runtime_error(path + ": npy header missing key " + key);
        }
        auto colon = header.find(':', kpos);
        return header.substr(colon + 1);
    };

    {
        std::string rest = find_value("descr");
        const auto q0 = rest.find('\'');
        const auto q1 = rest.find('\'', q0 + 1);
        h.dtype = rest.substr(q0 + 1, q1 - q0 - 1);
    }
    {
        std::string rest = find_value("fortran_order");
        h.fortran = rest.find("True") < rest.find(',');
    }
    {
        std::string rest = find_value("shape");
        const auto p0 = rest.find('(');
        const auto p1 = rest.find(')');
        std::string tuple = rest.substr(p0 + 1, p1 - p0 - 1);
        std::stringstream ss(tuple);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            bool digits = false;
            for (char c : tok) digits = digits || (c >= '0' && c <= '9');
            if (digits) h.dims.push_back(std::stoi(tok));
        }
    }
    if (h.fortran) {
        throw std::runtime_error(path + ": fortran-order npy not supported");
    }
    return h;
}

template <typename T>
std::vector<T> read_payload(std::ifstream& in, std::size_t count, const std::string& path) {
    std::vector<T> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(count * sizeof(T)));
    if (!in) {
        throw std::runtime_error(path + ": truncated npy payload");
    }
    return buf;
}

template <typename Out>
std::vector<Out> read_npy_values(const std::string& path, std::vector<int>& dims) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open npy file: " + path);
    }
    const NpyHeader h = parse_npy_header(in, path);
    dims = h.dims;
    std::size_t count = 1;
    for (int d : h.dims) count *= static_cast<std::size_t>(d);

    std::vector<Out> out(count);
    auto convert = [&](auto raw) {
        for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<Out>(raw[i]);
    };
    if (h.dtype == "<f8") {
        convert(read_payload<double>(in, count, path));
    } else if (h.dtype == "<f4") {
        convert(read_payload<float>(in, count, path));
    } else if (h.dtype == "<i4") {
        convert(read_payload<std::int32_t>(in, count, path));
    } else if (h.dtype == "<i2") {
        convert(read_payload<std::int16_t>(in, count, path));
    } else if (h.dtype == "<u2") {
        convert(read_payload<std::uint16_t>(in, count, path));
    } else if (h.dtype == "|u1" || h.dtype == "<u1") {
        convert(read_payload<std::uint8_t>(in, count, path));
    } else {
        throw std::runtime_error(path + ": unsupported npy dtype " + h.dtype);
    }
    return out;
}

void write_npy_raw(const std::string& path, const std::string& descr,
                   const std::vector<int>& dims, const char* payload, std::size_t bytes) {
    std::ostringstream shape;
    shape << '(';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        shape << dims[i];
        if (dims.size() == 1 || i + 1 < dims.size()) shape << ',';
        if (i + 1 < dims.size()) shape << ' ';
    }
    shape << ')';
    std::string header = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " +
                         shape.str() + ", }";
    const std::size_t unpadded = 10 + header.size() + 1;
    const std::size_t padded = (unpadded + 63) / 64 * 64;
    header.append(padded - unpadded, ' ');
    header.push_back('\n');

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write npy file: " + path);
    }
    out.write("\x93NUMPY\x01\x00", 8);
    const std::uint16_t len = static_cast<std::uint16_t>(header.size());
    out.put(static_cast<char>(len & 0xff));
    out.put(static_cast<char>(len >> 8));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(payload, static_cast<std::streamsize>(bytes));
}

}  // namespace

ArrayD read_npy_double(const std::string& path) {
    ArrayD a;
    a.values = read_npy_values<double>(path, a.dims);
    return a;
}

ArrayI read_npy_int(const std::string& path) {
    ArrayI a;
    a.values = read_npy_values<std::int32_t>(path, a.dims);
    return a;
}

void write_npy(const std::string& path, const ArrayD& array) {
    std::vector<float> f(array.values.begin(), array.values.end());
    write_npy_raw(path, "<f4", array.dims, reinterpret_cast<const char*>(f.data()),
                  f.size() * sizeof(float));
}

void write_npy(const std::string& path, const ArrayI& array) {
    write_npy_raw(path, "<i4", array.dims,
                  reinterpret_cast<const char*>(array.values.data()),
                  array.values.size() * sizeof(std::int32_t));
}

// ---------------------------------------------------------------------------
// PNG

namespace {

cv::Mat to_bgr_mat(const ImageU8& image) {
    cv::Mat rgb(image.height, image.width, CV_8UC3,
                const_cast<std::uint8_t*>(image.data.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    return bgr;
}

ImageU8 from_bgr_mat(const cv::Mat& bgr) {
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    ImageU8 img(rgb.rows, rgb.cols);
    std::memcpy(img.data.data(), rgb.data, img.data.size());
    return img;
}

}  // namespace

void write_png(const std::string& path, const ImageU8& image) {
    if (image.empty()) {
        throw std::invalid_argument("write_png: empty image");
    }
    if (!cv::imwrite(path, to_bgr_mat(image))) {
        throw std::runtime_error("failed to write png: " + path);
    }
}

ImageU8 read_png(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) {
        throw std::runtime_error("failed to read png: " + path);
    }
    return from_bgr_mat(bgr);
}

// ---------------------------------------------------------------------------
// Records + manifests

void write_records(const std::string& path, const std::vector<DetectionRecord>& records) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write records file: " + path);
    }
    for (const auto& r : records) {
        json j;
        j["sample_id"] = r.sample_id;
        j["dataset_id"] = r.dataset_id;
        j["modality"] = r.modality;
        j["image"] = r.image_path;
        json boxes = json::array();
        for (const auto& b : r.boxes) {
            boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
        }
        j["boxes"] = std::move(boxes);
        j["classes"] = r.class_names;
        j["source_volume_id"] = r.source_volume_id;
        out << j.dump() << '\n';
    }
}

std::vector<DetectionRecord> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open records file: " + path);
    }
    std::vector<DetectionRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        DetectionRecord r;
        r.sample_id = j.at("sample_id").get<std::string>();
        r.dataset_id = j.at("dataset_id").get<std::string>();
        r.modality = j.at("modality").get<std::string>();
        r.image_path = j.at("image").get<std::string>();
        for (const auto& b : j.at("boxes")) {
            r.boxes.push_back(Box{b.at(0).get<double>(), b.at(1).get<double>(),
                                  b.at(2).get<double>(), b.at(3).get<double>()});
        }
        r.class_names = j.at("classes").get<std::vector<std::string>>();
        if (r.class_names.size() != r.boxes.size()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": boxes/classes length mismatch");
        }
        r.source_volume_id = j.at("source_volume_id").get<std::string>();
        records.push_back(std::move(r));
    }
    return records;
}

void write_manifest(const std::string& path, const SplitManifest& manifest) {
    json j;
    j["train_volume_ids"] = manifest.train_volume_ids;
    j["val_volume_ids"] = manifest.val_volume_ids;
    j["holdout_classes"] = std::vector<std::string>(manifest.holdout_classes.begin(),
                                                    manifest.holdout_classes.end());
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write split manifest: " + path);
    }
    out << j.dump(2) << '\n';
}

SplitManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open split manifest: " + path);
    }
    json j;
    in >> j;
    SplitManifest m;
    m.train_volume_ids = j.at("train_volume_ids").get<std::vector<std::string>>();
    m.val_volume_ids = j.at("val_volume_ids").get<std::vector<std::string>>();
    for (const auto& c : j.at("holdout_classes")) {
        m.holdout_classes.insert(c.get<std::string>());
    }
    return m;
}

// ---------------------------------------------------------------------------
// Rendering

ImageU8 render_detections(const ImageU8& image, const std::vector<Detection>& detections,
                          const std::vector<std::string>& class_names, double threshold) {
    static const cv::Scalar palette[] = {
        {64, 64, 255},  {64, 255, 64},  {255, 128, 0},  {0, 200, 255},
        {255, 64, 255}, {128, 255, 255}, {255, 255, 64}, {200, 128, 255},
    };
    cv::Mat canvas = to_bgr_mat(image).clone();
    for (const Detection& d : detections) {
        if (d.confidence <= threshold) continue;
        const cv::Scalar& color = palette[static_cast<std::size_t>(d.class_index) %
                                          (sizeof(palette) / sizeof(palette[0]))];
        const cv::Point p0(static_cast<int>(d.box.x_min), static_cast<int>(d.box.y_min));
        const cv::Point p1(static_cast<int>(d.box.x_max), static_cast<int>(d.box.y_max));
        cv::rectangle(canvas, p0, p1, color, 1);
        std::string label = d.class_index >= 0 &&
                                    d.class_index < static_cast<int>(class_names.size())
                                ? class_names[static_cast<std::size_t>(d.class_index)]
                                : "?";
        char caption[96];
        std::snprintf(caption, sizeof(caption), "%s %.2f", label.c_str(), d.confidence);
        cv::putText(canvas, caption, p0 + cv::Point(1, -3), cv::FONT_HERSHEY_PLAIN, 0.8,
                    color, 1);
    }
    return from_bgr_mat(canvas);
}

}  // namespace medrov
