#include "medrov/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "medrov/rng.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace medrov {

// ---------------------------------------------------------------------------
// TrainConfig <-> JSON

namespace {

SubstituteSelection selection_from_string(const std::string& s) {
    if (s == "lowest-index") return SubstituteSelection::lowest_index;
    if (s == "random") return SubstituteSelection::random;
    throw std::invalid_argument("substitute_selection must be 'lowest-index' or 'random'");
}

std::string selection_to_string(SubstituteSelection s) {
    return s == SubstituteSelection::lowest_index ? "lowest-index" : "random";
}

IouLossVariant iou_variant_from_string(const std::string& s) {
    if (s == "ciou") return IouLossVariant::ciou;
    if (s == "plain") return IouLossVariant::plain;
    throw std::invalid_argument("iou_variant must be 'ciou' or 'plain'");
}

}  // namespace

TrainConfig TrainConfig::from_json_text(const std::string& text) {
    const json j = json::parse(text);
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.vocabulary_size = j.value("vocabulary_size", c.vocabulary_size);
    c.nms_iou = j.value("nms_iou", c.nms_iou);
    c.pseudo_labeling = j.value("pseudo_labeling", c.pseudo_labeling);
    c.pseudo_label_start_epoch = j.value("pseudo_label_start_epoch", c.pseudo_label_start_epoch);
    c.prompt_template = j.value("prompt_template", c.prompt_template);

    if (j.contains("thresholds")) {
        const auto& t = j.at("thresholds");
        c.pseudo.iou_threshold_t = t.value("T", c.pseudo.iou_threshold_t);
        c.pseudo.confidence_threshold_c = t.value("C", c.pseudo.confidence_threshold_c);
        c.pseudo.expand_factor_f = t.value("F", c.pseudo.expand_factor_f);
        c.pseudo.max_substitutions = t.value("max_substitutions", c.pseudo.max_substitutions);
        c.pseudo.filter.min_area_fraction =
            t.value("min_area_fraction", c.pseudo.filter.min_area_fraction);
        c.pseudo.filter.max_area_fraction =
            t.value("max_area_fraction", c.pseudo.filter.max_area_fraction);
        c.pseudo.filter.max_background_fraction =
            t.value("max_background_fraction", c.pseudo.filter.max_background_fraction);
        c.pseudo.filter.near_zero_intensity =
            t.value("near_zero_intensity", c.pseudo.filter.near_zero_intensity);
    }
    c.pseudo.selection =
        selection_from_string(j.value("substitute_selection", std::string("lowest-index")));
    c.pseudo.selection_seed = j.value("substitute_selection_seed", c.pseudo.selection_seed);

    if (j.contains("detector")) {
        const auto& d = j.at("detector");
        c.detector.input_size = d.value("input_size", c.detector.input_size);
        c.detector.stage1_channels = d.value("stage1_channels", c.detector.stage1_channels);
        c.detector.stage2_channels = d.value("stage2_channels", c.detector.stage2_channels);
        c.detector.stage3_channels = d.value("stage3_channels", c.detector.stage3_channels);
        c.detector.embed_dim = d.value("embed_dim", c.detector.embed_dim);
        c.detector.dfl_bins = d.value("dfl_bins", c.detector.dfl_bins);
        c.detector.alpha_init = d.value("alpha_init", c.detector.alpha_init);
        c.detector.beta_init = d.value("beta_init", c.detector.beta_init);
        c.detector.init_seed = d.value("init_seed", c.detector.init_seed);
    }
    if (j.contains("loss_weights")) {
        const auto& w = j.at("loss_weights");
        c.loss.contrastive = w.value("contrastive", c.loss.contrastive);
        c.loss.objectness = w.value("objectness", c.loss.objectness);
        c.loss.objectness_positive_weight =
            w.value("objectness_positive_weight", c.loss.objectness_positive_weight);
        c.loss.iou = w.value("iou", c.loss.iou);
        c.loss.dfl = w.value("dfl", c.loss.dfl);
        c.loss.iou_variant = iou_variant_from_string(w.value("iou_variant", std::string("ciou")));
    }
    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        c.encoder.backend = e.value("backend", c.encoder.backend);
        c.encoder.seed = e.value("seed", c.encoder.seed);
        c.encoder.dimension = e.value("dimension", c.encoder.dimension);
        c.encoder.weights_path = e.value("weights_path", c.encoder.weights_path);
    }
    return c;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file: " + path);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::string TrainConfig::to_json_text() const {
    json j;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["weight_decay"] = weight_decay;
    j["seed"] = seed;
    j["vocabulary_size"] = vocabulary_size;
    j["nms_iou"] = nms_iou;
    j["pseudo_labeling"] = pseudo_labeling;
    j["pseudo_label_start_epoch"] = pseudo_label_start_epoch;
    j["prompt_template"] = prompt_template;
    j["thresholds"] = {{"T", pseudo.iou_threshold_t},
                       {"C", pseudo.confidence_threshold_c},
                       {"F", pseudo.expand_factor_f},
                       {"max_substitutions", pseudo.max_substitutions},
                       {"min_area_fraction", pseudo.filter.min_area_fraction},
                       {"max_area_fraction", pseudo.filter.max_area_fraction},
                       {"max_background_fraction", pseudo.filter.max_background_fraction},
                       {"near_zero_intensity", pseudo.filter.near_zero_intensity}};
    j["substitute_selection"] = selection_to_string(pseudo.selection);
    j["substitute_selection_seed"] = pseudo.selection_seed;
    j["detector"] = {{"input_size", detector.input_size},
                     {"stage1_channels", detector.stage1_channels},
                     {"stage2_channels", detector.stage2_channels},
                     {"stage3_channels", detector.stage3_channels},
                     {"embed_dim", detector.embed_dim},
                     {"dfl_bins", detector.dfl_bins},
                     {"alpha_init", detector.alpha_init},
                     {"beta_init", detector.beta_init},
                     {"init_seed", detector.init_seed}};
    j["loss_weights"] = {{"contrastive", loss.contrastive},
                         {"objectness", loss.objectness},
                         {"objectness_positive_weight", loss.objectness_positive_weight},
                         {"iou", loss.iou},
                         {"dfl", loss.dfl},
                         {"iou_variant",
                          loss.iou_variant == IouLossVariant::ciou ? "ciou" : "plain"}};
    j["encoder"] = {{"backend", encoder.backend},
                    {"seed", encoder.seed},
                    {"dimension", encoder.dimension},
                    {"weights_path", encoder.weights_path}};
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Records-backed dataset

DatasetInMemory dataset_from_records(const std::string& records_path,
                                     const std::string& image_root) {
    const auto records = read_records(records_path);
    const fs::path root = image_root.empty() ? fs::path(records_path).parent_path()
                                             : fs::path(image_root);
    DatasetInMemory data;
    std::set<std::string> classes;
    for (const auto& r : records) {
        SliceSample s;
        s.sample_id = r.sample_id;
        s.dataset_id = r.dataset_id;
        s.modality = modality_from_string(r.modality);
        s.source_volume_id = r.source_volume_id;
        fs::path img(r.image_path);
        if (img.is_relative()) img = root / img;
        s.image = read_png(img.string());
        for (std::size_t i = 0; i < r.boxes.size(); ++i) {
            s.annotations.push_back({r.boxes[i], r.class_names[i], false});
            classes.insert(r.class_names[i]);
        }
        data.samples.push_back(std::move(s));
    }
    data.class_pool.assign(classes.begin(), classes.end());
    return data;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(TrainConfig config, DatasetInMemory data, EncoderPair encoders,
                 PresenceMatrix matrix)
    : config_(std::move(config)), data_(std::move(data)), encoders_(std::move(encoders)),
      matrix_(std::move(matrix)), model_(config_.detector),
      optimizer_(model_.params(), config_.learning_rate, config_.weight_decay) {
    if (!encoders_.text || !encoders_.image) {
        throw std::invalid_argument("Trainer: encoders missing");
    }
    if (encoders_.text->dimension() != config_.detector.embed_dim) {
        throw std::invalid_argument("Trainer: encoder dimension (" +
                                    std::to_string(encoders_.text->dimension()) +
                                    ") does not match detector embed_dim (" +
                                    std::to_string(config_.detector.embed_dim) + ")");
    }
}

Trainer::PreparedSample Trainer::prepare(const SliceSample& sample, int epoch,
                                         int index) const {
    std::vector<std::string> positives;
    for (const auto& g : sample.annotations) {
        if (std::find(positives.begin(), positives.end(), g.class_name) == positives.end()) {
            positives.push_back(g.class_name);
        }
    }
    Rng rng(derive_seed(config_.seed,
                        static_cast<std::uint64_t>(epoch) * 1000003ULL +
                            static_cast<std::uint64_t>(index)));
    PreparedSample out;
    out.vocab = build_vocabulary(positives, data_.class_pool, config_.vocabulary_size, rng);
    encode_labels(*encoders_.text, out.vocab, config_.prompt_template);

    out.targets.vocabulary = out.vocab;
    for (const auto& g : sample.annotations) {
        const int entry = out.targets.vocabulary.index_of(g.class_name);
        if (entry < 0) {
            throw std::logic_error("prepare: annotation class missing from vocabulary");
        }
        out.targets.boxes.push_back(g);
        out.targets.entry_indices.push_back(entry);
    }
    return out;
}

Trainer::PreparedSample Trainer::run_engine(const SliceSample& sample,
                                            PreparedSample prepared) const {
    DetectorWorkspace ws;
    model_.forward(sample.image, prepared.vocab, ws);
    const std::vector<Detection> kept = nms(ws.detections, config_.nms_iou);
    PseudoLabelAudit audit;
    prepared.targets = apply_pseudo_labels(kept, sample.image, sample.dataset_id, matrix_,
                                           std::move(prepared.targets), *encoders_.image,
                                           config_.pseudo, &audit);
    prepared.vocab = prepared.targets.vocabulary;
    prepared.audit = audit;
    return prepared;
}

LossBreakdown Trainer::compute_loss(const DetectorWorkspace& ws,
                                    const TrainingTargets& targets, HeadGradients* grads,
                                    double grad_scale, int* dfl_clamps) const {
    const int grid = config_.detector.grid();
    const int k_regions = config_.detector.regions();
    const int bins = config_.detector.dfl_bins;
    const double stride = static_cast<double>(config_.detector.input_size) / grid;

    std::vector<Box> target_boxes;
    target_boxes.reserve(targets.boxes.size());
    for (const auto& g : targets.boxes) target_boxes.push_back(g.box);

    const std::vector<int> cell_to_box = assign_cells(target_boxes, grid, stride);
    std::vector<int> cell_entry(static_cast<std::size_t>(k_regions), -1);
    for (int k = 0; k < k_regions; ++k) {
        const int b = cell_to_box[static_cast<std::size_t>(k)];
        if (b >= 0) {
            cell_entry[static_cast<std::size_t>(k)] =
                targets.entry_indices[static_cast<std::size_t>(b)];
        }
    }

    Tensor g_sim, g_obj;
    const double con =
        contrastive_loss(ws.similarities, cell_entry, grads ? &g_sim : nullptr);
    const double obj = objectness_bce(ws.obj_logits, cell_entry, grads ? &g_obj : nullptr,
                                      config_.loss.objectness_positive_weight);

    // matched cells feed the box losses
    std::vector<int> matched_cells;
    std::vector<Box> matched_pred, matched_tgt;
    for (int k = 0; k < k_regions; ++k) {
        const int b = cell_to_box[static_cast<std::size_t>(k)];
        if (b < 0) continue;
        matched_cells.push_back(k);
        matched_pred.push_back(ws.pred_boxes[static_cast<std::size_t>(k)]);
        matched_tgt.push_back(target_boxes[static_cast<std::size_t>(b)]);
    }

    std::vector<std::array<double, 4>> g_iou;
    const double iou_v = iou_loss(matched_pred, matched_tgt, config_.loss.iou_variant,
                                  grads ? &g_iou : nullptr);

    Tensor sub_logits({static_cast<int>(matched_cells.size()), 4, bins});
    std::vector<std::array<double, 4>> offsets(matched_cells.size());
    for (std::size_t m = 0; m < matched_cells.size(); ++m) {
        const int k = matched_cells[m];
        std::copy(ws.box_logits.ptr() + static_cast<std::size_t>(k) * 4 * bins,
                  ws.box_logits.ptr() + static_cast<std::size_t>(k + 1) * 4 * bins,
                  sub_logits.ptr() + m * 4 * static_cast<std::size_t>(bins));
        const double cx = (k % grid + 0.5) * stride;
        const double cy = (k / grid + 0.5) * stride;
        offsets[m] = box_to_offsets(matched_tgt[m], cx, cy, stride);
    }
    Tensor g_dfl;
    int clamps = 0;
    const double dfl_v = dfl_loss(sub_logits, offsets, grads ? &g_dfl : nullptr, &clamps);
    if (dfl_clamps) *dfl_clamps += clamps;

    const LossBreakdown breakdown =
        total_loss(config_.loss.contrastive * con + config_.loss.objectness * obj,
                   config_.loss.iou * iou_v, config_.loss.dfl * dfl_v, 1);

    if (grads) {
        const int vsize = ws.similarities.dim(1);
        grads->d_similarities = Tensor({k_regions, vsize});
        for (std::size_t i = 0; i < g_sim.size(); ++i) {
            grads->d_similarities.data[i] =
                g_sim.data[i] * config_.loss.contrastive * grad_scale;
        }
        grads->d_obj_logits = Tensor({k_regions});
        for (std::size_t i = 0; i < g_obj.size(); ++i) {
            grads->d_obj_logits.data[i] = g_obj.data[i] * config_.loss.objectness * grad_scale;
        }
        grads->d_box_logits = Tensor({k_regions, 4, bins});
        grads->d_pred_boxes.assign(static_cast<std::size_t>(k_regions), {0, 0, 0, 0});
        for (std::size_t m = 0; m < matched_cells.size(); ++m) {
            const int k = matched_cells[m];
            for (int i = 0; i < 4 * bins; ++i) {
                grads->d_box_logits.at(k * 4 * bins + i) =
                    g_dfl.at(static_cast<int>(m) * 4 * bins + i) * config_.loss.dfl *
                    grad_scale;
            }
            for (int i = 0; i < 4; ++i) {
                grads->d_pred_boxes[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
                    g_iou[m][static_cast<std::size_t>(i)] * config_.loss.iou * grad_scale;
            }
        }
    }
    return breakdown;
}

StepResult Trainer::probe_step(const SliceSample& sample, int epoch, int index) const {
    PreparedSample prepared = prepare(sample, epoch, index);
    StepResult result;
    if (config_.pseudo_labeling && epoch >= config_.pseudo_label_start_epoch) {
        prepared = run_engine(sample, std::move(prepared));
        result.audit = prepared.audit;
    }
    DetectorWorkspace ws;
    model_.forward(sample.image, prepared.vocab, ws);
    result.loss = compute_loss(ws, prepared.targets, nullptr, 1.0, &result.dfl_clamps);
    return result;
}

LossBreakdown Trainer::baseline_step_loss(const SliceSample& sample, int epoch,
                                          int index) const {
    const PreparedSample prepared = prepare(sample, epoch, index);
    DetectorWorkspace ws;
    model_.forward(sample.image, prepared.vocab, ws);
    return compute_loss(ws, prepared.targets, nullptr, 1.0, nullptr);
}

EpochStats Trainer::train_epoch(int epoch) {
    EpochStats stats;
    std::vector<int> order(data_.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(derive_seed(config_.seed, 0xE90C4ULL + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    const int batch = std::max(1, config_.batch_size);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch));
        const double grad_scale = 1.0 / static_cast<double>(end - start);
        model_.zero_grad();

        for (std::size_t i = start; i < end; ++i) {
            const SliceSample& sample = data_.samples[static_cast<std::size_t>(order[i])];
            PreparedSample prepared = prepare(sample, epoch, order[i]);
            if (config_.pseudo_labeling && epoch >= config_.pseudo_label_start_epoch) {
                prepared = run_engine(sample, std::move(prepared));
                stats.audit += prepared.audit;
            }
            DetectorWorkspace ws;
            model_.forward(sample.image, prepared.vocab, ws);
            HeadGradients grads;
            const LossBreakdown loss =
                compute_loss(ws, prepared.targets, &grads, grad_scale, &stats.dfl_clamps);
            if (!std::isfinite(loss.total)) {
                std::ostringstream os;
                os << "non-finite loss at epoch " << epoch << ", sample '" << sample.sample_id
                   << "': contrastive=" << loss.contrastive << " iou=" << loss.iou_loss
                   << " dfl=" << loss.dfl;
                throw std::runtime_error(os.str());
            }
            model_.backward(ws, grads);
            stats.mean_total += loss.total;
            stats.mean_contrastive += loss.contrastive;
            stats.mean_iou += loss.iou_loss;
            stats.mean_dfl += loss.dfl;
            ++stats.steps;
        }
        optimizer_.step();
    }

    if (stats.steps > 0) {
        stats.mean_total /= stats.steps;
        stats.mean_contrastive /= stats.steps;
        stats.mean_iou /= stats.steps;
        stats.mean_dfl /= stats.steps;
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Evaluation

Vocabulary make_eval_vocabulary(const std::vector<std::string>& class_names,
                                const TextEncoder& text_encoder,
                                const std::string& prompt_template) {
    Vocabulary vocab;
    for (const auto& name : class_names) {
        vocab.entries.push_back({name, {}, {}, true, false});
    }
    encode_labels(text_encoder, vocab, prompt_template);
    return vocab;
}

std::vector<Detection> detect(const DetectorModel& model, const ImageU8& image,
                              const Vocabulary& eval_vocab, double nms_iou) {
    DetectorWorkspace ws;
    model.forward(image, eval_vocab, ws);
    return nms(ws.detections, nms_iou);
}

namespace {

SplitMetrics metrics_for(const std::vector<EvalImage>& images,
                         const std::vector<std::string>& classes) {
    const MapTable table = map_at(images, classes, coco_thresholds());
    SplitMetrics m;
    m.map50 = table.map50;
    m.map50_95 = table.map50_95;
    m.images = static_cast<int>(images.size());
    m.classes = table.evaluated_classes;
    m.ap50_by_class = table.ap50_by_class;
    return m;
}

}  // namespace

EvalReport evaluate(const DetectorModel& model, const std::vector<SliceSample>& samples,
                    const std::vector<std::string>& base_classes,
                    const std::vector<std::string>& novel_classes,
                    const TextEncoder& text_encoder, const TrainConfig& config) {
    if (samples.empty()) {
        throw std::invalid_argument("evaluate: evaluation set is empty");
    }

    std::vector<std::pair<std::string, std::vector<std::string>>> splits;
    splits.emplace_back("base", base_classes);
    if (!novel_classes.empty()) {
        std::vector<std::string> all = base_classes;
        all.insert(all.end(), novel_classes.begin(), novel_classes.end());
        splits.emplace_back("base+novel", all);
    }

    EvalReport report;
    report.hardware = hardware_summary();
    for (const auto& [split_name, classes] : splits) {
        const Vocabulary vocab =
            make_eval_vocabulary(classes, text_encoder, config.prompt_template);
        std::set<std::string> class_set(classes.begin(), classes.end());

        std::vector<EvalImage> eval_images(samples.size());
        const int n = static_cast<int>(samples.size());
#pragma omp parallel for schedule(dynamic)
        for (int i = 0; i < n; ++i) {
            EvalImage img;
            img.detections =
                detect(model, samples[static_cast<std::size_t>(i)].image, vocab, config.nms_iou);
            for (const auto& g : samples[static_cast<std::size_t>(i)].annotations) {
                if (class_set.count(g.class_name)) {
                    img.ground_truth.push_back(g);
                }
            }
            eval_images[static_cast<std::size_t>(i)] = std::move(img);
        }

        auto& per_dataset = report.metrics[split_name];
        per_dataset["all"] = metrics_for(eval_images, classes);

        std::map<std::string, std::vector<EvalImage>> grouped;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            grouped[samples[i].dataset_id].push_back(eval_images[i]);
        }
        if (grouped.size() > 1) {
            for (const auto& [dataset_id, imgs] : grouped) {
                per_dataset[dataset_id] = metrics_for(imgs, classes);
            }
        }
    }
    return report;
}

std::string EvalReport::to_json_text() const {
    json j;
    for (const auto& [split, by_dataset] : metrics) {
        for (const auto& [dataset_id, m] : by_dataset) {
            json entry;
            entry["map50"] = m.map50;
            entry["map50_95"] = m.map50_95;
            entry["images"] = m.images;
            entry["classes"] = m.classes;
            entry["ap50_by_class"] = m.ap50_by_class;
            j["metrics"][split][dataset_id] = std::move(entry);
        }
    }
    if (fps > 0.0) j["fps"] = fps;
    j["hardware"] = hardware;
    return j.dump(2);
}

std::string EvalReport::to_table_text() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-14s %-16s %8s %10s %8s %8s\n", "split", "dataset",
                  "mAP50", "mAP50:95", "images", "classes");
    os << line;
    for (const auto& [split, by_dataset] : metrics) {
        for (const auto& [dataset_id, m] : by_dataset) {
            std::snprintf(line, sizeof(line), "%-14s %-16s %8.4f %10.4f %8d %8d\n",
                          split.c_str(), dataset_id.c_str(), m.map50, m.map50_95, m.images,
                          m.classes);
            os << line;
        }
    }
    if (fps > 0.0) {
        std::snprintf(line, sizeof(line), "fps: %.2f (%s)\n", fps, hardware.c_str());
        os << line;
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// FPS + mask confidence

std::string hardware_summary() {
    std::string cpu = "unknown-cpu";
    std::ifstream info("/proc/cpuinfo");
    std::string line;
    while (std::getline(info, line)) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                cpu = line.substr(colon + 2);
            }
            break;
        }
    }
    std::ostringstream os;
    os << cpu << ", " << std::thread::hardware_concurrency() << " hw threads";
#ifdef _OPENMP
    os << ", omp " << omp_get_max_threads();
#endif
    return os.str();
}

FpsReport measure_fps(const DetectorModel& model, const std::vector<ImageU8>& images,
                      const Vocabulary& eval_vocab, double nms_iou, int warmup) {
    if (static_cast<int>(images.size()) <= warmup) {
        throw std::invalid_argument("measure_fps: need more images than warmup iterations");
    }
    for (int i = 0; i < warmup; ++i) {
        (void)detect(model, images[static_cast<std::size_t>(i)], eval_vocab, nms_iou);
    }
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = static_cast<std::size_t>(warmup); i < images.size(); ++i) {
        (void)detect(model, images[i], eval_vocab, nms_iou);
    }
    const auto stop = std::chrono::steady_clock::now();

    FpsReport r;
    r.warmup = warmup;
    r.measured_images = static_cast<int>(images.size()) - warmup;
    r.seconds = std::chrono::duration<double>(stop - start).count();
    r.fps = r.measured_images / std::max(r.seconds, 1e-9);
    r.hardware = hardware_summary();
    return r;
}

double approximate_mask_confidence(const std::vector<double>& mask) {
    double sum = 0.0;
    std::size_t positives = 0;
    for (double v : mask) {
        if (v < 0.0 || v > 1.0) {
            throw std::invalid_argument("approximate_mask_confidence: value outside [0,1]");
        }
        if (v > 0.5) {
            sum += v;
            ++positives;
        }
    }
    return positives == 0 ? 0.0 : sum / static_cast<double>(positives);
}

void append_audit_line(const std::string& path, int epoch, const EpochStats& stats) {
    std::ofstream out(path, std::ios::app);
    if (!out) {
        throw std::runtime_error("cannot append audit log: " + path);
    }
    json j;
    j["epoch"] = epoch;
    j["steps"] = stats.steps;
    j["loss_total"] = stats.mean_total;
    j["loss_contrastive"] = stats.mean_contrastive;
    j["loss_iou"] = stats.mean_iou;
    j["loss_dfl"] = stats.mean_dfl;
    j["unmatched"] = stats.audit.unmatched;
    j["injected"] = stats.audit.injected;
    j["substituted"] = stats.audit.substituted;
    j["discarded_low_confidence"] = stats.audit.discarded_low_confidence;
    j["discarded_box_filtered"] = stats.audit.discarded_box_filtered;
    j["discarded_no_free_negative"] = stats.audit.discarded_no_free_negative;
    j["discarded_over_cap"] = stats.audit.discarded_over_cap;
    j["dfl_clamps"] = stats.dfl_clamps;
    out << j.dump() << '\n';
}

}  // namespace medrov
