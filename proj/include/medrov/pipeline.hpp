#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "medrov/dataset_io.hpp"
#include "medrov/detector.hpp"
#include "medrov/encoders.hpp"
#include "medrov/metrics.hpp"
#include "medrov/optimizer.hpp"
#include "medrov/presence_matrix.hpp"
#include "medrov/pseudo_label.hpp"
#include "medrov/synthetic.hpp"
#include "medrov/vocabulary.hpp"

namespace medrov {

struct LossWeights {
    double contrastive = 1.0;
    double objectness = 1.0;
    double objectness_positive_weight = 8.0;  // object cells are rare on the grid
    double iou = 1.0;
    double dfl = 1.0;
    IouLossVariant iou_variant = IouLossVariant::ciou;
};

struct TrainConfig {
    int epochs = 60;
    int batch_size = 8;
    double learning_rate = 0.0002;
    double weight_decay = 0.05;
    std::uint64_t seed = 7;

    int vocabulary_size = 16;  // V
    double nms_iou = 0.7;
    bool pseudo_labeling = true;
    int pseudo_label_start_epoch = 0;
    PseudoLabelConfig pseudo;  // T, C, F, max_subs, box filters

    DetectorConfig detector;
    LossWeights loss;
    EncoderConfig encoder;
    std::string prompt_template = "{}";

    static TrainConfig from_json_file(const std::string& path);
    static TrainConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
};

/// Training corpus held in memory: samples plus the dataset's class universe
/// (the pool negatives are drawn from).
struct DatasetInMemory {
    std::vector<SliceSample> samples;
    std::vector<std::string> class_pool;
};

DatasetInMemory dataset_from_records(const std::string& records_path,
                                     const std::string& image_root = "");

struct StepResult {
    LossBreakdown loss;
    PseudoLabelAudit audit;
    int dfl_clamps = 0;
};

struct EpochStats {
    double mean_total = 0.0;
    double mean_contrastive = 0.0;
    double mean_iou = 0.0;
    double mean_dfl = 0.0;
    PseudoLabelAudit audit;
    int dfl_clamps = 0;
    int steps = 0;
};

/// Owns the model/optimizer and runs the two-pass scheme: forward, NMS,
/// pseudo-label engine, second forward on the updated vocabulary and targets,
/// loss, step. With pseudo-labeling disabled a step is exactly the single-pass
/// baseline.
class Trainer {
public:
    Trainer(TrainConfig config, DatasetInMemory data, EncoderPair encoders,
            PresenceMatrix matrix);

    EpochStats train_epoch(int epoch);

    /// Loss of one sample under the full two-pass scheme without touching the
    /// weights. Exposed for the equivalence tests.
    StepResult probe_step(const SliceSample& sample, int epoch, int index) const;

    /// Single-pass loss on the original targets (baseline mode).
    LossBreakdown baseline_step_loss(const SliceSample& sample, int epoch, int index) const;

    DetectorModel& model() { return model_; }
    const DetectorModel& model() const { return model_; }
    const TrainConfig& config() const { return config_; }
    const DatasetInMemory& data() const { return data_; }
    const EncoderPair& encoders() const { return encoders_; }

private:
    struct PreparedSample {
        Vocabulary vocab;
        TrainingTargets targets;
        PseudoLabelAudit audit;
    };
    PreparedSample prepare(const SliceSample& sample, int epoch, int index) const;
    PreparedSample run_engine(const SliceSample& sample, PreparedSample prepared) const;
    LossBreakdown compute_loss(const DetectorWorkspace& ws, const TrainingTargets& targets,
                               HeadGradients* grads, double grad_scale,
                               int* dfl_clamps) const;

    TrainConfig config_;
    DatasetInMemory data_;
    EncoderPair encoders_;
    PresenceMatrix matrix_;
    DetectorModel model_;
    AdamW optimizer_;
};

struct SplitMetrics {
    double map50 = 0.0;
    double map50_95 = 0.0;
    int images = 0;
    int classes = 0;
    std::map<std::string, double> ap50_by_class;
};

struct EvalReport {
    // split name ("base", "base+novel") -> dataset id ("all" plus each id)
    std::map<std::string, std::map<std::string, SplitMetrics>> metrics;
    double fps = 0.0;  // 0 when not measured
    std::string hardware;

    std::string to_json_text() const;
    std::string to_table_text() const;
};

/// Zero-shot style evaluation: one pass with the "base" vocabulary over base
/// ground truth, one with the combined vocabulary over all ground truth.
/// Images evaluate independently (parallel, deterministic reduction).
EvalReport evaluate(const DetectorModel& model, const std::vector<SliceSample>& samples,
                    const std::vector<std::string>& base_classes,
                    const std::vector<std::string>& novel_classes,
                    const TextEncoder& text_encoder, const TrainConfig& config);

/// Detections of one image under a fixed class-list vocabulary (forward + NMS).
std::vector<Detection> detect(const DetectorModel& model, const ImageU8& image,
                              const Vocabulary& eval_vocab, double nms_iou);

Vocabulary make_eval_vocabulary(const std::vector<std::string>& class_names,
                                const TextEncoder& text_encoder,
                                const std::string& prompt_template);

struct FpsReport {
    double fps = 0.0;
    int measured_images = 0;
    int warmup = 0;
    double seconds = 0.0;
    std::string hardware;
};

FpsReport measure_fps(const DetectorModel& model, const std::vector<ImageU8>& images,
                      const Vocabulary& eval_vocab, double nms_iou, int warmup);

/// Mean of mask probabilities at positions classified positive (> 0.5); 0 when
/// nothing is positive. Values must lie in [0,1].
double approximate_mask_confidence(const std::vector<double>& mask);

std::string hardware_summary();

/// Appends one JSON line per epoch: pseudo-label audit counters + losses.
void append_audit_line(const std::string& path, int epoch, const EpochStats& stats);

}  // namespace medrov
