// medrov command line: curate | matrix validate | train | eval | fps | visualize | synth

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "medrov/dataset_io.hpp"
#include "medrov/pipeline.hpp"

namespace fs = std::filesystem;
using namespace medrov;

namespace {

struct SyntheticOpts {
    bool enabled = false;
    int images = 200;
    int classes = 4;
    std::uint64_t seed = 11;
    int objects_min = 1;
    int objects_max = 3;
};

void add_synthetic_opts(CLI::App* cmd, SyntheticOpts& opts) {
    cmd->add_flag("--synthetic", opts.enabled,
                  "use the procedural synthetic corpus instead of record files");
    cmd->add_option("--synth-images", opts.images, "synthetic corpus size");
    cmd->add_option("--synth-classes", opts.classes, "synthetic corpus class count");
    cmd->add_option("--synth-seed", opts.seed, "synthetic corpus seed");
    cmd->add_option("--synth-objects-min", opts.objects_min, "min objects per image");
    cmd->add_option("--synth-objects-max", opts.objects_max, "max objects per image");
}

DatasetInMemory make_synthetic_dataset(const SyntheticOpts& opts, int image_size) {
    SyntheticConfig sc;
    sc.images = opts.images;
    sc.classes = opts.classes;
    sc.seed = opts.seed;
    sc.objects_min = opts.objects_min;
    sc.objects_max = opts.objects_max;
    sc.image_size = image_size;
    DatasetInMemory data;
    data.samples = generate_synthetic_corpus(sc);
    data.class_pool = synthetic_class_names(opts.classes);
    return data;
}

PresenceMatrix all_annotated_matrix(const std::string& dataset_id,
                                    const std::vector<std::string>& classes) {
    PresenceMatrix m({dataset_id}, classes);
    for (const auto& c : classes) m.set(dataset_id, c, 1);
    return m;
}

EncoderConfig encoder_config_for(const TrainConfig& cfg, int classes_for_aligned) {
    EncoderConfig ec = cfg.encoder;
    ec.dimension = cfg.detector.embed_dim;
    if (ec.backend == "aligned-mock" && ec.aligned_classes.empty()) {
        ec.aligned_classes = synthetic_palette(classes_for_aligned);
    }
    return ec;
}

int run_curate(const std::vector<std::string>& descriptor_paths, const std::string& out_dir,
               double val_fraction, const std::vector<std::string>& holdouts,
               std::uint64_t seed) {
    fs::create_directories(fs::path(out_dir) / "images");
    const auto loaders = ArrayLoaderRegistry::with_builtins();

    std::vector<VolumeSummary> summaries;
    struct SlicedVolume {
        std::string volume_id;
        std::vector<SliceSample> slices;
    };
    std::vector<SlicedVolume> sliced;

    for (const auto& path : descriptor_paths) {
        const DatasetDescriptor desc = load_descriptor(path);
        for (const auto& entry : desc.volumes) {
            const VolumeRecord vol = load_volume(desc, entry, loaders);
            SlicedVolume sv;
            sv.volume_id = vol.volume_id;
            sv.slices = slice_volume(vol);
            VolumeSummary summary;
            summary.volume_id = vol.volume_id;
            for (const auto& s : sv.slices) {
                for (const auto& a : s.annotations) summary.class_names.insert(a.class_name);
            }
            summaries.push_back(std::move(summary));
            sliced.push_back(std::move(sv));
            std::cout << "sliced " << sv.volume_id << "\n";
        }
    }

    const std::set<std::string> holdout_set(holdouts.begin(), holdouts.end());
    const SplitManifest manifest = volume_level_split(summaries, val_fraction, holdout_set, seed);
    write_manifest((fs::path(out_dir) / "split_manifest.json").string(), manifest);

    const std::set<std::string> train_ids(manifest.train_volume_ids.begin(),
                                          manifest.train_volume_ids.end());
    std::vector<DetectionRecord> train_records, val_records;
    for (const auto& sv : sliced) {
        const bool is_train = train_ids.count(sv.volume_id) > 0;
        for (const auto& s : sv.slices) {
            const std::string rel = "images/" + s.sample_id + ".png";
            write_png((fs::path(out_dir) / rel).string(), s.image);
            DetectionRecord r;
            r.sample_id = s.sample_id;
            r.dataset_id = s.dataset_id;
            r.modality = modality_to_string(s.modality);
            r.image_path = rel;
            for (const auto& a : s.annotations) {
                r.boxes.push_back(a.box);
                r.class_names.push_back(a.class_name);
            }
            r.source_volume_id = s.source_volume_id;
            (is_train ? train_records : val_records).push_back(std::move(r));
        }
    }
    write_records((fs::path(out_dir) / "train_records.jsonl").string(), train_records);
    write_records((fs::path(out_dir) / "val_records.jsonl").string(), val_records);
    std::cout << "wrote " << train_records.size() << " train / " << val_records.size()
              << " val samples to " << out_dir << "\n";
    return 0;
}

int run_matrix_validate(const std::string& matrix_path,
                        const std::vector<std::string>& record_paths) {
    const PresenceMatrix matrix = PresenceMatrix::load(matrix_path);
    std::vector<AnnotatedSampleInfo> infos;
    for (const auto& path : record_paths) {
        for (const auto& r : read_records(path)) {
            infos.push_back({r.dataset_id, r.class_names});
        }
    }
    const PresenceValidationReport report = validate_presence(matrix, infos);
    if (report.ok()) {
        std::cout << "matrix consistent with " << infos.size() << " records\n";
        return 0;
    }
    for (const auto& v : report.violations) {
        std::cout << (v.hard ? "HARD " : "soft ") << v.dataset_id << " / " << v.class_name
                  << ": " << v.detail << "\n";
    }
    std::cout << report.violations.size() << " violation(s)\n";
    return 1;
}

int run_train(const std::string& config_path, const std::string& out_dir,
              const std::string& records_path, const std::string& matrix_path,
              const SyntheticOpts& synth) {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : TrainConfig::from_json_file(config_path);
    fs::create_directories(out_dir);

    DatasetInMemory data;
    PresenceMatrix matrix;
    if (synth.enabled) {
        data = make_synthetic_dataset(synth, cfg.detector.input_size);
        matrix = matrix_path.empty()
                     ? all_annotated_matrix(data.samples.front().dataset_id, data.class_pool)
                     : PresenceMatrix::load(matrix_path);
    } else {
        if (records_path.empty()) {
            std::cerr << "train: need --records or --synthetic\n";
            return 2;
        }
        data = dataset_from_records(records_path);
        if (matrix_path.empty()) {
            std::cerr << "train: need --matrix with --records\n";
            return 2;
        }
        matrix = PresenceMatrix::load(matrix_path);
    }

    // refuse to train on data that contradicts the matrix
    std::vector<AnnotatedSampleInfo> infos;
    for (const auto& s : data.samples) {
        AnnotatedSampleInfo info;
        info.dataset_id = s.dataset_id;
        for (const auto& a : s.annotations) info.class_names.push_back(a.class_name);
        infos.push_back(std::move(info));
    }
    const auto validation = validate_presence(matrix, infos);
    if (!validation.ok()) {
        std::cerr << "presence matrix validation failed (" << validation.violations.size()
                  << " violations); run `medrov matrix validate` for details\n";
        for (const auto& v : validation.violations) {
            std::cerr << "  " << (v.hard ? "HARD " : "soft ") << v.dataset_id << "/"
                      << v.class_name << ": " << v.detail << "\n";
        }
        return 1;
    }

    const EncoderPair encoders =
        make_encoders(encoder_config_for(cfg, static_cast<int>(data.class_pool.size())));
    Trainer trainer(cfg, std::move(data), encoders, matrix);

    std::ofstream loss_csv(fs::path(out_dir) / "loss.csv");
    loss_csv << "epoch,total,contrastive,iou,dfl\n";
    const std::string audit_path = (fs::path(out_dir) / "audit.jsonl").string();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const EpochStats stats = trainer.train_epoch(epoch);
        loss_csv << epoch << ',' << stats.mean_total << ',' << stats.mean_contrastive << ','
                 << stats.mean_iou << ',' << stats.mean_dfl << '\n';
        loss_csv.flush();
        append_audit_line(audit_path, epoch, stats);
        std::cout << "epoch " << epoch << " loss " << stats.mean_total << " (con "
                  << stats.mean_contrastive << ", iou " << stats.mean_iou << ", dfl "
                  << stats.mean_dfl << "), injected " << stats.audit.injected
                  << ", substituted " << stats.audit.substituted << "\n";
    }

    trainer.model().save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string());
    std::ofstream cfg_out(fs::path(out_dir) / "config.json");
    cfg_out << cfg.to_json_text() << "\n";
    std::cout << "checkpoint written to " << out_dir << "/checkpoint.bin\n";
    return 0;
}

int run_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& records_path, const SyntheticOpts& synth,
             std::vector<std::string> base_classes, std::vector<std::string> novel_classes,
             const std::string& report_path) {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : TrainConfig::from_json_file(config_path);

    DatasetInMemory data;
    if (synth.enabled) {
        data = make_synthetic_dataset(synth, cfg.detector.input_size);
    } else if (!records_path.empty()) {
        data = dataset_from_records(records_path);
    } else {
        std::cerr << "eval: need --records or --synthetic\n";
        return 2;
    }
    if (base_classes.empty()) {
        base_classes = data.class_pool;  // default: every class seen in the data
    }

    const EncoderPair encoders =
        make_encoders(encoder_config_for(cfg, static_cast<int>(data.class_pool.size())));
    DetectorModel model(cfg.detector);
    model.load_checkpoint(checkpoint);

    const EvalReport report =
        evaluate(model, data.samples, base_classes, novel_classes, *encoders.text, cfg);
    std::cout << report.to_table_text();
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        out << report.to_json_text() << "\n";
        std::cout << "report written to " << report_path << "\n";
    }
    return 0;
}

int run_fps(const std::string& config_path, const std::string& checkpoint, int images,
            int warmup, const SyntheticOpts& synth_in) {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : TrainConfig::from_json_file(config_path);
    SyntheticOpts synth = synth_in;
    synth.images = images;
    const DatasetInMemory data = make_synthetic_dataset(synth, cfg.detector.input_size);

    const EncoderPair encoders =
        make_encoders(encoder_config_for(cfg, static_cast<int>(data.class_pool.size())));
    DetectorModel model(cfg.detector);
    if (!checkpoint.empty()) model.load_checkpoint(checkpoint);

    const Vocabulary vocab =
        make_eval_vocabulary(data.class_pool, *encoders.text, cfg.prompt_template);
    std::vector<ImageU8> imgs;
    for (const auto& s : data.samples) imgs.push_back(s.image);
    const FpsReport r = measure_fps(model, imgs, vocab, cfg.nms_iou, warmup);
    std::cout << "fps " << r.fps << " (" << r.measured_images << " images in " << r.seconds
              << " s, warmup " << r.warmup << ")\n"
              << "hardware: " << r.hardware << "\n";
    return 0;
}

int run_visualize(const std::string& config_path, const std::string& checkpoint,
                  const std::string& records_path, const SyntheticOpts& synth,
                  const std::string& out_dir, int limit) {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : TrainConfig::from_json_file(config_path);
    DatasetInMemory data;
    if (synth.enabled) {
        data = make_synthetic_dataset(synth, cfg.detector.input_size);
    } else if (!records_path.empty()) {
        data = dataset_from_records(records_path);
    } else {
        std::cerr << "visualize: need --records or --synthetic\n";
        return 2;
    }
    const EncoderPair encoders =
        make_encoders(encoder_config_for(cfg, static_cast<int>(data.class_pool.size())));
    DetectorModel model(cfg.detector);
    model.load_checkpoint(checkpoint);
    fs::create_directories(out_dir);

    const Vocabulary vocab =
        make_eval_vocabulary(data.class_pool, *encoders.text, cfg.prompt_template);
    int done = 0;
    for (const auto& s : data.samples) {
        if (limit > 0 && done >= limit) break;
        const std::vector<Detection> dets = detect(model, s.image, vocab, cfg.nms_iou);
        std::vector<double> confidences;
        for (const auto& d : dets) confidences.push_back(d.confidence);
        std::sort(confidences.begin(), confidences.end(), std::greater<>());
        const double threshold = confidences.empty() ? 0.0 : elbow_threshold(confidences);
        const ImageU8 rendered = render_detections(s.image, dets, data.class_pool, threshold);
        write_png((fs::path(out_dir) / (s.sample_id + "_det.png")).string(), rendered);
        ++done;
    }
    std::cout << "rendered " << done << " images to " << out_dir << "\n";
    return 0;
}

int run_synth(const std::string& out_dir, int volumes, int classes, int depth, int side,
              std::uint64_t seed) {
    fs::create_directories(out_dir);
    const std::vector<std::string> class_names = synthetic_class_names(classes);
    nlohmann::json desc;
    desc["dataset_id"] = "synthvol";
    desc["modality"] = "CT";
    desc["volumes"] = nlohmann::json::array();

    Rng rng(seed);
    for (int v = 0; v < volumes; ++v) {
        char vid[32];
        std::snprintf(vid, sizeof(vid), "vol_%04d", v);
        // each volume carries a random subset of classes (at least one)
        std::vector<std::string> present;
        for (const auto& c : class_names) {
            if (rng.uniform(0.0, 1.0) < 0.6) present.push_back(c);
        }
        if (present.empty()) present.push_back(class_names[0]);

        const VolumeRecord vol = generate_synthetic_volume(
            vid, "synthvol", Modality::CT, present, depth, side, side,
            derive_seed(seed, static_cast<std::uint64_t>(v)));
        const std::string img_rel = std::string(vid) + "_img.npy";
        const std::string lbl_rel = std::string(vid) + "_lbl.npy";
        write_npy((fs::path(out_dir) / img_rel).string(), vol.image_data);
        write_npy((fs::path(out_dir) / lbl_rel).string(), vol.label_data);

        nlohmann::json names;
        for (const auto& [k, n] : vol.label_names) names[std::to_string(k)] = n;
        desc["volumes"].push_back({{"volume_id", vid},
                                   {"image", img_rel},
                                   {"labels", lbl_rel},
                                   {"label_names", names}});
    }
    std::ofstream dout(fs::path(out_dir) / "descriptor.json");
    dout << desc.dump(2) << "\n";

    const PresenceMatrix matrix = all_annotated_matrix("synthvol", class_names);
    matrix.save((fs::path(out_dir) / "matrix.csv").string());
    std::cout << "wrote " << volumes << " volumes, descriptor.json and matrix.csv to "
              << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"medrov: open-vocabulary medical detection toolkit"};
    app.require_subcommand(1);

    // curate
    auto* curate = app.add_subcommand("curate", "descriptors -> detection records + split");
    std::vector<std::string> descriptor_paths;
    std::string out_dir = "curated";
    double val_fraction = 0.05;
    std::vector<std::string> holdouts;
    std::uint64_t seed = 7;
    curate->add_option("--descriptor", descriptor_paths, "dataset descriptor json")->required();
    curate->add_option("--out", out_dir, "output directory");
    curate->add_option("--val-fraction", val_fraction, "validation fraction (default 0.05)");
    curate->add_option("--holdout", holdouts, "class held out of training (repeatable)");
    curate->add_option("--seed", seed, "split shuffle seed");

    // matrix validate
    auto* matrix_cmd = app.add_subcommand("matrix", "presence matrix tools");
    auto* validate = matrix_cmd->add_subcommand("validate", "check matrix against records");
    std::string matrix_path;
    std::vector<std::string> record_paths;
    validate->add_option("--matrix", matrix_path, "matrix csv")->required();
    validate->add_option("--records", record_paths, "record files")->required();

    // train
    auto* train = app.add_subcommand("train", "train a detector");
    std::string train_config, train_out = "run", train_records, train_matrix;
    SyntheticOpts train_synth;
    train->add_option("--config", train_config, "train config json");
    train->add_option("--out", train_out, "output directory");
    train->add_option("--records", train_records, "training records jsonl");
    train->add_option("--matrix", train_matrix, "presence matrix csv");
    add_synthetic_opts(train, train_synth);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_config, eval_checkpoint, eval_records, eval_report;
    std::vector<std::string> base_classes, novel_classes;
    SyntheticOpts eval_synth;
    eval_cmd->add_option("--config", eval_config, "train config json");
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--records", eval_records, "evaluation records jsonl");
    eval_cmd->add_option("--base", base_classes, "base class (repeatable)");
    eval_cmd->add_option("--novel", novel_classes, "novel class (repeatable)");
    eval_cmd->add_option("--report", eval_report, "write EvalReport json here");
    add_synthetic_opts(eval_cmd, eval_synth);

    // fps
    auto* fps_cmd = app.add_subcommand("fps", "measure frames per second");
    std::string fps_config, fps_checkpoint;
    int fps_images = 100, fps_warmup = 10;
    SyntheticOpts fps_synth;
    fps_cmd->add_option("--config", fps_config, "train config json");
    fps_cmd->add_option("--checkpoint", fps_checkpoint, "checkpoint (optional)");
    fps_cmd->add_option("--images", fps_images, "image count");
    fps_cmd->add_option("--warmup", fps_warmup, "warmup iterations");
    add_synthetic_opts(fps_cmd, fps_synth);

    // visualize
    auto* vis = app.add_subcommand("visualize", "render elbow-thresholded detections");
    std::string vis_config, vis_checkpoint, vis_records, vis_out = "vis";
    int vis_limit = 16;
    SyntheticOpts vis_synth;
    vis->add_option("--config", vis_config, "train config json");
    vis->add_option("--checkpoint", vis_checkpoint, "checkpoint file")->required();
    vis->add_option("--records", vis_records, "records jsonl");
    vis->add_option("--out", vis_out, "output directory");
    vis->add_option("--limit", vis_limit, "max images (0 = all)");
    add_synthetic_opts(vis, vis_synth);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic source dataset");
    std::string synth_out = "synthdata";
    int synth_volumes = 10, synth_classes = 4, synth_depth = 12, synth_side = 96;
    std::uint64_t synth_seed = 11;
    synth_cmd->add_option("--out", synth_out, "output directory");
    synth_cmd->add_option("--volumes", synth_volumes, "volume count");
    synth_cmd->add_option("--classes", synth_classes, "class count");
    synth_cmd->add_option("--depth", synth_depth, "slices per volume");
    synth_cmd->add_option("--side", synth_side, "slice height/width");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (curate->parsed()) {
            return run_curate(descriptor_paths, out_dir, val_fraction, holdouts, seed);
        }
        if (validate->parsed()) {
            return run_matrix_validate(matrix_path, record_paths);
        }
        if (train->parsed()) {
            return run_train(train_config, train_out, train_records, train_matrix, train_synth);
        }
        if (eval_cmd->parsed()) {
            return run_eval(eval_config, eval_checkpoint, eval_records, eval_synth,
                            base_classes, novel_classes, eval_report);
        }
        if (fps_cmd->parsed()) {
            return run_fps(fps_config, fps_checkpoint, fps_images, fps_warmup, fps_synth);
        }
        if (vis->parsed()) {
            return run_visualize(vis_config, vis_checkpoint, vis_records, vis_synth, vis_out,
                                 vis_limit);
        }
        if (synth_cmd->parsed()) {
            return run_synth(synth_out, synth_volumes, synth_classes, synth_depth, synth_side,
                             synth_seed);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
