#include <doctest.h>

#include <set>

#include "medrov/pseudo_label.hpp"
#include "medrov/rng.hpp"
#include "medrov/synthetic.hpp"
#include "oracles.hpp"

using namespace medrov;

namespace {

Detection det(Box b, double conf, int cls) {
    Detection d;
    d.box = b;
    d.confidence = conf;
    d.class_index = cls;
    return d;
}

PresenceMatrix demo_matrix() {
    PresenceMatrix m({"ds"}, {"liver", "kidney", "spleen", "tumor"});
    m.set("ds", "liver", 1);
    m.set("ds", "kidney", 0);
    m.set("ds", "spleen", -1);
    m.set("ds", "tumor", 0);
    return m;
}

Vocabulary demo_vocab(int dim = 8) {
    MockTextEncoder enc(4, dim);
    Vocabulary v;
    v.entries.push_back({"liver", {}, {}, true, false});
    v.entries.push_back({"kidney", {}, {}, false, false});
    v.entries.push_back({"spleen", {}, {}, false, false});
    v.entries.push_back({"tumor", {}, {}, false, false});
    encode_labels(enc, v);
    return v;
}

ImageU8 bright_image(int size = 100) {
    ImageU8 img(size, size);
    for (auto& b : img.data) b = 120;
    return img;
}

TrainingTargets base_targets(const Vocabulary& vocab,
                             const std::vector<GroundTruthBox>& gts = {}) {
    TrainingTargets t;
    t.vocabulary = vocab;
    for (const auto& g : gts) {
        t.boxes.push_back(g);
        t.entry_indices.push_back(t.vocabulary.index_of(g.class_name));
    }
    return t;
}

}  // namespace

TEST_CASE("find_unmatched thresholding around T") {
    const std::vector<GroundTruthBox> gts = {{{0, 0, 10, 10}, "liver", false}};

    // identical box of a *different* class is still matched (class-agnostic)
    CHECK(find_unmatched({det({0, 0, 10, 10}, 0.9, 1)}, gts, 0.3).empty());
    // disjoint prediction is unmatched
    CHECK(find_unmatched({det({50, 50, 60, 60}, 0.9, 0)}, gts, 0.3).size() == 1);
    // empty ground truth: everything is unmatched
    CHECK(find_unmatched({det({0, 0, 1, 1}, 0.1, 0)}, {}, 0.3).size() == 1);

    // max IoU 0.29 -> unmatched; 0.31 -> matched (T = 0.3)
    // iou of (0,0,10,10) with (0,0,w,10) is w/10 for w<10... use overlap boxes
    // Construct IoU exactly: box (0,0,a,10) vs (0,0,10,10) -> a/10 for a<=10
    CHECK(find_unmatched({det({0, 0, 2.9, 10}, 0.9, 0)}, gts, 0.3).size() == 1);
    CHECK(find_unmatched({det({0, 0, 3.1, 10}, 0.9, 0)}, gts, 0.3).empty());
}

TEST_CASE("raising T never shrinks the unmatched set") {
    Rng rng(55);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<GroundTruthBox> gts;
        for (int i = 0; i < rng.uniform_int(0, 4); ++i) {
            const double x0 = rng.uniform(0.0, 60.0);
            const double y0 = rng.uniform(0.0, 60.0);
            gts.push_back({{x0, y0, x0 + rng.uniform(4.0, 25.0), y0 + rng.uniform(4.0, 25.0)},
                           "liver", false});
        }
        std::vector<Detection> preds;
        for (int i = 0; i < rng.uniform_int(0, 6); ++i) {
            const double x0 = rng.uniform(0.0, 60.0);
            const double y0 = rng.uniform(0.0, 60.0);
            preds.push_back(det({x0, y0, x0 + rng.uniform(4.0, 25.0),
                                 y0 + rng.uniform(4.0, 25.0)},
                                rng.uniform(0.0, 1.0), 0));
        }
        const auto low = find_unmatched(preds, gts, 0.2);
        const auto high = find_unmatched(preds, gts, 0.6);
        CHECK(high.size() >= low.size());
    }
}

TEST_CASE("decide covers the full 6-case table") {
    const PresenceMatrix m = demo_matrix();
    const Box b{10, 10, 30, 30};

    // matrix 0, confident -> inject (paper thresholds: C = 0.9)
    auto d = decide(det(b, 0.95, 0), "kidney", "ds", m, 0.9);
    CHECK(d.action == PseudoAction::INJECT_PSEUDO_LABEL);
    // matrix 0, not confident -> discard low confidence
    d = decide(det(b, 0.5, 0), "kidney", "ds", m, 0.9);
    CHECK(d.action == PseudoAction::DISCARD);
    CHECK(d.reason == PseudoReason::low_confidence);
    // boundary: confidence exactly C does not inject
    d = decide(det(b, 0.9, 0), "kidney", "ds", m, 0.9);
    CHECK(d.action == PseudoAction::DISCARD);
    // matrix 1 -> substitute candidate regardless of confidence
    d = decide(det(b, 0.95, 0), "liver", "ds", m, 0.9);
    CHECK(d.action == PseudoAction::FEATURE_SUBSTITUTE);
    CHECK(d.reason == PseudoReason::class_annotated);
    d = decide(det(b, 0.1, 0), "liver", "ds", m, 0.9);
    CHECK(d.action == PseudoAction::FEATURE_SUBSTITUTE);
    // matrix -1 -> substitute candidate (skull-in-abdomen case)
    d = decide(det(b, 0.95, 0), "spleen", "ds", m, 0.9);
    CHECK(d.action == PseudoAction::FEATURE_SUBSTITUTE);
    CHECK(d.reason == PseudoReason::class_impossible);

    // unknown class propagates the matrix error
    CHECK_THROWS_AS(decide(det(b, 0.9, 0), "skull", "ds", m, 0.9), std::out_of_range);
}

TEST_CASE("filter_box rules") {
    const ImageU8 img = bright_image(160);
    BoxFilterConfig cfg;  // s_min 0.001, s_max 0.95, b_max 0.8

    // full-image box
    CHECK_FALSE(filter_box({0, 0, 160, 160}, img, cfg).accepted);
    CHECK(filter_box({0, 0, 160, 160}, img, cfg).reason == "full-image");
    // 2x2 box in a 160x160 image: 4/25600 < 0.001
    CHECK_FALSE(filter_box({10, 10, 12, 12}, img, cfg).accepted);
    CHECK(filter_box({10, 10, 12, 12}, img, cfg).reason == "too-small");
    // healthy box on a bright image passes
    CHECK(filter_box({10, 10, 60, 60}, img, cfg).accepted);

    // all-black region is background-dominated
    ImageU8 dark(160, 160);
    CHECK_FALSE(filter_box({10, 10, 60, 60}, dark, cfg).accepted);
    CHECK(filter_box({10, 10, 60, 60}, dark, cfg).reason == "background");
}

TEST_CASE("expand_box arithmetic and clamping") {
    const Box b = expand_box({10, 10, 20, 20}, 1.3, 100, 100);
    CHECK(b.x_min == doctest::Approx(8.5));
    CHECK(b.y_min == doctest::Approx(8.5));
    CHECK(b.x_max == doctest::Approx(21.5));
    CHECK(b.y_max == doctest::Approx(21.5));

    const Box same = expand_box({10, 10, 20, 20}, 1.0, 100, 100);
    CHECK(same.x_min == doctest::Approx(10.0));
    CHECK(same.x_max == doctest::Approx(20.0));

    const Box corner = expand_box({0, 0, 10, 10}, 2.0, 100, 100);
    CHECK(corner.x_min == 0.0);
    CHECK(corner.y_min == 0.0);
    CHECK(corner.x_max == doctest::Approx(15.0));

    CHECK_THROWS_AS(expand_box({0, 0, 1, 1}, 0.5, 10, 10), std::invalid_argument);
}

TEST_CASE("apply: no unmatched predictions leaves targets unchanged") {
    const PresenceMatrix m = demo_matrix();
    const Vocabulary vocab = demo_vocab();
    MockImageEncoder image_enc(5, 8);
    const ImageU8 img = bright_image();
    const std::vector<GroundTruthBox> gts = {{{10, 10, 40, 40}, "liver", false}};
    TrainingTargets targets = base_targets(vocab, gts);

    PseudoLabelConfig cfg;
    PseudoLabelAudit audit;
    const TrainingTargets out = apply_pseudo_labels(
        {det({10, 10, 40, 40}, 0.99, 0)}, img, "ds", m, targets, image_enc, cfg, &audit);
    CHECK(out.boxes.size() == 1);
    CHECK_FALSE(out.boxes[0].is_pseudo);
    CHECK(audit.injected == 0);
    CHECK(audit.substituted == 0);
}

TEST_CASE("apply: seven substitute candidates cap at five, top confidence first") {
    PresenceMatrix m({"ds"}, {"liver", "n0", "n1", "n2", "n3", "n4", "n5", "n6"});
    m.set("ds", "liver", 1);
    for (int i = 0; i < 7; ++i) m.set("ds", "n" + std::to_string(i), 1);  // all matrix-1

    MockTextEncoder text(4, 8);
    Vocabulary vocab;
    vocab.entries.push_back({"liver", {}, {}, true, false});
    for (int i = 0; i < 7; ++i) vocab.entries.push_back({"n" + std::to_string(i), {}, {}, false, false});
    encode_labels(text, vocab);

    MockImageEncoder image_enc(5, 8);
    const ImageU8 img = bright_image();

    std::vector<Detection> preds;
    for (int i = 0; i < 7; ++i) {
        // disjoint, mid-sized, bright boxes; confidence identifies them
        const double x0 = 2.0 + 12.0 * i;
        preds.push_back(det({x0, 5, x0 + 10, 25}, 0.2 + 0.1 * i, 1 + i));
    }
    TrainingTargets targets = base_targets(vocab);

    PseudoLabelConfig cfg;
    PseudoLabelAudit audit;
    const TrainingTargets out =
        apply_pseudo_labels(preds, img, "ds", m, targets, image_enc, cfg, &audit);
    CHECK(audit.substituted == 5);
    CHECK(audit.discarded_over_cap == 2);
    int substituted_entries = 0;
    for (const auto& e : out.vocabulary.entries) substituted_entries += e.substituted ? 1 : 0;
    CHECK(substituted_entries == 5);
    // the two weakest candidates (conf 0.2, 0.3) were the ones dropped
    std::set<double> bound_conf;
    for (std::size_t i = 0; i < out.boxes.size(); ++i) {
        if (out.boxes[i].is_pseudo) {
            bound_conf.insert(out.boxes[i].box.x_min);  // x0 identifies the candidate
        }
    }
    CHECK(bound_conf.count(2.0) == 0);
    CHECK(bound_conf.count(14.0) == 0);
}

TEST_CASE("apply: injection appends pseudo boxes and preserves originals") {
    const PresenceMatrix m = demo_matrix();
    Vocabulary vocab = demo_vocab();
    MockImageEncoder image_enc(5, 8);
    const ImageU8 img = bright_image();
    const std::vector<GroundTruthBox> gts = {{{70, 70, 95, 95}, "liver", false}};
    TrainingTargets targets = base_targets(vocab, gts);

    PseudoLabelConfig cfg;
    PseudoLabelAudit audit;
    const TrainingTargets out = apply_pseudo_labels(
        {det({5, 5, 30, 30}, 0.95, 1),    // kidney, matrix 0, confident -> inject
         det({40, 40, 60, 60}, 0.5, 1)},  // kidney, low confidence -> discard
        img, "ds", m, targets, image_enc, cfg, &audit);

    CHECK(audit.injected == 1);
    CHECK(audit.discarded_low_confidence == 1);
    REQUIRE(out.boxes.size() == 2);
    CHECK(out.boxes[0].class_name == "liver");
    CHECK_FALSE(out.boxes[0].is_pseudo);
    CHECK(out.boxes[0].box.x_min == 70);  // original preserved exactly
    CHECK(out.boxes[1].class_name == "kidney");
    CHECK(out.boxes[1].is_pseudo);
    CHECK(out.entry_indices[1] == 1);
}

TEST_CASE("apply: raising C never adds injections (monotonicity)") {
    const PresenceMatrix m = demo_matrix();
    const Vocabulary vocab = demo_vocab();
    MockImageEncoder image_enc(5, 8);
    const ImageU8 img = bright_image();
    Rng rng(66);

    for (int trial = 0; trial < 25; ++trial) {
        std::vector<Detection> preds;
        for (int i = 0; i < rng.uniform_int(1, 8); ++i) {
            const double x0 = rng.uniform(0.0, 70.0);
            const double y0 = rng.uniform(0.0, 70.0);
            preds.push_back(det({x0, y0, x0 + rng.uniform(5.0, 25.0),
                                 y0 + rng.uniform(5.0, 25.0)},
                                rng.uniform(0.0, 1.0), rng.uniform_int(0, 3)));
        }
        PseudoLabelConfig lo_cfg, hi_cfg;
        lo_cfg.confidence_threshold_c = 0.4;
        hi_cfg.confidence_threshold_c = 0.8;
        PseudoLabelAudit lo_audit, hi_audit;
        (void)apply_pseudo_labels(preds, img, "ds", m, base_targets(vocab), image_enc, lo_cfg,
                                  &lo_audit);
        (void)apply_pseudo_labels(preds, img, "ds", m, base_targets(vocab), image_enc, hi_cfg,
                                  &hi_audit);
        CHECK(hi_audit.injected <= lo_audit.injected);
    }
}

TEST_CASE("apply is deterministic and matches the exhaustive reference") {
    const PresenceMatrix m = demo_matrix();
    const Vocabulary vocab = demo_vocab();
    MockImageEncoder image_enc(5, 8);
    Rng rng(1234);

    for (int trial = 0; trial < 50; ++trial) {
        // image with bright and dark halves so the background filter fires too
        ImageU8 img(80, 80);
        for (int y = 0; y < 80; ++y) {
            for (int x = 0; x < 80; ++x) {
                const std::uint8_t v = x < 40 ? 150 : 0;
                img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = v;
            }
        }
        std::vector<GroundTruthBox> gts;
        for (int i = 0; i < rng.uniform_int(0, 3); ++i) {
            const double x0 = rng.uniform(0.0, 50.0);
            const double y0 = rng.uniform(0.0, 50.0);
            gts.push_back({{x0, y0, x0 + rng.uniform(4.0, 28.0), y0 + rng.uniform(4.0, 28.0)},
                           "liver", false});
        }
        std::vector<Detection> preds;
        for (int i = 0; i < rng.uniform_int(0, 9); ++i) {
            const double x0 = rng.uniform(0.0, 70.0);
            const double y0 = rng.uniform(0.0, 70.0);
            preds.push_back(det({x0, y0, x0 + rng.uniform(1.0, 35.0),
                                 y0 + rng.uniform(1.0, 35.0)},
                                rng.uniform(0.0, 1.0), rng.uniform_int(0, 3)));
        }
        PseudoLabelConfig cfg;
        cfg.max_substitutions = 2;

        const TrainingTargets got = apply_pseudo_labels(preds, img, "ds", m,
                                                        base_targets(vocab, gts), image_enc,
                                                        cfg);
        const TrainingTargets again = apply_pseudo_labels(preds, img, "ds", m,
                                                          base_targets(vocab, gts), image_enc,
                                                          cfg);
        const TrainingTargets expect = medrov::testing::reference_apply(
            preds, img, "ds", m, base_targets(vocab, gts), image_enc, cfg);

        auto same = [](const TrainingTargets& a, const TrainingTargets& b) {
            if (a.boxes.size() != b.boxes.size()) return false;
            if (a.entry_indices != b.entry_indices) return false;
            for (std::size_t i = 0; i < a.boxes.size(); ++i) {
                if (a.boxes[i].class_name != b.boxes[i].class_name) return false;
                if (a.boxes[i].is_pseudo != b.boxes[i].is_pseudo) return false;
                if (a.boxes[i].box.x_min != b.boxes[i].box.x_min) return false;
                if (a.boxes[i].box.y_max != b.boxes[i].box.y_max) return false;
            }
            if (a.vocabulary.size() != b.vocabulary.size()) return false;
            for (int i = 0; i < a.vocabulary.size(); ++i) {
                const auto& ea = a.vocabulary.entries[static_cast<std::size_t>(i)];
                const auto& eb = b.vocabulary.entries[static_cast<std::size_t>(i)];
                if (ea.label != eb.label || ea.substituted != eb.substituted ||
                    ea.is_positive != eb.is_positive || ea.embedding != eb.embedding) {
                    return false;
                }
            }
            return true;
        };
        CHECK(same(got, again));
        CHECK(same(got, expect));
    }
}

TEST_CASE("apply: substitutions stop when negatives run out") {
    PresenceMatrix m({"ds"}, {"liver", "kidney"});
    m.set("ds", "liver", 1);
    m.set("ds", "kidney", 1);
    MockTextEncoder text(4, 8);
    Vocabulary vocab;
    vocab.entries.push_back({"liver", {}, {}, true, false});
    vocab.entries.push_back({"kidney", {}, {}, false, false});  // single negative
    encode_labels(text, vocab);
    MockImageEncoder image_enc(5, 8);
    const ImageU8 img = bright_image();

    std::vector<Detection> preds = {det({5, 5, 25, 25}, 0.9, 0),
                                    det({40, 40, 60, 60}, 0.8, 0),
                                    det({60, 5, 75, 30}, 0.7, 0)};
    PseudoLabelConfig cfg;
    PseudoLabelAudit audit;
    (void)apply_pseudo_labels(preds, img, "ds", m, base_targets(vocab), image_enc, cfg,
                              &audit);
    CHECK(audit.substituted == 1);
    CHECK(audit.discarded_no_free_negative == 2);
}

TEST_CASE("random substitution selection is deterministic per seed") {
    PresenceMatrix m({"ds"}, {"liver", "n0", "n1", "n2"});
    m.set("ds", "liver", 1);
    for (int i = 0; i < 3; ++i) m.set("ds", "n" + std::to_string(i), 1);
    MockTextEncoder text(4, 8);
    Vocabulary vocab;
    vocab.entries.push_back({"liver", {}, {}, true, false});
    for (int i = 0; i < 3; ++i) vocab.entries.push_back({"n" + std::to_string(i), {}, {}, false, false});
    encode_labels(text, vocab);
    MockImageEncoder image_enc(5, 8);
    const ImageU8 img = bright_image();
    const std::vector<Detection> preds = {det({5, 5, 25, 25}, 0.9, 1)};

    PseudoLabelConfig cfg;
    cfg.selection = SubstituteSelection::random;
    cfg.selection_seed = 77;
    const auto a = apply_pseudo_labels(preds, img, "ds", m, base_targets(vocab), image_enc, cfg);
    const auto b = apply_pseudo_labels(preds, img, "ds", m, base_targets(vocab), image_enc, cfg);
    for (int i = 0; i < a.vocabulary.size(); ++i) {
        CHECK(a.vocabulary.entries[static_cast<std::size_t>(i)].substituted ==
              b.vocabulary.entries[static_cast<std::size_t>(i)].substituted);
    }
}
