#include <doctest.h>

#include <cmath>

#include "medrov/losses.hpp"
#include "medrov/rng.hpp"
#include "oracles.hpp"

using namespace medrov;
using medrov::testing::finite_difference_gradient;
using medrov::testing::max_relative_error;

TEST_CASE("similarity hand cases and dual-route check") {
    const EmbeddingVector e = {1, 0, 0};
    CHECK(similarity(e, e, {1.0, 0.0}) == doctest::Approx(1.0));
    CHECK(similarity({1, 0, 0}, {0, 1, 0}, {2.0, 0.5}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(similarity({0, 0, 0}, {1, 0, 0}, {1, 0}), std::invalid_argument);

    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        EmbeddingVector a(5), b(5);
        for (auto& x : a) x = rng.normal();
        for (auto& x : b) x = rng.normal();
        const SimilarityParams p{rng.uniform(0.2, 3.0), rng.uniform(-1.0, 1.0)};
        // independent cosine computation
        double dot = 0, na = 0, nb = 0;
        for (int i = 0; i < 5; ++i) {
            dot += a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i)];
            na += a[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i)];
            nb += b[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i)];
        }
        const double expect = p.alpha * dot / std::sqrt(na * nb) + p.beta;
        CHECK(similarity(a, b, p) == doctest::Approx(expect).epsilon(1e-6));
        // scale invariance in the first argument
        EmbeddingVector scaled = a;
        for (auto& x : scaled) x *= 7.5;
        CHECK(similarity(scaled, b, p) == doctest::Approx(similarity(a, b, p)).epsilon(1e-9));
    }
}

TEST_CASE("similarity gradient matches finite differences") {
    Rng rng(9);
    EmbeddingVector e(6), w(6);
    for (auto& x : e) x = rng.normal();
    for (auto& x : w) x = rng.normal();
    const SimilarityParams p{1.3, -0.2};
    const SimilarityGrad g = similarity_grad(e, w, p);
    const auto fd = finite_difference_gradient(
        [&](const std::vector<double>& x) { return similarity(x, w, p); }, e);
    CHECK(max_relative_error(g.d_e, fd) < 1e-6);
}

TEST_CASE("argmax entry is invariant under shared affine transforms") {
    Rng rng(15);
    for (int trial = 0; trial < 40; ++trial) {
        EmbeddingVector e(8);
        for (auto& x : e) x = rng.normal();
        std::vector<EmbeddingVector> vocab(5, EmbeddingVector(8));
        for (auto& v : vocab) {
            for (auto& x : v) x = rng.normal();
        }
        auto argmax_for = [&](const SimilarityParams& p) {
            int best = 0;
            double best_v = -1e300;
            for (std::size_t j = 0; j < vocab.size(); ++j) {
                const double s = similarity(e, vocab[j], p);
                if (s > best_v) {
                    best_v = s;
                    best = static_cast<int>(j);
                }
            }
            return best;
        };
        const int base = argmax_for({1.0, 0.0});
        CHECK(argmax_for({rng.uniform(0.1, 5.0), rng.uniform(-2.0, 2.0)}) == base);
    }
}

TEST_CASE("contrastive loss hand cases") {
    // uniform row over V entries -> ln V
    const int v = 6;
    Tensor sims({1, v});
    CHECK(contrastive_loss(sims, {0}) == doctest::Approx(std::log(static_cast<double>(v))));

    // strongly peaked at the target -> near 0
    Tensor peaked({1, 4});
    peaked.at(2) = 50.0;
    CHECK(contrastive_loss(peaked, {2}) == doctest::Approx(0.0).epsilon(1e-8));

    // no assigned regions -> 0 with the flag set
    bool none = false;
    CHECK(contrastive_loss(peaked, {-1}, nullptr, &none) == 0.0);
    CHECK(none);

    // hand-computed 2x3 case
    Tensor two({2, 3});
    two.data = {1.0, 2.0, 0.5, 0.0, 0.0, 3.0};
    const double z0 = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
    const double z1 = 1.0 + 1.0 + std::exp(3.0);
    const double expect = 0.5 * ((std::log(z0) - 2.0) + (std::log(z1) - 3.0));
    CHECK(contrastive_loss(two, {1, 2}) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("contrastive loss gradient matches finite differences") {
    Rng rng(17);
    Tensor sims({6, 7});
    for (auto& x : sims.data) x = rng.normal();
    const std::vector<int> assign = {2, -1, 0, 6, -1, 3};
    Tensor grad;
    contrastive_loss(sims, assign, &grad);
    const auto fd = finite_difference_gradient(
        [&](const std::vector<double>& x) {
            Tensor t = sims;
            t.data = x;
            return contrastive_loss(t, assign);
        },
        sims.data);
    CHECK(max_relative_error(grad.data, fd) < 1e-4);
}

TEST_CASE("objectness bce values and gradient") {
    Tensor logits({2});
    logits.data = {0.0, 0.0};
    // -ln(sigmoid(0)) = ln 2 for both entries regardless of assignment
    CHECK(objectness_bce(logits, {0, -1}) == doctest::Approx(std::log(2.0)));

    Rng rng(23);
    Tensor l2({5});
    for (auto& x : l2.data) x = rng.normal();
    const std::vector<int> assign = {1, -1, -1, 0, 2};
    Tensor grad;
    objectness_bce(l2, assign, &grad);
    const auto fd = finite_difference_gradient(
        [&](const std::vector<double>& x) {
            Tensor t = l2;
            t.data = x;
            return objectness_bce(t, assign);
        },
        l2.data);
    CHECK(max_relative_error(grad.data, fd) < 1e-5);

    // weighted positives
    Tensor wgrad;
    objectness_bce(l2, assign, &wgrad, 6.0);
    const auto wfd = finite_difference_gradient(
        [&](const std::vector<double>& x) {
            Tensor t = l2;
            t.data = x;
            return objectness_bce(t, assign, nullptr, 6.0);
        },
        l2.data);
    CHECK(max_relative_error(wgrad.data, wfd) < 1e-5);
}

TEST_CASE("iou loss hand cases") {
    const Box unit{0, 0, 10, 10};
    CHECK(iou_loss({unit}, {unit}, IouLossVariant::plain) == doctest::Approx(0.0));
    CHECK(iou_loss({{0, 0, 10, 10}}, {{20, 20, 30, 30}}, IouLossVariant::plain) ==
          doctest::Approx(1.0));
    // overlap 1/3 from the geometry example -> loss 2/3
    CHECK(iou_loss({{0, 0, 10, 10}}, {{5, 0, 15, 10}}, IouLossVariant::plain) ==
          doctest::Approx(2.0 / 3.0));
    CHECK(iou_loss({}, {}, IouLossVariant::plain) == 0.0);
    CHECK(iou_loss({unit}, {unit}, IouLossVariant::ciou) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("iou loss gradients match finite differences") {
    Rng rng(29);
    for (IouLossVariant variant : {IouLossVariant::plain, IouLossVariant::ciou}) {
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<Box> pred, tgt;
            const int n = rng.uniform_int(1, 4);
            for (int i = 0; i < n; ++i) {
                const double x0 = rng.uniform(0.0, 40.0);
                const double y0 = rng.uniform(0.0, 40.0);
                pred.push_back({x0, y0, x0 + rng.uniform(4.0, 30.0),
                                y0 + rng.uniform(4.0, 30.0)});
                const double tx0 = x0 + rng.uniform(-8.0, 8.0);
                const double ty0 = y0 + rng.uniform(-8.0, 8.0);
                tgt.push_back({tx0, ty0, tx0 + rng.uniform(4.0, 30.0),
                               ty0 + rng.uniform(4.0, 30.0)});
            }
            std::vector<std::array<double, 4>> grad;
            iou_loss(pred, tgt, variant, &grad);

            std::vector<double> flat;
            for (const Box& b : pred) {
                flat.insert(flat.end(), {b.x_min, b.y_min, b.x_max, b.y_max});
            }
            const auto fd = finite_difference_gradient(
                [&](const std::vector<double>& x) {
                    std::vector<Box> p2;
                    for (std::size_t i = 0; i < x.size(); i += 4) {
                        p2.push_back({x[i], x[i + 1], x[i + 2], x[i + 3]});
                    }
                    return iou_loss(p2, tgt, variant);
                },
                flat);
            std::vector<double> flat_grad;
            for (const auto& g : grad) flat_grad.insert(flat_grad.end(), g.begin(), g.end());
            CHECK(max_relative_error(flat_grad, fd, 1e-4) < 1e-4);
        }
    }
}

TEST_CASE("dfl loss hand cases") {
    const int bins = 8;

    SUBCASE("peaked distribution on an integer target is near zero") {
        Tensor logits({1, 4, bins});
        for (int side = 0; side < 4; ++side) {
            logits.at(side * bins + 3) = 60.0;
        }
        CHECK(dfl_loss(logits, {{3.0, 3.0, 3.0, 3.0}}) == doctest::Approx(0.0).epsilon(1e-8));
    }

    SUBCASE("uniform distribution costs ln(bins)") {
        Tensor logits({1, 4, bins});
        CHECK(dfl_loss(logits, {{2.5, 1.0, 4.7, 0.0}}) ==
              doctest::Approx(std::log(static_cast<double>(bins))));
    }

    SUBCASE("fractional target interpolates the two bracketing bins") {
        // target 2.3: 0.7*CE(bin2) + 0.3*CE(bin3), single region single side checked
        Tensor logits({1, 4, bins});
        Rng rng(31);
        for (auto& x : logits.data) x = rng.normal();
        const std::array<double, 4> t = {2.3, 0.0, 0.0, 0.0};
        // manual computation for side 0
        double z = 0.0;
        double row_max = -1e300;
        for (int b = 0; b < bins; ++b) row_max = std::max(row_max, logits.at(b));
        for (int b = 0; b < bins; ++b) z += std::exp(logits.at(b) - row_max);
        const double log_z = std::log(z) + row_max;
        double manual = 0.7 * (log_z - logits.at(2)) + 0.3 * (log_z - logits.at(3));
        // remaining sides target 0 exactly
        for (int side = 1; side < 4; ++side) {
            double zm = -1e300;
            for (int b = 0; b < bins; ++b) zm = std::max(zm, logits.at(side * bins + b));
            double zz = 0.0;
            for (int b = 0; b < bins; ++b) zz += std::exp(logits.at(side * bins + b) - zm);
            manual += std::log(zz) + zm - logits.at(side * bins + 0);
        }
        CHECK(dfl_loss(logits, {t}) == doctest::Approx(manual / 4.0).epsilon(1e-10));
    }

    SUBCASE("out-of-range targets clamp and count") {
        Tensor logits({1, 4, bins});
        int clamps = 0;
        dfl_loss(logits, {{-1.0, 3.0, 9.5, 2.0}}, nullptr, &clamps);
        CHECK(clamps == 2);
    }
}

TEST_CASE("dfl gradient matches finite differences") {
    Rng rng(37);
    const int regions = 5, bins = 8;
    Tensor logits({regions, 4, bins});
    for (auto& x : logits.data) x = rng.normal();
    std::vector<std::array<double, 4>> targets;
    for (int k = 0; k < regions; ++k) {
        targets.push_back({rng.uniform(0.0, bins - 1.0), rng.uniform(0.0, bins - 1.0),
                           rng.uniform(0.0, bins - 1.0), rng.uniform(0.0, bins - 1.0)});
    }
    Tensor grad;
    dfl_loss(logits, targets, &grad);
    const auto fd = finite_difference_gradient(
        [&](const std::vector<double>& x) {
            Tensor t = logits;
            t.data = x;
            return dfl_loss(t, targets);
        },
        logits.data);
    CHECK(max_relative_error(grad.data, fd) < 1e-4);
}

TEST_CASE("total loss formula and invariants") {
    const LossBreakdown off = total_loss(0.7, 0.2, 0.3, 0);
    CHECK(off.total == doctest::Approx(0.7));
    const LossBreakdown on = total_loss(0.5, 0.2, 0.3, 1);
    CHECK(on.total == doctest::Approx(1.0));
    CHECK(on.total ==
          doctest::Approx(on.contrastive + on.lambda_indicator * (on.iou_loss + on.dfl)));
    CHECK_THROWS_AS(total_loss(1, 1, 1, 2), std::invalid_argument);
}

TEST_CASE("all loss components are non-negative on random inputs") {
    Rng rng(43);
    for (int trial = 0; trial < 30; ++trial) {
        Tensor sims({3, 4});
        for (auto& x : sims.data) x = rng.normal();
        CHECK(contrastive_loss(sims, {0, 3, -1}) >= 0.0);

        Tensor logits({2, 4, 6});
        for (auto& x : logits.data) x = rng.normal();
        CHECK(dfl_loss(logits, {{1, 2, 3, 4}, {0, 0, 5, 5}}) >= 0.0);

        const double x0 = rng.uniform(0.0, 20.0);
        const double y0 = rng.uniform(0.0, 20.0);
        const Box p{x0, y0, x0 + rng.uniform(1.0, 20.0), y0 + rng.uniform(1.0, 20.0)};
        const Box t{x0 + 3, y0 + 2, x0 + 9, y0 + 12};
        CHECK(iou_loss({p}, {t}, IouLossVariant::plain) >= 0.0);
    }
}
