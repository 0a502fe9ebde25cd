#include <doctest.h>

#include "medrov/geometry.hpp"
#include "medrov/rng.hpp"

using namespace medrov;

namespace {

Detection det(double x0, double y0, double x1, double y1, double conf, int cls = 0) {
    Detection d;
    d.box = {x0, y0, x1, y1};
    d.confidence = conf;
    d.class_index = cls;
    return d;
}

Box random_box(Rng& rng, double extent = 100.0) {
    const double x0 = rng.uniform(0.0, extent - 2.0);
    const double y0 = rng.uniform(0.0, extent - 2.0);
    return {x0, y0, x0 + rng.uniform(1.0, extent - x0), y0 + rng.uniform(1.0, extent - y0)};
}

}  // namespace

TEST_CASE("iou hand cases") {
    CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == doctest::Approx(1.0));
    CHECK(iou({0, 0, 10, 10}, {20, 20, 30, 30}) == doctest::Approx(0.0));
    // intersection 50, union 150
    CHECK(iou({0, 0, 10, 10}, {5, 0, 15, 10}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("iou degenerate boxes use the zero convention") {
    CHECK(iou({5, 5, 5, 5}, {5, 5, 5, 5}) == 0.0);
    CHECK(iou({0, 0, 0, 10}, {0, 0, 0, 10}) == 0.0);
}

TEST_CASE("iou rejects invalid boxes") {
    CHECK_THROWS_AS(iou({10, 0, 0, 10}, {0, 0, 1, 1}), std::invalid_argument);
}

TEST_CASE("iou symmetry and identity properties") {
    Rng rng(123);
    for (int i = 0; i < 200; ++i) {
        const Box a = random_box(rng);
        const Box b = random_box(rng);
        CHECK(iou(a, b) == doctest::Approx(iou(b, a)).epsilon(1e-12));
        const double v = iou(a, b);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(iou(a, a) == doctest::Approx(1.0));
    }
}

TEST_CASE("nms keeps the strongest of two overlapping same-class boxes") {
    // IoU of these two is 0.9 ((9x10)/(10x10+9x10-90) -> 90/100)
    const auto kept = nms({det(0, 0, 10, 10, 0.8), det(0.5, 0, 10.5, 10, 0.7)}, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].confidence == doctest::Approx(0.8));
}

TEST_CASE("nms is per-class") {
    const auto kept =
        nms({det(0, 0, 10, 10, 0.8, 0), det(0.5, 0, 10.5, 10, 0.7, 1)}, 0.5);
    CHECK(kept.size() == 2);
}

TEST_CASE("nms single detection and empty input") {
    CHECK(nms({det(0, 0, 5, 5, 0.3)}, 0.5).size() == 1);
    CHECK(nms({}, 0.5).empty());
}

TEST_CASE("nms output is a sorted subset and idempotent") {
    Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Detection> dets;
        const int n = rng.uniform_int(0, 25);
        for (int i = 0; i < n; ++i) {
            dets.push_back(det(0, 0, 0, 0, rng.uniform(0.0, 1.0), rng.uniform_int(0, 2)));
            dets.back().box = random_box(rng, 60.0);
        }
        const auto once = nms(dets, 0.5);
        // subset: every kept detection appears in the input
        for (const auto& k : once) {
            bool found = false;
            for (const auto& d : dets) {
                found = found || (d.box.x_min == k.box.x_min && d.box.y_min == k.box.y_min &&
                                  d.confidence == k.confidence && d.class_index == k.class_index);
            }
            CHECK(found);
        }
        // sorted by confidence descending
        for (std::size_t i = 1; i < once.size(); ++i) {
            CHECK(once[i - 1].confidence >= once[i].confidence);
        }
        // idempotent
        const auto twice = nms(once, 0.5);
        REQUIRE(twice.size() == once.size());
        for (std::size_t i = 0; i < once.size(); ++i) {
            CHECK(twice[i].confidence == once[i].confidence);
            CHECK(twice[i].box.x_min == once[i].box.x_min);
        }
    }
}

TEST_CASE("nms brute-force agreement on pairs") {
    // greedy suppression on two same-class boxes must match direct pair logic
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const Box a = random_box(rng, 40.0);
        const Box b = random_box(rng, 40.0);
        const double ca = rng.uniform(0.0, 1.0);
        const double cb = rng.uniform(0.0, 1.0);
        const auto kept = nms({det(a.x_min, a.y_min, a.x_max, a.y_max, ca),
                               det(b.x_min, b.y_min, b.x_max, b.y_max, cb)},
                              0.5);
        const bool overlap = iou(a, b) > 0.5;
        CHECK(kept.size() == (overlap ? 1u : 2u));
        if (overlap) {
            CHECK(kept[0].confidence == doctest::Approx(std::max(ca, cb)));
        }
    }
}
