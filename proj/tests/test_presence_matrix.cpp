#include <doctest.h>

#include <filesystem>

#include "medrov/presence_matrix.hpp"

using namespace medrov;

namespace {

PresenceMatrix sample_matrix() {
    PresenceMatrix m({"liver-ds", "abdomen-ds"}, {"liver", "spleen", "skull"});
    m.set("liver-ds", "liver", 1);
    m.set("liver-ds", "spleen", 0);
    m.set("liver-ds", "skull", -1);
    m.set("abdomen-ds", "liver", 1);
    m.set("abdomen-ds", "spleen", 0);
    m.set("abdomen-ds", "skull", -1);
    return m;
}

}  // namespace

TEST_CASE("lookup semantics and unknown-pair errors") {
    const PresenceMatrix m = sample_matrix();
    CHECK(m.lookup("liver-ds", "liver") == 1);
    CHECK(m.lookup("abdomen-ds", "skull") == -1);
    CHECK(m.lookup("abdomen-ds", "spleen") == 0);
    CHECK_THROWS_AS(m.lookup("nope", "liver"), std::out_of_range);
    CHECK_THROWS_AS(m.lookup("liver-ds", "nope"), std::out_of_range);
}

TEST_CASE("set rejects values outside {1,0,-1}") {
    PresenceMatrix m = sample_matrix();
    CHECK_THROWS_AS(m.set("liver-ds", "liver", 2), std::invalid_argument);
}

TEST_CASE("save then load round-trips") {
    const PresenceMatrix m = sample_matrix();
    const auto path =
        (std::filesystem::temp_directory_path() / "medrov_matrix_test.csv").string();
    m.save(path);
    const PresenceMatrix loaded = PresenceMatrix::load(path);
    CHECK(loaded == m);
}

TEST_CASE("parse errors carry locations") {
    // value outside the domain
    CHECK_THROWS_WITH_AS(
        PresenceMatrix::parse("dataset,liver\nds1,2\n", "m.csv"),
        doctest::Contains("m.csv:2"), std::runtime_error);
    // empty class list
    CHECK_THROWS_AS(PresenceMatrix::parse("dataset\nds1\n", "m.csv"), std::runtime_error);
    // short row
    CHECK_THROWS_AS(PresenceMatrix::parse("dataset,liver,spleen\nds1,1\n", "m.csv"),
                    std::runtime_error);
    // empty file
    CHECK_THROWS_AS(PresenceMatrix::parse("", "m.csv"), std::runtime_error);
}

TEST_CASE("validate_presence") {
    const PresenceMatrix m = sample_matrix();

    SUBCASE("consistent data: empty violation list") {
        const auto report = validate_presence(
            m, {{"liver-ds", {"liver"}}, {"abdomen-ds", {"liver"}}});
        CHECK(report.ok());
    }

    SUBCASE("annotated class marked 0 is a soft violation") {
        const auto report = validate_presence(m, {{"liver-ds", {"spleen"}}});
        REQUIRE(report.violations.size() == 1);
        CHECK_FALSE(report.violations[0].hard);
        CHECK(report.violations[0].class_name == "spleen");
    }

    SUBCASE("annotation where the matrix says impossible is hard") {
        const auto report = validate_presence(m, {{"abdomen-ds", {"skull"}}});
        REQUIRE(report.violations.size() == 1);
        CHECK(report.violations[0].hard);
    }

    SUBCASE("unregistered names are reported, not defaulted") {
        const auto report = validate_presence(m, {{"mystery-ds", {"liver"}},
                                                  {"liver-ds", {"pancreas"}}});
        CHECK(report.violations.size() == 2);
    }
}
