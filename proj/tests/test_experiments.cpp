#include "hcd/experiments.hpp"

#include <doctest.h>

#include <filesystem>

using namespace hcd;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny_json()
{
    return nlohmann::json::parse(R"({
      "name": "tiny",
      "geometry": { "shape": "disk", "r_min": 0.3, "r_max": 0.3, "jitter": 0.125, "jitter_quantum": 0.0625 },
      "A1": 10.0,
      "defect": { "radius": 0.5 },
      "epsilons": [0.25],
      "seeds": [1],
      "box_half_width": 1.0,
      "mesh": { "cells_per_unit": 16, "macro_h": 0.0625 },
      "modes": { "fine_count": 6, "fine_cells_per_unit": 32, "mc_samples": 4 },
      "beta_inf": { "region": 8, "windows": [2, 4] },
      "homogenization": { "cells": 2, "samples": 3 },
      "decay": { "r_in": 0.6, "r_out": 0.95, "width": 0.1 },
      "ess_spec": { "epsilon": 0.25, "cells_per_unit": [16, 32] },
      "assertions": ["homogenized_tensor"]
    })");
}

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("hcd_test_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

TEST_SUITE("experiments") {

TEST_CASE("config defaults, round trip and hash")
{
    const auto c = ExperimentConfig::from_json(tiny_json());
    c.validate();
    CHECK(c.defect.A2 == c.A1);
    CHECK(c.A1(0, 0) == 10.0);
    CHECK(c.lambda_range.hi == 150.0);
    const auto again = ExperimentConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
    CHECK(again.hash() == c.hash());
    auto d = c;
    d.seeds = {2};
    CHECK(d.hash() != c.hash());
}

TEST_CASE("the shipped configs validate")
{
    for (const char* f : {"acceptance.json", "smoke.json"}) {
        const auto c = ExperimentConfig::load(fs::path(HCD_SOURCE_DIR) / "configs" / f);
        CHECK_NOTHROW(c.validate());
    }
}

TEST_CASE("config errors are caught before compute")
{
    auto j = tiny_json();
    j["bogus"] = 1;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

    j = tiny_json();
    j["epsilons"] = {0.3};
    CHECK_THROWS_AS(ExperimentConfig::from_json(j).validate(), ConfigError);

    j = tiny_json();
    j["assertions"] = {"no_such_check"};
    CHECK_THROWS_AS(ExperimentConfig::from_json(j).validate(), ConfigError);

    j = tiny_json();
    j["geometry"]["r_max"] = 0.45;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j).validate(), ConstraintViolation);

    j = tiny_json();
    j["decay"]["width"] = 0.5;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j).validate(), ConfigError);

    j = tiny_json();
    j["defect"]["radius"] = "big";
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

    CHECK_THROWS_AS(stages_for_command("plot"), ConfigError);
}

TEST_CASE("CSV cells and checksums")
{
    CHECK(io::format_cell(0.1) == "0.10000000000000001");
    CHECK(io::format_cell(std::int64_t{-3}) == "-3");
    CHECK(io::format_cell(std::string("a,b")) == "\"a,b\"");
    io::CsvTable t({"x", "y"});
    t.add({1.5, std::string("z")});
    CHECK(t.str() == "x,y\n1.5,z\n");
    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("manifest round trip and tamper detection")
{
    const auto dir = scratch("manifest");
    fs::create_directories(dir);
    io::write_file(dir / "a.csv", "x\n1\n");
    io::RunManifest m;
    m.artifact_version = "1";
    m.config_hash = "h";
    m.commands = {"gap-scan"};
    m.files.push_back({"a.csv", io::sha256_file(dir / "a.csv"), 4});
    m.assertions.push_back({"determinism", true, "ok"});
    const auto back = io::RunManifest::from_json(m.to_json());
    CHECK(back.to_json() == m.to_json());
    CHECK(back.verify(dir));
    io::write_file(dir / "a.csv", "x\n2\n");
    CHECK(!back.verify(dir));
    fs::remove_all(dir);
}

TEST_CASE("tiny campaign: provenance, idempotence, determinism")
{
    const auto cfg = ExperimentConfig::from_json(tiny_json());
    const auto dir = scratch("campaign");
    {
        Campaign c(cfg, dir);
        const auto rec = c.run("homogenize");
        REQUIRE(rec.size() == 1);
        CHECK(rec[0].name == "homogenized_tensor");
        CHECK(rec[0].pass);
        CHECK(!c.skipped());
        c.run("gap-scan");
        CHECK(!c.gap_scan().G_gaps.empty());
        CHECK(c.gap_scan().selected.lo == doctest::Approx(c.gap_scan().cell_table->lambda1()));
    }
    const std::string first = io::read_file(dir / "gap" / "gaps.csv");
    CHECK(first.rfind("config_hash,stage,seed,", 0) == 0);
    CHECK(first.find(cfg.hash().substr(0, 16)) != std::string::npos);
    {
        Campaign again(cfg, dir);
        again.run("gap-scan");
        CHECK(again.skipped());
    }
    const auto m = io::RunManifest::from_json(io::read_file(dir / "manifest.json"));
    CHECK(m.verify(dir));
    CHECK(m.config_hash == cfg.hash());

    const auto diff = determinism_check(cfg, scratch("determinism"), {"gap-scan", "homogenize"});
    CHECK(diff.empty());
    fs::remove_all(dir);
}

TEST_CASE("tiny campaign: defect convergence rows")
{
    const auto cfg = ExperimentConfig::from_json(tiny_json());
    const auto dir = scratch("converge");
    Campaign c(cfg, dir);
    const auto& cells = c.convergence();
    REQUIRE(cells.size() == 1);
    const auto& r = cells.front();
    CHECK(r.found);
    CHECK(r.free_count == 0);
    CHECK(r.qm.certificate > 0.0);
    CHECK(r.certificate_count >= 1);
    CHECK(r.projection.lower >= 0.5);
    CHECK(r.projection.lower <= r.projection.upper);
    CHECK(fs::exists(dir / "converge" / "cells.csv"));
    CHECK(fs::exists(dir / "decay" / "fits.csv"));
    fs::remove_all(dir);
}

TEST_CASE("zero volume fraction has no gaps")
{
    CHECK(gap_intervals(empty_ensemble(), Interval{0.0, 150.0}, 0.05).empty());
}

} // TEST_SUITE
