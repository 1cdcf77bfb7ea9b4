// SPDX-License-Identifier: MIT
#include <algorithm>
#include <set>

#include "doctest.h"
#include "segplan/error.hpp"
#include "segplan/io.hpp"
#include "segplan/pipeline.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"

using namespace segplan;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> numbered(const std::string& prefix, int n) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(1000 + i));
    return ids;
}

}  // namespace

TEST_SUITE("pipeline") {
    TEST_CASE("splits partition the cases") {
        const auto ids = numbered("c", 10);
        const auto s = make_cv_splits(ids, 5, {}, 42);
        REQUIRE(s.size() == 5);
        for (const auto& f : s) {
            CHECK(f.size() == 2);
            CHECK(std::is_sorted(f.begin(), f.end()));
        }
        CHECK_NOTHROW(validate_splits(s, ids));
        CHECK(make_cv_splits(ids, 5, {}, 42) == s);
        CHECK_FALSE(make_cv_splits(ids, 5, {}, 43) == s);
        CHECK(splits_from_json(splits_to_json(s)) == s);
    }

    TEST_CASE("grouped splits keep patients together") {
        const auto ids = numbered("frame", 200);
        std::map<std::string, std::string> groups;
        for (int i = 0; i < 200; ++i) groups[ids[static_cast<std::size_t>(i)]] = "patient" + std::to_string(i / 2);
        const auto s = make_cv_splits(ids, 5, groups, 1);
        for (const auto& f : s) CHECK(f.size() == 40);
        std::map<std::string, int> fold_of;
        for (int k = 0; k < 5; ++k)
            for (const auto& id : s[static_cast<std::size_t>(k)]) fold_of[id] = k;
        for (int i = 0; i < 200; i += 2) CHECK(fold_of[ids[static_cast<std::size_t>(i)]] == fold_of[ids[static_cast<std::size_t>(i + 1)]]);
        CHECK_NOTHROW(validate_splits(s, ids));
    }

    TEST_CASE("split errors") {
        CHECK_THROWS_WITH_AS(make_cv_splits(numbered("c", 3), 5, {}, 0), doctest::Contains("TooFewGroups"), Error);
        CHECK_THROWS_AS(make_cv_splits(numbered("c", 3), 1, {}, 0), Error);
        const auto ids = numbered("c", 4);
        CHECK_THROWS_AS(validate_splits({{ids[0], ids[1]}, {ids[1], ids[2], ids[3]}}, ids), Error);
        CHECK_THROWS_AS(validate_splits({{ids[0]}, {ids[2], ids[3]}}, ids), Error);
    }

    TEST_CASE("sha-256 test vectors") {
        CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        CHECK(sha256_hex({'a', 'b', 'c'}) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    TEST_CASE("budget and configuration parsing") {
        CHECK(parse_budget("reference-11g", true).budget == reference_memory_model_3d().budget);
        CHECK(parse_budget("reference-11g", false).budget == reference_memory_model_2d().budget);
        CHECK(parse_budget("12345", true).budget == 12345.0);
        CHECK_THROWS_AS(parse_budget("-3", true), Error);
        CHECK_THROWS_AS(parse_budget("lots", true), Error);
        CHECK(parse_configs("2d,3d_fullres") == std::set<PlanKind>{PlanKind::U2D, PlanKind::U3D_FULLRES});
        CHECK_THROWS_AS(parse_configs("3d_huge"), Error);
    }

    TEST_CASE("score table parsing") {
        const auto t = parse_scores_csv("algorithm,a,b\nx,0.5,0.6\ny,0.7,0.1\n");
        CHECK(t.algorithms == std::vector<std::string>{"x", "y"});
        CHECK(t.cases == std::vector<std::string>{"a", "b"});
        CHECK(t.scores[1][0] == 0.7);
        CHECK_THROWS_AS(parse_scores_csv("algorithm,a\nx,0.5,0.6\n"), Error);
        CHECK_THROWS_AS(parse_scores_csv(""), Error);
    }

    TEST_CASE("fingerprinting an empty directory fails") {
        const auto dir = testutil::scratch("empty_dataset");
        CHECK_THROWS_WITH_AS(fingerprint_dataset(dir, 0), doctest::Contains("EmptyInput"), Error);
    }

    TEST_CASE("synthetic dataset end to end") {
        const auto root = testutil::scratch("pipeline_run");
        synthetic::write_dataset(root / "data");
        const auto fp = fingerprint_dataset(root / "data", 0, 2);
        CHECK(fp.n_cases == 5);
        CHECK(fp.modalities == std::vector<std::string>{"CT", "MRI"});
        CHECK(fp.n_classes == 2);
        CHECK(fingerprint_dataset(root / "data", 0, 1) == fp);

        RunConfig cfg;
        cfg.dataset_dir = root / "data";
        cfg.output_dir = root / "out";
        cfg.seed = 3;
        cfg.jobs = 2;
        const auto first = run_pipeline(cfg);
        CHECK_FALSE(first.up_to_date);
        CHECK(fs::exists(first.manifest));
        CHECK(fs::exists(cfg.output_dir / "fingerprint.json"));
        CHECK(fs::exists(cfg.output_dir / "plan.json"));
        const auto splits = splits_from_json(read_text(cfg.output_dir / "splits.json"));
        CHECK(splits.size() == 5);
        for (const auto& a : first.artifacts) CHECK(fs::exists(a));

        const auto manifest_text = read_text(first.manifest);
        const auto second = run_pipeline(cfg);
        CHECK(second.up_to_date);
        CHECK(read_text(second.manifest) == manifest_text);

        const auto plan = read_plan(cfg.output_dir / "plan.json");
        const auto* full = plan.find(PlanKind::U3D_FULLRES);
        REQUIRE(full != nullptr);
        const auto pre = list_case_manifests(cfg.output_dir / "preprocessed" / "3d_fullres");
        REQUIRE(pre.size() == 5);
        const auto c = read_case(pre.front());
        CHECK(c.channels.size() == 2);
        for (int a = 0; a < 3; ++a) CHECK(c.channels[0].spacing[a] == doctest::Approx(full->target_spacing[static_cast<std::size_t>(a)]));

        fs::remove(cfg.output_dir / "plan.json");
        CHECK_FALSE(run_pipeline(cfg).up_to_date);
        CHECK(read_text(first.manifest) == manifest_text);

        RunConfig subset = cfg;
        subset.output_dir = root / "out_2d";
        subset.configs = {PlanKind::U2D};
        run_pipeline(subset);
        const auto p2 = read_plan(subset.output_dir / "plan.json");
        REQUIRE(p2.plans.size() == 1);
        CHECK(p2.plans[0].kind == PlanKind::U2D);
        CHECK(fs::exists(subset.output_dir / "preprocessed" / "2d"));
        CHECK_FALSE(fs::exists(subset.output_dir / "preprocessed" / "3d_fullres"));
    }

    TEST_CASE("directory evaluation") {
        const auto root = testutil::scratch("evaluate_dirs");
        fs::create_directories(root / "pred");
        fs::create_directories(root / "ref");
        LabelVolume ref({2, 3, 4}, {1, 1, 1}, 2);
        ref.data[0] = 1;
        ref.data[5] = 2;
        LabelVolume pred = ref;
        pred.data[6] = 2;
        write_nifti(ref, root / "ref" / "a.nii.gz");
        write_nifti(pred, root / "pred" / "a.nii.gz");
        write_volume(ref, root / "ref" / "b.json");
        write_volume(ref, root / "pred" / "b.json");
        const auto r = evaluate_directories(root / "pred", root / "ref");
        REQUIRE(r.cases.size() == 2);
        CHECK(r.num_classes == 2);
        CHECK(r.cases[0].dice[0] == 1.0);
        CHECK(r.cases[0].dice[1] == doctest::Approx(2.0 / 3.0));
        CHECK(r.cases[1].dice == std::vector<double>{1.0, 1.0});
    }
}
