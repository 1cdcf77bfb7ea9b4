// SPDX-License-Identifier: MIT
#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "golden_tables.hpp"
#include "segplan/error.hpp"
#include "segplan/planner.hpp"

using namespace segplan;

namespace {

const golden::Config& table(std::string_view dataset, std::string_view kind) {
    for (const auto& g : golden::configs())
        if (g.dataset == dataset && g.kind == kind) return g;
    throw std::runtime_error("missing table entry");
}

double dataset_voxels(std::string_view dataset) {
    for (const auto& d : golden::datasets())
        if (d.dataset == dataset)
            return static_cast<double>(d.n_cases) * static_cast<double>(d.median_shape[0]) *
                   static_cast<double>(d.median_shape[1]) * static_cast<double>(d.median_shape[2]);
    throw std::runtime_error("missing dataset");
}

std::vector<std::int64_t> to_i64(const std::vector<double>& v) {
    std::vector<std::int64_t> out;
    for (double x : v) out.push_back(static_cast<std::int64_t>(x));
    return out;
}

UNetPlan plan_from_table(std::string_view dataset, std::string_view kind) {
    const auto& g = table(dataset, kind);
    const bool two_d = kind == "2d";
    return plan_unet(to_i64(g.median), g.spacing, dataset_voxels(dataset),
                     two_d ? reference_memory_model_2d() : reference_memory_model_3d(),
                     two_d ? PlanKind::U2D : PlanKind::U3D_FULLRES);
}

double product(const std::vector<std::int64_t>& v) {
    return std::accumulate(v.begin(), v.end(), 1.0, [](double a, std::int64_t b) { return a * static_cast<double>(b); });
}

void check_plan_invariants(const UNetPlan& p, const MemoryModel& model) {
    const auto& t = p.topology;
    REQUIRE(t.kernel_sizes.size() == t.strides.size() + 1);
    for (std::size_t a = 0; a < p.patch_size.size(); ++a) {
        int pools = 0;
        for (const auto& s : t.strides) pools += s[a] == 2 ? 1 : 0;
        CHECK(pools == t.pools_per_axis[a]);
        CHECK(p.patch_size[a] % (std::int64_t{1} << pools) == 0);
        CHECK(p.patch_size[a] >= 4);
    }
    CHECK(p.batch_size >= 2);
    if (p.batch_size > 2) CHECK(estimate_memory(t, p.patch_size, p.batch_size, model) <= model.budget);
}

DatasetFingerprint fingerprint_with(const std::vector<Spacing3>& spacings, const std::vector<Shape3>& shapes) {
    DatasetFingerprint fp;
    fp.n_cases = static_cast<std::int64_t>(spacings.size());
    fp.spacings = spacings;
    fp.shapes = shapes;
    for (std::size_t k = 0; k < shapes.size(); ++k) {
        fp.case_ids.push_back("c" + std::to_string(k));
        fp.total_voxels += static_cast<double>(voxel_count(shapes[k]));
    }
    for (int a = 0; a < 3; ++a) {
        std::vector<std::int64_t> v;
        for (const auto& s : shapes) v.push_back(s[a]);
        fp.median_shape[a] = median_lower(v);
    }
    fp.modalities = {"MRI"};
    fp.n_classes = 2;
    return fp;
}

}  // namespace

TEST_SUITE("planner") {
    TEST_CASE("anisotropic topology: late pooling of the coarse axis") {
        const auto t = configure_topology({18, 237, 208}, {5.0, 1.56, 1.56});
        const auto& g = table("ACDC", "3d_fullres");
        CHECK(t.strides == g.strides);
        CHECK(t.kernel_sizes == g.kernels);
        CHECK(t.kernel_sizes.front() == std::vector<int>{1, 3, 3});
    }

    TEST_CASE("anisotropic topology: reduced patch") {
        const auto& g = table("Prostate", "3d_fullres");
        std::vector<double> patch(g.patch.begin(), g.patch.end());
        const auto t = configure_topology(patch, g.spacing);
        CHECK(t.strides == g.strides);
        CHECK(t.kernel_sizes == g.kernels);
    }

    TEST_CASE("isotropic topology pools every axis") {
        const auto t = configure_topology({128, 128, 128}, {1, 1, 1});
        CHECK(t.strides.size() == 5);
        for (const auto& s : t.strides) CHECK(s == std::vector<int>{2, 2, 2});
        CHECK(t.pools_per_axis == std::vector<int>{5, 5, 5});
        CHECK(t.features_per_stage == std::vector<int>{32, 64, 128, 256, 320, 320});
    }

    TEST_CASE("tiny patch has no downsampling") {
        const auto t = configure_topology({4, 4}, {1, 1});
        CHECK(t.strides.empty());
        CHECK(t.kernel_sizes.size() == 1);
        CHECK(t.pools_per_axis == std::vector<int>{0, 0});
    }

    TEST_CASE("pad for pooling") {
        const auto t = configure_topology({18, 237, 208}, {5.0, 1.56, 1.56});
        CHECK(pad_for_pooling({18, 237, 208}, t.pools_per_axis) == std::vector<std::int64_t>{20, 256, 224});
        CHECK(pad_for_pooling({5, 7}, {0, 3}) == std::vector<std::int64_t>{5, 8});
        CHECK_THROWS_AS(pad_for_pooling({5}, {0, 1}), Error);
    }

    TEST_CASE("topology is invariant under a global spacing scale") {
        for (const auto& g : golden::configs()) {
            std::vector<double> patch(g.patch.begin(), g.patch.end());
            std::vector<double> scaled = g.spacing;
            for (double& s : scaled) s *= 3.7;
            CHECK(configure_topology(patch, g.spacing) == configure_topology(patch, scaled));
        }
    }

    TEST_CASE("memory is linear in batch and monotone in patch") {
        const auto t = configure_topology({128, 128, 128}, {1, 1, 1});
        const std::vector<std::int64_t> p{128, 128, 128};
        const double m1 = estimate_memory(t, p, 1);
        CHECK(estimate_memory(t, p, 2) == doctest::Approx(2 * m1));
        CHECK(estimate_memory(t, p, 7) == doctest::Approx(7 * m1));
        CHECK(estimate_memory(t, {128, 128, 96}, 1) < m1);
        // Oracle: stage voxels halve per axis; non-bottleneck stages count twice.
        double oracle = 0.0;
        const int feats[6] = {32, 64, 128, 256, 320, 320};
        for (int s = 0; s < 6; ++s) {
            const double side = 128.0 / std::pow(2.0, s);
            oracle += (s < 5 ? 2.0 : 1.0) * side * side * side * feats[s];
        }
        CHECK(m1 == doctest::Approx(oracle));
    }

    TEST_CASE("reference budget keeps the anchor network at batch 2") {
        const auto model = reference_memory_model_3d();
        const auto t = configure_topology({128, 128, 128}, {1.0, 0.7676, 0.7676});
        const double anchor = estimate_memory(t, {128, 128, 128}, 2);
        CHECK(model.budget == doctest::Approx(kReferenceBudgetScale3d * anchor));
        CHECK(estimate_memory(t, {128, 128, 128}, 3) > model.budget);
    }

    TEST_CASE("cardiac plan") {
        const auto p = plan_from_table("ACDC", "3d_fullres");
        CHECK(p.patch_size == std::vector<std::int64_t>{20, 256, 224});
        CHECK(p.batch_size == 3);
        check_plan_invariants(p, reference_memory_model_3d());
    }

    TEST_CASE("small structures grow the batch up to the voxel cap") {
        const auto p3 = plan_from_table("Hippocampus", "3d_fullres");
        CHECK(p3.patch_size == std::vector<std::int64_t>{40, 56, 40});
        CHECK(p3.batch_size == 9);
        const auto p2 = plan_from_table("Hippocampus", "2d");
        CHECK(p2.patch_size == std::vector<std::int64_t>{56, 40});
        CHECK(p2.batch_size == 366);
        // Cap oracle: round(0.05 * 260*36*50*35 / patch voxels).
        CHECK(std::floor(0.05 * 260 * 36 * 50 * 35 / (40 * 56 * 40) + 0.5) == 9);
        CHECK(std::floor(0.05 * 260 * 36 * 50 * 35 / (56 * 40) + 0.5) == 366);
    }

    TEST_CASE("plan invariants hold on every table fingerprint") {
        for (const auto& g : golden::configs()) {
            if (g.kind == "3d_lowres") continue;
            const bool two_d = g.kind == "2d";
            const auto model = two_d ? reference_memory_model_2d() : reference_memory_model_3d();
            const auto p = plan_from_table(g.dataset, g.kind);
            check_plan_invariants(p, model);
            CHECK(p.patch_size.size() == g.median.size());
        }
    }

    TEST_CASE("planning is invariant under a global spacing scale") {
        const auto& g = table("Prostate", "3d_fullres");
        std::vector<double> scaled = g.spacing;
        for (double& s : scaled) s *= 0.5;
        const auto a = plan_unet(to_i64(g.median), g.spacing, 1e9, reference_memory_model_3d(), PlanKind::U3D_FULLRES);
        const auto b = plan_unet(to_i64(g.median), scaled, 1e9, reference_memory_model_3d(), PlanKind::U3D_FULLRES);
        CHECK(a.patch_size == b.patch_size);
        CHECK(a.topology == b.topology);
        CHECK(a.batch_size == b.batch_size);
    }

    TEST_CASE("larger budget never shrinks the patch") {
        const auto& g = table("Lung", "3d_fullres");
        MemoryModel small = reference_memory_model_3d();
        MemoryModel big = small;
        big.budget *= 4;
        const auto a = plan_unet(to_i64(g.median), g.spacing, 1e12, small, PlanKind::U3D_FULLRES);
        const auto b = plan_unet(to_i64(g.median), g.spacing, 1e12, big, PlanKind::U3D_FULLRES);
        CHECK(product(b.patch_size) >= product(a.patch_size));
    }

    TEST_CASE("budget too small") {
        MemoryModel tiny;
        tiny.budget = 1.0;
        CHECK_THROWS_WITH_AS(plan_unet({64, 64, 64}, {1, 1, 1}, 1e6, tiny, PlanKind::U3D_FULLRES),
                             doctest::Contains("BudgetTooSmall"), Error);
    }

    TEST_CASE("cascade decision") {
        const auto liver = plan_from_table("Liver", "3d_fullres");
        CHECK(liver.patch_size == std::vector<std::int64_t>{128, 128, 128});
        CHECK(cascade_required(liver));
        CHECK_FALSE(cascade_required(plan_from_table("ACDC", "3d_fullres")));
        CHECK_FALSE(cascade_required(plan_from_table("Hippocampus", "3d_fullres")));
    }

    TEST_CASE("low-resolution spacing search") {
        for (const char* name : {"Liver", "Pancreas", "Colon"}) {
            CAPTURE(name);
            const auto full = plan_from_table(name, "3d_fullres");
            REQUIRE(cascade_required(full));
            const auto low = plan_lowres(full, dataset_voxels(name), reference_memory_model_3d());
            const auto& ref = table(name, "3d_lowres");
            for (std::size_t a = 0; a < 3; ++a)
                CHECK(std::abs(low.target_spacing[a] - ref.spacing[a]) / ref.spacing[a] <= 0.02);
            CHECK(product(low.patch_size) >= kLowresCoverage * product(low.median_resampled_shape));
            for (std::size_t a = 0; a < 3; ++a) CHECK(low.target_spacing[a] > full.target_spacing[a] * 0.999);
            CHECK(low.kind == PlanKind::U3D_LOWRES);
        }
    }

    TEST_CASE("polynomial learning rate") {
        CHECK(poly_lr(0, 1000, 0.01) == doctest::Approx(0.01));
        CHECK(poly_lr(500, 1000, 0.01) == doctest::Approx(0.01 * std::pow(0.5, 0.9)));
        CHECK(poly_lr(1000, 1000, 0.01) == 0.0);
        double prev = 1.0;
        for (int e = 0; e <= 1000; e += 50) {
            const double lr = poly_lr(e, 1000, 0.01);
            CHECK(lr <= prev);
            prev = lr;
        }
        CHECK_THROWS_AS(poly_lr(1001, 1000, 0.01), Error);
    }

    TEST_CASE("deep supervision weights") {
        const auto w = deep_supervision_weights(5);
        REQUIRE(w.size() == 3);
        CHECK(w[0] == doctest::Approx(4.0 / 7));
        CHECK(w[1] == doctest::Approx(2.0 / 7));
        CHECK(w[2] == doctest::Approx(1.0 / 7));
        for (int n = 3; n < 10; ++n) {
            const auto v = deep_supervision_weights(n);
            CHECK(std::accumulate(v.begin(), v.end(), 0.0) == doctest::Approx(1.0));
        }
        CHECK_THROWS_WITH_AS(deep_supervision_weights(2), doctest::Contains("TooFewResolutions"), Error);
    }

    TEST_CASE("normalization selection") {
        DatasetFingerprint fp;
        fp.modalities = {"CT", "MRI"};
        fp.foreground_stats = {{100.0, 50.0, -20.0, 300.0}, {0, 1, 0, 1}};
        const auto ct = select_normalization(fp, 0);
        CHECK(ct.variant == NormalizationVariant::CTGlobal);
        CHECK(ct.clip_low == -20.0);
        CHECK(ct.clip_high == 300.0);
        CHECK(ct.global_mean == 100.0);
        CHECK(ct.global_std == 50.0);
        fp.crop_reduction = 0.05;
        CHECK(select_normalization(fp, 1).variant == NormalizationVariant::ZScorePerImage);
        fp.crop_reduction = 0.40;
        CHECK(select_normalization(fp, 1).variant == NormalizationVariant::MaskedZScorePerImage);
        fp.foreground_stats.clear();
        CHECK_THROWS_WITH_AS(select_normalization(fp, 0), doctest::Contains("MissingStats"), Error);
    }

    TEST_CASE("full-resolution target spacing") {
        auto iso = fingerprint_with({{1, 1, 1}, {1.2, 1, 1}, {0.8, 1, 1}}, {{100, 100, 100}, {90, 100, 100}, {110, 100, 100}});
        CHECK(target_spacing_fullres(iso) == Spacing3{1.0, 1.0, 1.0});
        std::vector<Spacing3> sp;
        std::vector<Shape3> sh;
        for (int k = 0; k < 10; ++k) {
            sp.push_back({2.0 + k, 0.7, 0.7});
            sh.push_back({20, 512, 512});
        }
        auto aniso = fingerprint_with(sp, sh);
        const auto t = target_spacing_fullres(aniso);
        // 10th percentile of {2..11} with linear interpolation.
        CHECK(t[0] == doctest::Approx(2.9));
        CHECK(t[1] == doctest::Approx(0.7));
        // Anisotropic spacing but isotropic shape keeps the median.
        for (auto& s : sh) s = {200, 200, 200};
        CHECK(target_spacing_fullres(fingerprint_with(sp, sh))[0] == doctest::Approx(6.5));
    }

    TEST_CASE("2D plane selection") {
        const auto sel = target_spacing_2d(fingerprint_with({{0.5, 2.0, 0.5}}, {{10, 10, 10}}));
        CHECK(sel.axes == std::array<int, 2>{0, 2});
        CHECK(sel.spacing == std::array<double, 2>{0.5, 0.5});
        CHECK(target_spacing_2d(fingerprint_with({{1, 1, 1}}, {{10, 10, 10}})).axes == std::array<int, 2>{1, 2});
        CHECK(target_spacing_2d(fingerprint_with({{3, 0.8, 0.8}}, {{10, 10, 10}})).axes == std::array<int, 2>{1, 2});
    }

    TEST_CASE("median resampled shape") {
        auto fp = fingerprint_with({{2, 1, 1}, {1, 1, 1}, {4, 1, 1}}, {{10, 30, 30}, {20, 40, 40}, {5, 50, 50}});
        CHECK(median_resampled_shape(fp, {0, 1, 2}, {1, 1, 1}) == std::vector<std::int64_t>{20, 40, 40});
        CHECK(median_resampled_shape(fp, {1, 2}, {2, 2}) == std::vector<std::int64_t>{20, 20});
    }

    TEST_CASE("assembled plans") {
        std::vector<Spacing3> sp(6, Spacing3{1, 1, 1});
        std::vector<Shape3> sh(6, Shape3{400, 400, 400});
        auto big = fingerprint_with(sp, sh);
        const auto plan = assemble_pipeline_fingerprint(big);
        CHECK(plan.cascade_enabled);
        REQUIRE(plan.plans.size() == 4);
        CHECK(plan.find(PlanKind::U2D) != nullptr);
        CHECK(plan.find(PlanKind::U3D_LOWRES) != nullptr);
        CHECK(plan.find(PlanKind::U3D_CASCADE_FULLRES)->input_channels == 1 + 2);
        PlannerOptions only3d;
        only3d.configs = {PlanKind::U3D_FULLRES};
        const auto sub = assemble_pipeline_fingerprint(big, only3d);
        REQUIRE(sub.plans.size() == 1);
        CHECK(sub.plans[0].kind == PlanKind::U3D_FULLRES);
        CHECK(plan_from_json(plan_to_json(plan)) == plan);

        auto small = fingerprint_with(std::vector<Spacing3>(4, Spacing3{1, 1, 1}), std::vector<Shape3>(4, Shape3{40, 40, 40}));
        const auto ps = assemble_pipeline_fingerprint(small);
        CHECK_FALSE(ps.cascade_enabled);
        CHECK(ps.plans.size() == 2);
        CHECK_THROWS_WITH_AS(assemble_pipeline_fingerprint(DatasetFingerprint{}), doctest::Contains("EmptyInput"), Error);
    }

    TEST_CASE("kind names round trip") {
        for (auto k : {PlanKind::U2D, PlanKind::U3D_FULLRES, PlanKind::U3D_LOWRES, PlanKind::U3D_CASCADE_FULLRES})
            CHECK(plan_kind_from_string(to_string(k)) == k);
        CHECK_THROWS_AS(plan_kind_from_string("4d"), Error);
    }
}
