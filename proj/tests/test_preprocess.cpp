// SPDX-License-Identifier: MIT
#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "segplan/error.hpp"
#include "segplan/preprocess.hpp"
#include "segplan/rng.hpp"

using namespace segplan;

namespace {

double mean_of(const std::vector<float>& v) {
    double s = 0.0;
    for (float x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_of(const std::vector<float>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (float x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

std::set<int> label_set(const LabelVolume& l) { return {l.data.begin(), l.data.end()}; }

UNetPlan simple_plan(std::vector<double> spacing, std::vector<int> axes, PlanKind kind) {
    UNetPlan p;
    p.kind = kind;
    p.target_spacing = std::move(spacing);
    p.plane_axes = std::move(axes);
    p.normalization = {NormalizationScheme{}};
    return p;
}

}  // namespace

TEST_SUITE("preprocess") {
    TEST_CASE("output shape formula") {
        CHECK(resampled_shape({10, 20, 30}, {2, 1, 1}, {1, 2, 1}) == Shape3{20, 10, 30});
        CHECK(resampled_shape({5, 5, 5}, {1, 1, 1}, {2, 2, 2}) == Shape3{3, 3, 3});
        CHECK(resampled_shape({1, 1, 1}, {1, 1, 1}, {100, 100, 100}) == Shape3{1, 1, 1});
        CHECK_THROWS_WITH_AS(resampled_shape({5, 5, 5}, {1, 1, 1}, {0, 1, 1}), doctest::Contains("DegenerateTarget"), Error);
        CHECK_THROWS_AS(resampled_shape({5, 5, 5}, {1, 1, 1}, {1, -1, 1}), Error);
    }

    TEST_CASE("identity resampling") {
        Volume v({6, 7, 8}, {1.5, 0.7, 0.7});
        RngStream rng(3);
        for (auto& x : v.data) x = static_cast<float>(rng.uniform(-100, 100));
        const auto out = resample_volume(v, v.spacing);
        REQUIRE(out.shape == v.shape);
        for (std::size_t i = 0; i < v.data.size(); ++i) CHECK(std::abs(out.data[i] - v.data[i]) < 1e-6);
    }

    TEST_CASE("ramp reproduction when downsampling by two") {
        std::vector<double> ramp(64);
        for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
        for (Interp interp : {Interp::Spline3, Interp::Linear}) {
            const auto out = resample_line(ramp, 32, interp);
            // Sample j sits at source coordinate 2j + 0.5; compare away from the mirrored borders.
            for (std::int64_t j = 6; j < 26; ++j) CHECK(std::abs(out[j] - (2.0 * j + 0.5)) < 1e-6);
        }
        const auto lin = resample_line(ramp, 32, Interp::Linear);
        for (std::int64_t j = 0; j < 32; ++j) CHECK(std::abs(lin[j] - (2.0 * j + 0.5)) < 1e-6);
    }

    TEST_CASE("constant fields are preserved by every interpolator") {
        for (Interp interp : {Interp::Spline3, Interp::Linear, Interp::Nearest}) {
            const auto out = resample_line(std::vector<double>(13, 4.25), 29, interp);
            for (double x : out) CHECK(std::abs(x - 4.25) < 1e-9);
        }
        Volume v({5, 9, 9}, {4, 1, 1}, 7.0f);
        const auto out = resample_volume(v, {1.3, 0.6, 0.8});
        CHECK(out.spacing == Spacing3{1.3, 0.6, 0.8});
        for (float x : out.data) CHECK(std::abs(x - 7.0f) < 1e-5);
    }

    TEST_CASE("band-limited round trip") {
        for (double period : {8.0, 12.0, 16.0}) {
            CAPTURE(period);
            const std::int64_t n = 128;
            std::vector<double> f(n);
            for (std::int64_t i = 0; i < n; ++i) f[i] = std::sin(2 * std::numbers::pi * static_cast<double>(i) / period);
            const auto back = resample_line(resample_line(f, n / 2, Interp::Spline3), n, Interp::Spline3);
            double err = 0.0;
            double ref = 0.0;
            for (std::int64_t i = 16; i < n - 16; ++i) {
                err += (back[i] - f[i]) * (back[i] - f[i]);
                ref += f[i] * f[i];
            }
            CHECK(std::sqrt(err / ref) < 0.02);
        }
    }

    TEST_CASE("anisotropic axis uses nearest slices") {
        Volume v({6, 8, 8}, {5, 1, 1});
        for (std::int64_t i0 = 0; i0 < 6; ++i0)
            for (std::int64_t i1 = 0; i1 < 8; ++i1)
                for (std::int64_t i2 = 0; i2 < 8; ++i2) v.at(i0, i1, i2) = static_cast<float>(100 * i0 + i1 * i2);
        const auto out = resample_volume(v, {2.5, 1, 1});
        REQUIRE(out.shape == Shape3{12, 8, 8});
        for (std::int64_t j = 0; j < 12; ++j) {
            const double x = (j + 0.5) * 6.0 / 12.0 - 0.5;
            const auto src = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(x + 0.5)), 0, 5);
            for (std::int64_t i1 = 0; i1 < 8; ++i1)
                for (std::int64_t i2 = 0; i2 < 8; ++i2) CHECK(out.at(j, i1, i2) == v.at(src, i1, i2));
        }
    }

    TEST_CASE("label resampling") {
        LabelVolume cube({4, 4, 4}, {2, 2, 2}, 3);
        std::fill(cube.data.begin(), cube.data.end(), 3);
        const auto up = resample_labels(cube, {1, 1, 1});
        CHECK(up.shape == Shape3{8, 8, 8});
        CHECK(label_set(up) == std::set<int>{3});
        CHECK(resample_labels(cube, cube.spacing) == cube);

        LabelVolume bg({5, 6, 7}, {1, 1, 1}, 2);
        CHECK(label_set(resample_labels(bg, {0.7, 1.9, 1.3})) == std::set<int>{0});

        LabelVolume checker({8, 8, 8}, {1, 1, 1}, 2);
        for (std::int64_t i0 = 0; i0 < 8; ++i0)
            for (std::int64_t i1 = 0; i1 < 8; ++i1)
                for (std::int64_t i2 = 0; i2 < 8; ++i2) checker.at(i0, i1, i2) = static_cast<std::uint16_t>((i0 + i1 + i2) % 2 + (i0 > 3 ? 1 : 0));
        const auto down = resample_labels(checker, {2, 2, 2});
        for (int l : label_set(down)) CHECK(label_set(checker).count(l) == 1);
    }

    TEST_CASE("label resampling never invents labels (fuzz)") {
        RngStream rng(11);
        for (int trial = 0; trial < 1000; ++trial) {
            const Shape3 shape{2 + static_cast<std::int64_t>(rng.uniform_index(5)), 2 + static_cast<std::int64_t>(rng.uniform_index(5)),
                               2 + static_cast<std::int64_t>(rng.uniform_index(5))};
            LabelVolume l(shape, {rng.uniform(0.5, 4), rng.uniform(0.5, 2), rng.uniform(0.5, 2)}, 6);
            const int used = 1 + static_cast<int>(rng.uniform_index(4));
            for (auto& x : l.data) x = static_cast<std::uint16_t>(2 * rng.uniform_index(static_cast<std::uint64_t>(used)));
            const Spacing3 target{rng.uniform(0.4, 3), rng.uniform(0.4, 3), rng.uniform(0.4, 3)};
            const auto out = resample_labels(l, target);
            const auto in_set = label_set(l);
            for (int x : label_set(out)) CHECK(in_set.count(x) == 1);
        }
    }

    TEST_CASE("z-score normalization") {
        Volume v({2, 2, 2}, {1, 1, 1});
        v.data = {3, 7, 3, 7, 3, 7, 3, 7};
        const auto out = normalize(v, NormalizationScheme{});
        CHECK(std::abs(mean_of(out.data)) < 1e-6);
        CHECK(std::abs(std_of(out.data) - 1.0) < 1e-6);
        CHECK_THROWS_WITH_AS(normalize(Volume({3, 3, 3}, {1, 1, 1}, 4.0f), NormalizationScheme{}),
                             doctest::Contains("ZeroVariance"), Error);
    }

    TEST_CASE("z-score normalization is affine equivariant") {
        RngStream rng(5);
        Volume v({4, 5, 6}, {1, 1, 1});
        for (auto& x : v.data) x = static_cast<float>(3.0 * rng.normal());
        const auto ref = normalize(v, NormalizationScheme{});
        for (int t = 0; t < 20; ++t) {
            const double a = rng.uniform(0.1, 10);
            const double b = rng.uniform(-50, 50);
            Volume w = v;
            for (auto& x : w.data) x = static_cast<float>(a * x + b);
            const auto out = normalize(w, NormalizationScheme{});
            for (std::size_t i = 0; i < v.data.size(); ++i) CHECK(std::abs(out.data[i] - ref.data[i]) < 1e-4);
        }
    }

    TEST_CASE("masked normalization") {
        Volume v({1, 1, 6}, {1, 1, 1});
        v.data = {0, 0, 1, 3, 1, 3};
        const std::vector<std::uint8_t> mask{0, 0, 1, 1, 1, 1};
        NormalizationScheme s;
        s.variant = NormalizationVariant::MaskedZScorePerImage;
        const auto out = normalize(v, s, &mask);
        CHECK(out.data[0] == 0.0f);
        CHECK(out.data[1] == 0.0f);
        CHECK(out.data[2] == doctest::Approx(-1.0));
        CHECK(out.data[3] == doctest::Approx(1.0));
        const std::vector<std::uint8_t> empty(6, 0);
        CHECK_THROWS_AS(normalize(v, s, &empty), Error);
    }

    TEST_CASE("CT normalization") {
        NormalizationScheme s;
        s.variant = NormalizationVariant::CTGlobal;
        s.clip_low = -17;
        s.clip_high = 201;
        s.global_mean = 99.40;
        s.global_std = 39.36;
        Volume v({1, 1, 3}, {1, 1, 1});
        v.data = {300, -1000, 99.4f};
        const auto out = normalize(v, s);
        CHECK(out.data[0] == doctest::Approx((201 - 99.40) / 39.36));
        CHECK(out.data[0] == doctest::Approx(2.581).epsilon(1e-3));
        CHECK(out.data[1] == doctest::Approx((-17 - 99.40) / 39.36));
        CHECK(std::abs(out.data[2]) < 1e-5);
    }

    TEST_CASE("preprocessing a case") {
        Case c;
        c.id = "p";
        c.channels.emplace_back(Shape3{6, 10, 10}, Spacing3{2, 2, 2}, 0.0f, "MRI");
        c.label = LabelVolume({6, 10, 10}, {2, 2, 2}, 1);
        for (std::int64_t i0 = 1; i0 < 5; ++i0)
            for (std::int64_t i1 = 2; i1 < 8; ++i1)
                for (std::int64_t i2 = 2; i2 < 8; ++i2) {
                    c.channels[0].at(i0, i1, i2) = static_cast<float>(1 + i0 + i1 + i2);
                    if (i1 > 4) c.label->at(i0, i1, i2) = 1;
                }
        const auto full = preprocess_case(c, simple_plan({1, 1, 1}, {0, 1, 2}, PlanKind::U3D_FULLRES));
        CHECK(full.channels[0].shape == Shape3{8, 12, 12});
        CHECK(full.label->shape == Shape3{8, 12, 12});
        CHECK(label_set(*full.label) == std::set<int>{0, 1});

        const auto flat = preprocess_case(c, simple_plan({1, 1}, {1, 2}, PlanKind::U2D));
        CHECK(flat.channels[0].shape == Shape3{4, 12, 12});
        CHECK(flat.channels[0].spacing[0] == 2.0);

        const auto same = preprocess_case(c, simple_plan({2, 2, 2}, {0, 1, 2}, PlanKind::U3D_FULLRES));
        const Case cropped = [&] {
            Case k;
            k.channels.emplace_back(Shape3{4, 6, 6}, Spacing3{2, 2, 2});
            for (std::int64_t i0 = 0; i0 < 4; ++i0)
                for (std::int64_t i1 = 0; i1 < 6; ++i1)
                    for (std::int64_t i2 = 0; i2 < 6; ++i2) k.channels[0].at(i0, i1, i2) = static_cast<float>(1 + i0 + 1 + i1 + 2 + i2 + 2);
            return k;
        }();
        const auto expected = normalize(cropped.channels[0], NormalizationScheme{});
        REQUIRE(same.channels[0].shape == expected.shape);
        for (std::size_t i = 0; i < expected.data.size(); ++i) CHECK(std::abs(same.channels[0].data[i] - expected.data[i]) < 1e-5);

        UNetPlan wrong = simple_plan({1, 1, 1}, {0, 1, 2}, PlanKind::U3D_FULLRES);
        wrong.normalization.push_back({});
        CHECK_THROWS_WITH_AS(preprocess_case(c, wrong), doctest::Contains("InconsistentChannels"), Error);
    }

    TEST_CASE("preprocessing is deterministic") {
        Case c;
        c.id = "d";
        c.channels.emplace_back(Shape3{5, 7, 9}, Spacing3{3, 0.8, 0.8}, 0.0f, "MRI");
        RngStream rng(9);
        for (auto& x : c.channels[0].data) x = static_cast<float>(rng.uniform(1, 2));
        const auto plan = simple_plan({1.1, 0.6, 0.6}, {0, 1, 2}, PlanKind::U3D_FULLRES);
        CHECK(preprocess_case(c, plan).channels[0] == preprocess_case(c, plan).channels[0]);
    }
}
