// SPDX-License-Identifier: MIT
#include "segplan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "segplan/error.hpp"

#ifndef SEGPLAN_VERSION
#define SEGPLAN_VERSION "0.0.0"
#endif

namespace segplan {

namespace {

constexpr double kMinFeatureMap = 4.0;
constexpr double kAnisotropyThreshold = 3.0;

double product(const std::vector<std::int64_t>& v) {
    return std::accumulate(v.begin(), v.end(), 1.0, [](double a, std::int64_t b) { return a * static_cast<double>(b); });
}

std::int64_t round_half_up(double x) { return static_cast<std::int64_t>(std::floor(x + 0.5)); }

bool is_ct(const std::string& modality) {
    std::string m = modality;
    std::transform(m.begin(), m.end(), m.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return m == "CT";
}

}  // namespace

const char* to_string(NormalizationVariant v) noexcept {
    switch (v) {
        case NormalizationVariant::ZScorePerImage: return "ZScorePerImage";
        case NormalizationVariant::MaskedZScorePerImage: return "MaskedZScorePerImage";
        case NormalizationVariant::CTGlobal: return "CTGlobal";
    }
    return "Unknown";
}

NormalizationVariant normalization_variant_from_string(const std::string& s) {
    if (s == "ZScorePerImage") return NormalizationVariant::ZScorePerImage;
    if (s == "MaskedZScorePerImage") return NormalizationVariant::MaskedZScorePerImage;
    if (s == "CTGlobal") return NormalizationVariant::CTGlobal;
    throw Error(ErrorCode::InvalidArgument, "unknown normalization '" + s + "'");
}

const char* to_string(PlanKind k) noexcept {
    switch (k) {
        case PlanKind::U2D: return "2d";
        case PlanKind::U3D_FULLRES: return "3d_fullres";
        case PlanKind::U3D_LOWRES: return "3d_lowres";
        case PlanKind::U3D_CASCADE_FULLRES: return "3d_cascade_fullres";
    }
    return "unknown";
}

PlanKind plan_kind_from_string(const std::string& s) {
    if (s == "2d") return PlanKind::U2D;
    if (s == "3d_fullres") return PlanKind::U3D_FULLRES;
    if (s == "3d_lowres") return PlanKind::U3D_LOWRES;
    if (s == "3d_cascade_fullres") return PlanKind::U3D_CASCADE_FULLRES;
    throw Error(ErrorCode::InvalidArgument, "unknown configuration '" + s + "'");
}

const UNetPlan* PipelineFingerprint::find(PlanKind kind) const noexcept {
    for (const auto& p : plans)
        if (p.kind == kind) return &p;
    return nullptr;
}

const char* tool_version() noexcept { return SEGPLAN_VERSION; }

NormalizationScheme select_normalization(const DatasetFingerprint& fp, std::size_t channel) {
    if (channel >= fp.modalities.size()) throw Error(ErrorCode::InvalidArgument, "channel index out of range");
    NormalizationScheme s;
    if (is_ct(fp.modalities[channel])) {
        if (channel >= fp.foreground_stats.size())
            throw Error(ErrorCode::MissingStats, "CT channel without foreground statistics");
        const auto& st = fp.foreground_stats[channel];
        s.variant = NormalizationVariant::CTGlobal;
        s.clip_low = st.p0_5;
        s.clip_high = st.p99_5;
        s.global_mean = st.mean;
        s.global_std = st.std;
        return s;
    }
    s.variant = fp.crop_reduction >= 0.25 ? NormalizationVariant::MaskedZScorePerImage
                                          : NormalizationVariant::ZScorePerImage;
    return s;
}

Spacing3 target_spacing_fullres(const DatasetFingerprint& fp) {
    if (fp.spacings.empty()) throw Error(ErrorCode::EmptyInput, "fingerprint has no spacings");
    Spacing3 target = fp.median_spacing();
    const auto [smin, smax] = std::minmax_element(target.begin(), target.end());
    const auto [hmin, hmax] = std::minmax_element(fp.median_shape.begin(), fp.median_shape.end());
    const double spacing_aniso = *smax / *smin;
    const double shape_aniso = static_cast<double>(*hmax) / static_cast<double>(*hmin);
    if (spacing_aniso > kAnisotropyThreshold && shape_aniso > kAnisotropyThreshold) {
        const auto axis = static_cast<std::size_t>(smax - target.begin());
        std::vector<double> v;
        for (const auto& s : fp.spacings) v.push_back(s[axis]);
        std::sort(v.begin(), v.end());
        target[axis] = percentile(v, 0.1);
    }
    return target;
}

PlaneSelection target_spacing_2d(const DatasetFingerprint& fp) {
    if (fp.spacings.empty()) throw Error(ErrorCode::EmptyInput, "fingerprint has no spacings");
    const Spacing3 med = fp.median_spacing();
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (med[a] != med[b]) return med[a] < med[b];
        return a > b;
    });
    PlaneSelection sel;
    sel.axes = {std::min(order[0], order[1]), std::max(order[0], order[1])};
    sel.spacing = {med[sel.axes[0]], med[sel.axes[1]]};
    return sel;
}

TopologySpec configure_topology(const std::vector<double>& patch, const std::vector<double>& spacing) {
    const std::size_t dim = patch.size();
    if (dim < 1 || dim > 3 || spacing.size() != dim)
        throw Error(ErrorCode::InvalidArgument, "patch and spacing must have 1 to 3 matching axes");
    for (std::size_t i = 0; i < dim; ++i)
        if (!(patch[i] > 0.0) || !(spacing[i] > 0.0))
            throw Error(ErrorCode::InvalidArgument, "patch and spacing must be positive");

    TopologySpec t;
    t.dim = static_cast<int>(dim);
    t.pools_per_axis.assign(dim, 0);
    std::vector<double> sp = spacing;
    std::vector<double> sz = patch;
    std::vector<int> kernel(dim, 1);
    while (true) {
        const double mn = *std::min_element(sp.begin(), sp.end());
        std::vector<int> stride(dim, 1);
        bool any = false;
        for (std::size_t i = 0; i < dim; ++i) {
            if (kernel[i] != 3 && sp[i] / mn <= 2.0) kernel[i] = 3;
            if (sp[i] / mn < 2.0 && sz[i] >= 2.0 * kMinFeatureMap) {
                stride[i] = 2;
                any = true;
            }
        }
        if (!any) break;
        t.kernel_sizes.push_back(kernel);
        t.strides.push_back(stride);
        for (std::size_t i = 0; i < dim; ++i)
            if (stride[i] == 2) {
                sp[i] *= 2.0;
                sz[i] /= 2.0;
                ++t.pools_per_axis[i];
            }
    }
    t.kernel_sizes.push_back(kernel);
    const int cap = dim == 3 ? BlueprintParams{}.feature_cap_3d : BlueprintParams{}.feature_cap_2d;
    for (std::size_t s = 0; s < t.kernel_sizes.size(); ++s)
        t.features_per_stage.push_back(static_cast<int>(std::min<std::int64_t>(std::int64_t{32} << s, cap)));
    return t;
}

std::vector<std::int64_t> pad_for_pooling(const std::vector<double>& raw, const std::vector<int>& pools) {
    if (raw.size() != pools.size()) throw Error(ErrorCode::InvalidArgument, "patch and pool counts differ in rank");
    std::vector<std::int64_t> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double m = std::ldexp(1.0, pools[i]);
        out[i] = static_cast<std::int64_t>(std::ceil(raw[i] / m) * m);
    }
    return out;
}

double estimate_memory(const TopologySpec& t, const std::vector<std::int64_t>& patch, int batch, const MemoryModel& model) {
    if (patch.size() != static_cast<std::size_t>(t.dim))
        throw Error(ErrorCode::InvalidArgument, "patch rank differs from topology");
    std::vector<double> sz(patch.begin(), patch.end());
    double total = 0.0;
    const std::size_t stages = t.kernel_sizes.size();
    for (std::size_t s = 0; s < stages; ++s) {
        if (s > 0)
            for (std::size_t i = 0; i < sz.size(); ++i) sz[i] /= t.strides[s - 1][i];
        const double voxels = std::accumulate(sz.begin(), sz.end(), 1.0, std::multiplies<>());
        const double weight = s + 1 < stages ? 2.0 : 1.0;
        total += weight * voxels * t.features_per_stage[s];
    }
    return static_cast<double>(batch) * total * model.cost_per_unit;
}

MemoryModel reference_memory_model_3d() {
    const std::vector<double> patch{128, 128, 128};
    const TopologySpec t = configure_topology(patch, {1.0, 0.7676, 0.7676});
    MemoryModel m;
    m.budget = kReferenceBudgetScale3d * estimate_memory(t, {128, 128, 128}, 2);
    m.anchor = "reference-11g: 1.21 x cost(Liver 3D topology, 128x128x128, batch 2)";
    return m;
}

MemoryModel reference_memory_model_2d() {
    const TopologySpec t = configure_topology({512, 512}, {0.7676, 0.7676});
    MemoryModel m;
    m.budget = kReferenceBatches2d * estimate_memory(t, {512, 512}, 1);
    m.anchor = "reference-11g: 12.5 x cost(Liver 2D topology, 512x512, batch 1)";
    return m;
}

UNetPlan plan_unet(const std::vector<std::int64_t>& median, const std::vector<double>& spacing, double total_voxels,
                   const MemoryModel& model, PlanKind kind) {
    const std::size_t dim = median.size();
    if (dim != spacing.size()) throw Error(ErrorCode::InvalidArgument, "median shape and spacing differ in rank");
    if (!(model.budget > 0.0)) throw Error(ErrorCode::InvalidArgument, "budget must be positive");
    for (auto m : median)
        if (m < 1) throw Error(ErrorCode::InvalidArgument, "median shape must be positive");
    const int min_batch = BlueprintParams{}.min_batch;

    std::vector<double> raw(median.begin(), median.end());
    TopologySpec topo = configure_topology(raw, spacing);
    std::vector<std::int64_t> patch = pad_for_pooling(raw, topo.pools_per_axis);
    bool reduced = false;
    while (estimate_memory(topo, patch, min_batch, model) > model.budget) {
        reduced = true;
        int axis = -1;
        double best = -1.0;
        for (std::size_t i = 0; i < dim; ++i) {
            if (patch[i] <= static_cast<std::int64_t>(kMinFeatureMap)) continue;
            const double r = static_cast<double>(patch[i]) / static_cast<double>(median[i]);
            if (r >= best) {
                best = r;
                axis = static_cast<int>(i);
            }
        }
        if (axis < 0) throw Error(ErrorCode::BudgetTooSmall, "patch cannot shrink below 4 voxels per axis");
        std::vector<double> trial(patch.begin(), patch.end());
        trial[axis] -= std::ldexp(1.0, topo.pools_per_axis[axis]);
        const auto trial_pools = configure_topology(
            [&] {
                auto v = trial;
                v[axis] = std::max(v[axis], kMinFeatureMap);
                return v;
            }(),
            spacing).pools_per_axis;
        const double next = static_cast<double>(patch[axis]) - std::ldexp(1.0, trial_pools[axis]);
        raw.assign(patch.begin(), patch.end());
        raw[axis] = std::max(next, kMinFeatureMap);
        topo = configure_topology(raw, spacing);
        patch = pad_for_pooling(raw, topo.pools_per_axis);
    }

    UNetPlan plan;
    plan.kind = kind;
    plan.target_spacing = spacing;
    plan.median_resampled_shape = median;
    plan.patch_size = patch;
    plan.topology = topo;
    if (reduced) {
        plan.batch_size = min_batch;
    } else {
        const double per_sample = estimate_memory(topo, patch, 1, model);
        const auto by_memory = static_cast<std::int64_t>(std::floor(model.budget / per_sample));
        const std::int64_t cap = round_half_up(kBatchVoxelFraction * total_voxels / product(patch));
        plan.batch_size = static_cast<int>(std::max<std::int64_t>(min_batch, std::min(by_memory, cap)));
    }
    if (dim == 3) {
        plan.plane_axes = {0, 1, 2};
    } else {
        plan.plane_axes.resize(dim);
        std::iota(plan.plane_axes.begin(), plan.plane_axes.end(), static_cast<int>(3 - dim));
    }
    return plan;
}

bool cascade_required(const UNetPlan& fullres) {
    return product(fullres.patch_size) / product(fullres.median_resampled_shape) < kCascadeCoverage;
}

UNetPlan plan_lowres(const UNetPlan& fullres, double total_voxels, const MemoryModel& model) {
    const std::size_t dim = fullres.target_spacing.size();
    std::vector<double> spacing = fullres.target_spacing;
    for (int it = 0; it < kLowresMaxIterations; ++it) {
        const double mx = *std::max_element(spacing.begin(), spacing.end());
        bool anisotropic = false;
        for (double s : spacing) anisotropic = anisotropic || mx / s > 2.0;
        for (double& s : spacing)
            if (!anisotropic || mx / s > 2.0) s *= 1.01;
        std::vector<std::int64_t> median(dim);
        for (std::size_t i = 0; i < dim; ++i)
            median[i] = std::max<std::int64_t>(
                1, round_half_up(static_cast<double>(fullres.median_resampled_shape[i]) * fullres.target_spacing[i] /
                                 spacing[i]));
        UNetPlan plan = plan_unet(median, spacing, total_voxels, model, PlanKind::U3D_LOWRES);
        if (product(plan.patch_size) >= kLowresCoverage * product(median)) {
            plan.plane_axes = fullres.plane_axes;
            plan.normalization = fullres.normalization;
            plan.input_channels = fullres.input_channels;
            return plan;
        }
    }
    throw Error(ErrorCode::NoConvergence, "low-resolution spacing search did not reach the coverage target");
}

double poly_lr(double epoch, double epoch_max, double lr0, double exponent) {
    if (!(epoch_max > 0.0) || epoch < 0.0 || epoch > epoch_max)
        throw Error(ErrorCode::InvalidArgument, "epoch must lie in [0, epoch_max]");
    return lr0 * std::pow(1.0 - epoch / epoch_max, exponent);
}

std::vector<double> deep_supervision_weights(int n) {
    if (n < 3) throw Error(ErrorCode::TooFewResolutions, "deep supervision needs at least 3 resolutions");
    std::vector<double> w(static_cast<std::size_t>(n - 2));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::ldexp(1.0, -static_cast<int>(i));
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= sum;
    return w;
}

std::vector<std::int64_t> median_resampled_shape(const DatasetFingerprint& fp, const std::vector<int>& axes,
                                                 const std::vector<double>& target) {
    if (axes.size() != target.size()) throw Error(ErrorCode::InvalidArgument, "axes and target differ in rank");
    if (fp.shapes.empty() || fp.shapes.size() != fp.spacings.size())
        throw Error(ErrorCode::EmptyInput, "fingerprint has no per-case shapes");
    std::vector<std::int64_t> out;
    for (std::size_t k = 0; k < axes.size(); ++k) {
        const int a = axes[k];
        std::vector<std::int64_t> v;
        for (std::size_t c = 0; c < fp.shapes.size(); ++c)
            v.push_back(std::max<std::int64_t>(
                1, round_half_up(static_cast<double>(fp.shapes[c][a]) * fp.spacings[c][a] / target[k])));
        out.push_back(median_lower(v));
    }
    return out;
}

PipelineFingerprint assemble_pipeline_fingerprint(const DatasetFingerprint& fp, const PlannerOptions& options) {
    if (fp.n_cases < 1) throw Error(ErrorCode::EmptyInput, "fingerprint describes no cases");
    std::vector<NormalizationScheme> norm;
    for (std::size_t c = 0; c < fp.modalities.size(); ++c) norm.push_back(select_normalization(fp, c));
    const int channels = static_cast<int>(fp.modalities.size());

    const Spacing3 t3 = target_spacing_fullres(fp);
    const std::vector<double> target3(t3.begin(), t3.end());
    UNetPlan fullres = plan_unet(median_resampled_shape(fp, {0, 1, 2}, target3), target3, fp.total_voxels,
                                 options.model_3d, PlanKind::U3D_FULLRES);
    fullres.normalization = norm;
    fullres.input_channels = channels;

    const PlaneSelection sel = target_spacing_2d(fp);
    const std::vector<int> axes2{sel.axes[0], sel.axes[1]};
    const std::vector<double> target2{sel.spacing[0], sel.spacing[1]};
    UNetPlan plan2d = plan_unet(median_resampled_shape(fp, axes2, target2), target2, fp.total_voxels,
                                options.model_2d, PlanKind::U2D);
    plan2d.plane_axes = axes2;
    plan2d.normalization = norm;
    plan2d.input_channels = channels;

    PipelineFingerprint out;
    out.fingerprint_ref = options.fingerprint_ref;
    out.tool_version = tool_version();
    out.budget_3d = options.model_3d.budget;
    out.budget_2d = options.model_2d.budget;
    out.cascade_enabled = cascade_required(fullres);
    std::vector<UNetPlan> all{plan2d, fullres};
    if (out.cascade_enabled) {
        all.push_back(plan_lowres(fullres, fp.total_voxels, options.model_3d));
        UNetPlan cascade = fullres;
        cascade.kind = PlanKind::U3D_CASCADE_FULLRES;
        cascade.input_channels = channels + fp.n_classes;
        all.push_back(cascade);
    }
    for (auto& p : all)
        if (options.configs.empty() || options.configs.count(p.kind)) out.plans.push_back(std::move(p));
    return out;
}

}  // namespace segplan
