// SPDX-License-Identifier: MIT
#include "json_support.hpp"
#include "segplan/planner.hpp"

namespace segplan {

void to_json(json& j, const NormalizationScheme& s) {
    j = json{{"scheme", to_string(s.variant)}};
    if (s.variant == NormalizationVariant::CTGlobal) {
        j["clip_low"] = s.clip_low;
        j["clip_high"] = s.clip_high;
        j["global_mean"] = s.global_mean;
        j["global_std"] = s.global_std;
    }
}

void from_json(const json& j, NormalizationScheme& s) {
    s = NormalizationScheme{};
    s.variant = normalization_variant_from_string(j.at("scheme").get<std::string>());
    if (s.variant == NormalizationVariant::CTGlobal) {
        s.clip_low = j.at("clip_low").get<double>();
        s.clip_high = j.at("clip_high").get<double>();
        s.global_mean = j.at("global_mean").get<double>();
        s.global_std = j.at("global_std").get<double>();
    }
}

void to_json(json& j, const UNetPlan& p) {
    j = json{{"kind", to_string(p.kind)},
             {"target_spacing", p.target_spacing},
             {"plane_axes", p.plane_axes},
             {"median_resampled_shape", p.median_resampled_shape},
             {"patch_size", p.patch_size},
             {"batch_size", p.batch_size},
             {"strides", p.topology.strides},
             {"kernel_sizes", p.topology.kernel_sizes},
             {"features_per_stage", p.topology.features_per_stage},
             {"pools_per_axis", p.topology.pools_per_axis},
             {"normalization", p.normalization},
             {"input_channels", p.input_channels}};
}

void from_json(const json& j, UNetPlan& p) {
    p.kind = plan_kind_from_string(j.at("kind").get<std::string>());
    p.target_spacing = j.at("target_spacing").get<std::vector<double>>();
    p.plane_axes = j.at("plane_axes").get<std::vector<int>>();
    p.median_resampled_shape = j.at("median_resampled_shape").get<std::vector<std::int64_t>>();
    p.patch_size = j.at("patch_size").get<std::vector<std::int64_t>>();
    p.batch_size = j.at("batch_size").get<int>();
    p.topology.dim = static_cast<int>(p.patch_size.size());
    p.topology.strides = j.at("strides").get<std::vector<std::vector<int>>>();
    p.topology.kernel_sizes = j.at("kernel_sizes").get<std::vector<std::vector<int>>>();
    p.topology.features_per_stage = j.at("features_per_stage").get<std::vector<int>>();
    p.topology.pools_per_axis = j.at("pools_per_axis").get<std::vector<int>>();
    p.normalization = j.at("normalization").get<std::vector<NormalizationScheme>>();
    p.input_channels = j.at("input_channels").get<int>();
}

void to_json(json& j, const BlueprintParams& b) {
    j = json{{"epochs", b.epochs},
             {"iters_per_epoch", b.iters_per_epoch},
             {"lr0", b.lr0},
             {"poly_exponent", b.poly_exponent},
             {"momentum", b.momentum},
             {"leaky_slope", b.leaky_slope},
             {"base_features", b.base_features},
             {"feature_cap_3d", b.feature_cap_3d},
             {"feature_cap_2d", b.feature_cap_2d},
             {"min_batch", b.min_batch},
             {"fg_oversample_fraction", b.fg_oversample_fraction},
             {"loss", b.loss},
             {"deep_supervision", b.deep_supervision}};
}

void from_json(const json& j, BlueprintParams& b) {
    b.epochs = j.at("epochs").get<int>();
    b.iters_per_epoch = j.at("iters_per_epoch").get<int>();
    b.lr0 = j.at("lr0").get<double>();
    b.poly_exponent = j.at("poly_exponent").get<double>();
    b.momentum = j.at("momentum").get<double>();
    b.leaky_slope = j.at("leaky_slope").get<double>();
    b.base_features = j.at("base_features").get<int>();
    b.feature_cap_3d = j.at("feature_cap_3d").get<int>();
    b.feature_cap_2d = j.at("feature_cap_2d").get<int>();
    b.min_batch = j.at("min_batch").get<int>();
    b.fg_oversample_fraction = j.at("fg_oversample_fraction").get<double>();
    b.loss = j.at("loss").get<std::string>();
    b.deep_supervision = j.at("deep_supervision").get<std::string>();
}

std::string plan_to_json(const PipelineFingerprint& p) {
    json j{{"schema_version", kSchemaVersion},
           {"tool_version", p.tool_version},
           {"fingerprint", p.fingerprint_ref},
           {"budget_3d", p.budget_3d},
           {"budget_2d", p.budget_2d},
           {"cascade_enabled", p.cascade_enabled},
           {"blueprint", p.blueprint},
           {"plans", p.plans}};
    return j.dump(2) + "\n";
}

PipelineFingerprint plan_from_json(const std::string& text) {
    const json j = parse_versioned(text, "plan");
    try {
        PipelineFingerprint p;
        p.tool_version = j.at("tool_version").get<std::string>();
        p.fingerprint_ref = j.at("fingerprint").get<std::string>();
        p.budget_3d = j.at("budget_3d").get<double>();
        p.budget_2d = j.at("budget_2d").get<double>();
        p.cascade_enabled = j.at("cascade_enabled").get<bool>();
        p.blueprint = j.at("blueprint").get<BlueprintParams>();
        p.plans = j.at("plans").get<std::vector<UNetPlan>>();
        return p;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("incomplete plan document: ") + e.what());
    }
}

void write_plan(const PipelineFingerprint& plan, const std::filesystem::path& path) {
    write_text(path, plan_to_json(plan));
}

PipelineFingerprint read_plan(const std::filesystem::path& path) { return plan_from_json(read_text(path)); }

}  // namespace segplan
