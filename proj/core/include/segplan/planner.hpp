// SPDX-License-Identifier: MIT
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "segplan/fingerprint.hpp"

namespace segplan {

enum class NormalizationVariant { ZScorePerImage, MaskedZScorePerImage, CTGlobal };

const char* to_string(NormalizationVariant v) noexcept;
NormalizationVariant normalization_variant_from_string(const std::string& s);

/// Intensity normalization of one channel. Clip and global values are used by CTGlobal only.
struct NormalizationScheme {
    NormalizationVariant variant = NormalizationVariant::ZScorePerImage;
    double clip_low = 0.0;
    double clip_high = 0.0;
    double global_mean = 0.0;
    double global_std = 1.0;

    bool operator==(const NormalizationScheme&) const = default;
};

/// Compact U-Net description: one kernel entry per stage, one stride entry per downsampling step.
struct TopologySpec {
    int dim = 3;
    std::vector<std::vector<int>> kernel_sizes;
    std::vector<std::vector<int>> strides;
    std::vector<int> features_per_stage;
    std::vector<int> pools_per_axis;

    bool operator==(const TopologySpec&) const = default;
};

enum class PlanKind { U2D, U3D_FULLRES, U3D_LOWRES, U3D_CASCADE_FULLRES };

/// "2d", "3d_fullres", "3d_lowres", "3d_cascade_fullres".
const char* to_string(PlanKind k) noexcept;
PlanKind plan_kind_from_string(const std::string& s);

/// One network configuration.
struct UNetPlan {
    PlanKind kind = PlanKind::U3D_FULLRES;
    /// One entry per plane axis (2D) or per axis (3D).
    std::vector<double> target_spacing;
    /// Volume axes the network operates on: two axes for 2D, {0,1,2} for 3D.
    std::vector<int> plane_axes;
    std::vector<std::int64_t> median_resampled_shape;
    std::vector<std::int64_t> patch_size;
    int batch_size = 2;
    TopologySpec topology;
    std::vector<NormalizationScheme> normalization;
    /// Image channels plus, for the cascade second stage, one channel per foreground class.
    int input_channels = 1;

    bool operator==(const UNetPlan&) const = default;
};

/// Fixed training constants.
struct BlueprintParams {
    int epochs = 1000;
    int iters_per_epoch = 250;
    double lr0 = 0.01;
    double poly_exponent = 0.9;
    double momentum = 0.99;
    double leaky_slope = 0.01;
    int base_features = 32;
    int feature_cap_3d = 320;
    int feature_cap_2d = 512;
    int min_batch = 2;
    double fg_oversample_fraction = 1.0 / 3.0;
    std::string loss = "CE+Dice";
    std::string deep_supervision = "all but the two lowest resolutions";

    bool operator==(const BlueprintParams&) const = default;
};

/// Memory budget in abstract cost units (voxel x feature channel x batch element).
struct MemoryModel {
    double budget = 0.0;
    double cost_per_unit = 1.0;
    std::string anchor;
};

/// Complete bundle of configurations for a dataset.
struct PipelineFingerprint {
    std::string fingerprint_ref;
    BlueprintParams blueprint;
    std::vector<UNetPlan> plans;
    bool cascade_enabled = false;
    std::string tool_version;
    double budget_3d = 0.0;
    double budget_2d = 0.0;

    /// First plan of the given kind, if present.
    const UNetPlan* find(PlanKind kind) const noexcept;
    bool operator==(const PipelineFingerprint&) const = default;
};

/// Multiplier of the Liver 128^3 / batch 2 anchor cost that defines the reference 3D budget.
inline constexpr double kReferenceBudgetScale3d = 1.21;
/// Batches of the Liver 512^2 network that define the reference 2D budget.
inline constexpr double kReferenceBatches2d = 12.5;
/// Coverage below which the cascade is configured.
inline constexpr double kCascadeCoverage = 0.125;
/// Coverage the low-resolution patch must reach.
inline constexpr double kLowresCoverage = 0.25;
/// Fraction of the dataset voxels a batch may cover.
inline constexpr double kBatchVoxelFraction = 0.05;
/// Iteration cap of the low-resolution spacing search.
inline constexpr int kLowresMaxIterations = 10000;

NormalizationScheme select_normalization(const DatasetFingerprint& fp, std::size_t channel);

/// Per-axis median spacing, with the 10th percentile on the lowest-resolution axis for
/// datasets whose median spacing and median shape are both anisotropic beyond 3.
Spacing3 target_spacing_fullres(const DatasetFingerprint& fp);

struct PlaneSelection {
    std::array<int, 2> axes{1, 2};
    std::array<double, 2> spacing{1.0, 1.0};
};

/// The two lowest-spacing axes (ties go to trailing axes) and their median spacings.
PlaneSelection target_spacing_2d(const DatasetFingerprint& fp);

/// Derives strides and kernels from fractional patch sizes and spacings (2 or 3 axes).
TopologySpec configure_topology(const std::vector<double>& patch, const std::vector<double>& spacing);

/// Rounds each axis up to a multiple of 2^pools.
std::vector<std::int64_t> pad_for_pooling(const std::vector<double>& raw_patch, const std::vector<int>& pools_per_axis);

/// batch x sum over stages of voxels x features, encoder and decoder stages counted once each.
double estimate_memory(const TopologySpec& topology, const std::vector<std::int64_t>& patch, int batch,
                       const MemoryModel& model = {});

MemoryModel reference_memory_model_3d();
MemoryModel reference_memory_model_2d();

/// Patch, topology and batch for a median resampled shape under a budget. Throws BudgetTooSmall.
UNetPlan plan_unet(const std::vector<std::int64_t>& median_shape, const std::vector<double>& spacing,
                   double total_voxels, const MemoryModel& model, PlanKind kind);

/// True when the patch covers less than 12.5% of the median resampled shape.
bool cascade_required(const UNetPlan& fullres);

/// Low-resolution configuration reached by 1% spacing increments. Throws NoConvergence.
UNetPlan plan_lowres(const UNetPlan& fullres, double total_voxels, const MemoryModel& model);

/// lr0 * (1 - epoch/epoch_max)^exponent.
double poly_lr(double epoch, double epoch_max, double lr0, double exponent = 0.9);

/// Loss weights of the n-2 highest resolutions, halving per level, normalized. Throws TooFewResolutions.
std::vector<double> deep_supervision_weights(int n_resolutions);

/// Median over cases of round(shape * spacing / target) on the given axes (lower-middle median).
std::vector<std::int64_t> median_resampled_shape(const DatasetFingerprint& fp, const std::vector<int>& axes,
                                                 const std::vector<double>& target);

struct PlannerOptions {
    MemoryModel model_3d = reference_memory_model_3d();
    MemoryModel model_2d = reference_memory_model_2d();
    /// Kinds to emit; empty means all applicable.
    std::set<PlanKind> configs;
    std::string fingerprint_ref;
};

PipelineFingerprint assemble_pipeline_fingerprint(const DatasetFingerprint& fp, const PlannerOptions& options = {});

/// Plan document I/O (JSON with schema_version).
std::string plan_to_json(const PipelineFingerprint& plan);
PipelineFingerprint plan_from_json(const std::string& text);
void write_plan(const PipelineFingerprint& plan, const std::filesystem::path& path);
PipelineFingerprint read_plan(const std::filesystem::path& path);

/// Library version string recorded in plan documents.
const char* tool_version() noexcept;

}  // namespace segplan
