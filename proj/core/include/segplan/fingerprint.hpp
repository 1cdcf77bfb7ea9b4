// SPDX-License-Identifier: MIT
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "segplan/volume.hpp"

namespace segplan {

/// Inclusive voxel bounding box.
struct BoundingBox {
    Shape3 lo{0, 0, 0};
    Shape3 hi{0, 0, 0};

    Shape3 extent() const noexcept { return {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1}; }
    bool operator==(const BoundingBox&) const = default;
};

/// Tight box around voxels where any channel is nonzero; full extent when there are none.
BoundingBox nonzero_bbox(const Case& c);
/// Restricts all channels and the label to the box.
Case crop_case(const Case& c, const BoundingBox& box);
/// Crops a case to its nonzero region.
std::pair<Case, BoundingBox> crop_to_nonzero(const Case& c);

/// Upper bound on foreground intensity samples kept per case and channel.
inline constexpr std::size_t kMaxForegroundSamples = 10000;

/// Per-case statistics gathered before aggregation.
struct CaseFingerprint {
    std::string id;
    Shape3 shape_before_crop{1, 1, 1};
    Shape3 shape_after_crop{1, 1, 1};
    Spacing3 spacing{1.0, 1.0, 1.0};
    std::vector<int> classes_present;
    int num_classes = 0;
    std::vector<std::string> modalities;
    /// Per channel, intensities at label > 0 voxels (subsampled to kMaxForegroundSamples).
    std::vector<std::vector<float>> foreground_samples;
};

/// Crops the case and records shapes, classes and foreground samples.
/// Subsampling, when needed, is seeded by hash_combine(seed, hash of id). Throws NoLabel when
/// require_label is set and the case has no label.
CaseFingerprint extract_case_fingerprint(const Case& c, std::uint64_t seed = 0, bool require_label = true);

/// Intensity statistics over pooled foreground voxels of one channel.
struct ForegroundStats {
    double mean = 0.0;
    double std = 0.0;
    double p0_5 = 0.0;
    double p99_5 = 0.0;

    bool operator==(const ForegroundStats&) const = default;
};

/// Dataset-level summary consumed by the planner.
struct DatasetFingerprint {
    std::int64_t n_cases = 0;
    std::vector<std::string> case_ids;
    Shape3 median_shape{1, 1, 1};
    std::vector<Shape3> shapes;
    std::vector<Spacing3> spacings;
    std::vector<std::string> modalities;
    int n_classes = 0;
    /// One entry per channel; empty when no case had foreground.
    std::vector<ForegroundStats> foreground_stats;
    double total_voxels = 0.0;
    double crop_reduction = 0.0;

    /// Per-axis median of the spacing list (midpoint average for even counts).
    Spacing3 median_spacing() const;
    bool has_foreground_stats() const noexcept { return !foreground_stats.empty(); }

    bool operator==(const DatasetFingerprint&) const = default;
};

/// Aggregates case fingerprints after a stable sort by case id. Throws EmptyInput or InconsistentChannels.
DatasetFingerprint aggregate_dataset_fingerprint(std::vector<CaseFingerprint> cases);

/// Linear-interpolation percentile of sorted values, rank q*(n-1). Throws EmptyInput.
double percentile(const std::vector<double>& sorted_values, double q);
/// Median with the lower-middle element for even counts.
std::int64_t median_lower(std::vector<std::int64_t> values);
/// Median with the midpoint average for even counts.
double median_mid(std::vector<double> values);

/// JSON text of the fingerprint, including schema_version.
std::string fingerprint_to_json(const DatasetFingerprint& fp);
/// Parses fingerprint JSON text. Throws SchemaVersionMismatch or InvalidArgument.
DatasetFingerprint fingerprint_from_json(const std::string& text);

/// Writes the fingerprint as JSON with schema_version.
void write_fingerprint(const DatasetFingerprint& fp, const std::filesystem::path& path);
/// Throws SchemaVersionMismatch on an unknown version.
DatasetFingerprint read_fingerprint(const std::filesystem::path& path);

}  // namespace segplan
