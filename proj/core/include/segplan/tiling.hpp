// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "segplan/volume.hpp"

namespace segplan {

/// Sliding-window layout over a volume of arbitrary rank.
struct TilingPlan {
    std::vector<std::int64_t> shape;
    std::vector<std::int64_t> patch;
    /// Window origins, lexicographically sorted.
    std::vector<std::vector<std::int64_t>> origins;
};

/// Origins along one axis: multiples of ceil(patch/2) below shape - patch, then shape - patch.
std::vector<std::int64_t> axis_tile_origins(std::int64_t shape, std::int64_t patch);

/// Cartesian product of the per-axis origins. Throws PatchLargerThanVolume.
TilingPlan compute_tile_origins(const std::vector<std::int64_t>& shape, const std::vector<std::int64_t>& patch);

struct GaussianConfig {
    /// sigma = patch * sigma_scale per axis.
    double sigma_scale = 1.0 / 8.0;
    /// Minimum weight relative to the maximum of 1.
    double floor = 1e-3;
};

/// Separable Gaussian centred at (patch - 1) / 2, maximum 1, floored. Last axis fastest.
std::vector<double> gaussian_importance_map(const std::vector<std::int64_t>& patch, const GaussianConfig& cfg = {});

/// Weighted average of per-window probabilities; accumulation in double.
/// Throws ShapeMismatch when block count, block shapes or weight size disagree with the plan.
ProbabilityVolume aggregate_tiles(const TilingPlan& plan, const std::vector<Tensor>& blocks,
                                  const std::vector<double>& weights, const std::vector<double>& spacing = {});

using WindowPredictor = std::function<Tensor(const Tensor&)>;

/// Average of unmirror(predict(mirror(window))) over all 2^d axis subsets.
Tensor mirror_tta_average(const WindowPredictor& predict, const Tensor& window);

/// Tiles the input, predicts each window (optionally with mirror averaging) and aggregates.
ProbabilityVolume predict_sliding_window(const Tensor& input, const std::vector<std::int64_t>& patch,
                                         const WindowPredictor& predict, bool mirror_tta,
                                         const GaussianConfig& cfg = {});

/// Unweighted mean; throws EmptyInput or GeometryMismatch.
ProbabilityVolume ensemble_average(const std::vector<ProbabilityVolume>& volumes);

/// Per-voxel argmax with ties to the lower class. Rank 2 volumes map to a single slice.
LabelVolume argmax_labels(const ProbabilityVolume& probs);

}  // namespace segplan
