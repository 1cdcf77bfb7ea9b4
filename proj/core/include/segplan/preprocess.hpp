// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <vector>

#include "segplan/planner.hpp"
#include "segplan/volume.hpp"

namespace segplan {

enum class Interp { Spline3, Linear, Nearest };

/// Interpolation choices; an image is anisotropic when max/min spacing exceeds the threshold.
struct ResamplingPolicy {
    Interp data_interp = Interp::Spline3;
    Interp label_interp = Interp::Linear;
    Interp out_of_plane_interp = Interp::Nearest;
    double anisotropy_threshold = 3.0;
};

/// round_half_up(shape * spacing / target) per axis. Throws DegenerateTarget.
Shape3 resampled_shape(const Shape3& shape, const Spacing3& spacing, const Spacing3& target);

/// Resamples one line of samples to n_out samples with pixel-centre alignment.
/// Spline3 uses a prefiltered cubic B-spline with mirror boundaries.
std::vector<double> resample_line(const std::vector<double>& in, std::int64_t n_out, Interp interp);

/// Resamples a volume to the target spacing. Axes whose extent does not change are copied.
Volume resample_volume(const Volume& vol, const Spacing3& target, const ResamplingPolicy& policy = {});

/// One-hot interpolation followed by argmax (ties to the lower class).
LabelVolume resample_labels(const LabelVolume& labels, const Spacing3& target, const ResamplingPolicy& policy = {});

/// Applies a normalization scheme. MaskedZScorePerImage requires a mask of the same size.
/// Throws ZeroVariance when the standard deviation is below 1e-8.
Volume normalize(const Volume& vol, const NormalizationScheme& scheme, const std::vector<std::uint8_t>* mask = nullptr);

/// Target spacing of a plan for an image with the given spacing (2D plans keep the out-of-plane spacing).
Spacing3 plan_target_spacing(const UNetPlan& plan, const Spacing3& image_spacing);

/// Crop, resample to the plan spacing, normalize each channel.
Case preprocess_case(const Case& c, const UNetPlan& plan, const ResamplingPolicy& policy = {});

}  // namespace segplan
