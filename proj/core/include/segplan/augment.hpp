// SPDX-License-Identifier: MIT
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "segplan/rng.hpp"
#include "segplan/volume.hpp"

namespace segplan {

/// Application probabilities and value ranges of the augmentation pipeline.
struct AugmentationConfig {
    double p_rotation = 0.2;
    double p_scale = 0.2;
    double rotation_iso_3d = 30.0;
    double rotation_in_plane = 180.0;
    double rotation_aniso_2d = 15.0;
    double scale_low = 0.7, scale_high = 1.4;
    double p_noise = 0.15;
    double noise_variance_high = 0.1;
    double p_blur_sample = 0.2, p_blur_channel = 0.5;
    double blur_sigma_low = 0.5, blur_sigma_high = 1.5;
    double blur_truncate = 4.0;
    double p_brightness = 0.15;
    double brightness_low = 0.7, brightness_high = 1.3;
    double p_contrast = 0.15;
    double contrast_low = 0.65, contrast_high = 1.5;
    double p_lowres_sample = 0.25, p_lowres_channel = 0.5;
    double lowres_low = 1.0, lowres_high = 2.0;
    double p_gamma = 0.15, p_gamma_inverted = 0.15;
    double gamma_low = 0.7, gamma_high = 1.5;
    double p_mirror = 0.5;
    double anisotropy_ratio = 3.0;
};

/// Target patch of an augmented sample; anisotropy is derived from the sizes.
struct PatchGeometry {
    std::vector<std::int64_t> patch_size;
    int channels = 1;

    int dim() const noexcept { return static_cast<int>(patch_size.size()); }
    /// Largest edge at least three times the smallest.
    bool anisotropic(double ratio = 3.0) const;
    /// Axis of smallest extent (the out-of-plane axis for anisotropic 3D patches).
    int out_of_plane_axis() const;
    /// Axes that rotate and that the low-resolution simulation touches.
    std::vector<int> in_plane_axes(double ratio = 3.0) const;
    /// Throws InvalidArgument unless dim is 2 or 3 and every size is positive.
    void validate() const;
};

/// Sampled augmentation; values of transforms that were not applied are neutral.
struct AugmentationParams {
    bool rotation_applied = false;
    /// Degrees; angle k rotates the plane of the two axes other than k. 2D patches use angles[0].
    std::array<double, 3> angles{0.0, 0.0, 0.0};
    bool scale_applied = false;
    double scale = 1.0;
    bool noise_applied = false;
    double noise_variance = 0.0;
    std::uint64_t noise_seed = 0;
    bool blur_applied = false;
    /// Per channel, 0 when the channel is not blurred.
    std::vector<double> blur_sigma;
    bool brightness_applied = false;
    double brightness = 1.0;
    bool contrast_applied = false;
    double contrast = 1.0;
    bool lowres_applied = false;
    /// Per channel, 1 when the channel is not downsampled.
    std::vector<double> lowres_factor;
    bool gamma_inverted_applied = false;
    double gamma_inverted = 1.0;
    bool gamma_applied = false;
    double gamma = 1.0;
    std::vector<int> mirror_axes;

    bool operator==(const AugmentationParams&) const = default;
};

AugmentationParams sample_params(RngStream& rng, const PatchGeometry& geom, const AugmentationConfig& cfg = {});

/// Row-major rotation matrix of the sampled angles (identity when rotation is not applied); 2x2 for 2D.
std::vector<double> rotation_matrix(const AugmentationParams& params, int dim);

/// Per-axis margin so that the inverse map of these parameters stays inside the oversized crop.
std::vector<std::int64_t> required_margin(const std::vector<std::int64_t>& patch, const AugmentationParams& params);

/// Per-axis margin that covers every rotation and scale the sampler can produce for this geometry.
std::vector<std::int64_t> oversized_margin(const PatchGeometry& geom, const AugmentationConfig& cfg = {});

/// Rotation and scaling as one inverse coordinate map src = c_in + R^T (o - c_out) / scale, single
/// interpolation (order 1 linear, 0 nearest), zero outside the crop. Output has the target patch shape.
/// Throws MarginTooSmall when a patch corner maps outside the crop.
Tensor spatial_transform(const Tensor& crop, const AugmentationParams& params, const std::vector<std::int64_t>& patch,
                         int order = 1);

/// Noise, blur, brightness, contrast, low resolution and gamma, in that order.
Tensor intensity_transform(const Tensor& patch, const AugmentationParams& params, const PatchGeometry& geom,
                           const AugmentationConfig& cfg = {});

/// Normalized, symmetric Gaussian kernel truncated at truncate * sigma.
std::vector<double> gaussian_kernel(double sigma, double truncate = 4.0);

/// Reverses the selected spatial axes.
Tensor mirror(const Tensor& patch, const std::vector<int>& axes);

enum class MorphOp { Dilate, Erode, Open, Close };

/// Sampled cascade mask augmentation.
struct CascadeMaskParams {
    bool morph_applied = false;
    MorphOp op = MorphOp::Dilate;
    double radius = 1.0;
    /// Foreground labels in application order.
    std::vector<int> label_order;
    bool remove_components = false;

    bool operator==(const CascadeMaskParams&) const = default;
};

struct CascadeMaskConfig {
    double p_morph = 0.4;
    double radius_low = 1.0, radius_high = 8.0;
    double p_remove = 0.2;
    double remove_fraction = 0.15;
};

/// Throws NotOneHot unless every voxel has exactly one channel equal to 1 and the rest 0.
void check_one_hot(const Tensor& mask);

CascadeMaskParams sample_cascade_params(RngStream& rng, int channels, const CascadeMaskConfig& cfg = {});
Tensor apply_cascade_mask(const Tensor& mask, const CascadeMaskParams& params, const CascadeMaskConfig& cfg = {});
/// Samples and applies the cascade mask augmentation. Channel 0 is background.
Tensor cascade_mask_transform(const Tensor& mask, RngStream& rng, const CascadeMaskConfig& cfg = {});

struct PatchSample {
    Shape3 origin{0, 0, 0};
    /// Foreground class the patch is centred on, or -1.
    int forced_class = -1;
};

struct PatchSampling {
    std::vector<PatchSample> samples;
    /// Set when foreground oversampling was requested but the label has no foreground.
    bool no_foreground = false;
};

/// Number of forced-foreground samples: max(1, round(batch / 3)).
int forced_foreground_count(int batch);

/// Origins of a batch; the last forced_foreground_count slots are centred on a random voxel of a
/// random present foreground class. Origins may be negative or exceed the volume when the patch is
/// larger than the volume (the crop is zero padded).
PatchSampling sample_patch_origins(const LabelVolume& label, const Shape3& patch, int batch, RngStream& rng);

/// Zero-padded crop of all channels; rank 2 patches take a slice at origin[0].
Tensor extract_patch(const std::vector<Volume>& channels, const Shape3& origin, const std::vector<std::int64_t>& size);
Tensor extract_label_patch(const LabelVolume& label, const Shape3& origin, const std::vector<std::int64_t>& size);

/// Sampled parameters applied to an oversized crop: spatial, intensity (data only), mirror.
struct AugmentedSample {
    Tensor data;
    Tensor seg;
};
AugmentedSample augment_sample(const Tensor& data_crop, const Tensor& seg_crop, const AugmentationParams& params,
                               const PatchGeometry& geom, const AugmentationConfig& cfg = {});

}  // namespace segplan
