// SPDX-License-Identifier: MIT
#include "segplan/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "segplan/error.hpp"
#include "segplan/fingerprint.hpp"

namespace segplan {

namespace {

constexpr double kZeroVariance = 1e-8;

std::int64_t mirror_index(std::int64_t k, std::int64_t n) {
    if (n == 1) return 0;
    const std::int64_t period = 2 * (n - 1);
    k %= period;
    if (k < 0) k += period;
    return k < n ? k : period - k;
}

std::int64_t clamp_index(std::int64_t k, std::int64_t n) { return std::clamp<std::int64_t>(k, 0, n - 1); }

void bspline_prefilter(std::vector<double>& c) {
    const auto n = static_cast<std::int64_t>(c.size());
    if (n == 1) return;
    const double z = std::sqrt(3.0) - 2.0;
    const double lambda = (1.0 - z) * (1.0 - 1.0 / z);
    for (double& v : c) v *= lambda;
    const auto horizon = static_cast<std::int64_t>(std::ceil(std::log(1e-12) / std::log(std::fabs(z))));
    if (horizon < n) {
        double zn = z;
        double sum = c[0];
        for (std::int64_t k = 1; k < horizon; ++k) {
            sum += zn * c[k];
            zn *= z;
        }
        c[0] = sum;
    } else {
        double zn = z;
        const double iz = 1.0 / z;
        double z2n = std::pow(z, static_cast<double>(n - 1));
        double sum = c[0] + z2n * c[n - 1];
        z2n *= z2n * iz;
        for (std::int64_t k = 1; k <= n - 2; ++k) {
            sum += (zn + z2n) * c[k];
            zn *= z;
            z2n *= iz;
        }
        c[0] = sum / (1.0 - zn * zn);
    }
    for (std::int64_t k = 1; k < n; ++k) c[k] += z * c[k - 1];
    c[n - 1] = (z / (z * z - 1.0)) * (z * c[n - 2] + c[n - 1]);
    for (std::int64_t k = n - 2; k >= 0; --k) c[k] = z * (c[k + 1] - c[k]);
}

double source_coordinate(std::int64_t j, std::int64_t n_in, std::int64_t n_out) {
    return (static_cast<double>(j) + 0.5) * static_cast<double>(n_in) / static_cast<double>(n_out) - 0.5;
}

/// Per output index along one axis: up to two source indices with weights (linear / nearest).
struct Taps {
    std::array<std::int64_t, 2> idx{0, 0};
    std::array<double, 2> w{1.0, 0.0};
};

std::vector<Taps> linear_taps(std::int64_t n_in, std::int64_t n_out, Interp interp) {
    std::vector<Taps> taps(static_cast<std::size_t>(n_out));
    for (std::int64_t j = 0; j < n_out; ++j) {
        Taps& t = taps[static_cast<std::size_t>(j)];
        if (n_in == n_out) {
            t.idx = {j, j};
            continue;
        }
        const double x = source_coordinate(j, n_in, n_out);
        if (interp == Interp::Nearest) {
            const auto k = clamp_index(static_cast<std::int64_t>(std::floor(x + 0.5)), n_in);
            t.idx = {k, k};
            continue;
        }
        const double xc = std::clamp(x, 0.0, static_cast<double>(n_in - 1));
        const auto i0 = static_cast<std::int64_t>(std::floor(xc));
        const double f = xc - static_cast<double>(i0);
        t.idx = {i0, clamp_index(i0 + 1, n_in)};
        t.w = {1.0 - f, f};
    }
    return taps;
}

/// Applies a 1D operation along one axis of a 3D grid of doubles.
std::vector<double> resample_axis(const std::vector<double>& data, const Shape3& shape, int axis, std::int64_t n_out,
                                  Interp interp) {
    Shape3 out_shape = shape;
    out_shape[axis] = n_out;
    std::vector<double> out(static_cast<std::size_t>(voxel_count(out_shape)));
    const std::int64_t n_in = shape[axis];
    std::array<std::int64_t, 3> stride_in{shape[1] * shape[2], shape[2], 1};
    std::array<std::int64_t, 3> stride_out{out_shape[1] * out_shape[2], out_shape[2], 1};
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    std::vector<double> line(static_cast<std::size_t>(n_in));
    for (std::int64_t u = 0; u < shape[a1]; ++u)
        for (std::int64_t v = 0; v < shape[a2]; ++v) {
            const std::int64_t base_in = u * stride_in[a1] + v * stride_in[a2];
            const std::int64_t base_out = u * stride_out[a1] + v * stride_out[a2];
            for (std::int64_t k = 0; k < n_in; ++k) line[static_cast<std::size_t>(k)] = data[static_cast<std::size_t>(base_in + k * stride_in[axis])];
            const auto res = resample_line(line, n_out, interp);
            for (std::int64_t k = 0; k < n_out; ++k)
                out[static_cast<std::size_t>(base_out + k * stride_out[axis])] = res[static_cast<std::size_t>(k)];
        }
    return out;
}

/// Axis with the largest spacing if the image is anisotropic, else -1.
int low_resolution_axis(const Spacing3& spacing, double threshold) {
    const auto [mn, mx] = std::minmax_element(spacing.begin(), spacing.end());
    if (*mx / *mn > threshold) return static_cast<int>(mx - spacing.begin());
    return -1;
}

void check_target(const Spacing3& target) {
    for (double t : target)
        if (!(t > 0.0) || !std::isfinite(t)) throw Error(ErrorCode::DegenerateTarget, "target spacing must be positive");
}

}  // namespace

Shape3 resampled_shape(const Shape3& shape, const Spacing3& spacing, const Spacing3& target) {
    check_target(target);
    Shape3 out{};
    for (int a = 0; a < 3; ++a)
        out[a] = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::floor(static_cast<double>(shape[a]) * spacing[a] / target[a] + 0.5)));
    return out;
}

std::vector<double> resample_line(const std::vector<double>& in, std::int64_t n_out, Interp interp) {
    const auto n_in = static_cast<std::int64_t>(in.size());
    if (n_in < 1 || n_out < 1) throw Error(ErrorCode::InvalidArgument, "line lengths must be positive");
    if (n_in == n_out) return in;
    std::vector<double> out(static_cast<std::size_t>(n_out));
    if (interp != Interp::Spline3) {
        const auto taps = linear_taps(n_in, n_out, interp);
        for (std::int64_t j = 0; j < n_out; ++j) {
            const Taps& t = taps[static_cast<std::size_t>(j)];
            out[static_cast<std::size_t>(j)] = t.w[0] * in[static_cast<std::size_t>(t.idx[0])] +
                                               (t.w[1] != 0.0 ? t.w[1] * in[static_cast<std::size_t>(t.idx[1])] : 0.0);
        }
        return out;
    }
    std::vector<double> c = in;
    bspline_prefilter(c);
    for (std::int64_t j = 0; j < n_out; ++j) {
        const double x = source_coordinate(j, n_in, n_out);
        const auto i = static_cast<std::int64_t>(std::floor(x));
        const double t = x - static_cast<double>(i);
        const double t2 = t * t;
        const double t3 = t2 * t;
        const double w[4] = {(1.0 - t) * (1.0 - t) * (1.0 - t) / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
                             (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0};
        double v = 0.0;
        for (int k = 0; k < 4; ++k) v += w[k] * c[static_cast<std::size_t>(mirror_index(i - 1 + k, n_in))];
        out[static_cast<std::size_t>(j)] = v;
    }
    return out;
}

Volume resample_volume(const Volume& vol, const Spacing3& target, const ResamplingPolicy& policy) {
    vol.validate();
    const Shape3 out_shape = resampled_shape(vol.shape, vol.spacing, target);
    const int low_axis = low_resolution_axis(vol.spacing, policy.anisotropy_threshold);
    std::vector<double> data(vol.data.begin(), vol.data.end());
    Shape3 shape = vol.shape;
    for (int a = 0; a < 3; ++a) {
        if (out_shape[a] == shape[a]) continue;
        const Interp interp = a == low_axis ? policy.out_of_plane_interp : policy.data_interp;
        data = resample_axis(data, shape, a, out_shape[a], interp);
        shape[a] = out_shape[a];
    }
    Volume out;
    out.shape = out_shape;
    out.spacing = target;
    out.modality = vol.modality;
    out.data.assign(data.begin(), data.end());
    return out;
}

LabelVolume resample_labels(const LabelVolume& labels, const Spacing3& target, const ResamplingPolicy& policy) {
    labels.validate();
    const Shape3 out_shape = resampled_shape(labels.shape, labels.spacing, target);
    LabelVolume out(out_shape, target, labels.num_classes);
    if (out_shape == labels.shape) {
        out.data = labels.data;
        return out;
    }
    const int low_axis = low_resolution_axis(labels.spacing, policy.anisotropy_threshold);
    std::array<std::vector<Taps>, 3> taps;
    for (int a = 0; a < 3; ++a)
        taps[a] = linear_taps(labels.shape[a], out_shape[a], a == low_axis ? policy.out_of_plane_interp : policy.label_interp);
    std::array<std::uint16_t, 8> lab{};
    std::array<double, 8> acc{};
    for (std::int64_t i0 = 0; i0 < out_shape[0]; ++i0)
        for (std::int64_t i1 = 0; i1 < out_shape[1]; ++i1)
            for (std::int64_t i2 = 0; i2 < out_shape[2]; ++i2) {
                const Taps& t0 = taps[0][static_cast<std::size_t>(i0)];
                const Taps& t1 = taps[1][static_cast<std::size_t>(i1)];
                const Taps& t2 = taps[2][static_cast<std::size_t>(i2)];
                int used = 0;
                for (int a = 0; a < 2; ++a) {
                    if (t0.w[a] == 0.0) continue;
                    for (int b = 0; b < 2; ++b) {
                        if (t1.w[b] == 0.0) continue;
                        for (int c = 0; c < 2; ++c) {
                            if (t2.w[c] == 0.0) continue;
                            const double w = t0.w[a] * t1.w[b] * t2.w[c];
                            const std::uint16_t l = labels.at(t0.idx[a], t1.idx[b], t2.idx[c]);
                            int k = 0;
                            while (k < used && lab[k] != l) ++k;
                            if (k == used) {
                                lab[k] = l;
                                acc[k] = 0.0;
                                ++used;
                            }
                            acc[k] += w;
                        }
                    }
                }
                int best = 0;
                for (int k = 1; k < used; ++k)
                    if (acc[k] > acc[best] || (acc[k] == acc[best] && lab[k] < lab[best])) best = k;
                out.at(i0, i1, i2) = lab[best];
            }
    return out;
}

Volume normalize(const Volume& vol, const NormalizationScheme& scheme, const std::vector<std::uint8_t>* mask) {
    vol.validate();
    Volume out = vol;
    switch (scheme.variant) {
        case NormalizationVariant::CTGlobal: {
            if (!(scheme.global_std > 0.0)) throw Error(ErrorCode::ZeroVariance, "CT global std must be positive");
            for (float& v : out.data) {
                const double c = std::clamp(static_cast<double>(v), scheme.clip_low, scheme.clip_high);
                v = static_cast<float>((c - scheme.global_mean) / scheme.global_std);
            }
            return out;
        }
        case NormalizationVariant::ZScorePerImage:
        case NormalizationVariant::MaskedZScorePerImage: {
            const bool masked = scheme.variant == NormalizationVariant::MaskedZScorePerImage;
            if (masked && (!mask || mask->size() != vol.data.size()))
                throw Error(ErrorCode::InvalidArgument, "masked normalization needs a mask of the image size");
            double sum = 0.0;
            double n = 0.0;
            for (std::size_t i = 0; i < vol.data.size(); ++i)
                if (!masked || (*mask)[i]) {
                    sum += vol.data[i];
                    n += 1.0;
                }
            if (n == 0.0) throw Error(ErrorCode::ZeroVariance, "normalization mask is empty");
            const double mean = sum / n;
            double ss = 0.0;
            for (std::size_t i = 0; i < vol.data.size(); ++i)
                if (!masked || (*mask)[i]) ss += (vol.data[i] - mean) * (vol.data[i] - mean);
            const double sd = std::sqrt(ss / n);
            if (sd < kZeroVariance) throw Error(ErrorCode::ZeroVariance, "image intensity is constant");
            for (std::size_t i = 0; i < out.data.size(); ++i)
                out.data[i] = (!masked || (*mask)[i]) ? static_cast<float>((vol.data[i] - mean) / sd) : 0.0f;
            return out;
        }
    }
    return out;
}

Spacing3 plan_target_spacing(const UNetPlan& plan, const Spacing3& image_spacing) {
    if (plan.plane_axes.size() != plan.target_spacing.size())
        throw Error(ErrorCode::InvalidArgument, "plan axes and target spacing differ in rank");
    Spacing3 target = image_spacing;
    for (std::size_t k = 0; k < plan.plane_axes.size(); ++k) target[plan.plane_axes[k]] = plan.target_spacing[k];
    return target;
}

Case preprocess_case(const Case& c, const UNetPlan& plan, const ResamplingPolicy& policy) {
    if (plan.normalization.size() != c.channels.size())
        throw Error(ErrorCode::InconsistentChannels, "plan normalization does not match the case channel count");
    Case cropped = crop_to_nonzero(c).first;
    const Spacing3 target = plan_target_spacing(plan, cropped.channels.front().spacing);

    LabelVolume nonzero(cropped.channels.front().shape, cropped.channels.front().spacing, 1);
    for (const auto& ch : cropped.channels)
        for (std::size_t i = 0; i < ch.data.size(); ++i)
            if (ch.data[i] != 0.0f) nonzero.data[i] = 1;
    const LabelVolume mask_resampled = resample_labels(nonzero, target, policy);
    const std::vector<std::uint8_t> mask(mask_resampled.data.begin(), mask_resampled.data.end());

    Case out;
    out.id = c.id;
    for (std::size_t k = 0; k < cropped.channels.size(); ++k)
        out.channels.push_back(normalize(resample_volume(cropped.channels[k], target, policy), plan.normalization[k], &mask));
    if (cropped.label) out.label = resample_labels(*cropped.label, target, policy);
    return out;
}

}  // namespace segplan
