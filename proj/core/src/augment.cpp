// SPDX-License-Identifier: MIT
#include "segplan/augment.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "segplan/error.hpp"
#include "segplan/morphology.hpp"
#include "segplan/preprocess.hpp"

namespace segplan {

namespace {

constexpr double kEps = 1e-9;

/// Spatial shape of a rank 2 or 3 tensor as a 3D shape with leading 1 for rank 2.
Shape3 embed_shape(const std::vector<std::int64_t>& shape) {
    if (shape.size() == 3) return {shape[0], shape[1], shape[2]};
    if (shape.size() == 2) return {1, shape[0], shape[1]};
    throw Error(ErrorCode::InvalidArgument, "tensors must have spatial rank 2 or 3");
}

int embed_axis(int axis, std::size_t rank) { return rank == 2 ? axis + 1 : axis; }

void check_tensor(const Tensor& t) {
    if (t.channels < 1 || t.data.size() != static_cast<std::size_t>(t.spatial_size() * t.channels))
        throw Error(ErrorCode::ShapeMismatch, "tensor data size does not match its shape");
}

/// Replaces every line along one axis with fn(line), which may change the line length.
void apply_along_axis(std::vector<double>& data, Shape3& shape, int axis,
                      const std::function<std::vector<double>(const std::vector<double>&)>& fn) {
    const std::int64_t n_in = shape[axis];
    std::vector<double> line(static_cast<std::size_t>(n_in));
    std::vector<double> out;
    Shape3 out_shape = shape;
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    const std::array<std::int64_t, 3> si{shape[1] * shape[2], shape[2], 1};
    for (std::int64_t u = 0; u < shape[a1]; ++u)
        for (std::int64_t v = 0; v < shape[a2]; ++v) {
            const std::int64_t base = u * si[a1] + v * si[a2];
            for (std::int64_t k = 0; k < n_in; ++k) line[static_cast<std::size_t>(k)] = data[static_cast<std::size_t>(base + k * si[axis])];
            const auto res = fn(line);
            if (out.empty()) {
                out_shape[axis] = static_cast<std::int64_t>(res.size());
                out.resize(static_cast<std::size_t>(voxel_count(out_shape)));
            }
            const std::array<std::int64_t, 3> so{out_shape[1] * out_shape[2], out_shape[2], 1};
            const std::int64_t base_out = u * so[a1] + v * so[a2];
            for (std::size_t k = 0; k < res.size(); ++k) out[static_cast<std::size_t>(base_out) + k * static_cast<std::size_t>(so[axis])] = res[k];
        }
    data = std::move(out);
    shape = out_shape;
}

std::vector<double> convolve_reflect(const std::vector<double>& line, const std::vector<double>& kernel) {
    const auto n = static_cast<std::int64_t>(line.size());
    const auto radius = static_cast<std::int64_t>(kernel.size() / 2);
    std::vector<double> out(line.size(), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::int64_t k = -radius; k <= radius; ++k) {
            std::int64_t j = i + k;
            const std::int64_t period = 2 * n;
            j %= period;
            if (j < 0) j += period;
            if (j >= n) j = period - 1 - j;
            acc += kernel[static_cast<std::size_t>(k + radius)] * line[static_cast<std::size_t>(j)];
        }
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

std::pair<float, float> channel_range(const float* p, std::int64_t n) {
    const auto [mn, mx] = std::minmax_element(p, p + n);
    return {*mn, *mx};
}

void apply_gamma(float* p, std::int64_t n, double gamma, bool inverted) {
    const auto [mn, mx] = channel_range(p, n);
    const double range = static_cast<double>(mx) - static_cast<double>(mn);
    if (!(range > 0.0)) return;
    for (std::int64_t i = 0; i < n; ++i) {
        const double x = (static_cast<double>(p[i]) - mn) / range;
        const double y = inverted ? 1.0 - std::pow(1.0 - x, gamma) : std::pow(x, gamma);
        p[i] = static_cast<float>(y * range + mn);
    }
}

}  // namespace

bool PatchGeometry::anisotropic(double ratio) const {
    validate();
    const auto [mn, mx] = std::minmax_element(patch_size.begin(), patch_size.end());
    return static_cast<double>(*mx) >= ratio * static_cast<double>(*mn);
}

int PatchGeometry::out_of_plane_axis() const {
    validate();
    return static_cast<int>(std::min_element(patch_size.begin(), patch_size.end()) - patch_size.begin());
}

std::vector<int> PatchGeometry::in_plane_axes(double ratio) const {
    std::vector<int> axes;
    const bool restrict = dim() == 3 && anisotropic(ratio);
    const int oop = out_of_plane_axis();
    for (int a = 0; a < dim(); ++a)
        if (!restrict || a != oop) axes.push_back(a);
    return axes;
}

void PatchGeometry::validate() const {
    if (patch_size.size() != 2 && patch_size.size() != 3) throw Error(ErrorCode::InvalidArgument, "patch must be 2D or 3D");
    for (auto s : patch_size)
        if (s < 1) throw Error(ErrorCode::InvalidArgument, "patch sizes must be positive");
    if (channels < 1) throw Error(ErrorCode::InvalidArgument, "channel count must be positive");
}

AugmentationParams sample_params(RngStream& rng, const PatchGeometry& geom, const AugmentationConfig& cfg) {
    geom.validate();
    const bool aniso = geom.anisotropic(cfg.anisotropy_ratio);
    AugmentationParams p;
    p.rotation_applied = rng.bernoulli(cfg.p_rotation);
    p.scale_applied = rng.bernoulli(cfg.p_scale);
    if (p.rotation_applied) {
        if (geom.dim() == 3 && !aniso) {
            for (double& a : p.angles) a = rng.uniform(-cfg.rotation_iso_3d, cfg.rotation_iso_3d);
        } else if (geom.dim() == 3) {
            p.angles[geom.out_of_plane_axis()] = rng.uniform(-cfg.rotation_in_plane, cfg.rotation_in_plane);
        } else {
            const double range = aniso ? cfg.rotation_aniso_2d : cfg.rotation_in_plane;
            p.angles[0] = rng.uniform(-range, range);
        }
    }
    if (p.scale_applied) p.scale = rng.uniform(cfg.scale_low, cfg.scale_high);

    p.noise_applied = rng.bernoulli(cfg.p_noise);
    if (p.noise_applied) {
        p.noise_variance = rng.uniform(0.0, cfg.noise_variance_high);
        p.noise_seed = rng.next_u64();
    }

    p.blur_sigma.assign(static_cast<std::size_t>(geom.channels), 0.0);
    p.blur_applied = rng.bernoulli(cfg.p_blur_sample);
    if (p.blur_applied)
        for (double& s : p.blur_sigma)
            if (rng.bernoulli(cfg.p_blur_channel)) s = rng.uniform(cfg.blur_sigma_low, cfg.blur_sigma_high);

    p.brightness_applied = rng.bernoulli(cfg.p_brightness);
    if (p.brightness_applied) p.brightness = rng.uniform(cfg.brightness_low, cfg.brightness_high);
    p.contrast_applied = rng.bernoulli(cfg.p_contrast);
    if (p.contrast_applied) p.contrast = rng.uniform(cfg.contrast_low, cfg.contrast_high);

    p.lowres_factor.assign(static_cast<std::size_t>(geom.channels), 1.0);
    p.lowres_applied = rng.bernoulli(cfg.p_lowres_sample);
    if (p.lowres_applied)
        for (double& f : p.lowres_factor)
            if (rng.bernoulli(cfg.p_lowres_channel)) f = rng.uniform(cfg.lowres_low, cfg.lowres_high);

    p.gamma_inverted_applied = rng.bernoulli(cfg.p_gamma_inverted);
    if (p.gamma_inverted_applied) p.gamma_inverted = rng.uniform(cfg.gamma_low, cfg.gamma_high);
    p.gamma_applied = rng.bernoulli(cfg.p_gamma);
    if (p.gamma_applied) p.gamma = rng.uniform(cfg.gamma_low, cfg.gamma_high);

    for (int a = 0; a < geom.dim(); ++a)
        if (rng.bernoulli(cfg.p_mirror)) p.mirror_axes.push_back(a);
    return p;
}

std::vector<double> rotation_matrix(const AugmentationParams& params, int dim) {
    const double deg = std::numbers::pi / 180.0;
    if (dim == 2) {
        const double a = params.rotation_applied ? params.angles[0] * deg : 0.0;
        return {std::cos(a), -std::sin(a), std::sin(a), std::cos(a)};
    }
    std::vector<double> r{1, 0, 0, 0, 1, 0, 0, 0, 1};
    if (!params.rotation_applied) return r;
    for (int k = 0; k < 3; ++k) {
        const double a = params.angles[k] * deg;
        if (a == 0.0) continue;
        const int p = k == 0 ? 1 : 0;
        const int q = k == 2 ? 1 : 2;
        std::vector<double> rk{1, 0, 0, 0, 1, 0, 0, 0, 1};
        rk[p * 3 + p] = std::cos(a);
        rk[p * 3 + q] = -std::sin(a);
        rk[q * 3 + p] = std::sin(a);
        rk[q * 3 + q] = std::cos(a);
        std::vector<double> m(9, 0.0);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int l = 0; l < 3; ++l) m[i * 3 + j] += r[i * 3 + l] * rk[l * 3 + j];
        r = m;
    }
    return r;
}

namespace {

/// Inverse map matrix M = R^T / scale in embedded 3D coordinates.
std::array<double, 9> inverse_map(const AugmentationParams& params, std::size_t rank) {
    const double s = params.scale_applied ? params.scale : 1.0;
    const auto r = rotation_matrix(params, static_cast<int>(rank));
    std::array<double, 9> m{1.0 / s, 0, 0, 0, 1.0 / s, 0, 0, 0, 1.0 / s};
    const int d = static_cast<int>(rank);
    const int off = 3 - d;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m[(i + off) * 3 + (j + off)] = r[j * d + i] / s;
    return m;
}

/// Max absolute offset per embedded axis over the patch corners after the inverse map.
std::array<double, 3> corner_extent(const Shape3& patch, const std::array<double, 9>& m) {
    std::array<double, 3> ext{0, 0, 0};
    for (int c = 0; c < 8; ++c) {
        std::array<double, 3> d{};
        for (int a = 0; a < 3; ++a) d[a] = ((c >> a) & 1 ? 0.5 : -0.5) * static_cast<double>(patch[a] - 1);
        for (int i = 0; i < 3; ++i) {
            const double v = m[i * 3] * d[0] + m[i * 3 + 1] * d[1] + m[i * 3 + 2] * d[2];
            ext[i] = std::max(ext[i], std::fabs(v));
        }
    }
    return ext;
}

}  // namespace

std::vector<std::int64_t> required_margin(const std::vector<std::int64_t>& patch, const AugmentationParams& params) {
    const Shape3 p3 = embed_shape(patch);
    const auto ext = corner_extent(p3, inverse_map(params, patch.size()));
    std::vector<std::int64_t> out;
    for (std::size_t a = 0; a < patch.size(); ++a) {
        const int e = embed_axis(static_cast<int>(a), patch.size());
        const double need = ext[e] - static_cast<double>(p3[e]) / 2.0;
        out.push_back(std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(need - kEps))));
    }
    return out;
}

std::vector<std::int64_t> oversized_margin(const PatchGeometry& geom, const AugmentationConfig& cfg) {
    geom.validate();
    std::vector<int> rotating;
    if (geom.dim() == 3 && !geom.anisotropic(cfg.anisotropy_ratio)) rotating = {0, 1, 2};
    else rotating = geom.in_plane_axes(cfg.anisotropy_ratio);
    double half_diag2 = 0.0;
    for (int a : rotating) half_diag2 += std::pow(static_cast<double>(geom.patch_size[a] - 1) / 2.0, 2);
    std::vector<std::int64_t> out;
    for (int a = 0; a < geom.dim(); ++a) {
        const bool rot = std::find(rotating.begin(), rotating.end(), a) != rotating.end();
        const double half = rot ? std::sqrt(half_diag2) : static_cast<double>(geom.patch_size[a] - 1) / 2.0;
        const double need = half / cfg.scale_low - static_cast<double>(geom.patch_size[a]) / 2.0;
        out.push_back(std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(need - kEps))));
    }
    return out;
}

Tensor spatial_transform(const Tensor& crop, const AugmentationParams& params, const std::vector<std::int64_t>& patch,
                         int order) {
    check_tensor(crop);
    if (patch.size() != crop.shape.size()) throw Error(ErrorCode::ShapeMismatch, "patch rank differs from crop rank");
    const Shape3 in = embed_shape(crop.shape);
    const Shape3 out_shape = embed_shape(patch);
    const auto m = inverse_map(params, patch.size());
    std::array<double, 3> c_in{}, c_out{};
    for (int a = 0; a < 3; ++a) {
        c_in[a] = static_cast<double>(in[a] - 1) / 2.0;
        c_out[a] = static_cast<double>(out_shape[a] - 1) / 2.0;
    }
    const auto ext = corner_extent(out_shape, m);
    for (int a = 0; a < 3; ++a)
        if (c_in[a] + ext[a] > static_cast<double>(in[a]) - 0.5 + kEps)
            throw Error(ErrorCode::MarginTooSmall, "transformed patch reads outside the oversized crop");

    Tensor out(patch, crop.channels);
    const std::int64_t n_out = voxel_count(out_shape);
    const std::int64_t n_in = voxel_count(in);
    for (std::int64_t o0 = 0; o0 < out_shape[0]; ++o0)
        for (std::int64_t o1 = 0; o1 < out_shape[1]; ++o1)
            for (std::int64_t o2 = 0; o2 < out_shape[2]; ++o2) {
                const double d[3] = {static_cast<double>(o0) - c_out[0], static_cast<double>(o1) - c_out[1],
                                     static_cast<double>(o2) - c_out[2]};
                std::array<double, 3> src{};
                for (int i = 0; i < 3; ++i) src[i] = c_in[i] + (m[i * 3] * d[0] + m[i * 3 + 1] * d[1] + m[i * 3 + 2] * d[2]);
                const std::int64_t oi = flat_index(out_shape, o0, o1, o2);
                if (order == 0) {
                    std::array<std::int64_t, 3> k{};
                    bool inside = true;
                    for (int i = 0; i < 3; ++i) {
                        k[i] = static_cast<std::int64_t>(std::floor(src[i] + 0.5));
                        inside = inside && k[i] >= 0 && k[i] < in[i];
                    }
                    if (!inside) continue;
                    const std::int64_t ii = flat_index(in, k[0], k[1], k[2]);
                    for (int c = 0; c < crop.channels; ++c) out.data[static_cast<std::size_t>(c * n_out + oi)] = crop.data[static_cast<std::size_t>(c * n_in + ii)];
                    continue;
                }
                std::array<std::int64_t, 3> base{};
                std::array<double, 3> frac{};
                for (int i = 0; i < 3; ++i) {
                    base[i] = static_cast<std::int64_t>(std::floor(src[i]));
                    frac[i] = src[i] - static_cast<double>(base[i]);
                }
                for (int c = 0; c < crop.channels; ++c) {
                    const float* ch = crop.data.data() + c * n_in;
                    double v = 0.0;
                    for (int corner = 0; corner < 8; ++corner) {
                        double w = 1.0;
                        std::array<std::int64_t, 3> k{};
                        for (int i = 0; i < 3; ++i) {
                            const int bit = (corner >> i) & 1;
                            w *= bit ? frac[i] : 1.0 - frac[i];
                            k[i] = base[i] + bit;
                        }
                        if (w == 0.0) continue;
                        if (k[0] < 0 || k[1] < 0 || k[2] < 0 || k[0] >= in[0] || k[1] >= in[1] || k[2] >= in[2]) continue;
                        v += w * ch[flat_index(in, k[0], k[1], k[2])];
                    }
                    out.data[static_cast<std::size_t>(c * n_out + oi)] = static_cast<float>(v);
                }
            }
    return out;
}

std::vector<double> gaussian_kernel(double sigma, double truncate) {
    if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "blur sigma must be positive");
    const auto radius = static_cast<std::int64_t>(std::ceil(truncate * sigma - kEps));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (std::int64_t i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

Tensor intensity_transform(const Tensor& patch, const AugmentationParams& params, const PatchGeometry& geom,
                           const AugmentationConfig& cfg) {
    check_tensor(patch);
    const Shape3 shape = embed_shape(patch.shape);
    const std::int64_t n = voxel_count(shape);
    Tensor out = patch;

    if (params.noise_applied) {
        RngStream noise(params.noise_seed);
        const double sd = std::sqrt(params.noise_variance);
        for (float& v : out.data) v = static_cast<float>(v + sd * noise.normal());
    }
    for (int c = 0; c < out.channels; ++c) {
        float* ch = out.channel(c);
        const double sigma = params.blur_applied && static_cast<std::size_t>(c) < params.blur_sigma.size() ? params.blur_sigma[static_cast<std::size_t>(c)] : 0.0;
        if (sigma > 0.0) {
            const auto kernel = gaussian_kernel(sigma, cfg.blur_truncate);
            std::vector<double> data(ch, ch + n);
            Shape3 s = shape;
            for (int a = 0; a < 3; ++a)
                if (s[a] > 1) apply_along_axis(data, s, a, [&](const std::vector<double>& l) { return convolve_reflect(l, kernel); });
            for (std::int64_t i = 0; i < n; ++i) ch[i] = static_cast<float>(data[static_cast<std::size_t>(i)]);
        }
    }
    if (params.brightness_applied)
        for (float& v : out.data) v = static_cast<float>(v * params.brightness);
    if (params.contrast_applied)
        for (int c = 0; c < out.channels; ++c) {
            float* ch = out.channel(c);
            const auto [mn, mx] = channel_range(ch, n);
            for (std::int64_t i = 0; i < n; ++i) ch[i] = std::clamp(static_cast<float>(ch[i] * params.contrast), mn, mx);
        }
    if (params.lowres_applied) {
        const auto axes = geom.in_plane_axes(cfg.anisotropy_ratio);
        for (int c = 0; c < out.channels; ++c) {
            const double f = static_cast<std::size_t>(c) < params.lowres_factor.size() ? params.lowres_factor[static_cast<std::size_t>(c)] : 1.0;
            if (f == 1.0) continue;
            float* ch = out.channel(c);
            std::vector<double> data(ch, ch + n);
            Shape3 s = shape;
            for (int a : axes) {
                const int e = embed_axis(a, patch.shape.size());
                const auto small = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(static_cast<double>(s[e]) / f + 0.5)));
                apply_along_axis(data, s, e, [&](const std::vector<double>& l) { return resample_line(l, small, Interp::Nearest); });
            }
            for (int a : axes) {
                const int e = embed_axis(a, patch.shape.size());
                const std::int64_t full = shape[e];
                apply_along_axis(data, s, e, [&](const std::vector<double>& l) { return resample_line(l, full, Interp::Spline3); });
            }
            for (std::int64_t i = 0; i < n; ++i) ch[i] = static_cast<float>(data[static_cast<std::size_t>(i)]);
        }
    }
    for (int c = 0; c < out.channels; ++c) {
        if (params.gamma_inverted_applied) apply_gamma(out.channel(c), n, params.gamma_inverted, true);
        if (params.gamma_applied) apply_gamma(out.channel(c), n, params.gamma, false);
    }
    return out;
}

Tensor mirror(const Tensor& patch, const std::vector<int>& axes) {
    check_tensor(patch);
    const std::size_t rank = patch.shape.size();
    const Shape3 s = embed_shape(patch.shape);
    std::array<bool, 3> flip{false, false, false};
    for (int a : axes) {
        if (a < 0 || static_cast<std::size_t>(a) >= rank) throw Error(ErrorCode::InvalidArgument, "mirror axis out of range");
        flip[embed_axis(a, rank)] = !flip[embed_axis(a, rank)];
    }
    Tensor out = patch;
    for (int c = 0; c < patch.channels; ++c) {
        const float* src = patch.channel(c);
        float* dst = out.channel(c);
        for (std::int64_t i0 = 0; i0 < s[0]; ++i0)
            for (std::int64_t i1 = 0; i1 < s[1]; ++i1)
                for (std::int64_t i2 = 0; i2 < s[2]; ++i2)
                    dst[flat_index(s, flip[0] ? s[0] - 1 - i0 : i0, flip[1] ? s[1] - 1 - i1 : i1, flip[2] ? s[2] - 1 - i2 : i2)] =
                        src[flat_index(s, i0, i1, i2)];
    }
    return out;
}

void check_one_hot(const Tensor& mask) {
    check_tensor(mask);
    const std::int64_t n = mask.spatial_size();
    for (std::int64_t i = 0; i < n; ++i) {
        int ones = 0;
        for (int c = 0; c < mask.channels; ++c) {
            const float v = mask.data[static_cast<std::size_t>(c * n + i)];
            if (v == 1.0f) ++ones;
            else if (v != 0.0f) throw Error(ErrorCode::NotOneHot, "mask values must be 0 or 1");
        }
        if (ones != 1) throw Error(ErrorCode::NotOneHot, "every voxel needs exactly one active channel");
    }
}

CascadeMaskParams sample_cascade_params(RngStream& rng, int channels, const CascadeMaskConfig& cfg) {
    CascadeMaskParams p;
    p.morph_applied = rng.bernoulli(cfg.p_morph);
    if (p.morph_applied) {
        p.op = static_cast<MorphOp>(rng.uniform_index(4));
        p.radius = rng.uniform(cfg.radius_low, cfg.radius_high);
        for (int l = 1; l < channels; ++l) p.label_order.push_back(l);
        for (std::size_t i = p.label_order.size(); i > 1; --i)
            std::swap(p.label_order[i - 1], p.label_order[rng.uniform_index(i)]);
    }
    p.remove_components = rng.bernoulli(cfg.p_remove);
    return p;
}

Tensor apply_cascade_mask(const Tensor& mask, const CascadeMaskParams& params, const CascadeMaskConfig& cfg) {
    check_one_hot(mask);
    const Shape3 s = embed_shape(mask.shape);
    const std::int64_t n = voxel_count(s);
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    for (int c = 1; c < mask.channels; ++c)
        for (std::int64_t i = 0; i < n; ++i)
            if (mask.data[static_cast<std::size_t>(c * n + i)] == 1.0f) labels[static_cast<std::size_t>(i)] = c;

    auto binary = [&](int l) {
        std::vector<std::uint8_t> m(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) m[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == l ? 1 : 0;
        return m;
    };
    if (params.morph_applied)
        for (int l : params.label_order) {
            if (l < 1 || l >= mask.channels) throw Error(ErrorCode::InvalidArgument, "label order entry out of range");
            const auto m = binary(l);
            std::vector<std::uint8_t> r;
            switch (params.op) {
                case MorphOp::Dilate: r = dilate(m, s, params.radius); break;
                case MorphOp::Erode: r = erode(m, s, params.radius); break;
                case MorphOp::Open: r = dilate(erode(m, s, params.radius), s, params.radius); break;
                case MorphOp::Close: r = erode(dilate(m, s, params.radius), s, params.radius); break;
            }
            for (std::int64_t i = 0; i < n; ++i) {
                const auto k = static_cast<std::size_t>(i);
                if (r[k] && !m[k]) labels[k] = l;
                else if (!r[k] && m[k]) labels[k] = 0;
            }
        }
    if (params.remove_components) {
        const double threshold = cfg.remove_fraction * static_cast<double>(n);
        for (int l = 1; l < mask.channels; ++l) {
            const auto comps = label_components(binary(l), s);
            for (std::int64_t i = 0; i < n; ++i) {
                const auto id = comps.ids[static_cast<std::size_t>(i)];
                if (id >= 0 && static_cast<double>(comps.sizes[static_cast<std::size_t>(id)]) < threshold) labels[static_cast<std::size_t>(i)] = 0;
            }
        }
    }
    Tensor out(mask.shape, mask.channels);
    for (std::int64_t i = 0; i < n; ++i) out.data[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)] * n + i)] = 1.0f;
    return out;
}

Tensor cascade_mask_transform(const Tensor& mask, RngStream& rng, const CascadeMaskConfig& cfg) {
    check_one_hot(mask);
    return apply_cascade_mask(mask, sample_cascade_params(rng, mask.channels, cfg), cfg);
}

int forced_foreground_count(int batch) {
    if (batch < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
    return std::max(1, static_cast<int>(std::floor(static_cast<double>(batch) / 3.0 + 0.5)));
}

PatchSampling sample_patch_origins(const LabelVolume& label, const Shape3& patch, int batch, RngStream& rng) {
    label.validate();
    const int n_fg = forced_foreground_count(batch);
    Shape3 lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
        if (patch[a] < 1) throw Error(ErrorCode::InvalidArgument, "patch sizes must be positive");
        lo[a] = std::min<std::int64_t>(0, label.shape[a] - patch[a]);
        hi[a] = std::max<std::int64_t>(0, label.shape[a] - patch[a]);
    }
    std::vector<std::vector<std::int64_t>> voxels(static_cast<std::size_t>(label.max_label()) + 1);
    for (std::size_t i = 0; i < label.data.size(); ++i)
        if (label.data[i] > 0) voxels[label.data[i]].push_back(static_cast<std::int64_t>(i));
    std::vector<int> present;
    for (std::size_t c = 1; c < voxels.size(); ++c)
        if (!voxels[c].empty()) present.push_back(static_cast<int>(c));

    PatchSampling out;
    out.no_foreground = present.empty();
    for (int slot = 0; slot < batch; ++slot) {
        PatchSample s;
        if (slot >= batch - n_fg && !present.empty()) {
            s.forced_class = present[rng.uniform_index(present.size())];
            const auto& vs = voxels[static_cast<std::size_t>(s.forced_class)];
            const std::int64_t v = vs[rng.uniform_index(vs.size())];
            const Shape3 idx{v / (label.shape[1] * label.shape[2]), (v / label.shape[2]) % label.shape[1], v % label.shape[2]};
            for (int a = 0; a < 3; ++a) s.origin[a] = std::clamp(idx[a] - patch[a] / 2, lo[a], hi[a]);
        } else {
            for (int a = 0; a < 3; ++a)
                s.origin[a] = lo[a] + static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(hi[a] - lo[a] + 1)));
        }
        out.samples.push_back(s);
    }
    return out;
}

namespace {

template <typename Get>
Tensor extract(const Shape3& shape, int channels, const Shape3& origin, const std::vector<std::int64_t>& size, Get get) {
    Tensor out(size, channels);
    const Shape3 s = embed_shape(size);
    const std::int64_t n = voxel_count(s);
    const bool slice = size.size() == 2;
    for (int c = 0; c < channels; ++c)
        for (std::int64_t i0 = 0; i0 < s[0]; ++i0)
            for (std::int64_t i1 = 0; i1 < s[1]; ++i1)
                for (std::int64_t i2 = 0; i2 < s[2]; ++i2) {
                    const std::int64_t j0 = slice ? origin[0] : origin[0] + i0;
                    const std::int64_t j1 = origin[1] + i1;
                    const std::int64_t j2 = origin[2] + i2;
                    if (j0 < 0 || j1 < 0 || j2 < 0 || j0 >= shape[0] || j1 >= shape[1] || j2 >= shape[2]) continue;
                    out.data[static_cast<std::size_t>(c * n + flat_index(s, i0, i1, i2))] = get(c, flat_index(shape, j0, j1, j2));
                }
    return out;
}

}  // namespace

Tensor extract_patch(const std::vector<Volume>& channels, const Shape3& origin, const std::vector<std::int64_t>& size) {
    if (channels.empty()) throw Error(ErrorCode::MissingChannel, "no channels to crop");
    return extract(channels.front().shape, static_cast<int>(channels.size()), origin, size,
                   [&](int c, std::int64_t i) { return channels[static_cast<std::size_t>(c)].data[static_cast<std::size_t>(i)]; });
}

Tensor extract_label_patch(const LabelVolume& label, const Shape3& origin, const std::vector<std::int64_t>& size) {
    return extract(label.shape, 1, origin, size,
                   [&](int, std::int64_t i) { return static_cast<float>(label.data[static_cast<std::size_t>(i)]); });
}

AugmentedSample augment_sample(const Tensor& data_crop, const Tensor& seg_crop, const AugmentationParams& params,
                               const PatchGeometry& geom, const AugmentationConfig& cfg) {
    AugmentedSample out;
    out.data = spatial_transform(data_crop, params, geom.patch_size, 1);
    out.seg = spatial_transform(seg_crop, params, geom.patch_size, 0);
    out.data = intensity_transform(out.data, params, geom, cfg);
    out.data = mirror(out.data, params.mirror_axes);
    out.seg = mirror(out.seg, params.mirror_axes);
    return out;
}

}  // namespace segplan
