// SPDX-License-Identifier: MIT
#include "segplan/tiling.hpp"

#include <algorithm>
#include <cmath>

#include "segplan/augment.hpp"
#include "segplan/error.hpp"

namespace segplan {

namespace {

std::int64_t product(const std::vector<std::int64_t>& v) {
    std::int64_t n = 1;
    for (auto x : v) n *= x;
    return n;
}

/// Strides of a row-major layout with the last axis fastest.
std::vector<std::int64_t> strides_of(const std::vector<std::int64_t>& shape) {
    std::vector<std::int64_t> s(shape.size(), 1);
    for (std::size_t a = shape.size(); a-- > 1;) s[a - 1] = s[a] * shape[a];
    return s;
}

/// Calls fn(flat index in the window, flat index in the volume) for every voxel of a window.
template <typename Fn>
void for_each_window_voxel(const std::vector<std::int64_t>& shape, const std::vector<std::int64_t>& patch,
                           const std::vector<std::int64_t>& origin, Fn fn) {
    const auto vs = strides_of(shape);
    const std::size_t rank = patch.size();
    std::vector<std::int64_t> idx(rank, 0);
    const std::int64_t n = product(patch);
    for (std::int64_t w = 0; w < n; ++w) {
        std::int64_t v = 0;
        for (std::size_t a = 0; a < rank; ++a) v += (origin[a] + idx[a]) * vs[a];
        fn(w, v);
        for (std::size_t a = rank; a-- > 0;) {
            if (++idx[a] < patch[a]) break;
            idx[a] = 0;
        }
    }
}

}  // namespace

std::vector<std::int64_t> axis_tile_origins(std::int64_t shape, std::int64_t patch) {
    if (patch < 1) throw Error(ErrorCode::InvalidArgument, "patch sizes must be positive");
    if (patch > shape) throw Error(ErrorCode::PatchLargerThanVolume, "patch exceeds the volume extent");
    const std::int64_t step = (patch + 1) / 2;
    std::vector<std::int64_t> out;
    for (std::int64_t o = 0; o < shape - patch; o += step) out.push_back(o);
    out.push_back(shape - patch);
    return out;
}

TilingPlan compute_tile_origins(const std::vector<std::int64_t>& shape, const std::vector<std::int64_t>& patch) {
    if (shape.size() != patch.size() || shape.empty()) throw Error(ErrorCode::ShapeMismatch, "shape and patch ranks differ");
    TilingPlan plan{shape, patch, {}};
    std::vector<std::vector<std::int64_t>> axes;
    for (std::size_t a = 0; a < shape.size(); ++a) axes.push_back(axis_tile_origins(shape[a], patch[a]));
    std::vector<std::size_t> idx(shape.size(), 0);
    while (true) {
        std::vector<std::int64_t> o(shape.size());
        for (std::size_t a = 0; a < shape.size(); ++a) o[a] = axes[a][idx[a]];
        plan.origins.push_back(std::move(o));
        std::size_t a = shape.size();
        while (a-- > 0) {
            if (++idx[a] < axes[a].size()) break;
            idx[a] = 0;
        }
        if (a == static_cast<std::size_t>(-1)) break;
    }
    return plan;
}

std::vector<double> gaussian_importance_map(const std::vector<std::int64_t>& patch, const GaussianConfig& cfg) {
    std::vector<std::vector<double>> axis_weights;
    for (auto p : patch) {
        if (p < 1) throw Error(ErrorCode::InvalidArgument, "patch sizes must be positive");
        const double centre = static_cast<double>(p - 1) / 2.0;
        const double sigma = static_cast<double>(p) * cfg.sigma_scale;
        std::vector<double> w(static_cast<std::size_t>(p));
        for (std::int64_t i = 0; i < p; ++i) {
            const double d = static_cast<double>(i) - centre;
            w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        }
        const double mx = *std::max_element(w.begin(), w.end());
        for (double& v : w) v /= mx;
        axis_weights.push_back(std::move(w));
    }
    const std::int64_t n = product(patch);
    std::vector<double> map(static_cast<std::size_t>(n));
    std::vector<std::int64_t> idx(patch.size(), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        double w = 1.0;
        for (std::size_t a = 0; a < patch.size(); ++a) w *= axis_weights[a][static_cast<std::size_t>(idx[a])];
        map[static_cast<std::size_t>(i)] = std::max(w, cfg.floor);
        for (std::size_t a = patch.size(); a-- > 0;) {
            if (++idx[a] < patch[a]) break;
            idx[a] = 0;
        }
    }
    return map;
}

ProbabilityVolume aggregate_tiles(const TilingPlan& plan, const std::vector<Tensor>& blocks,
                                  const std::vector<double>& weights, const std::vector<double>& spacing) {
    if (blocks.size() != plan.origins.size()) throw Error(ErrorCode::ShapeMismatch, "one probability block per window is required");
    if (blocks.empty()) throw Error(ErrorCode::EmptyInput, "no windows to aggregate");
    const std::int64_t wn = product(plan.patch);
    if (static_cast<std::int64_t>(weights.size()) != wn) throw Error(ErrorCode::ShapeMismatch, "weight map does not match the patch");
    const int channels = blocks.front().channels;
    for (const auto& b : blocks)
        if (b.shape != plan.patch || b.channels != channels || static_cast<std::int64_t>(b.data.size()) != wn * channels)
            throw Error(ErrorCode::ShapeMismatch, "probability block does not match the patch");
    const std::int64_t n = product(plan.shape);
    std::vector<double> acc(static_cast<std::size_t>(n * channels), 0.0);
    std::vector<double> wsum(static_cast<std::size_t>(n), 0.0);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const auto& b = blocks[k];
        for_each_window_voxel(plan.shape, plan.patch, plan.origins[k], [&](std::int64_t w, std::int64_t v) {
            const double wt = weights[static_cast<std::size_t>(w)];
            wsum[static_cast<std::size_t>(v)] += wt;
            for (int c = 0; c < channels; ++c)
                acc[static_cast<std::size_t>(c * n + v)] += wt * b.data[static_cast<std::size_t>(c * wn + w)];
        });
    }
    ProbabilityVolume out;
    out.probs = Tensor(plan.shape, channels);
    out.spacing = spacing.empty() ? std::vector<double>(plan.shape.size(), 1.0) : spacing;
    for (int c = 0; c < channels; ++c)
        for (std::int64_t v = 0; v < n; ++v)
            out.probs.data[static_cast<std::size_t>(c * n + v)] =
                static_cast<float>(acc[static_cast<std::size_t>(c * n + v)] / wsum[static_cast<std::size_t>(v)]);
    return out;
}

Tensor mirror_tta_average(const WindowPredictor& predict, const Tensor& window) {
    const auto rank = static_cast<int>(window.shape.size());
    std::vector<double> acc;
    Tensor first;
    for (int mask = 0; mask < (1 << rank); ++mask) {
        std::vector<int> axes;
        for (int a = 0; a < rank; ++a)
            if (mask & (1 << a)) axes.push_back(a);
        const Tensor pred = mirror(predict(mirror(window, axes)), axes);
        if (mask == 0) {
            first = pred;
            acc.assign(pred.data.size(), 0.0);
        } else if (pred.shape != first.shape || pred.channels != first.channels) {
            throw Error(ErrorCode::ShapeMismatch, "predictor output shape changed under mirroring");
        }
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += pred.data[i];
    }
    const double scale = 1.0 / static_cast<double>(1 << rank);
    for (std::size_t i = 0; i < acc.size(); ++i) first.data[i] = static_cast<float>(acc[i] * scale);
    return first;
}

ProbabilityVolume predict_sliding_window(const Tensor& input, const std::vector<std::int64_t>& patch,
                                         const WindowPredictor& predict, bool mirror_tta, const GaussianConfig& cfg) {
    const TilingPlan plan = compute_tile_origins(input.shape, patch);
    const auto weights = gaussian_importance_map(patch, cfg);
    const std::int64_t n = product(input.shape);
    const std::int64_t wn = product(patch);
    std::vector<Tensor> blocks;
    blocks.reserve(plan.origins.size());
    for (const auto& origin : plan.origins) {
        Tensor window(patch, input.channels);
        for (int c = 0; c < input.channels; ++c)
            for_each_window_voxel(input.shape, patch, origin, [&](std::int64_t w, std::int64_t v) {
                window.data[static_cast<std::size_t>(c * wn + w)] = input.data[static_cast<std::size_t>(c * n + v)];
            });
        blocks.push_back(mirror_tta ? mirror_tta_average(predict, window) : predict(window));
    }
    return aggregate_tiles(plan, blocks, weights);
}

ProbabilityVolume ensemble_average(const std::vector<ProbabilityVolume>& volumes) {
    if (volumes.empty()) throw Error(ErrorCode::EmptyInput, "no probability volumes to average");
    const auto& ref = volumes.front();
    for (const auto& v : volumes) {
        if (v.probs.shape != ref.probs.shape || v.probs.channels != ref.probs.channels ||
            v.probs.data.size() != ref.probs.data.size() || v.spacing.size() != ref.spacing.size())
            throw Error(ErrorCode::GeometryMismatch, "ensemble members differ in geometry or class count");
        for (std::size_t a = 0; a < v.spacing.size(); ++a)
            if (std::fabs(v.spacing[a] - ref.spacing[a]) > 1e-6)
                throw Error(ErrorCode::GeometryMismatch, "ensemble members differ in spacing");
    }
    ProbabilityVolume out = ref;
    const double scale = 1.0 / static_cast<double>(volumes.size());
    for (std::size_t i = 0; i < out.probs.data.size(); ++i) {
        double s = 0.0;
        for (const auto& v : volumes) s += v.probs.data[i];
        out.probs.data[i] = static_cast<float>(s * scale);
    }
    return out;
}

LabelVolume argmax_labels(const ProbabilityVolume& probs) {
    const auto& t = probs.probs;
    Shape3 shape{1, 1, 1};
    if (t.shape.size() == 3) shape = {t.shape[0], t.shape[1], t.shape[2]};
    else if (t.shape.size() == 2) shape = {1, t.shape[0], t.shape[1]};
    else throw Error(ErrorCode::InvalidArgument, "probability volumes must have rank 2 or 3");
    Spacing3 spacing{1.0, 1.0, 1.0};
    for (std::size_t a = 0; a < probs.spacing.size() && a < 3; ++a) spacing[3 - probs.spacing.size() + a] = probs.spacing[a];
    LabelVolume out(shape, spacing, t.channels - 1);
    const std::int64_t n = t.spatial_size();
    for (std::int64_t v = 0; v < n; ++v) {
        int best = 0;
        for (int c = 1; c < t.channels; ++c)
            if (t.data[static_cast<std::size_t>(c * n + v)] > t.data[static_cast<std::size_t>(best * n + v)]) best = c;
        out.data[static_cast<std::size_t>(v)] = static_cast<std::uint16_t>(best);
    }
    return out;
}

}  // namespace segplan
