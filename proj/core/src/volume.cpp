// SPDX-License-Identifier: MIT
#include "segplan/volume.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "segplan/error.hpp"

namespace segplan {

namespace {

void check_geometry(const Shape3& shape, const Spacing3& spacing) {
    for (int a = 0; a < 3; ++a) {
        if (shape[a] < 1) throw Error(ErrorCode::InvalidArgument, "shape components must be >= 1");
        if (!(spacing[a] > 0.0)) throw Error(ErrorCode::InvalidArgument, "spacing components must be > 0");
    }
}

}  // namespace

std::int64_t voxel_count(const Shape3& shape) noexcept { return shape[0] * shape[1] * shape[2]; }

Volume::Volume(const Shape3& shape_, const Spacing3& spacing_, float fill, std::string modality_)
    : shape(shape_), spacing(spacing_), data(static_cast<std::size_t>(voxel_count(shape_)), fill),
      modality(std::move(modality_)) {}

void Volume::validate() const {
    check_geometry(shape, spacing);
    if (static_cast<std::int64_t>(data.size()) != voxel_count(shape))
        throw Error(ErrorCode::InvalidArgument, "volume data size does not match shape");
}

LabelVolume::LabelVolume(const Shape3& shape_, const Spacing3& spacing_, int num_classes_)
    : shape(shape_), spacing(spacing_), data(static_cast<std::size_t>(voxel_count(shape_)), 0),
      num_classes(num_classes_) {}

int LabelVolume::max_label() const noexcept {
    if (data.empty()) return 0;
    return *std::max_element(data.begin(), data.end());
}

void LabelVolume::validate() const {
    check_geometry(shape, spacing);
    if (static_cast<std::int64_t>(data.size()) != voxel_count(shape))
        throw Error(ErrorCode::InvalidArgument, "label data size does not match shape");
    if (max_label() > num_classes) throw Error(ErrorCode::InvalidArgument, "label value exceeds num_classes");
}

void Case::validate() const {
    if (channels.empty()) throw Error(ErrorCode::MissingChannel, "case '" + id + "' has no channels");
    const auto& ref = channels.front();
    auto same = [&](const Shape3& s, const Spacing3& sp) {
        for (int a = 0; a < 3; ++a) {
            if (s[a] != ref.shape[a]) return false;
            if (std::abs(sp[a] - ref.spacing[a]) > 1e-6 * std::max(1.0, ref.spacing[a])) return false;
        }
        return true;
    };
    for (const auto& ch : channels) {
        ch.validate();
        if (!same(ch.shape, ch.spacing))
            throw Error(ErrorCode::GeometryMismatch, "case '" + id + "' channels differ in geometry");
    }
    if (label) {
        label->validate();
        if (!same(label->shape, label->spacing))
            throw Error(ErrorCode::GeometryMismatch, "case '" + id + "' label differs from channel geometry");
    }
}

Tensor::Tensor(std::vector<std::int64_t> shape_, int channels_, float fill)
    : shape(std::move(shape_)), channels(channels_) {
    data.assign(static_cast<std::size_t>(spatial_size() * channels), fill);
}

std::int64_t Tensor::spatial_size() const noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

}  // namespace segplan
