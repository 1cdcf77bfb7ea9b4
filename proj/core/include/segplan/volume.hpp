// SPDX-License-Identifier: MIT
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace segplan {

/// Voxel counts per axis. a0 is the out-of-plane (slowest varying) axis, a2 the fastest.
using Shape3 = std::array<std::int64_t, 3>;
/// Physical voxel size in mm per axis, same axis order as Shape3.
using Spacing3 = std::array<double, 3>;

/// Number of voxels of a shape.
std::int64_t voxel_count(const Shape3& shape) noexcept;

/// Flat index of voxel (i0, i1, i2), a2 fastest.
inline std::int64_t flat_index(const Shape3& s, std::int64_t i0, std::int64_t i1, std::int64_t i2) noexcept {
    return (i0 * s[1] + i1) * s[2] + i2;
}

/// Scalar image on a 3D grid.
struct Volume {
    Shape3 shape{1, 1, 1};
    Spacing3 spacing{1.0, 1.0, 1.0};
    std::vector<float> data;
    std::string modality;

    Volume() = default;
    Volume(const Shape3& shape, const Spacing3& spacing, float fill = 0.0f, std::string modality = {});

    float& at(std::int64_t i0, std::int64_t i1, std::int64_t i2) { return data[flat_index(shape, i0, i1, i2)]; }
    float at(std::int64_t i0, std::int64_t i1, std::int64_t i2) const { return data[flat_index(shape, i0, i1, i2)]; }

    /// Throws InvalidArgument when shape, spacing or data size are inconsistent.
    void validate() const;

    bool operator==(const Volume&) const = default;
};

/// Segmentation on a 3D grid; 0 is background, classes 1..num_classes.
struct LabelVolume {
    Shape3 shape{1, 1, 1};
    Spacing3 spacing{1.0, 1.0, 1.0};
    std::vector<std::uint16_t> data;
    int num_classes = 0;

    LabelVolume() = default;
    LabelVolume(const Shape3& shape, const Spacing3& spacing, int num_classes = 0);

    std::uint16_t& at(std::int64_t i0, std::int64_t i1, std::int64_t i2) { return data[flat_index(shape, i0, i1, i2)]; }
    std::uint16_t at(std::int64_t i0, std::int64_t i1, std::int64_t i2) const { return data[flat_index(shape, i0, i1, i2)]; }

    /// Largest label value present.
    int max_label() const noexcept;
    void validate() const;

    bool operator==(const LabelVolume&) const = default;
};

/// One training or inference case.
struct Case {
    std::string id;
    std::vector<Volume> channels;
    std::optional<LabelVolume> label;

    /// Throws GeometryMismatch when channels or label disagree in shape or spacing.
    void validate() const;
};

/// Dense multi-channel array with arbitrary spatial rank; data is channel-major, last axis fastest.
struct Tensor {
    std::vector<std::int64_t> shape;
    int channels = 1;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<std::int64_t> shape, int channels, float fill = 0.0f);

    std::int64_t spatial_size() const noexcept;
    float* channel(int c) { return data.data() + c * spatial_size(); }
    const float* channel(int c) const { return data.data() + c * spatial_size(); }

    bool operator==(const Tensor&) const = default;
};

/// Per-class probabilities over a grid; tensor.channels is the class count including background.
struct ProbabilityVolume {
    Tensor probs;
    std::vector<double> spacing;

    bool operator==(const ProbabilityVolume&) const = default;
};

}  // namespace segplan
