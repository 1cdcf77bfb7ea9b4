// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <vector>

#include "segplan/volume.hpp"

namespace segplan {

/// Connected components of a binary mask with full connectivity (26 in 3D, 8 when one extent is 1).
struct Components {
    /// Component id per voxel, -1 for background. Ids follow scan order of each component's first voxel.
    std::vector<std::int32_t> ids;
    std::vector<std::int64_t> sizes;
};

Components label_components(const std::vector<std::uint8_t>& mask, const Shape3& shape);

/// Squared Euclidean distance (in voxels) of each voxel to the nearest set voxel; huge when the mask is empty.
std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& mask, const Shape3& shape);

/// Binary dilation / erosion with a ball of the given radius (voxel units).
std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& mask, const Shape3& shape, double radius);
std::vector<std::uint8_t> erode(const std::vector<std::uint8_t>& mask, const Shape3& shape, double radius);

}  // namespace segplan
