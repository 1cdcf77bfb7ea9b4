// SPDX-License-Identifier: MIT
#include "segplan/morphology.hpp"

#include <algorithm>
#include <array>
#include <limits>

namespace segplan {

namespace {

constexpr double kFar = 1e30;

/// Lower envelope of parabolas over one line of squared distances.
void edt_1d(const double* f, double* d, std::int64_t n, std::vector<std::int64_t>& v, std::vector<double>& z) {
    v.assign(static_cast<std::size_t>(n), 0);
    z.assign(static_cast<std::size_t>(n) + 1, 0.0);
    std::int64_t k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (std::int64_t q = 1; q < n; ++q) {
        double s = 0.0;
        while (true) {
            const std::int64_t p = v[static_cast<std::size_t>(k)];
            s = ((f[q] + static_cast<double>(q * q)) - (f[p] + static_cast<double>(p * p))) / (2.0 * static_cast<double>(q - p));
            if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        if (s <= z[static_cast<std::size_t>(k)]) {
            v[static_cast<std::size_t>(k)] = q;
            z[static_cast<std::size_t>(k) + 1] = std::numeric_limits<double>::infinity();
            continue;
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = s;
        z[static_cast<std::size_t>(k) + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (std::int64_t q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(k) + 1] < static_cast<double>(q)) ++k;
        const std::int64_t p = v[static_cast<std::size_t>(k)];
        d[q] = static_cast<double>((q - p) * (q - p)) + f[p];
    }
}

}  // namespace

Components label_components(const std::vector<std::uint8_t>& mask, const Shape3& shape) {
    Components out;
    out.ids.assign(mask.size(), -1);
    std::vector<std::int64_t> stack;
    for (std::int64_t i0 = 0; i0 < shape[0]; ++i0)
        for (std::int64_t i1 = 0; i1 < shape[1]; ++i1)
            for (std::int64_t i2 = 0; i2 < shape[2]; ++i2) {
                const std::int64_t seed = flat_index(shape, i0, i1, i2);
                if (!mask[static_cast<std::size_t>(seed)] || out.ids[static_cast<std::size_t>(seed)] >= 0) continue;
                const auto id = static_cast<std::int32_t>(out.sizes.size());
                std::int64_t size = 0;
                out.ids[static_cast<std::size_t>(seed)] = id;
                stack.assign(1, seed);
                while (!stack.empty()) {
                    const std::int64_t cur = stack.back();
                    stack.pop_back();
                    ++size;
                    const std::int64_t c2 = cur % shape[2];
                    const std::int64_t c1 = (cur / shape[2]) % shape[1];
                    const std::int64_t c0 = cur / (shape[2] * shape[1]);
                    for (std::int64_t d0 = -1; d0 <= 1; ++d0)
                        for (std::int64_t d1 = -1; d1 <= 1; ++d1)
                            for (std::int64_t d2 = -1; d2 <= 1; ++d2) {
                                const std::int64_t n0 = c0 + d0, n1 = c1 + d1, n2 = c2 + d2;
                                if (n0 < 0 || n1 < 0 || n2 < 0 || n0 >= shape[0] || n1 >= shape[1] || n2 >= shape[2]) continue;
                                const std::int64_t nb = flat_index(shape, n0, n1, n2);
                                if (!mask[static_cast<std::size_t>(nb)] || out.ids[static_cast<std::size_t>(nb)] >= 0) continue;
                                out.ids[static_cast<std::size_t>(nb)] = id;
                                stack.push_back(nb);
                            }
                }
                out.sizes.push_back(size);
            }
    return out;
}

std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& mask, const Shape3& shape) {
    std::vector<double> dist(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) dist[i] = mask[i] ? 0.0 : kFar;
    const std::array<std::int64_t, 3> stride{shape[1] * shape[2], shape[2], 1};
    std::vector<double> f, d;
    std::vector<std::int64_t> v;
    std::vector<double> z;
    for (int axis = 0; axis < 3; ++axis) {
        const std::int64_t n = shape[axis];
        if (n == 1) continue;
        const int a1 = axis == 0 ? 1 : 0;
        const int a2 = axis == 2 ? 1 : 2;
        f.resize(static_cast<std::size_t>(n));
        d.resize(static_cast<std::size_t>(n));
        for (std::int64_t u = 0; u < shape[a1]; ++u)
            for (std::int64_t w = 0; w < shape[a2]; ++w) {
                const std::int64_t base = u * stride[a1] + w * stride[a2];
                for (std::int64_t k = 0; k < n; ++k) f[static_cast<std::size_t>(k)] = dist[static_cast<std::size_t>(base + k * stride[axis])];
                edt_1d(f.data(), d.data(), n, v, z);
                for (std::int64_t k = 0; k < n; ++k)
                    dist[static_cast<std::size_t>(base + k * stride[axis])] = std::min(d[static_cast<std::size_t>(k)], kFar);
            }
    }
    return dist;
}

std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& mask, const Shape3& shape, double radius) {
    const auto dist = squared_distance_transform(mask, shape);
    const double r2 = radius * radius;
    std::vector<std::uint8_t> out(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = dist[i] <= r2 ? 1 : 0;
    return out;
}

std::vector<std::uint8_t> erode(const std::vector<std::uint8_t>& mask, const Shape3& shape, double radius) {
    std::vector<std::uint8_t> inv(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) inv[i] = mask[i] ? 0 : 1;
    auto grown = dilate(inv, shape, radius);
    for (auto& g : grown) g = g ? 0 : 1;
    return grown;
}

}  // namespace segplan
