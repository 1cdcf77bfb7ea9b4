// SPDX-License-Identifier: MIT
#include "segplan/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include "json_support.hpp"
#include "segplan/error.hpp"
#include "segplan/io.hpp"
#include "segplan/rng.hpp"

namespace segplan {

using json = nlohmann::json;

BoundingBox nonzero_bbox(const Case& c) {
    c.validate();
    const Shape3 s = c.channels.front().shape;
    Shape3 lo{s[0], s[1], s[2]};
    Shape3 hi{-1, -1, -1};
    for (std::int64_t i0 = 0; i0 < s[0]; ++i0)
        for (std::int64_t i1 = 0; i1 < s[1]; ++i1)
            for (std::int64_t i2 = 0; i2 < s[2]; ++i2) {
                const std::int64_t idx = flat_index(s, i0, i1, i2);
                bool nz = false;
                for (const auto& ch : c.channels)
                    if (ch.data[static_cast<std::size_t>(idx)] != 0.0f) {
                        nz = true;
                        break;
                    }
                if (!nz) continue;
                const std::int64_t p[3] = {i0, i1, i2};
                for (int a = 0; a < 3; ++a) {
                    lo[a] = std::min(lo[a], p[a]);
                    hi[a] = std::max(hi[a], p[a]);
                }
            }
    if (hi[0] < 0) return {{0, 0, 0}, {s[0] - 1, s[1] - 1, s[2] - 1}};
    return {lo, hi};
}

namespace {

template <typename T>
std::vector<T> crop_data(const std::vector<T>& data, const Shape3& s, const BoundingBox& box) {
    const Shape3 e = box.extent();
    std::vector<T> out;
    out.reserve(static_cast<std::size_t>(voxel_count(e)));
    for (std::int64_t i0 = box.lo[0]; i0 <= box.hi[0]; ++i0)
        for (std::int64_t i1 = box.lo[1]; i1 <= box.hi[1]; ++i1) {
            const auto row = data.begin() + flat_index(s, i0, i1, box.lo[2]);
            out.insert(out.end(), row, row + e[2]);
        }
    return out;
}

std::uint64_t string_hash(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) h = (h ^ ch) * 0x100000001b3ULL;
    return h;
}

}  // namespace

Case crop_case(const Case& c, const BoundingBox& box) {
    c.validate();
    const Shape3 s = c.channels.front().shape;
    for (int a = 0; a < 3; ++a)
        if (box.lo[a] < 0 || box.hi[a] >= s[a] || box.lo[a] > box.hi[a])
            throw Error(ErrorCode::InvalidArgument, "bounding box outside the case extent");
    Case out;
    out.id = c.id;
    for (const auto& ch : c.channels) {
        Volume v;
        v.shape = box.extent();
        v.spacing = ch.spacing;
        v.modality = ch.modality;
        v.data = crop_data(ch.data, s, box);
        out.channels.push_back(std::move(v));
    }
    if (c.label) {
        LabelVolume l;
        l.shape = box.extent();
        l.spacing = c.label->spacing;
        l.num_classes = c.label->num_classes;
        l.data = crop_data(c.label->data, s, box);
        out.label = std::move(l);
    }
    return out;
}

std::pair<Case, BoundingBox> crop_to_nonzero(const Case& c) {
    const BoundingBox box = nonzero_bbox(c);
    return {crop_case(c, box), box};
}

CaseFingerprint extract_case_fingerprint(const Case& c, std::uint64_t seed, bool require_label) {
    if (require_label && !c.label) throw Error(ErrorCode::NoLabel, "case '" + c.id + "' has no label");
    auto [cropped, box] = crop_to_nonzero(c);
    CaseFingerprint fp;
    fp.id = c.id;
    fp.shape_before_crop = c.channels.front().shape;
    fp.shape_after_crop = box.extent();
    fp.spacing = c.channels.front().spacing;
    for (const auto& ch : c.channels) fp.modalities.push_back(ch.modality);
    fp.foreground_samples.resize(c.channels.size());
    if (!cropped.label) return fp;

    const auto& lab = cropped.label->data;
    fp.num_classes = cropped.label->num_classes;
    std::set<int> present;
    std::vector<std::size_t> fg;
    for (std::size_t i = 0; i < lab.size(); ++i)
        if (lab[i] > 0) {
            fg.push_back(i);
            present.insert(lab[i]);
        }
    fp.classes_present.assign(present.begin(), present.end());
    if (fg.size() > kMaxForegroundSamples) {
        RngStream rng(hash_combine(seed, string_hash(c.id)));
        for (std::size_t i = 0; i < kMaxForegroundSamples; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(fg.size() - i));
            std::swap(fg[i], fg[j]);
        }
        fg.resize(kMaxForegroundSamples);
        std::sort(fg.begin(), fg.end());
    }
    for (std::size_t k = 0; k < cropped.channels.size(); ++k) {
        auto& out = fp.foreground_samples[k];
        out.reserve(fg.size());
        for (std::size_t i : fg) out.push_back(cropped.channels[k].data[i]);
    }
    return fp;
}

double percentile(const std::vector<double>& v, double q) {
    if (v.empty()) throw Error(ErrorCode::EmptyInput, "percentile of an empty list");
    if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorCode::InvalidArgument, "percentile fraction outside [0,1]");
    const double r = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(r));
    const auto hi = static_cast<std::size_t>(std::ceil(r));
    return v[lo] + (r - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::int64_t median_lower(std::vector<std::int64_t> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "median of an empty list");
    std::sort(values.begin(), values.end());
    return values[(values.size() - 1) / 2];
}

double median_mid(std::vector<double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "median of an empty list");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Spacing3 DatasetFingerprint::median_spacing() const {
    Spacing3 out{};
    for (int a = 0; a < 3; ++a) {
        std::vector<double> v;
        for (const auto& s : spacings) v.push_back(s[a]);
        out[a] = median_mid(v);
    }
    return out;
}

DatasetFingerprint aggregate_dataset_fingerprint(std::vector<CaseFingerprint> cases) {
    if (cases.empty()) throw Error(ErrorCode::EmptyInput, "no case fingerprints to aggregate");
    std::stable_sort(cases.begin(), cases.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    const std::size_t n_channels = cases.front().modalities.size();
    for (const auto& c : cases)
        if (c.modalities.size() != n_channels || c.foreground_samples.size() != n_channels)
            throw Error(ErrorCode::InconsistentChannels, "case '" + c.id + "' has a different channel count");

    DatasetFingerprint fp;
    fp.n_cases = static_cast<std::int64_t>(cases.size());
    fp.modalities = cases.front().modalities;
    double reduction = 0.0;
    for (const auto& c : cases) {
        fp.case_ids.push_back(c.id);
        fp.shapes.push_back(c.shape_after_crop);
        fp.spacings.push_back(c.spacing);
        fp.n_classes = std::max(fp.n_classes, c.num_classes);
        if (!c.classes_present.empty()) fp.n_classes = std::max(fp.n_classes, c.classes_present.back());
        const double after = static_cast<double>(voxel_count(c.shape_after_crop));
        fp.total_voxels += after;
        reduction += 1.0 - after / static_cast<double>(voxel_count(c.shape_before_crop));
    }
    fp.crop_reduction = reduction / static_cast<double>(cases.size());
    for (int a = 0; a < 3; ++a) {
        std::vector<std::int64_t> v;
        for (const auto& s : fp.shapes) v.push_back(s[a]);
        fp.median_shape[a] = median_lower(v);
    }

    std::vector<std::vector<double>> pooled(n_channels);
    for (const auto& c : cases)
        for (std::size_t k = 0; k < n_channels; ++k)
            pooled[k].insert(pooled[k].end(), c.foreground_samples[k].begin(), c.foreground_samples[k].end());
    if (n_channels > 0 && !pooled.front().empty()) {
        for (auto& values : pooled) {
            std::sort(values.begin(), values.end());
            ForegroundStats s;
            const double n = static_cast<double>(values.size());
            s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
            double ss = 0.0;
            for (double v : values) ss += (v - s.mean) * (v - s.mean);
            s.std = std::sqrt(ss / n);
            s.p0_5 = percentile(values, 0.005);
            s.p99_5 = percentile(values, 0.995);
            fp.foreground_stats.push_back(s);
        }
    }
    return fp;
}

void to_json(json& j, const ForegroundStats& s) {
    j = json{{"mean", s.mean}, {"std", s.std}, {"p0_5", s.p0_5}, {"p99_5", s.p99_5}};
}

void from_json(const json& j, ForegroundStats& s) {
    s.mean = j.at("mean").get<double>();
    s.std = j.at("std").get<double>();
    s.p0_5 = j.at("p0_5").get<double>();
    s.p99_5 = j.at("p99_5").get<double>();
}

void to_json(json& j, const DatasetFingerprint& fp) {
    j = json{{"n_cases", fp.n_cases},
             {"case_ids", fp.case_ids},
             {"median_shape", fp.median_shape},
             {"shapes", fp.shapes},
             {"spacings", fp.spacings},
             {"modalities", fp.modalities},
             {"n_classes", fp.n_classes},
             {"foreground_stats", fp.foreground_stats},
             {"total_voxels", fp.total_voxels},
             {"crop_reduction", fp.crop_reduction}};
}

void from_json(const json& j, DatasetFingerprint& fp) {
    fp.n_cases = j.at("n_cases").get<std::int64_t>();
    fp.case_ids = j.at("case_ids").get<std::vector<std::string>>();
    fp.median_shape = j.at("median_shape").get<Shape3>();
    fp.shapes = j.at("shapes").get<std::vector<Shape3>>();
    fp.spacings = j.at("spacings").get<std::vector<Spacing3>>();
    fp.modalities = j.at("modalities").get<std::vector<std::string>>();
    fp.n_classes = j.at("n_classes").get<int>();
    fp.foreground_stats = j.at("foreground_stats").get<std::vector<ForegroundStats>>();
    fp.total_voxels = j.at("total_voxels").get<double>();
    fp.crop_reduction = j.at("crop_reduction").get<double>();
}

std::string fingerprint_to_json(const DatasetFingerprint& fp) {
    json j = fp;
    j["schema_version"] = kSchemaVersion;
    return j.dump(2) + "\n";
}

DatasetFingerprint fingerprint_from_json(const std::string& text) {
    const json j = parse_versioned(text, "fingerprint");
    try {
        return j.get<DatasetFingerprint>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("incomplete fingerprint: ") + e.what());
    }
}

void write_fingerprint(const DatasetFingerprint& fp, const std::filesystem::path& path) {
    write_text(path, fingerprint_to_json(fp));
}

DatasetFingerprint read_fingerprint(const std::filesystem::path& path) { return fingerprint_from_json(read_text(path)); }

}  // namespace segplan
