// SPDX-License-Identifier: MIT
#include "segplan/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include "json.hpp"

#include "segplan/error.hpp"

namespace segplan {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::size_t kNiftiHeaderSize = 348;

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::uint8_t> inflate_gzip(const std::vector<std::uint8_t>& in, const fs::path& path) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw Error(ErrorCode::IoFailure, "zlib init failed");
    std::vector<std::uint8_t> out;
    std::vector<std::uint8_t> chunk(1 << 16);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = chunk.data();
        zs.avail_out = static_cast<uInt>(chunk.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            if (rc == Z_BUF_ERROR || rc == Z_DATA_ERROR)
                throw Error(ErrorCode::TruncatedFile, "incomplete gzip stream in " + path.string());
            throw Error(ErrorCode::IoFailure, "gzip decode failed for " + path.string());
        }
        out.insert(out.end(), chunk.begin(), chunk.begin() + (chunk.size() - zs.avail_out));
        if (rc != Z_STREAM_END && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw Error(ErrorCode::TruncatedFile, "incomplete gzip stream in " + path.string());
        }
    }
    inflateEnd(&zs);
    return out;
}

std::vector<std::uint8_t> deflate_gzip(const std::vector<std::uint8_t>& in) {
    z_stream zs{};
    if (deflateInit2(&zs, 6, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw Error(ErrorCode::IoFailure, "zlib init failed");
    std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())) + 32);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw Error(ErrorCode::IoFailure, "gzip encode failed");
    out.resize(zs.total_out);
    return out;
}

template <typename T>
T load(const std::uint8_t* p, bool swap) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if (swap) {
        auto* b = reinterpret_cast<std::uint8_t*>(&v);
        std::reverse(b, b + sizeof(T));
    }
    return v;
}

template <typename T>
void store_le(std::uint8_t* p, T v) {
    std::memcpy(p, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(p, p + sizeof(T));
}

int bytes_per_voxel(std::int16_t datatype) {
    switch (static_cast<NiftiType>(datatype)) {
        case NiftiType::UInt8: return 1;
        case NiftiType::Int16: return 2;
        case NiftiType::Int32: return 4;
        case NiftiType::Float32: return 4;
        case NiftiType::Float64: return 8;
    }
    return 0;
}

struct NativePaths {
    fs::path sidecar;
    fs::path payload;
};

NativePaths native_paths(const fs::path& path) {
    fs::path stem = path;
    const std::string s = path.string();
    if (has_suffix(s, ".json") || has_suffix(s, ".raw")) stem.replace_extension();
    NativePaths p;
    p.sidecar = stem;
    p.sidecar += ".json";
    p.payload = stem;
    p.payload += ".raw";
    return p;
}

bool is_nifti_path(const fs::path& path) {
    const std::string s = path.string();
    return has_suffix(s, ".nii") || has_suffix(s, ".nii.gz");
}

template <typename T>
std::vector<std::uint8_t> encode_payload(const std::vector<T>& values) {
    std::vector<std::uint8_t> bytes(values.size() * sizeof(T));
    for (std::size_t i = 0; i < values.size(); ++i) store_le(bytes.data() + i * sizeof(T), values[i]);
    return bytes;
}

template <typename T>
std::vector<T> decode_payload(const std::vector<std::uint8_t>& bytes, std::size_t count, const fs::path& path) {
    if (bytes.size() < count * sizeof(T))
        throw Error(ErrorCode::TruncatedFile, "payload shorter than declared in " + path.string());
    std::vector<T> values(count);
    const bool swap = std::endian::native == std::endian::big;
    for (std::size_t i = 0; i < count; ++i) values[i] = load<T>(bytes.data() + i * sizeof(T), swap);
    return values;
}

void write_native(const json& meta, const std::vector<std::uint8_t>& payload, const fs::path& path) {
    const NativePaths p = native_paths(path);
    json doc = meta;
    doc["schema_version"] = kSchemaVersion;
    doc["format"] = "segplan-native";
    doc["payload"] = p.payload.filename().string();
    write_file_bytes(p.payload, payload);
    write_text(p.sidecar, doc.dump(2) + "\n");
}

json read_native_meta(const fs::path& path) {
    const NativePaths p = native_paths(path);
    json doc;
    try {
        doc = json::parse(read_text(p.sidecar));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoFailure, "malformed sidecar " + p.sidecar.string() + ": " + e.what());
    }
    if (doc.value("schema_version", -1) != kSchemaVersion)
        throw Error(ErrorCode::SchemaVersionMismatch, "unsupported sidecar version in " + p.sidecar.string());
    return doc;
}

Shape3 shape3_from(const std::vector<std::int64_t>& v) {
    if (v.size() != 3) throw Error(ErrorCode::InvalidArgument, "expected a 3D shape");
    return {v[0], v[1], v[2]};
}

LabelVolume labels_from_volume(const Volume& vol, const fs::path& path) {
    LabelVolume out(vol.shape, vol.spacing, 0);
    for (std::size_t i = 0; i < vol.data.size(); ++i) {
        const float v = vol.data[i];
        if (!(v >= 0.0f) || v != std::floor(v) || v > 65535.0f)
            throw Error(ErrorCode::InvalidArgument, "non-integer or negative label value in " + path.string());
        out.data[i] = static_cast<std::uint16_t>(v);
    }
    out.num_classes = out.max_label();
    return out;
}

std::vector<std::uint8_t> encode_nifti(const Shape3& shape, const Spacing3& spacing, NiftiType type,
                                       const std::vector<double>& values) {
    const int bpv = bytes_per_voxel(static_cast<std::int16_t>(type));
    std::vector<std::uint8_t> out(352 + values.size() * static_cast<std::size_t>(bpv), 0);
    store_le<std::int32_t>(out.data(), 348);
    const std::int16_t dims[8] = {3, static_cast<std::int16_t>(shape[2]), static_cast<std::int16_t>(shape[1]),
                                  static_cast<std::int16_t>(shape[0]), 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) store_le<std::int16_t>(out.data() + 40 + 2 * i, dims[i]);
    store_le<std::int16_t>(out.data() + 70, static_cast<std::int16_t>(type));
    store_le<std::int16_t>(out.data() + 72, static_cast<std::int16_t>(bpv * 8));
    const float pix[8] = {1.0f, static_cast<float>(spacing[2]), static_cast<float>(spacing[1]),
                          static_cast<float>(spacing[0]), 1.0f, 1.0f, 1.0f, 1.0f};
    for (int i = 0; i < 8; ++i) store_le<float>(out.data() + 76 + 4 * i, pix[i]);
    store_le<float>(out.data() + 108, 352.0f);
    store_le<float>(out.data() + 112, 0.0f);
    store_le<float>(out.data() + 116, 0.0f);
    out[123] = 2;  // xyzt_units: mm
    std::memcpy(out.data() + 344, "n+1\0", 4);
    std::uint8_t* p = out.data() + 352;
    for (double v : values) {
        switch (type) {
            case NiftiType::UInt8: *p = static_cast<std::uint8_t>(v); break;
            case NiftiType::Int16: store_le<std::int16_t>(p, static_cast<std::int16_t>(v)); break;
            case NiftiType::Int32: store_le<std::int32_t>(p, static_cast<std::int32_t>(v)); break;
            case NiftiType::Float32: store_le<float>(p, static_cast<float>(v)); break;
            case NiftiType::Float64: store_le<double>(p, v); break;
        }
        p += bpv;
    }
    return out;
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return inflate_gzip(bytes, path);
    return bytes;
}

void write_file_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    if (has_suffix(path.string(), ".gz")) {
        const auto gz = deflate_gzip(bytes);
        out.write(reinterpret_cast<const char*>(gz.data()), static_cast<std::streamsize>(gz.size()));
    } else {
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

NiftiHeader parse_nifti_header(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kNiftiHeaderSize) throw Error(ErrorCode::TruncatedFile, "NIfTI header shorter than 348 bytes");
    NiftiHeader h;
    const std::int32_t size_le = load<std::int32_t>(bytes.data(), false);
    bool swap = false;
    if (size_le != 348) {
        if (load<std::int32_t>(bytes.data(), true) != 348) throw Error(ErrorCode::BadMagic, "header size field is not 348");
        swap = true;
    }
    h.big_endian = (std::endian::native == std::endian::little) == swap;
    std::memcpy(h.magic.data(), bytes.data() + 344, 4);
    if (std::memcmp(h.magic.data(), "n+1\0", 4) != 0) throw Error(ErrorCode::BadMagic, "not a single-file NIfTI-1 image");
    for (int i = 0; i < 8; ++i) h.dim[i] = load<std::int16_t>(bytes.data() + 40 + 2 * i, swap);
    h.datatype = load<std::int16_t>(bytes.data() + 70, swap);
    h.bitpix = load<std::int16_t>(bytes.data() + 72, swap);
    for (int i = 0; i < 8; ++i) h.pixdim[i] = load<float>(bytes.data() + 76 + 4 * i, swap);
    h.vox_offset = load<float>(bytes.data() + 108, swap);
    h.scl_slope = load<float>(bytes.data() + 112, swap);
    h.scl_inter = load<float>(bytes.data() + 116, swap);
    return h;
}

Volume decode_nifti(const std::vector<std::uint8_t>& bytes) {
    const NiftiHeader h = parse_nifti_header(bytes);
    const int bpv = bytes_per_voxel(h.datatype);
    if (bpv == 0) throw Error(ErrorCode::UnsupportedDatatype, "datatype code " + std::to_string(h.datatype));
    const int ndim = h.dim[0];
    if (ndim < 1 || ndim > 7) throw Error(ErrorCode::UnsupportedLayout, "dim[0] outside 1..7");
    for (int i = 4; i <= ndim; ++i)
        if (h.dim[i] > 1) throw Error(ErrorCode::UnsupportedLayout, "only single 3D volumes are supported");
    auto extent = [&](int i) -> std::int64_t { return i <= ndim ? h.dim[i] : 1; };
    auto spacing = [&](int i) -> double {
        const double v = i <= ndim ? std::fabs(static_cast<double>(h.pixdim[i])) : 1.0;
        return v > 0.0 ? v : 1.0;
    };
    Volume vol;
    vol.shape = {extent(3), extent(2), extent(1)};
    vol.spacing = {spacing(3), spacing(2), spacing(1)};
    for (auto e : vol.shape)
        if (e < 1) throw Error(ErrorCode::UnsupportedLayout, "non-positive image extent");
    const std::int64_t n = voxel_count(vol.shape);
    if (h.vox_offset < 352.0f) throw Error(ErrorCode::BadMagic, "vox_offset below 352");
    const auto offset = static_cast<std::size_t>(h.vox_offset);
    if (bytes.size() < offset || bytes.size() - offset < static_cast<std::size_t>(n) * bpv)
        throw Error(ErrorCode::TruncatedFile, "payload shorter than the header declares");
    const bool swap = h.big_endian == (std::endian::native == std::endian::little);
    const bool scale = h.scl_slope != 0.0f && std::isfinite(h.scl_slope);
    vol.data.resize(static_cast<std::size_t>(n));
    const std::uint8_t* p = bytes.data() + offset;
    for (std::int64_t i = 0; i < n; ++i, p += bpv) {
        double v = 0.0;
        switch (static_cast<NiftiType>(h.datatype)) {
            case NiftiType::UInt8: v = *p; break;
            case NiftiType::Int16: v = load<std::int16_t>(p, swap); break;
            case NiftiType::Int32: v = load<std::int32_t>(p, swap); break;
            case NiftiType::Float32: v = load<float>(p, swap); break;
            case NiftiType::Float64: v = load<double>(p, swap); break;
        }
        if (scale) v = v * h.scl_slope + h.scl_inter;
        vol.data[static_cast<std::size_t>(i)] = static_cast<float>(v);
    }
    return vol;
}

Volume read_nifti(const fs::path& path) { return decode_nifti(read_file_bytes(path)); }

void write_nifti(const Volume& vol, const fs::path& path, NiftiType type) {
    vol.validate();
    write_file_bytes(path, encode_nifti(vol.shape, vol.spacing, type, {vol.data.begin(), vol.data.end()}));
}

void write_nifti(const LabelVolume& labels, const fs::path& path, NiftiType type) {
    labels.validate();
    write_file_bytes(path, encode_nifti(labels.shape, labels.spacing, type, {labels.data.begin(), labels.data.end()}));
}

void write_volume(const Volume& vol, const fs::path& path) {
    vol.validate();
    json meta = {{"dtype", "float32"},
                 {"shape", vol.shape},
                 {"spacing", vol.spacing},
                 {"channels", 1},
                 {"modality", vol.modality}};
    write_native(meta, encode_payload(vol.data), path);
}

void write_volume(const LabelVolume& labels, const fs::path& path) {
    labels.validate();
    json meta = {{"dtype", "uint16"},
                 {"shape", labels.shape},
                 {"spacing", labels.spacing},
                 {"channels", 1},
                 {"num_classes", labels.num_classes}};
    write_native(meta, encode_payload(labels.data), path);
}

void write_probabilities(const ProbabilityVolume& probs, const fs::path& path) {
    if (probs.spacing.size() != probs.probs.shape.size())
        throw Error(ErrorCode::InvalidArgument, "spacing rank differs from shape rank");
    json meta = {{"dtype", "float32"},
                 {"shape", probs.probs.shape},
                 {"spacing", probs.spacing},
                 {"channels", probs.probs.channels}};
    write_native(meta, encode_payload(probs.probs.data), path);
}

Volume read_volume(const fs::path& path) {
    if (is_nifti_path(path)) return read_nifti(path);
    const json meta = read_native_meta(path);
    if (meta.at("channels").get<int>() != 1) throw Error(ErrorCode::InvalidArgument, "multi-channel file is not a volume");
    Volume vol;
    vol.shape = shape3_from(meta.at("shape").get<std::vector<std::int64_t>>());
    vol.spacing = meta.at("spacing").get<Spacing3>();
    vol.modality = meta.value("modality", std::string{});
    const auto bytes = read_file_bytes(native_paths(path).payload);
    const auto n = static_cast<std::size_t>(voxel_count(vol.shape));
    const std::string dtype = meta.at("dtype").get<std::string>();
    if (dtype == "float32") {
        vol.data = decode_payload<float>(bytes, n, path);
    } else if (dtype == "uint16") {
        const auto raw = decode_payload<std::uint16_t>(bytes, n, path);
        vol.data.assign(raw.begin(), raw.end());
    } else {
        throw Error(ErrorCode::UnsupportedDatatype, "native dtype " + dtype);
    }
    vol.validate();
    return vol;
}

LabelVolume read_label_volume(const fs::path& path) {
    if (is_nifti_path(path)) return labels_from_volume(read_nifti(path), path);
    const json meta = read_native_meta(path);
    if (meta.at("dtype").get<std::string>() != "uint16") return labels_from_volume(read_volume(path), path);
    LabelVolume labels;
    labels.shape = shape3_from(meta.at("shape").get<std::vector<std::int64_t>>());
    labels.spacing = meta.at("spacing").get<Spacing3>();
    labels.data = decode_payload<std::uint16_t>(read_file_bytes(native_paths(path).payload),
                                                static_cast<std::size_t>(voxel_count(labels.shape)), path);
    labels.num_classes = std::max(meta.value("num_classes", 0), labels.max_label());
    labels.validate();
    return labels;
}

ProbabilityVolume read_probabilities(const fs::path& path) {
    const json meta = read_native_meta(path);
    if (meta.at("dtype").get<std::string>() != "float32")
        throw Error(ErrorCode::UnsupportedDatatype, "probabilities must be float32");
    ProbabilityVolume pv;
    pv.probs.shape = meta.at("shape").get<std::vector<std::int64_t>>();
    pv.probs.channels = meta.at("channels").get<int>();
    pv.spacing = meta.at("spacing").get<std::vector<double>>();
    const auto n = static_cast<std::size_t>(pv.probs.spatial_size() * pv.probs.channels);
    pv.probs.data = decode_payload<float>(read_file_bytes(native_paths(path).payload), n, path);
    return pv;
}

Case read_case(const fs::path& manifest) {
    json doc;
    try {
        doc = json::parse(read_text(manifest));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoFailure, "malformed manifest " + manifest.string() + ": " + e.what());
    }
    if (doc.value("schema_version", -1) != kSchemaVersion)
        throw Error(ErrorCode::SchemaVersionMismatch, "unsupported manifest version in " + manifest.string());
    const fs::path base = manifest.parent_path();
    Case c;
    c.id = doc.value("id", manifest.stem().stem().string());
    if (!doc.contains("channels") || doc["channels"].empty())
        throw Error(ErrorCode::MissingChannel, "manifest " + manifest.string() + " lists no channels");
    for (const auto& ch : doc["channels"]) {
        const fs::path p = base / ch.at("path").get<std::string>();
        if (!fs::exists(p)) throw Error(ErrorCode::MissingChannel, "channel file not found: " + p.string());
        Volume v = read_volume(p);
        v.modality = ch.value("modality", v.modality);
        c.channels.push_back(std::move(v));
    }
    if (doc.contains("label") && !doc["label"].is_null()) {
        LabelVolume l = read_label_volume(base / doc["label"].get<std::string>());
        l.num_classes = std::max(l.num_classes, doc.value("num_classes", 0));
        c.label = std::move(l);
    }
    c.validate();
    return c;
}

fs::path write_case(const Case& c, const fs::path& dir) {
    c.validate();
    fs::create_directories(dir);
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["id"] = c.id;
    doc["channels"] = json::array();
    for (std::size_t k = 0; k < c.channels.size(); ++k) {
        const std::string name = c.id + "_" + std::to_string(k) + ".json";
        write_volume(c.channels[k], dir / name);
        doc["channels"].push_back({{"path", name}, {"modality", c.channels[k].modality}});
    }
    if (c.label) {
        const std::string name = c.id + "_seg.json";
        write_volume(*c.label, dir / name);
        doc["label"] = name;
        doc["num_classes"] = c.label->num_classes;
    }
    const fs::path manifest = dir / (c.id + ".case.json");
    write_text(manifest, doc.dump(2) + "\n");
    return manifest;
}

std::vector<fs::path> list_case_manifests(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::IoFailure, "not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && has_suffix(e.path().filename().string(), ".case.json")) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace segplan
