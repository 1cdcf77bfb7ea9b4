// SPDX-License-Identifier: MIT
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "segplan/volume.hpp"

namespace segplan {

/// Version tag written to every structured-text document.
inline constexpr int kSchemaVersion = 1;

/// NIfTI-1 datatype codes accepted by the reader.
enum class NiftiType : std::int16_t {
    UInt8 = 2,
    Int16 = 4,
    Int32 = 8,
    Float32 = 16,
    Float64 = 64,
};

/// Decoded fields of a single-file NIfTI-1 header.
struct NiftiHeader {
    std::array<std::int16_t, 8> dim{};
    std::array<float, 8> pixdim{};
    std::int16_t datatype = 0;
    std::int16_t bitpix = 0;
    float vox_offset = 352.0f;
    float scl_slope = 0.0f;
    float scl_inter = 0.0f;
    std::array<char, 4> magic{};
    bool big_endian = false;
};

/// Reads a whole file, transparently inflating gzip content. Throws IoFailure or TruncatedFile.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes bytes, gzip-compressing when the path ends in ".gz". Throws IoFailure.
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// Parses the first 348 bytes of a NIfTI-1 buffer. Throws BadMagic or TruncatedFile.
NiftiHeader parse_nifti_header(const std::vector<std::uint8_t>& bytes);
/// Decodes a NIfTI-1 buffer into a volume (a0 = slowest axis, a2 = NIfTI x).
Volume decode_nifti(const std::vector<std::uint8_t>& bytes);
/// Reads a plain or gzipped single-file NIfTI-1 image.
Volume read_nifti(const std::filesystem::path& path);
/// Writes a NIfTI-1 image with the given datatype; gzip when the path ends in ".gz".
void write_nifti(const Volume& vol, const std::filesystem::path& path, NiftiType type = NiftiType::Float32);
void write_nifti(const LabelVolume& labels, const std::filesystem::path& path, NiftiType type = NiftiType::Int16);

/// Native format: "<stem>.json" sidecar plus "<stem>.raw" little-endian payload.
void write_volume(const Volume& vol, const std::filesystem::path& path);
void write_volume(const LabelVolume& labels, const std::filesystem::path& path);
void write_probabilities(const ProbabilityVolume& probs, const std::filesystem::path& path);

/// Reads a volume from NIfTI (".nii", ".nii.gz") or native (".json", ".raw") files.
Volume read_volume(const std::filesystem::path& path);
/// Reads a label volume; values must be non-negative integers.
LabelVolume read_label_volume(const std::filesystem::path& path);
ProbabilityVolume read_probabilities(const std::filesystem::path& path);

/// Reads a case manifest ("*.case.json"); paths inside are relative to the manifest.
Case read_case(const std::filesystem::path& manifest);
/// Writes the case as native volumes plus "<id>.case.json" into dir; returns the manifest path.
std::filesystem::path write_case(const Case& c, const std::filesystem::path& dir);
/// Sorted list of case manifests directly inside dir.
std::vector<std::filesystem::path> list_case_manifests(const std::filesystem::path& dir);

/// Writes text to a file. Throws IoFailure.
void write_text(const std::filesystem::path& path, const std::string& text);
/// Reads a text file. Throws IoFailure.
std::string read_text(const std::filesystem::path& path);

}  // namespace segplan
