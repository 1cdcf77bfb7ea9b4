// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "segplan/evalselect.hpp"
#include "segplan/fingerprint.hpp"
#include "segplan/planner.hpp"

namespace segplan {

/// Case ids per fold.
using CvSplits = std::vector<std::vector<std::string>>;

/// Groups (or single cases) shuffled with the seed and dealt round-robin; ids within a fold sorted.
/// Ids missing from the group map form their own group. Throws TooFewGroups or InvalidArgument.
CvSplits make_cv_splits(const std::vector<std::string>& ids, int folds,
                        const std::map<std::string, std::string>& groups, std::uint64_t seed);

/// Throws InvalidArgument unless the folds partition ids exactly.
void validate_splits(const CvSplits& splits, const std::vector<std::string>& ids);

std::string splits_to_json(const CvSplits& splits);
CvSplits splits_from_json(const std::string& text);
/// {"case_id": "group", ...} document.
std::map<std::string, std::string> groups_from_json(const std::string& text);

/// Lowercase hex SHA-256.
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// "reference-11g" or a positive number of cost units.
MemoryModel parse_budget(const std::string& text, bool three_d);
/// Comma separated plan kinds.
std::set<PlanKind> parse_configs(const std::string& text);

/// Reads every case manifest of a directory and extracts the dataset fingerprint.
/// Throws EmptyInput ("no cases found") for a directory without manifests.
DatasetFingerprint fingerprint_dataset(const std::filesystem::path& dataset_dir, std::uint64_t seed, int jobs = 1);

/// Preprocesses every case for each plan (the cascade full-res stage reuses the full-res data).
/// Writes <out>/<kind>/<id>.case.json plus <id>.provenance.json. Returns the written files, sorted.
std::vector<std::filesystem::path> preprocess_dataset(const PipelineFingerprint& plan,
                                                      const std::filesystem::path& dataset_dir,
                                                      const std::filesystem::path& out_dir, int jobs = 1);

struct RunConfig {
    std::filesystem::path dataset_dir;
    std::filesystem::path output_dir;
    MemoryModel budget_3d = reference_memory_model_3d();
    MemoryModel budget_2d = reference_memory_model_2d();
    std::uint64_t seed = 0;
    std::set<PlanKind> configs;
    int folds = 5;
    std::optional<std::filesystem::path> split_file;
    std::optional<std::filesystem::path> group_file;
    int jobs = 1;
};

struct RunResult {
    bool up_to_date = false;
    std::filesystem::path manifest;
    std::vector<std::filesystem::path> artifacts;
};

/// fingerprint -> plan -> splits -> preprocess, then a run manifest with content hashes.
/// A rerun with unchanged inputs and intact artifacts is a no-op.
RunResult run_pipeline(const RunConfig& cfg);

/// Label volume files of a directory (NIfTI or native sidecars), sorted by name.
std::vector<std::filesystem::path> list_label_files(const std::filesystem::path& dir);

/// Pairs files of equal name and evaluates them. num_classes <= 0 takes the largest label present.
EvaluationResult evaluate_directories(const std::filesystem::path& pred_dir, const std::filesystem::path& ref_dir,
                                      int num_classes = 0, int jobs = 1);

PostprocessingDecision decide_postprocessing_directories(const std::filesystem::path& pred_dir,
                                                         const std::filesystem::path& ref_dir, int num_classes = 0);

/// CSV with header "algorithm,<case>..." and one row per algorithm.
struct ScoreTable {
    std::vector<std::string> algorithms;
    std::vector<std::string> cases;
    std::vector<std::vector<double>> scores;
};
ScoreTable parse_scores_csv(const std::string& text);

}  // namespace segplan
