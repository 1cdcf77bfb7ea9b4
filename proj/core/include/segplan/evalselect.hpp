// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "segplan/planner.hpp"
#include "segplan/volume.hpp"

namespace segplan {

/// 2|P∩R| / (|P| + |R|) over voxels equal to cls; 1 when both are empty. Throws GeometryMismatch.
double dice(const LabelVolume& pred, const LabelVolume& ref, int cls);

struct CaseEvaluation {
    std::string id;
    /// Dice of classes 1..C.
    std::vector<double> dice;
};

struct EvaluationResult {
    std::string configuration;
    int num_classes = 0;
    std::vector<CaseEvaluation> cases;
    /// Mean over cases per class 1..C.
    std::vector<double> class_mean;
    /// Mean over all (case, class) pairs.
    double mean_foreground_dice = 0.0;
};

CaseEvaluation evaluate_case(const std::string& id, const LabelVolume& pred, const LabelVolume& ref, int num_classes);

/// Unweighted mean over all (case, class) entries. Throws EmptyInput.
double mean_foreground_dice(const std::vector<CaseEvaluation>& cases);
/// Mean over cases for each class. Throws EmptyInput.
std::vector<double> class_mean_dice(const std::vector<CaseEvaluation>& cases);

/// Evaluates matched prediction/reference pairs.
EvaluationResult evaluate(const std::vector<std::string>& ids, const std::vector<LabelVolume>& preds,
                          const std::vector<LabelVolume>& refs, int num_classes);

std::string evaluation_to_json(const EvaluationResult& r);
EvaluationResult evaluation_from_json(const std::string& text);

/// A single configuration or an ensemble of configurations with its cross-validation score.
struct CandidateScore {
    std::vector<PlanKind> members;
    double score = 0.0;
};

/// "3d_fullres" or members joined with '+', e.g. "3d_lowres+3d_fullres".
std::string candidate_name(const std::vector<PlanKind>& members);
std::vector<PlanKind> parse_candidate(const std::string& name);

/// Highest score; ties prefer fewer members, then the order 3D full-res, cascade, low-res, 2D.
/// Throws EmptyInput.
CandidateScore select_configuration(const std::vector<CandidateScore>& candidates);

/// 0 filters the joint foreground; c >= 1 filters class c only.
constexpr int kAllForeground = 0;

/// Keeps the largest full-connectivity component of the scope mask; size ties keep the component
/// whose first voxel comes first in scan order.
LabelVolume largest_component_filter(const LabelVolume& labels, int scope = kAllForeground);

struct PostprocessingDecision {
    bool all_foreground_as_one = false;
    /// Flags of classes 1..C.
    std::vector<bool> per_class;
    double dice_before = 0.0;
    double dice_after = 0.0;

    bool operator==(const PostprocessingDecision&) const = default;
};

/// Step 1 accepts the joint filter iff the mean foreground Dice strictly improves and no class mean
/// decreases; step 2 then accepts each class filter iff that class mean strictly improves.
/// Throws EmptyInput or GeometryMismatch.
PostprocessingDecision decide_postprocessing(const std::vector<LabelVolume>& preds, const std::vector<LabelVolume>& refs,
                                             int num_classes);

LabelVolume apply_postprocessing(const LabelVolume& labels, const PostprocessingDecision& decision);

std::string decision_to_json(const PostprocessingDecision& d);
PostprocessingDecision decision_from_json(const std::string& text);

struct RankDistribution {
    std::vector<std::string> algorithms;
    int replicates = 0;
    /// histogram[a][k] counts replicates where algorithm a had rank 1 + k/2.
    std::vector<std::vector<std::int64_t>> histogram;
    std::vector<double> mean_rank;
};

/// Ranks descending with ties sharing the average rank.
std::vector<double> average_ranks(const std::vector<double>& values);

/// Resamples cases with replacement; replicate r draws from RngStream(seed).child(r).
/// Throws InvalidArgument for fewer than 2 algorithms, no cases or ragged rows.
RankDistribution bootstrap_ranking(const std::vector<std::vector<double>>& scores, int replicates, std::uint64_t seed,
                                   const std::vector<std::string>& names = {}, int jobs = 1);

std::string ranking_to_json(const RankDistribution& r);

}  // namespace segplan
