// SPDX-License-Identifier: MIT
#include "segplan/evalselect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json_support.hpp"
#include "segplan/error.hpp"
#include "segplan/morphology.hpp"
#include "segplan/parallel.hpp"
#include "segplan/rng.hpp"

namespace segplan {

namespace {

void check_geometry(const LabelVolume& a, const LabelVolume& b) {
    if (a.shape != b.shape || a.data.size() != b.data.size())
        throw Error(ErrorCode::GeometryMismatch, "prediction and reference differ in shape");
    for (int k = 0; k < 3; ++k)
        if (std::fabs(a.spacing[k] - b.spacing[k]) > 1e-6)
            throw Error(ErrorCode::GeometryMismatch, "prediction and reference differ in spacing");
}

void check_pairs(const std::vector<LabelVolume>& preds, const std::vector<LabelVolume>& refs) {
    if (preds.empty()) throw Error(ErrorCode::EmptyInput, "no prediction/reference pairs");
    if (preds.size() != refs.size()) throw Error(ErrorCode::GeometryMismatch, "prediction and reference counts differ");
}

/// Rank among kinds for tie breaking: 3D full-res, cascade, low-res, 2D.
int kind_rank(PlanKind k) {
    switch (k) {
        case PlanKind::U3D_FULLRES: return 0;
        case PlanKind::U3D_CASCADE_FULLRES: return 1;
        case PlanKind::U3D_LOWRES: return 2;
        case PlanKind::U2D: return 3;
    }
    return 4;
}

std::vector<int> member_ranks(const std::vector<PlanKind>& members) {
    std::vector<int> r;
    for (auto m : members) r.push_back(kind_rank(m));
    std::sort(r.begin(), r.end());
    return r;
}

}  // namespace

void to_json(json& j, const CaseEvaluation& c) { j = json{{"id", c.id}, {"dice", c.dice}}; }
void from_json(const json& j, CaseEvaluation& c) {
    c.id = j.at("id").get<std::string>();
    c.dice = j.at("dice").get<std::vector<double>>();
}

double dice(const LabelVolume& pred, const LabelVolume& ref, int cls) {
    check_geometry(pred, ref);
    std::int64_t p = 0, r = 0, both = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool in_p = pred.data[i] == cls;
        const bool in_r = ref.data[i] == cls;
        p += in_p;
        r += in_r;
        both += in_p && in_r;
    }
    if (p + r == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(p + r);
}

CaseEvaluation evaluate_case(const std::string& id, const LabelVolume& pred, const LabelVolume& ref, int num_classes) {
    check_geometry(pred, ref);
    std::vector<std::int64_t> p(static_cast<std::size_t>(num_classes) + 1, 0), r(p.size(), 0), both(p.size(), 0);
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const auto a = pred.data[i];
        const auto b = ref.data[i];
        if (a <= num_classes) ++p[a];
        if (b <= num_classes) ++r[b];
        if (a == b && a <= num_classes) ++both[a];
    }
    CaseEvaluation out{id, {}};
    for (int c = 1; c <= num_classes; ++c) {
        const auto k = static_cast<std::size_t>(c);
        out.dice.push_back(p[k] + r[k] == 0 ? 1.0 : 2.0 * static_cast<double>(both[k]) / static_cast<double>(p[k] + r[k]));
    }
    return out;
}

double mean_foreground_dice(const std::vector<CaseEvaluation>& cases) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : cases)
        for (double d : c.dice) {
            sum += d;
            ++n;
        }
    if (n == 0) throw Error(ErrorCode::EmptyInput, "no Dice entries to average");
    return sum / static_cast<double>(n);
}

std::vector<double> class_mean_dice(const std::vector<CaseEvaluation>& cases) {
    if (cases.empty()) throw Error(ErrorCode::EmptyInput, "no cases to average");
    std::vector<double> out(cases.front().dice.size(), 0.0);
    for (const auto& c : cases) {
        if (c.dice.size() != out.size()) throw Error(ErrorCode::InvalidArgument, "cases differ in class count");
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += c.dice[k];
    }
    for (double& v : out) v /= static_cast<double>(cases.size());
    return out;
}

EvaluationResult evaluate(const std::vector<std::string>& ids, const std::vector<LabelVolume>& preds,
                          const std::vector<LabelVolume>& refs, int num_classes) {
    check_pairs(preds, refs);
    if (ids.size() != preds.size()) throw Error(ErrorCode::InvalidArgument, "one id per case is required");
    EvaluationResult r;
    r.num_classes = num_classes;
    for (std::size_t i = 0; i < preds.size(); ++i) r.cases.push_back(evaluate_case(ids[i], preds[i], refs[i], num_classes));
    r.class_mean = class_mean_dice(r.cases);
    r.mean_foreground_dice = mean_foreground_dice(r.cases);
    return r;
}

std::string evaluation_to_json(const EvaluationResult& r) {
    json j{{"schema_version", kSchemaVersion}, {"configuration", r.configuration}, {"num_classes", r.num_classes},
           {"cases", r.cases}, {"class_mean", r.class_mean}, {"mean_foreground_dice", r.mean_foreground_dice}};
    return j.dump(2) + "\n";
}

EvaluationResult evaluation_from_json(const std::string& text) {
    const json j = parse_versioned(text, "evaluation");
    try {
        EvaluationResult r;
        r.configuration = j.at("configuration").get<std::string>();
        r.num_classes = j.at("num_classes").get<int>();
        r.cases = j.at("cases").get<std::vector<CaseEvaluation>>();
        r.class_mean = j.at("class_mean").get<std::vector<double>>();
        r.mean_foreground_dice = j.at("mean_foreground_dice").get<double>();
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("incomplete evaluation document: ") + e.what());
    }
}

std::string candidate_name(const std::vector<PlanKind>& members) {
    std::string out;
    for (std::size_t i = 0; i < members.size(); ++i) {
        if (i) out += '+';
        out += to_string(members[i]);
    }
    return out;
}

std::vector<PlanKind> parse_candidate(const std::string& name) {
    std::vector<PlanKind> out;
    std::stringstream ss(name);
    std::string part;
    while (std::getline(ss, part, '+')) out.push_back(plan_kind_from_string(part));
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, "empty candidate name");
    return out;
}

CandidateScore select_configuration(const std::vector<CandidateScore>& candidates) {
    if (candidates.empty()) throw Error(ErrorCode::EmptyInput, "no candidates to select from");
    const CandidateScore* best = &candidates.front();
    for (const auto& c : candidates) {
        if (c.members.empty()) throw Error(ErrorCode::InvalidArgument, "candidate without members");
        if (c.score > best->score) {
            best = &c;
        } else if (c.score == best->score) {
            if (c.members.size() < best->members.size() ||
                (c.members.size() == best->members.size() && member_ranks(c.members) < member_ranks(best->members)))
                best = &c;
        }
    }
    return *best;
}

LabelVolume largest_component_filter(const LabelVolume& labels, int scope) {
    labels.validate();
    std::vector<std::uint8_t> mask(labels.data.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = scope == kAllForeground ? labels.data[i] != 0 : labels.data[i] == scope;
    const auto comps = label_components(mask, labels.shape);
    if (comps.sizes.size() <= 1) return labels;
    std::int32_t keep = 0;
    for (std::size_t k = 1; k < comps.sizes.size(); ++k)
        if (comps.sizes[k] > comps.sizes[static_cast<std::size_t>(keep)]) keep = static_cast<std::int32_t>(k);
    LabelVolume out = labels;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (comps.ids[i] >= 0 && comps.ids[i] != keep) out.data[i] = 0;
    return out;
}

PostprocessingDecision decide_postprocessing(const std::vector<LabelVolume>& preds, const std::vector<LabelVolume>& refs,
                                             int num_classes) {
    check_pairs(preds, refs);
    auto score = [&](const std::vector<LabelVolume>& ps) {
        std::vector<CaseEvaluation> cases;
        for (std::size_t i = 0; i < ps.size(); ++i) cases.push_back(evaluate_case({}, ps[i], refs[i], num_classes));
        return cases;
    };
    PostprocessingDecision d;
    d.per_class.assign(static_cast<std::size_t>(num_classes), false);
    std::vector<LabelVolume> current = preds;
    auto cur_eval = score(current);
    d.dice_before = mean_foreground_dice(cur_eval);

    std::vector<LabelVolume> joint;
    for (const auto& p : current) joint.push_back(largest_component_filter(p, kAllForeground));
    const auto joint_eval = score(joint);
    const auto before_cls = class_mean_dice(cur_eval);
    const auto after_cls = class_mean_dice(joint_eval);
    bool no_class_worse = true;
    for (std::size_t k = 0; k < before_cls.size(); ++k) no_class_worse = no_class_worse && after_cls[k] >= before_cls[k];
    if (mean_foreground_dice(joint_eval) > d.dice_before && no_class_worse) {
        d.all_foreground_as_one = true;
        current = std::move(joint);
        cur_eval = joint_eval;
    }

    for (int c = 1; c <= num_classes; ++c) {
        std::vector<LabelVolume> cand;
        for (const auto& p : current) cand.push_back(largest_component_filter(p, c));
        const auto cand_eval = score(cand);
        const auto k = static_cast<std::size_t>(c - 1);
        if (class_mean_dice(cand_eval)[k] > class_mean_dice(cur_eval)[k]) {
            d.per_class[k] = true;
            current = std::move(cand);
            cur_eval = cand_eval;
        }
    }
    d.dice_after = mean_foreground_dice(cur_eval);
    return d;
}

LabelVolume apply_postprocessing(const LabelVolume& labels, const PostprocessingDecision& decision) {
    LabelVolume out = decision.all_foreground_as_one ? largest_component_filter(labels, kAllForeground) : labels;
    for (std::size_t k = 0; k < decision.per_class.size(); ++k)
        if (decision.per_class[k]) out = largest_component_filter(out, static_cast<int>(k) + 1);
    return out;
}

std::string decision_to_json(const PostprocessingDecision& d) {
    json j{{"schema_version", kSchemaVersion},
           {"all_foreground_as_one", d.all_foreground_as_one},
           {"per_class", d.per_class},
           {"dice_before", d.dice_before},
           {"dice_after", d.dice_after}};
    return j.dump(2) + "\n";
}

PostprocessingDecision decision_from_json(const std::string& text) {
    const json j = parse_versioned(text, "postprocessing decision");
    try {
        PostprocessingDecision d;
        d.all_foreground_as_one = j.at("all_foreground_as_one").get<bool>();
        d.per_class = j.at("per_class").get<std::vector<bool>>();
        d.dice_before = j.at("dice_before").get<double>();
        d.dice_after = j.at("dice_after").get<double>();
        return d;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("incomplete postprocessing decision: ") + e.what());
    }
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

RankDistribution bootstrap_ranking(const std::vector<std::vector<double>>& scores, int replicates, std::uint64_t seed,
                                   const std::vector<std::string>& names, int jobs) {
    if (scores.size() < 2) throw Error(ErrorCode::InvalidArgument, "bootstrap ranking needs at least 2 algorithms");
    const std::size_t n_cases = scores.front().size();
    if (n_cases == 0) throw Error(ErrorCode::InvalidArgument, "bootstrap ranking needs at least 1 case");
    for (const auto& row : scores)
        if (row.size() != n_cases) throw Error(ErrorCode::InvalidArgument, "score rows differ in case count");
    if (replicates < 1) throw Error(ErrorCode::InvalidArgument, "replicate count must be positive");
    if (!names.empty() && names.size() != scores.size()) throw Error(ErrorCode::InvalidArgument, "one name per algorithm is required");
    const std::size_t k = scores.size();

    std::vector<std::vector<double>> per_replicate(static_cast<std::size_t>(replicates));
    const RngStream root(seed);
    parallel_for(per_replicate.size(), jobs, [&](std::size_t r) {
        RngStream rng = root.child(r);
        std::vector<double> means(k, 0.0);
        for (std::size_t i = 0; i < n_cases; ++i) {
            const auto c = static_cast<std::size_t>(rng.uniform_index(n_cases));
            for (std::size_t a = 0; a < k; ++a) means[a] += scores[a][c];
        }
        for (double& m : means) m /= static_cast<double>(n_cases);
        per_replicate[r] = average_ranks(means);
    });

    RankDistribution out;
    out.replicates = replicates;
    out.algorithms = names;
    if (out.algorithms.empty())
        for (std::size_t a = 0; a < k; ++a) out.algorithms.push_back("algorithm_" + std::to_string(a));
    out.histogram.assign(k, std::vector<std::int64_t>(2 * k - 1, 0));
    out.mean_rank.assign(k, 0.0);
    for (const auto& ranks : per_replicate)
        for (std::size_t a = 0; a < k; ++a) {
            out.histogram[a][static_cast<std::size_t>(std::lround(2.0 * (ranks[a] - 1.0)))] += 1;
            out.mean_rank[a] += ranks[a];
        }
    for (double& m : out.mean_rank) m /= static_cast<double>(replicates);
    return out;
}

std::string ranking_to_json(const RankDistribution& r) {
    json algos = json::array();
    for (std::size_t a = 0; a < r.algorithms.size(); ++a) {
        json bins = json::object();
        for (std::size_t b = 0; b < r.histogram[a].size(); ++b) {
            std::ostringstream key;
            key << 1.0 + static_cast<double>(b) / 2.0;
            bins[key.str()] = r.histogram[a][b];
        }
        algos.push_back({{"name", r.algorithms[a]}, {"mean_rank", r.mean_rank[a]}, {"rank_histogram", bins}});
    }
    json j{{"schema_version", kSchemaVersion}, {"replicates", r.replicates}, {"algorithms", algos}};
    return j.dump(2) + "\n";
}

}  // namespace segplan
