// SPDX-License-Identifier: MIT
#include "segplan/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "json_support.hpp"
#include "segplan/error.hpp"
#include "segplan/io.hpp"
#include "segplan/parallel.hpp"
#include "segplan/preprocess.hpp"
#include "segplan/rng.hpp"

namespace fs = std::filesystem;

namespace segplan {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string label_file_id(const fs::path& p) {
    std::string name = p.filename().string();
    for (const char* suffix : {".nii.gz", ".nii", ".json"})
        if (ends_with(name, suffix)) return name.substr(0, name.size() - std::string(suffix).size());
    return name;
}

std::string generic_relative(const fs::path& p, const fs::path& base) { return fs::relative(p, base).generic_string(); }

json budget_json(const MemoryModel& m) { return json{{"budget", m.budget}, {"anchor", m.anchor}}; }

std::vector<std::string> config_names(const std::set<PlanKind>& configs) {
    std::vector<std::string> out;
    for (auto k : configs) out.emplace_back(to_string(k));
    return out;
}

/// Hash of every regular file under the dataset directory plus the run settings.
std::string input_hash(const RunConfig& cfg) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(cfg.dataset_dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string text;
    for (const auto& f : files) text += generic_relative(f, cfg.dataset_dir) + ":" + sha256_file(f) + "\n";
    json settings{{"tool_version", tool_version()},
                  {"seed", cfg.seed},
                  {"budget_3d", budget_json(cfg.budget_3d)},
                  {"budget_2d", budget_json(cfg.budget_2d)},
                  {"configs", config_names(cfg.configs)},
                  {"folds", cfg.folds},
                  {"split_file", cfg.split_file ? sha256_file(*cfg.split_file) : std::string()},
                  {"group_file", cfg.group_file ? sha256_file(*cfg.group_file) : std::string()}};
    text += settings.dump();
    return sha256_hex(std::vector<std::uint8_t>(text.begin(), text.end()));
}

bool outputs_current(const fs::path& manifest, const fs::path& out_dir, const std::string& hash) {
    if (!fs::exists(manifest)) return false;
    try {
        const json j = json::parse(read_text(manifest));
        if (j.value("input_hash", std::string()) != hash) return false;
        for (const auto& a : j.at("artifacts")) {
            const fs::path p = out_dir / a.at("path").get<std::string>();
            if (!fs::exists(p) || sha256_file(p) != a.at("sha256").get<std::string>()) return false;
        }
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace

CvSplits make_cv_splits(const std::vector<std::string>& ids, int folds, const std::map<std::string, std::string>& groups,
                        std::uint64_t seed) {
    if (folds < 2) throw Error(ErrorCode::InvalidArgument, "fold count must be at least 2");
    std::map<std::string, std::vector<std::string>> members;
    for (const auto& id : ids) {
        const auto it = groups.find(id);
        members[it == groups.end() ? id : it->second].push_back(id);
    }
    if (members.size() < static_cast<std::size_t>(folds))
        throw Error(ErrorCode::TooFewGroups, std::to_string(members.size()) + " groups cannot fill " + std::to_string(folds) + " folds");
    std::vector<std::string> keys;
    for (const auto& [k, v] : members) keys.push_back(k);
    RngStream rng(seed);
    for (std::size_t i = keys.size(); i > 1; --i) std::swap(keys[i - 1], keys[rng.uniform_index(i)]);
    CvSplits out(static_cast<std::size_t>(folds));
    for (std::size_t i = 0; i < keys.size(); ++i) {
        auto& fold = out[i % static_cast<std::size_t>(folds)];
        const auto& m = members[keys[i]];
        fold.insert(fold.end(), m.begin(), m.end());
    }
    for (auto& f : out) std::sort(f.begin(), f.end());
    return out;
}

void validate_splits(const CvSplits& splits, const std::vector<std::string>& ids) {
    std::vector<std::string> seen;
    for (const auto& f : splits) seen.insert(seen.end(), f.begin(), f.end());
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
        throw Error(ErrorCode::InvalidArgument, "split file assigns a case to more than one fold");
    std::vector<std::string> expected = ids;
    std::sort(expected.begin(), expected.end());
    if (seen != expected) throw Error(ErrorCode::InvalidArgument, "split file does not cover exactly the dataset cases");
}

std::string splits_to_json(const CvSplits& splits) {
    json j{{"schema_version", kSchemaVersion}, {"folds", splits}};
    return j.dump(2) + "\n";
}

CvSplits splits_from_json(const std::string& text) {
    const json j = parse_versioned(text, "splits");
    try {
        return j.at("folds").get<CvSplits>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("incomplete splits document: ") + e.what());
    }
}

std::map<std::string, std::string> groups_from_json(const std::string& text) {
    try {
        return json::parse(text).get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed group map: ") + e.what());
    }
}

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::IoFailure, "SHA-256 computation failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return out.str();
}

std::string sha256_file(const fs::path& path) {
    const std::string text = read_text(path);
    return sha256_hex(std::vector<std::uint8_t>(text.begin(), text.end()));
}

MemoryModel parse_budget(const std::string& text, bool three_d) {
    if (text == "reference-11g") return three_d ? reference_memory_model_3d() : reference_memory_model_2d();
    double v = 0.0;
    std::size_t used = 0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || !(v > 0.0) || !std::isfinite(v))
        throw Error(ErrorCode::InvalidArgument, "budget must be 'reference-11g' or a positive number, got '" + text + "'");
    MemoryModel m;
    m.budget = v;
    m.anchor = "custom";
    return m;
}

std::set<PlanKind> parse_configs(const std::string& text) {
    std::set<PlanKind> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ','))
        if (!part.empty()) out.insert(plan_kind_from_string(part));
    return out;
}

DatasetFingerprint fingerprint_dataset(const fs::path& dataset_dir, std::uint64_t seed, int jobs) {
    const auto manifests = list_case_manifests(dataset_dir);
    if (manifests.empty()) throw Error(ErrorCode::EmptyInput, "no cases found in " + dataset_dir.string());
    std::vector<CaseFingerprint> cases(manifests.size());
    parallel_for(manifests.size(), jobs, [&](std::size_t i) { cases[i] = extract_case_fingerprint(read_case(manifests[i]), seed); });
    return aggregate_dataset_fingerprint(std::move(cases));
}

std::vector<fs::path> preprocess_dataset(const PipelineFingerprint& plan, const fs::path& dataset_dir,
                                         const fs::path& out_dir, int jobs) {
    const auto manifests = list_case_manifests(dataset_dir);
    if (manifests.empty()) throw Error(ErrorCode::EmptyInput, "no cases found in " + dataset_dir.string());
    std::vector<const UNetPlan*> plans;
    for (const auto& p : plan.plans) {
        if (p.kind == PlanKind::U3D_CASCADE_FULLRES && plan.find(PlanKind::U3D_FULLRES)) continue;
        plans.push_back(&p);
    }
    std::vector<std::vector<fs::path>> written(manifests.size());
    parallel_for(manifests.size(), jobs, [&](std::size_t i) {
        const Case c = read_case(manifests[i]);
        const BoundingBox box = nonzero_bbox(c);
        for (const UNetPlan* p : plans) {
            const fs::path dir = out_dir / to_string(p->kind);
            const Case out = preprocess_case(c, *p);
            const fs::path manifest = write_case(out, dir);
            const Volume& first = out.channels.front();
            json prov{{"schema_version", kSchemaVersion},
                      {"id", c.id},
                      {"source", manifests[i].filename().string()},
                      {"configuration", to_string(p->kind)},
                      {"crop_lo", box.lo},
                      {"crop_hi", box.hi},
                      {"shape_before_crop", c.channels.front().shape},
                      {"shape_after_preprocessing", first.shape},
                      {"spacing_after_preprocessing", first.spacing},
                      {"tool_version", tool_version()}};
            json norm = json::array();
            for (const auto& n : p->normalization) norm.push_back(to_string(n.variant));
            prov["normalization"] = norm;
            const fs::path prov_path = dir / (c.id + ".provenance.json");
            write_text(prov_path, prov.dump(2) + "\n");
            written[i].push_back(manifest);
            for (std::size_t k = 0; k < out.channels.size(); ++k) {
                const std::string stem = c.id + "_" + std::to_string(k);
                written[i].push_back(dir / (stem + ".json"));
                written[i].push_back(dir / (stem + ".raw"));
            }
            if (out.label) {
                written[i].push_back(dir / (c.id + "_seg.json"));
                written[i].push_back(dir / (c.id + "_seg.raw"));
            }
            written[i].push_back(prov_path);
        }
    });
    std::vector<fs::path> all;
    for (auto& w : written) all.insert(all.end(), w.begin(), w.end());
    std::sort(all.begin(), all.end());
    return all;
}

RunResult run_pipeline(const RunConfig& cfg) {
    const auto manifests = list_case_manifests(cfg.dataset_dir);
    if (manifests.empty()) throw Error(ErrorCode::EmptyInput, "no cases found in " + cfg.dataset_dir.string());
    RunResult result;
    result.manifest = cfg.output_dir / "run_manifest.json";
    const std::string hash = input_hash(cfg);
    if (outputs_current(result.manifest, cfg.output_dir, hash)) {
        result.up_to_date = true;
        return result;
    }
    fs::create_directories(cfg.output_dir);

    const DatasetFingerprint fp = fingerprint_dataset(cfg.dataset_dir, cfg.seed, cfg.jobs);
    const fs::path fp_path = cfg.output_dir / "fingerprint.json";
    write_fingerprint(fp, fp_path);

    PlannerOptions options;
    options.model_3d = cfg.budget_3d;
    options.model_2d = cfg.budget_2d;
    options.configs = cfg.configs;
    options.fingerprint_ref = "fingerprint.json";
    const PipelineFingerprint plan = assemble_pipeline_fingerprint(fp, options);
    const fs::path plan_path = cfg.output_dir / "plan.json";
    write_plan(plan, plan_path);

    CvSplits splits;
    if (cfg.split_file) {
        splits = splits_from_json(read_text(*cfg.split_file));
        validate_splits(splits, fp.case_ids);
    } else {
        const auto groups = cfg.group_file ? groups_from_json(read_text(*cfg.group_file)) : std::map<std::string, std::string>{};
        splits = make_cv_splits(fp.case_ids, cfg.folds, groups, cfg.seed);
    }
    const fs::path splits_path = cfg.output_dir / "splits.json";
    write_text(splits_path, splits_to_json(splits));

    result.artifacts = {fp_path, plan_path, splits_path};
    const auto pre = preprocess_dataset(plan, cfg.dataset_dir, cfg.output_dir / "preprocessed", cfg.jobs);
    result.artifacts.insert(result.artifacts.end(), pre.begin(), pre.end());

    json artifacts = json::array();
    for (const auto& a : result.artifacts)
        artifacts.push_back({{"path", generic_relative(a, cfg.output_dir)}, {"sha256", sha256_file(a)}});
    json manifest{{"schema_version", kSchemaVersion},
                  {"tool_version", tool_version()},
                  {"seed", cfg.seed},
                  {"budget_3d", budget_json(cfg.budget_3d)},
                  {"budget_2d", budget_json(cfg.budget_2d)},
                  {"configs", config_names(cfg.configs)},
                  {"folds", static_cast<int>(splits.size())},
                  {"input_hash", hash},
                  {"artifacts", artifacts}};
    write_text(result.manifest, manifest.dump(2) + "\n");
    return result;
}

std::vector<fs::path> list_label_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::IoFailure, "not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (ends_with(name, ".nii") || ends_with(name, ".nii.gz")) out.push_back(e.path());
        else if (ends_with(name, ".json") && fs::exists(fs::path(e.path()).replace_extension(".raw"))) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

struct LabelPairs {
    std::vector<std::string> ids;
    std::vector<LabelVolume> preds;
    std::vector<LabelVolume> refs;
    int num_classes = 0;
};

LabelPairs load_label_pairs(const fs::path& pred_dir, const fs::path& ref_dir, int num_classes, int jobs) {
    const auto files = list_label_files(pred_dir);
    if (files.empty()) throw Error(ErrorCode::EmptyInput, "no predictions found in " + pred_dir.string());
    LabelPairs p;
    p.preds.resize(files.size());
    p.refs.resize(files.size());
    for (const auto& f : files) {
        if (!fs::exists(ref_dir / f.filename()))
            throw Error(ErrorCode::IoFailure, "no reference for " + f.filename().string() + " in " + ref_dir.string());
        p.ids.push_back(label_file_id(f));
    }
    parallel_for(files.size(), jobs, [&](std::size_t i) {
        p.preds[i] = read_label_volume(files[i]);
        p.refs[i] = read_label_volume(ref_dir / files[i].filename());
    });
    p.num_classes = num_classes;
    if (p.num_classes <= 0)
        for (std::size_t i = 0; i < files.size(); ++i)
            p.num_classes = std::max({p.num_classes, p.refs[i].num_classes, p.refs[i].max_label(), p.preds[i].max_label()});
    return p;
}

}  // namespace

EvaluationResult evaluate_directories(const fs::path& pred_dir, const fs::path& ref_dir, int num_classes, int jobs) {
    const auto p = load_label_pairs(pred_dir, ref_dir, num_classes, jobs);
    return evaluate(p.ids, p.preds, p.refs, p.num_classes);
}

PostprocessingDecision decide_postprocessing_directories(const fs::path& pred_dir, const fs::path& ref_dir, int num_classes) {
    const auto p = load_label_pairs(pred_dir, ref_dir, num_classes, 1);
    return decide_postprocessing(p.preds, p.refs, p.num_classes);
}

ScoreTable parse_scores_csv(const std::string& text) {
    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            const auto b = cell.find_first_not_of(" \t\r");
            const auto e = cell.find_last_not_of(" \t\r");
            out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
        }
        return out;
    };
    std::stringstream in(text);
    std::string line;
    ScoreTable t;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split(line);
        if (header) {
            if (cells.size() < 2) throw Error(ErrorCode::InvalidArgument, "score table header needs at least one case column");
            t.cases.assign(cells.begin() + 1, cells.end());
            header = false;
            continue;
        }
        if (cells.size() != t.cases.size() + 1) throw Error(ErrorCode::InvalidArgument, "score row width differs from the header");
        t.algorithms.push_back(cells[0]);
        std::vector<double> row;
        for (std::size_t k = 1; k < cells.size(); ++k) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cells[k], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != cells[k].size()) throw Error(ErrorCode::InvalidArgument, "non-numeric score '" + cells[k] + "'");
            row.push_back(v);
        }
        t.scores.push_back(std::move(row));
    }
    if (t.algorithms.empty()) throw Error(ErrorCode::EmptyInput, "score table has no rows");
    return t;
}

}  // namespace segplan
