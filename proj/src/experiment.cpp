#include "parkocc/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "parkocc/errors.hpp"
#include "parkocc/frameworks.hpp"
#include "parkocc/log.hpp"
#include "parkocc/pool.hpp"
#include "parkocc/rng.hpp"
#include "parkocc/split.hpp"

namespace parkocc {

namespace fs = std::filesystem;

std::string to_string(FrameworkChoice choice) {
    switch (choice) {
        case FrameworkChoice::single_model: return "single_model";
        case FrameworkChoice::dynamic_selection: return "dynamic_selection";
        case FrameworkChoice::majority_vote: return "majority_vote";
        case FrameworkChoice::stacking_svm: return "stacking_svm";
        case FrameworkChoice::stacking_mlp: return "stacking_mlp";
    }
    return "unknown";
}

FrameworkChoice framework_choice_from_string(const std::string& text) {
    for (auto c : {FrameworkChoice::single_model, FrameworkChoice::dynamic_selection, FrameworkChoice::majority_vote,
                   FrameworkChoice::stacking_svm, FrameworkChoice::stacking_mlp}) {
        if (text == to_string(c)) return c;
    }
    if (text == "stacking") return FrameworkChoice::stacking_svm;
    switch (framework_kind_from_string(text)) {
        case FrameworkKind::single_model: return FrameworkChoice::single_model;
        case FrameworkKind::dynamic_selection: return FrameworkChoice::dynamic_selection;
        case FrameworkKind::majority_vote: return FrameworkChoice::majority_vote;
        case FrameworkKind::stacking: return FrameworkChoice::stacking_svm;
    }
    throw DataError("unknown framework '" + text + "'");
}

// ---------------------------------------------------------------- JSON

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    auto targets = nlohmann::json::array();
    for (const auto& t : c.targets) {
        targets.push_back({{"manifest", t.manifest.string()},
                           {"scenarios", t.scenarios},
                           {"per_scenario", t.per_scenario},
                           {"label", t.label}});
    }
    std::vector<std::string> frameworks;
    for (auto f : c.frameworks) frameworks.push_back(to_string(f));
    j = nlohmann::json{{"id", c.id},
                       {"source_manifest", c.source_manifest.string()},
                       {"source_scenarios", c.source_scenarios},
                       {"targets", targets},
                       {"backbones", c.backbones},
                       {"frameworks", frameworks},
                       {"runs", c.runs},
                       {"seed", c.seed},
                       {"train", c.train},
                       {"svm", {{"c", c.svm.c}, {"gamma", c.svm.gamma}}},
                       {"mlp",
                        {{"layers", c.mlp.layers},
                         {"epochs", c.mlp.epochs},
                         {"batch_size", c.mlp.batch_size},
                         {"lr", c.mlp.lr}}},
                       {"out_dir", c.out_dir.string()},
                       {"save_models", c.save_models},
                       {"cache_patches", c.cache_patches},
                       {"allow_random_features", c.allow_random_features}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c = ExperimentConfig{};
    c.id = j.value("id", c.id);
    c.source_manifest = j.at("source_manifest").get<std::string>();
    c.source_scenarios = j.value("source_scenarios", c.source_scenarios);
    if (j.contains("targets")) {
        for (const auto& t : j.at("targets")) {
            TargetSpec spec;
            spec.manifest = t.at("manifest").get<std::string>();
            spec.scenarios = t.value("scenarios", spec.scenarios);
            spec.per_scenario = t.value("per_scenario", false);
            spec.label = t.value("label", std::string{});
            c.targets.push_back(std::move(spec));
        }
    }
    if (j.contains("backbones")) {
        c.backbones.clear();
        for (const auto& b : j.at("backbones")) {
            c.backbones.push_back(b.is_string() ? BackboneSpec::defaults(backbone_family_from_string(b.get<std::string>()))
                                                : b.get<BackboneSpec>());
        }
    }
    if (j.contains("frameworks")) {
        c.frameworks.clear();
        for (const auto& f : j.at("frameworks")) c.frameworks.push_back(framework_choice_from_string(f.get<std::string>()));
    }
    c.runs = j.value("runs", c.runs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("svm")) {
        c.svm.c = j["svm"].value("c", c.svm.c);
        c.svm.gamma = j["svm"].value("gamma", c.svm.gamma);
    }
    if (j.contains("mlp")) {
        const auto& m = j["mlp"];
        c.mlp.layers = m.value("layers", c.mlp.layers);
        c.mlp.epochs = m.value("epochs", c.mlp.epochs);
        c.mlp.batch_size = m.value("batch_size", c.mlp.batch_size);
        c.mlp.lr = m.value("lr", c.mlp.lr);
    }
    c.out_dir = j.value("out_dir", std::string("runs/") + c.id);
    c.save_models = j.value("save_models", c.save_models);
    c.cache_patches = j.value("cache_patches", c.cache_patches);
    c.allow_random_features = j.value("allow_random_features", c.allow_random_features);
    if (c.runs < 1) throw DataError("an experiment needs at least one run");
    if (c.backbones.empty() || c.frameworks.empty()) throw DataError("an experiment needs backbones and frameworks");
}

// ---------------------------------------------------------------- protocol

std::vector<SampleRecord> evaluation_records(const DatasetIndex& index, const std::string& scenario_key,
                                             std::uint64_t seed) {
    const auto records = index.scenario_records(scenario_key);
    if (records.empty()) throw DataError("target scenario '" + scenario_key + "' has no records");
    const DatasetId id = records.front().dataset_id;
    const bool has_split = id == DatasetId::PKLot || id == DatasetId::CNRExt;
    if (has_split && index.stats(scenario_key).days.size() >= 3) {
        return temporal_split(index, scenario_key, seed).test;
    }
    return records;
}

namespace {

struct TargetColumn {
    std::string label;
    std::vector<SampleRecord> records;
};

std::vector<TargetColumn> build_columns(const std::vector<TargetSpec>& targets, std::uint64_t seed) {
    std::vector<TargetColumn> columns;
    for (const auto& t : targets) {
        const auto index = read_manifest(t.manifest);
        auto scenarios = t.scenarios.empty() ? index.scenarios() : t.scenarios;
        if (t.per_scenario) {
            for (const auto& s : scenarios) columns.push_back({s, evaluation_records(index, s, seed)});
        } else {
            TargetColumn column;
            column.label = t.label.empty() ? to_string(index.records().front().dataset_id) : t.label;
            for (const auto& s : scenarios) {
                auto part = evaluation_records(index, s, seed);
                column.records.insert(column.records.end(), part.begin(), part.end());
            }
            columns.push_back(std::move(column));
        }
    }
    if (columns.empty()) throw DataError("an experiment needs at least one target");
    return columns;
}

bool wants(const ExperimentConfig& c, FrameworkChoice f) {
    return std::find(c.frameworks.begin(), c.frameworks.end(), f) != c.frameworks.end();
}

bool needs_pool(const ExperimentConfig& c) {
    return wants(c, FrameworkChoice::dynamic_selection) || wants(c, FrameworkChoice::majority_vote) ||
           wants(c, FrameworkChoice::stacking_svm) || wants(c, FrameworkChoice::stacking_mlp);
}

}  // namespace

EvalReport run_experiment(const ExperimentConfig& config, const ReportCallback& on_run) {
    const auto source = read_manifest(config.source_manifest);
    std::vector<std::string> scenarios = config.source_scenarios;
    if (scenarios.empty()) {
        for (const auto& [key, stats] : source.scenario_stats()) {
            if (stats.days.size() >= 3) scenarios.push_back(key);
        }
    }
    if (scenarios.empty()) throw DataError("no source scenario has the 3 days a temporal split needs");
    if (needs_pool(config) && scenarios.size() < 2) throw DataError("pool frameworks need at least 2 source scenarios");

    std::set<std::string> source_corpora;
    for (const auto& s : scenarios) {
        for (const auto& r : source.scenario_records(s)) source_corpora.insert(corpus_key(r));
    }
    const auto columns = build_columns(config.targets, config.seed);

    EvalReport report(source.records().empty() ? std::string{} : to_string(source.records().front().dataset_id));
    for (const auto& column : columns) {
        report.add_target(column.label);
        std::size_t occupied = 0;
        for (const auto& r : column.records) occupied += r.label == Label::occupied;
        report.set_class_counts(column.label, occupied, column.records.size() - occupied);
    }

    BuildOptions build;
    build.allow_random_features = config.allow_random_features;
    const auto seeds = run_seed_list(config.seed, config.runs);
    for (const auto& spec : config.backbones) {
        const std::string backbone = display_name(spec.family);
        for (std::size_t run = 0; run < seeds.size(); ++run) {
            const std::uint64_t seed = seeds[run];
            log::info(log::concat(backbone, ": run ", run + 1, "/", seeds.size(), " (seed ", seed, ")"));
            std::vector<ScenarioSplit> splits;
            for (const auto& s : scenarios) {
                splits.push_back(with_validation_fallback(temporal_split(source, s, derive_seed(seed, hash_key("split")))));
            }
            TrainConfig train = config.train;
            train.seed = seed;
            train.augment.seed = seed;

            std::vector<std::shared_ptr<const Framework>> frameworks;
            const fs::path run_dir = config.out_dir / "models" / to_string(spec.family) / ("seed_" + std::to_string(seed));
            if (wants(config, FrameworkChoice::single_model)) {
                auto model = build_single_model(splits, spec, train, build, config.cache_patches);
                if (config.save_models) save_model(model, run_dir / "single_model");
                frameworks.push_back(make_single_model_framework(std::move(model)));
            }
            if (needs_pool(config)) {
                const Pool pool = train_pool(splits, spec, train, build, config.cache_patches);
                if (config.save_models) save_pool(pool, run_dir / "pool");
                if (wants(config, FrameworkChoice::dynamic_selection)) {
                    auto selector = train_dynse_selector(splits, spec, train, build, config.cache_patches);
                    if (config.save_models) save_meta(selector, run_dir / "dynse");
                    frameworks.push_back(make_dynse_framework(pool, std::move(selector)));
                }
                if (wants(config, FrameworkChoice::majority_vote)) frameworks.push_back(make_majority_vote_framework(pool));
                std::vector<SampleRecord> meta_records;
                for (const auto& s : splits) {
                    const auto& part = config.train.stacking_on_validation ? s.val : s.train;
                    meta_records.insert(meta_records.end(), part.begin(), part.end());
                }
                MlpSettings mlp = config.mlp;
                mlp.seed = derive_seed(seed, hash_key("mlp"));
                for (auto [choice, kind] : {std::pair{FrameworkChoice::stacking_svm, MetaKind::stacking_svm},
                                            std::pair{FrameworkChoice::stacking_mlp, MetaKind::stacking_mlp}}) {
                    if (!wants(config, choice)) continue;
                    auto meta = train_stacking_meta(pool, meta_records, kind, config.svm, mlp);
                    if (config.save_models) save_meta(meta, run_dir / to_string(kind));
                    frameworks.push_back(make_stacking_framework(pool, std::move(meta)));
                }
            }
            for (const auto& f : frameworks) {
                for (const auto& column : columns) {
                    const auto outcome = evaluate_framework(*f, source_corpora, column.records);
                    log::info(log::concat("  ", f->name(), " on ", column.label, ": ", outcome.accuracy()));
                    report.add_accuracy(backbone, f->name(), column.label, outcome.accuracy());
                }
            }
            if (on_run) on_run(report);
        }
    }
    return report;
}

void write_report_files(const EvalReport& report, const fs::path& dir) {
    fs::create_directories(dir);
    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream out(dir / name, std::ios::binary);
        out << text;
        if (!out) throw Error("cannot write " + (dir / name).string());
    };
    write("report.json", nlohmann::json(report).dump(2) + "\n");
    write("report.csv", render_report(report, ReportFormat::csv));
    write("report.md", render_report(report, ReportFormat::markdown));
}

}  // namespace parkocc
