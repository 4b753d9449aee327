// parkocc: command-line front end for ingestion, training, evaluation and the
// monitoring service.

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "parkocc/adapters.hpp"
#include "parkocc/config.hpp"
#include "parkocc/errors.hpp"
#include "parkocc/evaluator.hpp"
#include "parkocc/experiment.hpp"
#include "parkocc/frameworks.hpp"
#include "parkocc/log.hpp"
#include "parkocc/meta.hpp"
#include "parkocc/pool.hpp"
#include "parkocc/rng.hpp"
#include "parkocc/service.hpp"
#include "parkocc/split.hpp"
#include "parkocc/synthetic.hpp"
#include "parkocc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace parkocc;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- config plumbing

// --config FILE and --set key=value, shared by every verb.
struct ConfigSource {
    std::string file;
    std::vector<std::string> overrides;
};

void add_config_options(CLI::App& sub, ConfigSource& source) {
    sub.add_option("--config", source.file, "YAML or JSON file; keys match the long option names")
        ->check(CLI::ExistingFile);
    sub.add_option("--set", source.overrides, "Override a config value, e.g. --set train.max_epochs=5");
}

json parse_override_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return text;
    }
}

json load_merged_config(const ConfigSource& source) {
    json config = source.file.empty() ? json::object() : load_config(source.file);
    if (config.is_null()) config = json::object();
    if (!config.is_object()) throw DataError("config " + source.file + " must be a mapping");
    for (const auto& item : source.overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + item + "'");
        json* node = &config;
        std::string path = item.substr(0, eq);
        std::size_t start = 0;
        while (true) {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (dot == std::string::npos) {
                (*node)[key] = parse_override_value(item.substr(eq + 1));
                break;
            }
            if (!(*node)[key].is_object()) (*node)[key] = json::object();
            node = &(*node)[key];
            start = dot + 1;
        }
    }
    return config;
}

std::string scalar_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

// Fills options that were not given on the command line from config keys
// named after the option (dashes become underscores).
void apply_config(CLI::App& sub, const json& config) {
    for (CLI::Option* opt : sub.get_options()) {
        if (opt->count() > 0) continue;
        std::string key = opt->get_single_name();
        if (key.empty() || key == "help" || key == "config" || key == "set") continue;
        std::replace(key.begin(), key.end(), '-', '_');
        if (!config.contains(key) || config[key].is_object()) continue;
        const auto& value = config[key];
        if (value.is_array()) {
            for (const auto& v : value) opt->add_result(scalar_text(v));
        } else {
            opt->add_result(scalar_text(value));
        }
        opt->run_callback();
    }
}

template <typename T>
void require(const T& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

// ---------------------------------------------------------------- shared helpers

TrainConfig train_config_from(const json& config, std::uint64_t seed) {
    TrainConfig train = config.contains("train") ? config["train"].get<TrainConfig>() : TrainConfig{};
    if (config.contains("augment")) train.augment = config["augment"].get<AugmentParams>();
    train.seed = seed;
    train.augment.seed = seed;
    train.validate();
    return train;
}

BackboneSpec backbone_spec_from(const json& config, const std::string& family) {
    BackboneSpec spec = BackboneSpec::defaults(backbone_family_from_string(family));
    if (config.contains("backbone_spec")) {
        json merged = spec;
        merged = merge_config(merged, config["backbone_spec"]);
        merged["family"] = to_string(spec.family);
        spec = merged.get<BackboneSpec>();
    }
    spec.validate();
    return spec;
}

std::vector<std::string> trainable_scenarios(const DatasetIndex& index, std::vector<std::string> requested) {
    if (!requested.empty()) return requested;
    for (const auto& [key, stats] : index.scenario_stats()) {
        if (stats.days.size() >= 3) requested.push_back(key);
    }
    if (requested.empty()) throw DataError("no scenario in the manifest has the 3 days a temporal split needs");
    return requested;
}

std::vector<ScenarioSplit> make_splits(const DatasetIndex& index, const std::vector<std::string>& scenarios,
                                       std::uint64_t seed) {
    std::vector<ScenarioSplit> splits;
    for (const auto& s : scenarios) {
        splits.push_back(with_validation_fallback(temporal_split(index, s, derive_seed(seed, hash_key("split")))));
    }
    return splits;
}

void print_stats(const DatasetIndex& index) {
    std::cout << "scenario,occupied,empty,total,days,first_day,last_day\n";
    for (const auto& [key, s] : index.scenario_stats()) {
        std::cout << key << ',' << s.occupied << ',' << s.empty << ',' << s.total() << ',' << s.days.size() << ','
                  << (s.days.empty() ? "" : format_date(s.days.front())) << ','
                  << (s.days.empty() ? "" : format_date(s.days.back())) << '\n';
    }
}

std::string corpus_of(const std::string& text) {
    if (auto id = parse_dataset_id(text)) return corpus_key(*id);
    return text;
}

// ---------------------------------------------------------------- verbs

struct IngestArgs {
    std::string dataset, root, out = "manifest.jsonl", patch_dir = "patches", crop_policy = "warp_rectify";
    int patch_size = 128;
    unsigned workers = 0;
};

int run_ingest(const IngestArgs& a) {
    require(a.dataset, "--dataset");
    require(a.root, "--root");
    const auto id = parse_dataset_id(a.dataset);
    if (!id) throw UsageError("unknown dataset '" + a.dataset + "'");
    IngestOptions options;
    options.patch_dir = a.patch_dir;
    options.patch_size = a.patch_size;
    options.workers = a.workers;
    options.crop_policy = crop_policy_from_string(a.crop_policy);
    IngestStats stats;
    const auto index = load_dataset(a.root, *id, options, &stats);
    write_manifest(index, a.out);
    log::info(log::concat("wrote ", index.size(), " records to ", a.out, " (", stats.annotation_files,
                          " annotation file(s), ", stats.skipped_annotations, " skipped)"));
    print_stats(index);
    return 0;
}

struct SynthArgs {
    std::string out;
    int scenarios = 3, days = 6, patch_size = 32;
    std::size_t samples = 600;
    std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
    require(a.out, "--out");
    if (a.scenarios < 1) throw UsageError("--scenarios must be positive");
    const SyntheticTexture textures[] = {SyntheticTexture::asphalt_stripes, SyntheticTexture::paver_checker,
                                         SyntheticTexture::speckled_gravel};
    const char* names[] = {"asphalt", "pavers", "gravel"};
    std::vector<SyntheticScenarioSpec> specs;
    for (int i = 0; i < a.scenarios; ++i) {
        SyntheticScenarioSpec spec;
        spec.scenario_key = names[i % 3] + (i >= 3 ? "_" + std::to_string(i / 3) : std::string{});
        spec.texture = textures[i % 3];
        spec.samples = a.samples;
        spec.days = a.days;
        specs.push_back(spec);
    }
    const DatasetIndex index(generate_synthetic_corpus(specs, fs::path(a.out) / "patches", a.patch_size, a.seed));
    write_manifest(index, fs::path(a.out) / "manifest.jsonl");
    print_stats(index);
    return 0;
}

struct SplitArgs {
    std::string manifest, out;
    std::vector<std::string> scenarios;
    std::uint64_t seed = 0;
    double train_ratio = 0.5;
};

int run_split(const SplitArgs& a) {
    require(a.manifest, "--manifest");
    require(a.out, "--out");
    const auto index = read_manifest(a.manifest);
    std::cout << "scenario,part,samples,occupied,empty,first_day,last_day\n";
    for (const auto& s : trainable_scenarios(index, a.scenarios)) {
        const auto split = temporal_split(index, s, a.seed, a.train_ratio);
        const fs::path dir = fs::path(a.out) / s;
        fs::create_directories(dir);
        for (const auto& [part, records] : {std::pair{"train", &split.train}, std::pair{"val", &split.val},
                                            std::pair{"test", &split.test}}) {
            write_manifest(*records, dir / (std::string(part) + ".jsonl"));
            std::size_t occupied = 0;
            for (const auto& r : *records) occupied += r.label == Label::occupied;
            const auto days = distinct_days(*records);
            std::cout << s << ',' << part << ',' << records->size() << ',' << occupied << ','
                      << records->size() - occupied << ',' << (days.empty() ? "" : format_date(days.front())) << ','
                      << (days.empty() ? "" : format_date(days.back())) << '\n';
        }
    }
    return 0;
}

struct TrainArgs {
    std::string manifest, out, backbone = "conv3";
    std::vector<std::string> scenarios;
    int runs = 1;
    std::uint64_t seed = 0;
    bool allow_random_features = false;
};

int run_train(const TrainArgs& a, const json& config) {
    require(a.manifest, "--manifest");
    require(a.out, "--out");
    const auto index = read_manifest(a.manifest);
    const auto scenarios = trainable_scenarios(index, a.scenarios);
    const auto spec = backbone_spec_from(config, a.backbone);
    const auto train = train_config_from(config, a.seed);
    BuildOptions build;
    build.allow_random_features = a.allow_random_features;
    const auto runs = run_seeds(index, scenarios, spec, train, a.runs, fs::path(a.out), build);
    std::cout << "run_id,chosen_epoch,val_accuracy\n";
    for (const auto& r : runs) {
        std::cout << r.run_id << ',' << r.chosen_epoch << ',' << r.model.metadata().val_accuracy << '\n';
    }
    return 0;
}

struct PoolArgs {
    std::string manifest, out, backbone = "conv3";
    std::vector<std::string> scenarios;
    std::uint64_t seed = 0;
    bool allow_random_features = false;
};

int run_train_pool(const PoolArgs& a, const json& config) {
    require(a.manifest, "--manifest");
    require(a.out, "--out");
    const auto index = read_manifest(a.manifest);
    const auto splits = make_splits(index, trainable_scenarios(index, a.scenarios), a.seed);
    BuildOptions build;
    build.allow_random_features = a.allow_random_features;
    const Pool pool = train_pool(splits, backbone_spec_from(config, a.backbone), train_config_from(config, a.seed), build,
                                 true);
    save_pool(pool, a.out);
    std::cout << "member,scenario,chosen_epoch,val_accuracy\n";
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& m = pool.member(i).metadata();
        std::cout << i << ',' << pool.scenario_keys()[i] << ',' << m.chosen_epoch << ',' << m.val_accuracy << '\n';
    }
    return 0;
}

struct MetaArgs {
    std::string manifest, pool, kind = "svm", out;
    std::uint64_t seed = 0;
    bool allow_random_features = false;
};

int run_train_meta(const MetaArgs& a, const json& config) {
    require(a.manifest, "--manifest");
    require(a.pool, "--pool");
    require(a.out, "--out");
    const Pool pool = load_pool(a.pool);
    const auto index = read_manifest(a.manifest);
    const auto splits = make_splits(index, pool.scenario_keys(), a.seed);
    const auto train = train_config_from(config, a.seed);
    MetaModel meta;
    if (a.kind == "dynse" || a.kind == "dynamic_selection" || a.kind == "selector") {
        BackboneSpec spec = pool.member(0).spec();
        BuildOptions build;
        build.allow_random_features = a.allow_random_features;
        meta = train_dynse_selector(splits, spec, train, build, true);
    } else {
        const MetaKind kind = a.kind == "mlp" ? MetaKind::stacking_mlp
                              : a.kind == "svm" ? MetaKind::stacking_svm
                                                : meta_kind_from_string(a.kind);
        std::vector<SampleRecord> records;
        for (const auto& s : splits) {
            const auto& part = train.stacking_on_validation ? s.val : s.train;
            records.insert(records.end(), part.begin(), part.end());
        }
        SvmSettings svm;
        MlpSettings mlp;
        if (config.contains("svm")) {
            svm.c = config["svm"].value("c", svm.c);
            svm.gamma = config["svm"].value("gamma", svm.gamma);
        }
        if (config.contains("mlp")) {
            mlp.layers = config["mlp"].value("layers", mlp.layers);
            mlp.epochs = config["mlp"].value("epochs", mlp.epochs);
            mlp.lr = config["mlp"].value("lr", mlp.lr);
            mlp.batch_size = config["mlp"].value("batch_size", mlp.batch_size);
        }
        mlp.seed = derive_seed(a.seed, hash_key("mlp"));
        meta = train_stacking_meta(pool, records, kind, svm, mlp);
    }
    save_meta(meta, a.out);
    log::info(log::concat("saved ", to_string(meta.kind()), " meta-model to ", a.out));
    return 0;
}

struct EvaluateArgs {
    std::string framework, model, pool, meta, report_dir, experiment_id = "evaluation", backbone, label;
    std::vector<std::string> manifests, scenarios, sources;
    bool per_scenario = false;
    std::uint64_t seed = 0;
};

int run_evaluate(const EvaluateArgs& a) {
    require(a.framework, "--framework");
    require(a.manifests, "--manifest");
    require(a.sources, "--source");
    FrameworkSelection selection;
    const std::string kind_text = a.framework;
    selection.kind = framework_kind_from_string(kind_text);
    selection.model_dir = a.model;
    selection.pool_dir = a.pool;
    selection.meta_dir = a.meta;
    const auto framework = load_framework(selection);

    std::string backbone = a.backbone;
    if (!backbone.empty()) {
        try {
            backbone = display_name(backbone_family_from_string(backbone));
        } catch (const Error&) {
            // free-form row group name
        }
    } else {
        const fs::path spec_dir = !a.model.empty() ? fs::path(a.model) : fs::path(a.pool);
        if (!a.model.empty()) {
            backbone = display_name(load_model(spec_dir).spec().family);
        } else {
            backbone = display_name(load_pool(spec_dir).member(0).spec().family);
        }
    }
    std::set<std::string> sources;
    for (const auto& s : a.sources) sources.insert(corpus_of(s));

    const fs::path report_dir = a.report_dir.empty() ? fs::path("runs") / a.experiment_id : fs::path(a.report_dir);
    const fs::path report_path = report_dir / "report.json";
    EvalReport report(*sources.begin());
    if (fs::exists(report_path)) {
        std::ifstream in(report_path);
        report = json::parse(in).get<EvalReport>();
    }
    for (const auto& manifest : a.manifests) {
        TargetSpec target;
        target.manifest = manifest;
        target.scenarios = a.scenarios;
        target.per_scenario = a.per_scenario;
        target.label = a.label;
        const auto index = read_manifest(manifest);
        const auto scenarios = target.scenarios.empty() ? index.scenarios() : target.scenarios;
        std::vector<std::pair<std::string, std::vector<SampleRecord>>> columns;
        if (target.per_scenario) {
            for (const auto& s : scenarios) columns.emplace_back(s, evaluation_records(index, s, a.seed));
        } else {
            std::vector<SampleRecord> all;
            for (const auto& s : scenarios) {
                auto part = evaluation_records(index, s, a.seed);
                all.insert(all.end(), part.begin(), part.end());
            }
            columns.emplace_back(target.label.empty() ? to_string(index.records().front().dataset_id) : target.label,
                                 std::move(all));
        }
        for (const auto& [column, records] : columns) {
            const auto outcome = evaluate_framework(*framework, sources, records);
            report.add_target(column);
            report.set_class_counts(column, outcome.occupied, outcome.empty);
            report.add_accuracy(backbone, framework->name(), column, outcome.accuracy());
            log::info(log::concat(framework->name(), " on ", column, ": ", outcome.correct, "/", outcome.total, " = ",
                                  outcome.accuracy()));
        }
    }
    write_report_files(report, report_dir);
    std::cout << render_report(report, ReportFormat::markdown);
    return 0;
}

struct ReportArgs {
    std::string input, format = "markdown", out;
};

int run_report(const ReportArgs& a) {
    require(a.input, "--input");
    fs::path path = a.input;
    if (fs::is_directory(path)) path /= "report.json";
    std::ifstream in(path);
    if (!in) throw DataError("cannot read report " + path.string());
    EvalReport report;
    try {
        report = json::parse(in).get<EvalReport>();
    } catch (const json::exception& e) {
        throw DataError("malformed report " + path.string() + ": " + e.what());
    }
    ReportFormat format;
    if (a.format == "csv") {
        format = ReportFormat::csv;
    } else if (a.format == "markdown" || a.format == "md") {
        format = ReportFormat::markdown;
    } else {
        throw UsageError("--format must be csv or markdown");
    }
    const std::string text = render_report(report, format);
    if (a.out.empty()) {
        std::cout << text;
    } else {
        std::ofstream(a.out, std::ios::binary) << text;
    }
    return 0;
}

std::atomic<bool> g_stop_requested{false};

void on_signal(int) { g_stop_requested = true; }

struct ServeArgs {
    std::string host, framework, model, pool, meta, spot_maps;
    int port = -1;
};

int run_serve(const ServeArgs& a, const json& config) {
    ServiceConfig service_config = config.get<ServiceConfig>();
    if (!a.host.empty()) service_config.host = a.host;
    if (a.port >= 0) service_config.port = a.port;
    if (!a.framework.empty()) service_config.framework.kind = framework_kind_from_string(a.framework);
    if (!a.model.empty()) service_config.framework.model_dir = a.model;
    if (!a.pool.empty()) service_config.framework.pool_dir = a.pool;
    if (!a.meta.empty()) service_config.framework.meta_dir = a.meta;
    if (!a.spot_maps.empty()) service_config.spot_map_store = a.spot_maps;

    const auto framework = load_framework(service_config.framework);
    auto store = std::make_shared<SpotMapStore>(service_config.spot_map_store);
    auto service = std::make_shared<OccupancyService>(framework, store, service_config.options);
    HttpFrontend frontend(service);
    const int port = frontend.bind(service_config.host, service_config.port);
    if (port < 0) {
        throw Error("cannot listen on " + service_config.host + ":" + std::to_string(service_config.port));
    }
    log::info(log::concat("serving ", framework->name(), " on ", service_config.host, ":", port, " (",
                          store->cameras().size(), " spot map(s))"));
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::jthread watcher([&frontend](std::stop_token token) {
        while (!token.stop_requested() && !g_stop_requested) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        frontend.stop();
    });
    frontend.run();
    log::info("service stopped");
    return 0;
}

int run_experiment_verb(const json& config, const std::string& out, int runs) {
    if (!config.contains("source_manifest")) throw UsageError("the experiment config needs source_manifest");
    json merged = config;
    if (!out.empty()) merged["out_dir"] = out;
    if (runs > 0) merged["runs"] = runs;
    const auto experiment = merged.get<ExperimentConfig>();
    const auto report = run_experiment(experiment, [&](const EvalReport& partial) {
        write_report_files(partial, experiment.out_dir);
    });
    write_report_files(report, experiment.out_dir);
    std::cout << render_report(report, ReportFormat::markdown);
    return 0;
}

struct InspectArgs {
    std::string backbone = "conv3", weights;
    std::vector<std::string> embed;
    bool allow_random_features = false, names = false;
};

int run_inspect(const InspectArgs& a, const json& config) {
    const auto spec = backbone_spec_from(config, a.backbone);
    BuildOptions build;
    build.allow_random_features = a.allow_random_features;
    if (!a.weights.empty()) build.pretrained_weights = a.weights;
    const Model model = build_model(spec, build);
    const auto count = count_params(model);
    json out{{"family", to_string(spec.family)},
             {"display_name", display_name(spec.family)},
             {"input_size", spec.input_size},
             {"total_params", count.total},
             {"trainable_params", count.trainable},
             {"pretrain_checkpoint", model.metadata().pretrain_checkpoint}};
    if (a.names) {
        // Feature names without the wrapper prefix are the reference state_dict keys.
        std::vector<std::string> keys;
        for (const auto& n : parameter_names(model, ParameterGroup::features)) keys.push_back(n.substr(n.find('.') + 1));
        out["feature_parameter_keys"] = keys;
    }
    if (!a.embed.empty()) {
        auto embeddings = json::array();
        for (const auto& path : a.embed) {
            const cv::Mat image = cv::imread(path, cv::IMREAD_COLOR);
            if (image.empty()) throw DataError("cannot decode " + path);
            embeddings.push_back(backbone_features(model, resize_patch(image, spec.input_size)));
        }
        out["embeddings"] = embeddings;
    }
    std::cout << out.dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parking-space occupancy classification: data, training, cross-dataset evaluation and serving"};
    app.require_subcommand(1);
    app.fallthrough(false);
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");
    app.add_flag("-q,--quiet", quiet, "Only warnings and errors");

    ConfigSource cfg_ingest, cfg_synth, cfg_split, cfg_train, cfg_pool, cfg_meta, cfg_eval, cfg_report, cfg_serve,
        cfg_experiment, cfg_inspect;

    IngestArgs ingest;
    auto* s_ingest = app.add_subcommand("ingest", "Read an upstream dataset layout into a manifest");
    s_ingest->add_option("--dataset", ingest.dataset, "pklot, cnr-ext, ndispark or barrystreet");
    s_ingest->add_option("--root", ingest.root, "Dataset root directory");
    s_ingest->add_option("--out", ingest.out, "Manifest to write")->capture_default_str();
    s_ingest->add_option("--patch-dir", ingest.patch_dir, "Where cropped patches go")->capture_default_str();
    s_ingest->add_option("--patch-size", ingest.patch_size, "Side of stored patches")->capture_default_str();
    s_ingest->add_option("--workers", ingest.workers, "Crop threads (0 = all cores)");
    s_ingest->add_option("--crop-policy", ingest.crop_policy, "warp_rectify, bounding_box or fixed_square");
    add_config_options(*s_ingest, cfg_ingest);

    SynthArgs synth;
    auto* s_synth = app.add_subcommand("synth", "Generate a synthetic multi-scenario corpus");
    s_synth->add_option("--out", synth.out, "Output directory (patches/ and manifest.jsonl)");
    s_synth->add_option("--scenarios", synth.scenarios, "Number of scenarios")->capture_default_str();
    s_synth->add_option("--samples", synth.samples, "Samples per scenario")->capture_default_str();
    s_synth->add_option("--days", synth.days, "Days per scenario")->capture_default_str();
    s_synth->add_option("--patch-size", synth.patch_size, "Patch side")->capture_default_str();
    s_synth->add_option("--seed", synth.seed, "Generator seed");
    add_config_options(*s_synth, cfg_synth);

    SplitArgs split;
    auto* s_split = app.add_subcommand("split", "Write day-disjoint train/val/test manifests per scenario");
    s_split->add_option("--manifest", split.manifest, "Input manifest");
    s_split->add_option("--scenario", split.scenarios, "Scenario(s); default all with >= 3 days");
    s_split->add_option("--seed", split.seed, "Balancing seed");
    s_split->add_option("--train-ratio", split.train_ratio, "Share of days for training")->capture_default_str();
    s_split->add_option("--out", split.out, "Output directory");
    add_config_options(*s_split, cfg_split);

    TrainArgs train;
    auto* s_train = app.add_subcommand("train", "Train a single model on the union of source scenarios");
    s_train->add_option("--manifest", train.manifest, "Source manifest");
    s_train->add_option("--scenario", train.scenarios, "Source scenario(s); default all with >= 3 days");
    s_train->add_option("--backbone", train.backbone, "conv3, mobilenetv3_large or resnet50")->capture_default_str();
    s_train->add_option("--runs", train.runs, "Seeded repetitions")->capture_default_str();
    s_train->add_option("--seed", train.seed, "Base seed");
    s_train->add_option("--out", train.out, "Runs directory");
    s_train->add_flag("--allow-random-features", train.allow_random_features,
                      "Run pretrained families without ImageNet weights");
    add_config_options(*s_train, cfg_train);

    PoolArgs pool;
    auto* s_pool = app.add_subcommand("train-pool", "Train one classifier per source scenario");
    s_pool->add_option("--manifest", pool.manifest, "Source manifest");
    s_pool->add_option("--scenario", pool.scenarios, "Member scenario(s) in pool order");
    s_pool->add_option("--backbone", pool.backbone, "Backbone family")->capture_default_str();
    s_pool->add_option("--seed", pool.seed, "Base seed");
    s_pool->add_option("--out", pool.out, "Pool directory");
    s_pool->add_flag("--allow-random-features", pool.allow_random_features,
                     "Run pretrained families without ImageNet weights");
    add_config_options(*s_pool, cfg_pool);

    MetaArgs meta;
    auto* s_meta = app.add_subcommand("train-meta", "Fit a stacking meta-model or a dynamic-selection router");
    s_meta->add_option("--manifest", meta.manifest, "Source manifest the pool was trained on");
    s_meta->add_option("--pool", meta.pool, "Pool directory");
    s_meta->add_option("--kind", meta.kind, "svm, mlp or dynse")->capture_default_str();
    s_meta->add_option("--seed", meta.seed, "Seed used for the pool's splits");
    s_meta->add_option("--out", meta.out, "Meta-model directory");
    s_meta->add_flag("--allow-random-features", meta.allow_random_features,
                     "Run pretrained families without ImageNet weights");
    add_config_options(*s_meta, cfg_meta);

    EvaluateArgs evaluate;
    auto* s_eval = app.add_subcommand("evaluate", "Score a framework on target manifests and update a report");
    s_eval->add_option("--framework", evaluate.framework, "single_model, majority_vote, stacking or dynamic_selection");
    s_eval->add_option("--model", evaluate.model, "Model directory (single_model)");
    s_eval->add_option("--pool", evaluate.pool, "Pool directory");
    s_eval->add_option("--meta", evaluate.meta, "Meta-model directory (stacking, dynamic_selection)");
    s_eval->add_option("--manifest", evaluate.manifests, "Target manifest(s)");
    s_eval->add_option("--scenario", evaluate.scenarios, "Target scenario(s); default all");
    s_eval->add_flag("--per-scenario", evaluate.per_scenario, "One report column per scenario");
    s_eval->add_option("--label", evaluate.label, "Column name when not per scenario");
    s_eval->add_option("--source", evaluate.sources, "Training corpus name(s), e.g. pklot");
    s_eval->add_option("--backbone", evaluate.backbone, "Row group name; default from the model");
    s_eval->add_option("--seed", evaluate.seed, "Split seed for targets with a test split");
    s_eval->add_option("--experiment-id", evaluate.experiment_id, "Reports go to runs/<id>")->capture_default_str();
    s_eval->add_option("--report-dir", evaluate.report_dir, "Report directory, overriding runs/<id>");
    add_config_options(*s_eval, cfg_eval);

    ReportArgs report;
    auto* s_report = app.add_subcommand("report", "Render a stored report as csv or markdown");
    s_report->add_option("--input", report.input, "report.json or its directory");
    s_report->add_option("--format", report.format, "csv or markdown")->capture_default_str();
    s_report->add_option("--out", report.out, "Write to a file instead of stdout");
    add_config_options(*s_report, cfg_report);

    ServeArgs serve;
    auto* s_serve = app.add_subcommand("serve", "Run the HTTP occupancy service");
    s_serve->add_option("--host", serve.host, "Listen address");
    s_serve->add_option("--port", serve.port, "Listen port (0 = any free port)");
    s_serve->add_option("--framework", serve.framework, "Framework kind");
    s_serve->add_option("--model", serve.model, "Model directory");
    s_serve->add_option("--pool", serve.pool, "Pool directory");
    s_serve->add_option("--meta", serve.meta, "Meta-model directory");
    s_serve->add_option("--spot-maps", serve.spot_maps, "Spot map store directory");
    add_config_options(*s_serve, cfg_serve);

    std::string experiment_out;
    int experiment_runs = 0;
    auto* s_experiment = app.add_subcommand("experiment", "Run the full cross-dataset protocol from a config file");
    s_experiment->add_option("--out", experiment_out, "Override out_dir");
    s_experiment->add_option("--runs", experiment_runs, "Override the number of seeded runs");
    add_config_options(*s_experiment, cfg_experiment);

    InspectArgs inspect;
    auto* s_inspect = app.add_subcommand("inspect", "Print a backbone's parameter counts and optional features");
    s_inspect->add_option("--backbone", inspect.backbone, "Backbone family")->capture_default_str();
    s_inspect->add_option("--weights", inspect.weights, "Exported ImageNet state_dict");
    s_inspect->add_option("--embed", inspect.embed, "Image(s) to run through the feature extractor");
    s_inspect->add_flag("--names", inspect.names, "List feature parameter keys");
    s_inspect->add_flag("--allow-random-features", inspect.allow_random_features,
                        "Build pretrained families without ImageNet weights");
    add_config_options(*s_inspect, cfg_inspect);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }
    if (verbose) log::set_verbose(true);
    if (quiet) log::set_quiet(true);

    try {
        auto with_config = [](CLI::App* sub, const ConfigSource& source) {
            const json config = load_merged_config(source);
            apply_config(*sub, config);
            return config;
        };
        if (app.got_subcommand(s_ingest)) {
            with_config(s_ingest, cfg_ingest);
            return run_ingest(ingest);
        }
        if (app.got_subcommand(s_synth)) {
            with_config(s_synth, cfg_synth);
            return run_synth(synth);
        }
        if (app.got_subcommand(s_split)) {
            with_config(s_split, cfg_split);
            return run_split(split);
        }
        if (app.got_subcommand(s_train)) return run_train(train, with_config(s_train, cfg_train));
        if (app.got_subcommand(s_pool)) return run_train_pool(pool, with_config(s_pool, cfg_pool));
        if (app.got_subcommand(s_meta)) return run_train_meta(meta, with_config(s_meta, cfg_meta));
        if (app.got_subcommand(s_eval)) {
            with_config(s_eval, cfg_eval);
            return run_evaluate(evaluate);
        }
        if (app.got_subcommand(s_report)) {
            with_config(s_report, cfg_report);
            return run_report(report);
        }
        if (app.got_subcommand(s_serve)) return run_serve(serve, load_merged_config(cfg_serve));
        if (app.got_subcommand(s_experiment)) {
            if (cfg_experiment.file.empty()) throw UsageError("experiment needs --config");
            return run_experiment_verb(load_merged_config(cfg_experiment), experiment_out, experiment_runs);
        }
        if (app.got_subcommand(s_inspect)) return run_inspect(inspect, with_config(s_inspect, cfg_inspect));
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\nRun with --help for more information.\n";
        return kExitUsage;
    } catch (const DataError& e) {
        log::error(e.what());
        return kExitData;
    } catch (const NotFoundError& e) {
        log::error(e.what());
        return kExitData;
    } catch (const json::exception& e) {
        log::error(std::string("bad configuration: ") + e.what());
        return kExitData;
    } catch (const std::exception& e) {
        log::error(e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
