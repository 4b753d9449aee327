#include "parkocc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "model_impl.hpp"
#include "parkocc/errors.hpp"
#include "parkocc/log.hpp"
#include "parkocc/rng.hpp"

namespace parkocc {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (batch_size < 1) throw DataError("batch_size must be positive");
    if (!(initial_lr > 0.0)) throw DataError("initial_lr must be positive");
    if (!(lr_factor > 0.0 && lr_factor <= 1.0)) throw DataError("lr_factor must lie in (0, 1]");
    if (lr_patience < 1 || early_stop_patience < 1) throw DataError("patience values must be at least 1");
    if (max_epochs < 1) throw DataError("max_epochs must be at least 1");
    augment.validate();
}

bool EarlyStopping::update(double val_acc) {
    ++epoch_;
    if (val_acc > best_) {
        best_ = val_acc;
        best_epoch_ = epoch_;
        stale_ = 0;
        improved_ = true;
    } else {
        ++stale_;
        improved_ = false;
    }
    return stale_ >= patience_;
}

double PlateauSchedule::update(double metric) {
    if (metric > best_) {
        best_ = metric;
        stale_ = 0;
    } else if (++stale_ >= patience_) {
        lr_ *= factor_;
        stale_ = 0;
    }
    return lr_;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, hash_key("epoch-order"), static_cast<std::uint64_t>(epoch)));
    shuffle(std::span<std::size_t>(order), rng);
    return order;
}

namespace {

int predicted_class(std::span<const float> row) {
    if (row.size() == 2) return row[1] >= row[0] ? 1 : 0;
    return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

// Batch boundaries; a trailing single sample joins the previous batch so
// batch-statistics layers never see a batch of one.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch) out.emplace_back(start, std::min(n, start + batch));
    if (out.size() > 1 && out.back().second - out.back().first == 1) {
        out[out.size() - 2].second = out.back().second;
        out.pop_back();
    }
    return out;
}

void set_lr(torch::optim::Adam& optimizer, double lr) {
    for (auto& group : optimizer.param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
}

}  // namespace

double accuracy(const Model& model, const PatchSource& data, int batch_size) {
    if (data.empty()) throw DataError("accuracy of an empty set is undefined");
    const int side = model.spec().input_size;
    std::size_t correct = 0;
    std::vector<cv::Mat> batch;
    for (const auto& [start, end] : batch_ranges(data.size(), static_cast<std::size_t>(std::max(1, batch_size)))) {
        batch.clear();
        for (std::size_t i = start; i < end; ++i) batch.push_back(resize_patch(data.image(i), side));
        const auto p = model.predict_proba(batch);
        for (std::size_t r = 0; r < p.rows; ++r) {
            if (predicted_class(p.row(r)) == data.label(start + r)) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainRun train(const Model& initial, const PatchSource& train_data, const PatchSource& val_data,
               const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (train_data.empty()) throw DataError("training set is empty");
    if (val_data.empty()) throw DataError("validation set is empty");

    TrainRun run;
    run.seed = config.seed;
    run.run_id = "seed_" + std::to_string(config.seed);
    run.model = initial.clone();
    auto& impl = run.model.impl();
    auto& net = *impl.net;
    const int side = impl.spec.input_size;

    torch::optim::Adam optimizer(detail::trainable_parameters(net), torch::optim::AdamOptions(config.initial_lr));
    EarlyStopping stopping(config.early_stop_patience);
    PlateauSchedule schedule(config.initial_lr, config.lr_factor, config.lr_patience);
    AugmentParams augment = config.augment;
    augment.seed = derive_seed(config.seed, hash_key("augment"), config.augment.seed);

    std::vector<torch::Tensor> best_state = detail::snapshot_state(net);
    std::uint64_t step = 0;
    double lr = config.initial_lr;
    std::vector<cv::Mat> images;
    std::vector<std::int64_t> labels;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto order = epoch_order(train_data.size(), config.seed, epoch);
        net.set_training(true);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (const auto& [start, end] : batch_ranges(order.size(), static_cast<std::size_t>(config.batch_size))) {
            images.clear();
            labels.clear();
            for (std::size_t k = start; k < end; ++k) {
                cv::Mat img = train_data.image(order[k]);
                if (config.augment_enabled) img = apply_augmentation(img, draw_augmentation(augment, step, k - start));
                images.push_back(resize_patch(img, side));
                labels.push_back(train_data.label(order[k]));
            }
            ++step;
            const auto x = detail::to_input(images, side, impl.metadata.normalization);
            const auto y = torch::tensor(labels, torch::kLong);
            optimizer.zero_grad();
            const auto logits = net.forward(x);
            const auto loss = torch::nn::functional::cross_entropy(logits, y);
            const double value = loss.item<double>();
            if (!std::isfinite(value)) {
                throw TrainingError("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                                    std::to_string(value) + ")");
            }
            loss.backward();
            optimizer.step();
            loss_sum += value * static_cast<double>(end - start);
            correct += static_cast<std::size_t>(logits.argmax(1).eq(y).sum().item<std::int64_t>());
        }
        net.set_training(false);

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(order.size());
        record.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
        record.val_acc = accuracy(run.model, val_data, config.batch_size);
        record.lr = lr;
        run.history.push_back(record);
        log::debug(log::concat("epoch ", epoch, " loss ", record.train_loss, " train_acc ", record.train_acc,
                               " val_acc ", record.val_acc, " lr ", lr));
        if (on_epoch) on_epoch(record);

        const bool stop = stopping.update(record.val_acc);
        if (stopping.improved()) best_state = detail::snapshot_state(net);
        if (stop) break;
        const double next_lr = schedule.update(record.val_acc);
        if (next_lr != lr) {
            lr = next_lr;
            set_lr(optimizer, lr);
        }
    }

    detail::restore_state(net, best_state);
    run.chosen_epoch = stopping.best_epoch();
    impl.metadata.seed = config.seed;
    impl.metadata.chosen_epoch = run.chosen_epoch;
    impl.metadata.val_accuracy = stopping.best_value();
    return run;
}

UnionData union_of_splits(std::span<const ScenarioSplit> splits, std::uint64_t seed) {
    UnionData out;
    for (const auto& split : splits) {
        const auto s = with_validation_fallback(split);
        out.train.insert(out.train.end(), s.train.begin(), s.train.end());
        out.val.insert(out.val.end(), s.val.begin(), s.val.end());
    }
    Rng rng(derive_seed(seed, hash_key("union")));
    shuffle(std::span<SampleRecord>(out.train), rng);
    return out;
}

TrainRun train_on_splits(const BackboneSpec& spec, std::span<const ScenarioSplit> splits, const TrainConfig& config,
                         const BuildOptions& build, bool cache_patches) {
    if (splits.empty()) throw DataError("no scenarios to train on");
    auto data = union_of_splits(splits, config.seed);
    BuildOptions options = build;
    options.init_seed = derive_seed(config.seed, hash_key("init"), build.init_seed);
    const Model initial = build_model(spec, options);
    const RecordPatchSource train_source(std::move(data.train), cache_patches);
    const RecordPatchSource val_source(std::move(data.val), cache_patches);
    std::vector<std::string> keys;
    for (const auto& s : splits) keys.push_back(s.scenario_key);
    log::info(log::concat("training ", to_string(spec.family), " on ", keys.size(), " scenario(s): ",
                          train_source.size(), " train / ", val_source.size(), " val samples"));
    auto run = train(initial, train_source, val_source, config);
    run.model.metadata().scenario_keys = keys;
    log::info(log::concat("chose epoch ", run.chosen_epoch, " with val acc ", run.model.metadata().val_accuracy));
    return run;
}

void write_history_csv(const std::vector<EpochRecord>& history, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << "epoch,train_loss,train_acc,val_acc,lr\n";
    out.precision(8);
    for (const auto& r : history) {
        out << r.epoch << ',' << r.train_loss << ',' << r.train_acc << ',' << r.val_acc << ',' << r.lr << '\n';
    }
    if (!out) throw Error("cannot write " + path.string());
}

void save_run(const TrainRun& run, const TrainConfig& config, const fs::path& dir) {
    fs::create_directories(dir);
    nlohmann::json doc{{"run_id", run.run_id},
                       {"seed", run.seed},
                       {"chosen_epoch", run.chosen_epoch},
                       {"train", config},
                       {"spec", run.model.spec()}};
    std::ofstream(dir / "config.json") << doc.dump(2) << '\n';
    write_history_csv(run.history, dir / "history.csv");
    save_model(run.model, dir / "model");
}

std::vector<std::uint64_t> run_seed_list(std::uint64_t base_seed, int n) {
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < n; ++i) {
        std::uint64_t s = derive_seed(base_seed, hash_key("run"), static_cast<std::uint64_t>(i)) % 1000000007ULL;
        while (std::find(seeds.begin(), seeds.end(), s) != seeds.end()) ++s;
        seeds.push_back(s);
    }
    return seeds;
}

std::vector<TrainRun> run_seeds(const DatasetIndex& index, const std::vector<std::string>& scenario_keys,
                                const BackboneSpec& spec, const TrainConfig& config_template, int n,
                                const std::optional<fs::path>& runs_dir, const BuildOptions& build) {
    std::vector<TrainRun> runs;
    for (const auto seed : run_seed_list(config_template.seed, n)) {
        std::vector<ScenarioSplit> splits;
        for (const auto& key : scenario_keys) splits.push_back(temporal_split(index, key, seed));
        TrainConfig config = config_template;
        config.seed = seed;
        auto run = train_on_splits(spec, splits, config, build);
        run.run_id = "seed_" + std::to_string(seed);
        if (runs_dir) save_run(run, config, *runs_dir / run.run_id);
        runs.push_back(std::move(run));
    }
    return runs;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"batch_size", c.batch_size},
                       {"initial_lr", c.initial_lr},
                       {"lr_factor", c.lr_factor},
                       {"lr_patience", c.lr_patience},
                       {"max_epochs", c.max_epochs},
                       {"early_stop_patience", c.early_stop_patience},
                       {"augment_enabled", c.augment_enabled},
                       {"augment", c.augment},
                       {"seed", c.seed},
                       {"stacking_on_validation", c.stacking_on_validation}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c = TrainConfig{};
    c.batch_size = j.value("batch_size", c.batch_size);
    c.initial_lr = j.value("initial_lr", c.initial_lr);
    c.lr_factor = j.value("lr_factor", c.lr_factor);
    c.lr_patience = j.value("lr_patience", c.lr_patience);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.augment_enabled = j.value("augment_enabled", c.augment_enabled);
    if (j.contains("augment")) c.augment = j["augment"].get<AugmentParams>();
    c.seed = j.value("seed", c.seed);
    c.stacking_on_validation = j.value("stacking_on_validation", c.stacking_on_validation);
}

}  // namespace parkocc
