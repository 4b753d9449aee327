#include "parkocc/meta.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <opencv2/ml.hpp>

#include "model_impl.hpp"
#include "parkocc/errors.hpp"
#include "parkocc/log.hpp"
#include "parkocc/patch_source.hpp"
#include "parkocc/rng.hpp"

namespace parkocc {

namespace fs = std::filesystem;

namespace detail {

struct MetaImpl {
    cv::Ptr<cv::ml::SVM> svm;
    SvmSettings svm_settings;
    MlpWeights mlp;
    Model selector;
};

}  // namespace detail

std::string to_string(MetaKind kind) {
    switch (kind) {
        case MetaKind::stacking_svm: return "stacking_svm";
        case MetaKind::stacking_mlp: return "stacking_mlp";
        case MetaKind::dynse_selector: return "dynse_selector";
    }
    return "unknown";
}

MetaKind meta_kind_from_string(const std::string& text) {
    if (text == "stacking_svm" || text == "svm") return MetaKind::stacking_svm;
    if (text == "stacking_mlp" || text == "mlp") return MetaKind::stacking_mlp;
    if (text == "dynse_selector" || text == "dynse" || text == "dynamic_selection") return MetaKind::dynse_selector;
    throw DataError("unknown meta-model kind '" + text + "'");
}

namespace {

// Plain forward pass of the stacking MLP: ReLU between layers, softmax at the end.
std::vector<float> mlp_forward(const MlpWeights& w, std::span<const float> input) {
    std::vector<float> x(input.begin(), input.end());
    for (std::size_t l = 0; l < w.weights.size(); ++l) {
        const std::size_t out = w.biases[l].size();
        const std::size_t in = x.size();
        std::vector<float> y(out);
        for (std::size_t o = 0; o < out; ++o) {
            double acc = w.biases[l][o];
            for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(w.weights[l][o * in + i]) * x[i];
            y[o] = static_cast<float>(acc);
        }
        if (l + 1 < w.weights.size()) {
            for (auto& v : y) v = std::max(v, 0.0f);
        }
        x = std::move(y);
    }
    const float m = *std::max_element(x.begin(), x.end());
    double sum = 0.0;
    for (auto& v : x) {
        v = std::exp(v - m);
        sum += v;
    }
    for (auto& v : x) v = static_cast<float>(v / sum);
    return x;
}

void check_mlp_shape(const MlpWeights& w, std::size_t input_dim) {
    if (w.weights.empty() || w.weights.size() != w.biases.size()) throw ModelError("MLP needs matching weight and bias lists");
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < w.weights.size(); ++l) {
        if (w.biases[l].empty() || w.weights[l].size() != w.biases[l].size() * in) {
            throw ModelError("MLP layer " + std::to_string(l) + " has inconsistent dimensions");
        }
        in = w.biases[l].size();
    }
    if (in != 2) throw ModelError("MLP output layer must have 2 units");
}

cv::Mat to_cv(const ProbabilityMatrix& m) {
    cv::Mat out(static_cast<int>(m.rows), static_cast<int>(m.cols), CV_32F);
    std::copy(m.values.begin(), m.values.end(), out.ptr<float>());
    return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

MetaModel::MetaModel(MetaKind kind, std::vector<std::string> pool_signature, std::shared_ptr<const detail::MetaImpl> impl)
    : kind_(kind), signature_(std::move(pool_signature)), impl_(std::move(impl)) {}

const detail::MetaImpl& MetaModel::impl() const {
    if (!impl_) throw ModelError("empty meta-model");
    return *impl_;
}

std::vector<Label> MetaModel::predict_posteriors(const ProbabilityMatrix& posteriors) const {
    if (kind_ == MetaKind::dynse_selector) throw ModelError("a selector does not classify posterior vectors");
    if (posteriors.cols != input_dimension()) {
        throw ModelError("meta-model expects posterior vectors of length " + std::to_string(input_dimension()) +
                         ", got " + std::to_string(posteriors.cols));
    }
    std::vector<Label> out;
    out.reserve(posteriors.rows);
    if (posteriors.rows == 0) return out;
    if (kind_ == MetaKind::stacking_svm) {
        cv::Mat predicted;
        impl().svm->predict(to_cv(posteriors), predicted);
        for (int r = 0; r < predicted.rows; ++r) {
            out.push_back(predicted.at<float>(r, 0) > 0.5f ? Label::occupied : Label::empty);
        }
        return out;
    }
    for (std::size_t r = 0; r < posteriors.rows; ++r) {
        const auto p = mlp_forward(impl().mlp, posteriors.row(r));
        out.push_back(p[1] >= p[0] ? Label::occupied : Label::empty);
    }
    return out;
}

std::vector<double> MetaModel::confidence_posteriors(const ProbabilityMatrix& posteriors) const {
    if (kind_ == MetaKind::dynse_selector) throw ModelError("a selector does not classify posterior vectors");
    if (posteriors.cols != input_dimension()) throw ModelError("posterior vector length mismatch");
    std::vector<double> out;
    if (posteriors.rows == 0) return out;
    if (kind_ == MetaKind::stacking_svm) {
        cv::Mat raw;
        impl().svm->predict(to_cv(posteriors), raw, cv::ml::StatModel::RAW_OUTPUT);
        for (int r = 0; r < raw.rows; ++r) out.push_back(sigmoid(std::abs(raw.at<float>(r, 0))));
        return out;
    }
    for (std::size_t r = 0; r < posteriors.rows; ++r) {
        const auto p = mlp_forward(impl().mlp, posteriors.row(r));
        out.push_back(std::max(p[0], p[1]));
    }
    return out;
}

ProbabilityMatrix MetaModel::selector_scores(std::span<const cv::Mat> patches) const {
    const Model& m = selector_model();
    std::vector<cv::Mat> resized;
    resized.reserve(patches.size());
    for (const auto& p : patches) resized.push_back(resize_patch(p, m.spec().input_size));
    return m.predict_proba(resized);
}

const Model& MetaModel::selector_model() const {
    if (kind_ != MetaKind::dynse_selector) throw ModelError("only a dynamic-selection meta has a selector network");
    return impl().selector;
}

std::vector<int> MetaModel::mlp_layer_widths() const {
    if (kind_ != MetaKind::stacking_mlp) throw ModelError("not an MLP meta-model");
    std::vector<int> widths;
    for (const auto& b : impl().mlp.biases) widths.push_back(static_cast<int>(b.size()));
    return widths;
}

// ---------------------------------------------------------------- stacking

namespace {

std::shared_ptr<detail::MetaImpl> fit_svm(const ProbabilityMatrix& x, std::span<const Label> labels,
                                          const SvmSettings& settings) {
    double gamma = settings.gamma;
    if (gamma <= 0.0) {
        // 1 / (n_features * variance of all feature values)
        const double n = static_cast<double>(x.values.size());
        const double mean = std::accumulate(x.values.begin(), x.values.end(), 0.0) / n;
        double var = 0.0;
        for (float v : x.values) var += (v - mean) * (v - mean);
        var /= n;
        gamma = var > 0.0 ? 1.0 / (static_cast<double>(x.cols) * var) : 1.0;
    }
    auto svm = cv::ml::SVM::create();
    svm->setType(cv::ml::SVM::C_SVC);
    svm->setKernel(cv::ml::SVM::RBF);
    svm->setC(settings.c);
    svm->setGamma(gamma);
    svm->setTermCriteria(cv::TermCriteria(cv::TermCriteria::MAX_ITER + cv::TermCriteria::EPS, 100000, 1e-6));
    cv::Mat y(static_cast<int>(labels.size()), 1, CV_32S);
    for (std::size_t i = 0; i < labels.size(); ++i) y.at<int>(static_cast<int>(i)) = class_index(labels[i]);
    if (!svm->train(to_cv(x), cv::ml::ROW_SAMPLE, y)) throw TrainingError("SVM training failed");
    auto impl = std::make_shared<detail::MetaImpl>();
    impl->svm = svm;
    impl->svm_settings = {settings.c, gamma};
    return impl;
}

MlpWeights fit_mlp(const ProbabilityMatrix& x, std::span<const Label> labels, const MlpSettings& settings) {
    if (settings.layers.empty() || settings.layers.back() != 2) throw DataError("MLP must end in 2 output units");
    if (settings.epochs < 1 || settings.batch_size < 1 || !(settings.lr > 0.0)) throw DataError("bad MLP settings");
    torch::nn::Sequential net;
    {
        std::lock_guard lock(detail::torch_seed_mutex());
        torch::manual_seed(settings.seed);
        std::int64_t in = static_cast<std::int64_t>(x.cols);
        for (std::size_t l = 0; l < settings.layers.size(); ++l) {
            net->push_back(torch::nn::Linear(in, settings.layers[l]));
            if (l + 1 < settings.layers.size()) net->push_back(torch::nn::ReLU());
            in = settings.layers[l];
        }
    }
    const auto features = torch::from_blob(const_cast<float*>(x.values.data()),
                                           {static_cast<std::int64_t>(x.rows), static_cast<std::int64_t>(x.cols)},
                                           torch::kFloat32)
                              .clone();
    std::vector<std::int64_t> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = class_index(labels[i]);
    const auto targets = torch::tensor(y, torch::kLong);

    torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(settings.lr));
    std::vector<std::int64_t> order(x.rows);
    std::iota(order.begin(), order.end(), std::int64_t{0});
    Rng rng(derive_seed(settings.seed, hash_key("mlp-order")));
    for (int epoch = 0; epoch < settings.epochs; ++epoch) {
        shuffle(std::span<std::int64_t>(order), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(settings.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(settings.batch_size));
            const auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + start, order.begin() + end));
            optimizer.zero_grad();
            const auto loss = torch::nn::functional::cross_entropy(net->forward(features.index_select(0, idx)),
                                                                   targets.index_select(0, idx));
            if (!std::isfinite(loss.item<double>())) throw TrainingError("stacking MLP diverged");
            loss.backward();
            optimizer.step();
        }
    }

    MlpWeights w;
    for (const auto& module : net->children()) {
        const auto* linear = module->as<torch::nn::Linear>();
        if (!linear) continue;
        const auto weight = linear->weight.detach().contiguous();
        const auto bias = linear->bias.detach().contiguous();
        w.weights.emplace_back(weight.data_ptr<float>(), weight.data_ptr<float>() + weight.numel());
        w.biases.emplace_back(bias.data_ptr<float>(), bias.data_ptr<float>() + bias.numel());
    }
    return w;
}

}  // namespace

MetaModel fit_stacking_meta(const ProbabilityMatrix& posteriors, std::span<const Label> labels,
                            std::vector<std::string> pool_signature, MetaKind kind, const SvmSettings& svm,
                            const MlpSettings& mlp) {
    if (kind == MetaKind::dynse_selector) throw DataError("fit_stacking_meta fits stacking kinds only");
    if (posteriors.rows != labels.size() || posteriors.rows == 0) {
        throw DataError("stacking needs one label per posterior vector and at least one vector");
    }
    if (posteriors.cols != 2 * pool_signature.size()) {
        throw DataError("posterior vectors have length " + std::to_string(posteriors.cols) + " but the pool has " +
                        std::to_string(pool_signature.size()) + " members");
    }
    const auto occupied = std::count(labels.begin(), labels.end(), Label::occupied);
    if (occupied == 0 || occupied == static_cast<std::ptrdiff_t>(labels.size())) {
        throw DataError("stacking training data must contain both classes");
    }
    if (kind == MetaKind::stacking_svm) {
        return MetaModel(kind, std::move(pool_signature), fit_svm(posteriors, labels, svm));
    }
    auto impl = std::make_shared<detail::MetaImpl>();
    impl->mlp = fit_mlp(posteriors, labels, mlp);
    return MetaModel(kind, std::move(pool_signature), std::move(impl));
}

MetaModel train_stacking_meta(const Pool& pool, std::span<const SampleRecord> train_records, MetaKind kind,
                              const SvmSettings& svm, const MlpSettings& mlp) {
    const std::set<std::string> members(pool.scenario_keys().begin(), pool.scenario_keys().end());
    std::size_t outside = 0;
    ProbabilityMatrix all;
    all.cols = 2 * pool.size();
    std::vector<Label> labels;
    std::vector<cv::Mat> batch;
    constexpr std::size_t chunk = 256;
    for (std::size_t start = 0; start < train_records.size(); start += chunk) {
        batch.clear();
        const std::size_t end = std::min(train_records.size(), start + chunk);
        for (std::size_t i = start; i < end; ++i) {
            if (!members.contains(train_records[i].scenario_key)) ++outside;
            batch.push_back(load_patch(train_records[i]));
            labels.push_back(train_records[i].label);
        }
        const auto part = posterior_matrix(pool, batch);
        all.values.insert(all.values.end(), part.values.begin(), part.values.end());
        all.rows += part.rows;
    }
    if (outside > 0) {
        log::warn(log::concat(outside, " stacking training record(s) come from scenarios outside the pool"));
    }
    log::info(log::concat("fitting ", to_string(kind), " on ", all.rows, " posterior vectors of length ", all.cols));
    return fit_stacking_meta(all, labels, pool.scenario_keys(), kind, svm, mlp);
}

MetaModel make_mlp_meta(std::vector<std::string> pool_signature, MlpWeights weights) {
    check_mlp_shape(weights, 2 * pool_signature.size());
    auto impl = std::make_shared<detail::MetaImpl>();
    impl->mlp = std::move(weights);
    return MetaModel(MetaKind::stacking_mlp, std::move(pool_signature), std::move(impl));
}

void check_signature(const Pool& pool, const MetaModel& meta) {
    if (pool.scenario_keys() == meta.pool_signature()) return;
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& k : v) s += (s.empty() ? "" : ",") + k;
        return s;
    };
    throw ModelError("meta-model was trained for pool [" + join(meta.pool_signature()) + "] but the pool is [" +
                     join(pool.scenario_keys()) + "]");
}

Label stacking_predict(const Pool& pool, const MetaModel& meta, const cv::Mat& patch) {
    check_signature(pool, meta);
    return meta.predict_posteriors(posterior_matrix(pool, std::span<const cv::Mat>(&patch, 1))).front();
}

// ---------------------------------------------------------------- dynamic selection

MetaModel train_dynse_selector(std::span<const ScenarioSplit> source_scenarios, const BackboneSpec& spec,
                               const TrainConfig& config, const BuildOptions& build, bool cache_patches) {
    if (source_scenarios.size() < 2) throw DataError("a selector needs at least 2 source scenarios");
    std::vector<SampleRecord> train_records, val_records;
    std::vector<int> train_labels, val_labels;
    std::vector<std::string> keys;
    for (std::size_t k = 0; k < source_scenarios.size(); ++k) {
        const auto split = with_validation_fallback(source_scenarios[k]);
        keys.push_back(split.scenario_key);
        for (const auto& r : split.train) {
            train_records.push_back(r);
            train_labels.push_back(static_cast<int>(k));
        }
        for (const auto& r : split.val) {
            val_records.push_back(r);
            val_labels.push_back(static_cast<int>(k));
        }
    }
    BackboneSpec selector_spec = spec;
    selector_spec.num_outputs = static_cast<int>(source_scenarios.size());
    TrainConfig selector_config = config;
    selector_config.seed = derive_seed(config.seed, hash_key("selector"));
    BuildOptions options = build;
    options.init_seed = derive_seed(selector_config.seed, hash_key("init"), build.init_seed);

    const RecordPatchSource train_source(std::move(train_records), std::move(train_labels), cache_patches);
    const RecordPatchSource val_source(std::move(val_records), std::move(val_labels), cache_patches);
    log::info(log::concat("training ", keys.size(), "-way scenario selector on ", train_source.size(), " samples"));
    auto run = train(build_model(selector_spec, options), train_source, val_source, selector_config);
    run.model.metadata().scenario_keys = keys;
    return make_dynse_selector(std::move(keys), std::move(run.model));
}

MetaModel make_dynse_selector(std::vector<std::string> pool_signature, Model selector) {
    if (!selector.valid()) throw ModelError("selector model is empty");
    if (selector.spec().num_outputs != static_cast<int>(pool_signature.size())) {
        throw ModelError("selector has " + std::to_string(selector.spec().num_outputs) + " outputs for a pool of " +
                         std::to_string(pool_signature.size()));
    }
    auto impl = std::make_shared<detail::MetaImpl>();
    impl->selector = std::move(selector);
    return MetaModel(MetaKind::dynse_selector, std::move(pool_signature), std::move(impl));
}

std::size_t select_member(std::span<const float> scores) {
    if (scores.empty()) throw DataError("no selector scores");
    return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

DynseDecision dynse_predict(const Pool& pool, const MetaModel& selector, const cv::Mat& patch) {
    check_signature(pool, selector);
    const auto scores = selector.selector_scores(std::span<const cv::Mat>(&patch, 1));
    DynseDecision d;
    d.member = select_member(scores.row(0));
    const Model& member = pool.member(d.member);
    const cv::Mat resized = resize_patch(patch, member.spec().input_size);
    const auto p = member.predict_proba(std::span<const cv::Mat>(&resized, 1));
    d.label = p.at(0, 1) >= p.at(0, 0) ? Label::occupied : Label::empty;
    d.confidence = std::max(p.at(0, 0), p.at(0, 1));
    return d;
}

// ---------------------------------------------------------------- persistence

void save_meta(const MetaModel& meta, const fs::path& dir) {
    fs::create_directories(dir);
    nlohmann::json doc{{"format", 1}, {"kind", to_string(meta.kind())}, {"pool_signature", meta.pool_signature()}};
    const auto& impl = meta.impl();
    switch (meta.kind()) {
        case MetaKind::stacking_svm:
            impl.svm->save((dir / "svm.yml").string());
            doc["svm"] = {{"c", impl.svm_settings.c}, {"gamma", impl.svm_settings.gamma}};
            break;
        case MetaKind::stacking_mlp:
            doc["mlp"] = {{"weights", impl.mlp.weights}, {"biases", impl.mlp.biases}};
            break;
        case MetaKind::dynse_selector:
            save_model(impl.selector, dir / "selector");
            break;
    }
    std::ofstream out(dir / "meta.json");
    out << doc.dump() << '\n';
    if (!out) throw Error("cannot write " + (dir / "meta.json").string());
}

MetaModel load_meta(const fs::path& dir) {
    std::ifstream in(dir / "meta.json");
    if (!in) throw DataError("meta-model directory " + dir.string() + " has no meta.json");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed meta.json in " + dir.string() + ": " + e.what());
    }
    const auto kind = meta_kind_from_string(doc.at("kind").get<std::string>());
    auto signature = doc.at("pool_signature").get<std::vector<std::string>>();
    switch (kind) {
        case MetaKind::stacking_svm: {
            auto impl = std::make_shared<detail::MetaImpl>();
            if (!fs::exists(dir / "svm.yml")) throw DataError("missing " + (dir / "svm.yml").string());
            impl->svm = cv::ml::SVM::load((dir / "svm.yml").string());
            impl->svm_settings = {doc["svm"].value("c", 0.1), doc["svm"].value("gamma", 0.0)};
            return MetaModel(kind, std::move(signature), std::move(impl));
        }
        case MetaKind::stacking_mlp: {
            MlpWeights w;
            w.weights = doc.at("mlp").at("weights").get<std::vector<std::vector<float>>>();
            w.biases = doc.at("mlp").at("biases").get<std::vector<std::vector<float>>>();
            return make_mlp_meta(std::move(signature), std::move(w));
        }
        case MetaKind::dynse_selector:
            return make_dynse_selector(std::move(signature), load_model(dir / "selector"));
    }
    throw DataError("unknown meta-model kind");
}

}  // namespace parkocc
