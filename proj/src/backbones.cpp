#include "parkocc/backbones.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <mutex>

#include <opencv2/imgproc.hpp>

#include "model_impl.hpp"
#include "parkocc/errors.hpp"
#include "parkocc/log.hpp"

namespace parkocc {

namespace fs = std::filesystem;

std::string to_string(BackboneFamily family) {
    switch (family) {
        case BackboneFamily::conv3: return "conv3";
        case BackboneFamily::mobilenetv3_large: return "mobilenetv3_large";
        case BackboneFamily::resnet50: return "resnet50";
    }
    return "unknown";
}

BackboneFamily backbone_family_from_string(const std::string& text) {
    std::string t;
    for (char c : text) {
        if (c != '-' && c != '_') t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (t == "conv3" || t == "3conv" || t == "cnn") return BackboneFamily::conv3;
    if (t == "mobilenetv3large" || t == "mobilenetv3" || t == "mobilenet") return BackboneFamily::mobilenetv3_large;
    if (t == "resnet50" || t == "resnet") return BackboneFamily::resnet50;
    throw DataError("unknown backbone '" + text + "' (expected conv3, mobilenetv3_large or resnet50)");
}

std::string display_name(BackboneFamily family) {
    switch (family) {
        case BackboneFamily::conv3: return "3-Conv. Layers";
        case BackboneFamily::mobilenetv3_large: return "MobileNetV3";
        case BackboneFamily::resnet50: return "ResNet-50";
    }
    return "unknown";
}

BackboneSpec BackboneSpec::defaults(BackboneFamily family, int num_outputs) {
    BackboneSpec s;
    s.family = family;
    s.num_outputs = num_outputs;
    if (family == BackboneFamily::conv3) {
        s.input_size = 32;
    } else {
        s.input_size = 128;
        s.head = {1024, 128};
        s.pretrained_features = true;
        s.frozen_features = true;
    }
    return s;
}

void BackboneSpec::validate() const {
    if (num_outputs < 2) throw DataError("a classifier needs at least 2 outputs");
    if (input_size < 32) throw DataError("input size must be at least 32");
    if (std::any_of(head.begin(), head.end(), [](int h) { return h <= 0; })) {
        throw DataError("head widths must be positive");
    }
    if (family == BackboneFamily::conv3) {
        if (input_size % 4 != 0) throw DataError("conv3 input size must be a multiple of 4");
        if (pretrained_features || frozen_features) {
            throw DataError("conv3 is trained from scratch; it has no pretrained or frozen features");
        }
    }
}

Normalization Normalization::unit() { return Normalization{}; }

Normalization Normalization::imagenet() {
    return Normalization{{0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}, "imagenet"};
}

// ---------------------------------------------------------------- Model handle

detail::ModelImpl& Model::impl() const {
    if (!impl_) throw ModelError("empty model handle");
    return *impl_;
}

const BackboneSpec& Model::spec() const { return impl().spec; }
const ModelMetadata& Model::metadata() const { return impl().metadata; }
ModelMetadata& Model::metadata() { return impl().metadata; }

ProbabilityMatrix Model::predict_proba(std::span<const cv::Mat> patches) const {
    auto& m = impl();
    ProbabilityMatrix out;
    out.rows = patches.size();
    out.cols = static_cast<std::size_t>(m.spec.num_outputs);
    out.values.reserve(out.rows * out.cols);
    torch::NoGradGuard no_grad;
    constexpr std::size_t chunk = 64;
    for (std::size_t start = 0; start < patches.size(); start += chunk) {
        const auto part = patches.subspan(start, std::min(chunk, patches.size() - start));
        const auto x = detail::to_input(part, m.spec.input_size, m.metadata.normalization);
        const auto p = torch::softmax(m.net->forward(x), 1).contiguous();
        const float* data = p.data_ptr<float>();
        out.values.insert(out.values.end(), data, data + p.numel());
    }
    return out;
}

ParamCount Model::count_params() const {
    ParamCount c;
    for (const auto& p : impl().net->parameters()) {
        c.total += p.numel();
        if (p.requires_grad()) c.trainable += p.numel();
    }
    return c;
}

Model Model::clone() const {
    auto& m = impl();
    auto copy = std::make_shared<detail::ModelImpl>();
    copy->spec = m.spec;
    copy->metadata = m.metadata;
    copy->net = detail::make_net(m.spec, 0);
    detail::copy_state(*m.net, *copy->net);
    copy->net->set_training(false);
    return Model(std::move(copy));
}

// ---------------------------------------------------------------- detail

namespace detail {

torch::Tensor to_input(std::span<const cv::Mat> patches, int side, const Normalization& norm) {
    auto x = torch::empty({static_cast<std::int64_t>(patches.size()), 3, side, side}, torch::kFloat32);
    auto acc = x.accessor<float, 4>();
    for (std::size_t n = 0; n < patches.size(); ++n) {
        const cv::Mat& p = patches[n];
        if (p.rows != side || p.cols != side || p.type() != CV_8UC3) {
            throw DataError("patch " + std::to_string(n) + " is " + std::to_string(p.cols) + "x" +
                            std::to_string(p.rows) + ", expected " + std::to_string(side) + "x" +
                            std::to_string(side) + " 8-bit BGR");
        }
        for (int y = 0; y < side; ++y) {
            const auto* row = p.ptr<cv::Vec3b>(y);
            for (int xx = 0; xx < side; ++xx) {
                for (int c = 0; c < 3; ++c) {
                    const float v = row[xx][2 - c] / 255.0f;  // BGR -> RGB
                    acc[n][c][y][xx] = (v - norm.mean[c]) / norm.stddev[c];
                }
            }
        }
    }
    return x;
}

std::mutex& torch_seed_mutex() {
    static std::mutex m;
    return m;
}

std::shared_ptr<nets::ClassifierNet> make_net(const BackboneSpec& spec, std::uint64_t seed) {
    // torch initialisers draw from the global generator; serialise construction.
    std::lock_guard lock(torch_seed_mutex());
    torch::manual_seed(seed);
    auto net = std::make_shared<nets::ClassifierNet>(spec);
    net->set_training(false);
    return net;
}

namespace {

std::vector<torch::Tensor> state_tensors(const nets::ClassifierNet& net) {
    std::vector<torch::Tensor> out;
    for (const auto& p : net.named_parameters(true)) out.push_back(p.value());
    for (const auto& b : net.named_buffers(true)) out.push_back(b.value());
    return out;
}

}  // namespace

void copy_state(const nets::ClassifierNet& from, nets::ClassifierNet& to) {
    restore_state(to, snapshot_state(from));
}

std::vector<torch::Tensor> snapshot_state(const nets::ClassifierNet& net) {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> out;
    for (const auto& t : state_tensors(net)) out.push_back(t.detach().clone());
    return out;
}

void restore_state(nets::ClassifierNet& net, const std::vector<torch::Tensor>& state) {
    torch::NoGradGuard no_grad;
    auto targets = state_tensors(net);
    if (targets.size() != state.size()) throw ModelError("state does not match the network layout");
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i].copy_(state[i]);
}

std::vector<torch::Tensor> trainable_parameters(const nets::ClassifierNet& net) {
    std::vector<torch::Tensor> out;
    for (const auto& p : net.parameters(true)) {
        if (p.requires_grad()) out.push_back(p);
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------- construction

std::string pretrained_file_name(BackboneFamily family) {
    switch (family) {
        case BackboneFamily::mobilenetv3_large: return "mobilenet_v3_large_imagenet.pt";
        case BackboneFamily::resnet50: return "resnet50_imagenet.pt";
        case BackboneFamily::conv3: break;
    }
    throw ModelError("conv3 has no pretrained weights");
}

std::optional<fs::path> find_pretrained_weights(BackboneFamily family) {
    if (family == BackboneFamily::conv3) return std::nullopt;
    const char* dir = std::getenv("PARKOCC_PRETRAINED_DIR");
    if (!dir || !*dir) return std::nullopt;
    const fs::path candidate = fs::path(dir) / pretrained_file_name(family);
    if (fs::exists(candidate)) return candidate;
    return std::nullopt;
}

namespace {

void import_reference_weights(nets::ClassifierNet& net, const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ModelError("cannot read pretrained weights " + file.string());
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    c10::IValue value;
    try {
        value = torch::pickle_load(bytes);
    } catch (const c10::Error& e) {
        throw ModelError("pretrained weights " + file.string() + " are not a torch.save'd dict of tensors (see tools/export_pretrained.py): " +
                         e.what_without_backtrace());
    }
    if (!value.isGenericDict()) throw ModelError("pretrained weights " + file.string() + " do not hold a dict");
    std::map<std::string, torch::Tensor> reference;
    for (const auto& item : value.toGenericDict()) {
        if (item.key().isString() && item.value().isTensor()) {
            reference.emplace(item.key().toStringRef(), item.value().toTensor());
        }
    }

    torch::NoGradGuard no_grad;
    std::size_t copied = 0;
    std::vector<std::string> missing;
    auto copy_named = [&](const std::string& name, torch::Tensor& target) {
        if (name.rfind("features.", 0) != 0) return;
        const auto it = reference.find(nets::reference_key(name));
        if (it == reference.end()) {
            missing.push_back(nets::reference_key(name));
            return;
        }
        if (it->second.sizes() != target.sizes()) {
            throw ModelError("pretrained tensor " + it->first + " has a different shape than the network expects");
        }
        target.copy_(it->second.to(target.dtype()));
        ++copied;
    };
    for (auto& p : net.named_parameters(true)) copy_named(p.key(), p.value());
    for (auto& b : net.named_buffers(true)) copy_named(b.key(), b.value());
    if (!missing.empty()) {
        throw ModelError("pretrained weights " + file.string() + " lack " + std::to_string(missing.size()) +
                         " tensors, first: " + missing.front());
    }
    log::debug(log::concat("imported ", copied, " pretrained tensors from ", file.string()));
}

}  // namespace

Model build_model(const BackboneSpec& spec, const BuildOptions& options) {
    spec.validate();
    auto impl = std::make_shared<detail::ModelImpl>();
    impl->spec = spec;
    impl->metadata.seed = options.init_seed;
    impl->metadata.normalization =
        spec.family == BackboneFamily::conv3 ? Normalization::unit() : Normalization::imagenet();
    impl->net = detail::make_net(spec, options.init_seed);

    if (spec.pretrained_features) {
        auto weights = options.pretrained_weights ? options.pretrained_weights : find_pretrained_weights(spec.family);
        if (weights) {
            import_reference_weights(*impl->net, *weights);
            impl->metadata.pretrain_checkpoint = weights->filename().string();
        } else if (options.allow_random_features) {
            impl->metadata.pretrain_checkpoint = "random";
        } else {
            throw ModelError("no ImageNet weights for " + to_string(spec.family) +
                             ": run `python3 tools/export_pretrained.py --out <dir>` and set "
                             "PARKOCC_PRETRAINED_DIR=<dir> (expects " + pretrained_file_name(spec.family) + ")");
        }
    }
    return Model(std::move(impl));
}

ParamCount count_params(const Model& model) { return model.count_params(); }

ProbabilityMatrix predict_proba(const Model& model, std::span<const cv::Mat> patches) {
    return model.predict_proba(patches);
}

// ---------------------------------------------------------------- persistence

void save_model(const Model& model, const fs::path& dir) {
    auto& m = model.impl();
    fs::create_directories(dir);
    torch::serialize::OutputArchive archive;
    for (const auto& p : m.net->named_parameters(true)) archive.write(p.key(), p.value());
    for (const auto& b : m.net->named_buffers(true)) archive.write(b.key(), b.value(), true);
    archive.save_to((dir / "weights.pt").string());

    nlohmann::json meta{{"format", 1}, {"spec", m.spec}, {"metadata", m.metadata}};
    std::ofstream out(dir / "metadata.json");
    out << meta.dump(2) << '\n';
    if (!out) throw Error("cannot write " + (dir / "metadata.json").string());
}

Model load_model(const fs::path& dir) {
    const fs::path meta_path = dir / "metadata.json";
    const fs::path weights_path = dir / "weights.pt";
    if (!fs::exists(meta_path) || !fs::exists(weights_path)) {
        throw DataError("model directory " + dir.string() + " needs metadata.json and weights.pt");
    }
    nlohmann::json meta;
    try {
        std::ifstream in(meta_path);
        meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed " + meta_path.string() + ": " + e.what());
    }
    auto impl = std::make_shared<detail::ModelImpl>();
    impl->spec = meta.at("spec").get<BackboneSpec>();
    impl->spec.validate();
    impl->metadata = meta.at("metadata").get<ModelMetadata>();
    impl->net = detail::make_net(impl->spec, 0);

    torch::serialize::InputArchive archive;
    try {
        archive.load_from(weights_path.string());
        torch::NoGradGuard no_grad;
        for (auto& p : impl->net->named_parameters(true)) {
            torch::Tensor t;
            archive.read(p.key(), t);
            p.value().copy_(t);
        }
        for (auto& b : impl->net->named_buffers(true)) {
            torch::Tensor t;
            archive.read(b.key(), t, true);
            b.value().copy_(t);
        }
    } catch (const c10::Error& e) {
        throw ModelError("weights in " + weights_path.string() + " do not match the recorded spec: " +
                         e.what_without_backtrace());
    }
    impl->net->set_training(false);
    return Model(std::move(impl));
}

cv::Mat resize_patch(const cv::Mat& patch, int side) {
    if (patch.empty()) throw DataError("cannot resize an empty patch");
    if (patch.rows == side && patch.cols == side) return patch.clone();
    cv::Mat out;
    const int interp = (patch.rows > side || patch.cols > side) ? cv::INTER_AREA : cv::INTER_LINEAR;
    cv::resize(patch, out, {side, side}, 0, 0, interp);
    return out;
}

// ---------------------------------------------------------------- introspection

namespace {

torch::Tensor labels_tensor(std::span<const int> labels) {
    std::vector<std::int64_t> v(labels.begin(), labels.end());
    return torch::tensor(v, torch::kLong);
}

void check_batch(std::span<const cv::Mat> patches, std::span<const int> labels) {
    if (patches.size() != labels.size() || patches.empty()) {
        throw DataError("batch needs one label per patch and at least one patch");
    }
}

}  // namespace

double batch_loss(const Model& model, std::span<const cv::Mat> patches, std::span<const int> labels) {
    check_batch(patches, labels);
    auto& m = model.impl();
    torch::NoGradGuard no_grad;
    // Penultimate activations in float, output layer and loss in double so
    // finite differences over output parameters are not drowned in rounding.
    const auto h = m.net->embed(detail::to_input(patches, m.spec.input_size, m.metadata.normalization)).to(torch::kDouble);
    const auto logits = torch::nn::functional::linear(h, m.net->output->weight.to(torch::kDouble),
                                                      m.net->output->bias.to(torch::kDouble));
    return torch::nn::functional::cross_entropy(logits, labels_tensor(labels)).item<double>();
}

std::vector<float> output_layer_parameters(const Model& model) {
    auto& out = *model.impl().net->output;
    const auto w = out.weight.detach().contiguous();
    const auto b = out.bias.detach().contiguous();
    std::vector<float> v(w.data_ptr<float>(), w.data_ptr<float>() + w.numel());
    v.insert(v.end(), b.data_ptr<float>(), b.data_ptr<float>() + b.numel());
    return v;
}

void set_output_layer_parameters(Model& model, std::span<const float> values) {
    auto& out = *model.impl().net->output;
    const auto nw = out.weight.numel();
    if (static_cast<std::int64_t>(values.size()) != nw + out.bias.numel()) {
        throw DataError("output layer parameter count mismatch");
    }
    torch::NoGradGuard no_grad;
    std::vector<float> w(values.begin(), values.begin() + nw);
    std::vector<float> b(values.begin() + nw, values.end());
    out.weight.copy_(torch::tensor(w).view(out.weight.sizes()));
    out.bias.copy_(torch::tensor(b));
}

std::vector<float> output_layer_gradient(const Model& model, std::span<const cv::Mat> patches,
                                         std::span<const int> labels) {
    check_batch(patches, labels);
    auto& m = model.impl();
    auto& out = *m.net->output;
    const auto logits = m.net->forward(detail::to_input(patches, m.spec.input_size, m.metadata.normalization));
    const auto loss = torch::nn::functional::cross_entropy(logits, labels_tensor(labels));
    const auto grads = torch::autograd::grad({loss}, {out.weight, out.bias});
    const auto gw = grads[0].contiguous();
    const auto gb = grads[1].contiguous();
    std::vector<float> v(gw.data_ptr<float>(), gw.data_ptr<float>() + gw.numel());
    v.insert(v.end(), gb.data_ptr<float>(), gb.data_ptr<float>() + gb.numel());
    return v;
}

namespace {

bool in_group(const std::string& name, ParameterGroup group) {
    const bool feature = name.rfind("features.", 0) == 0;
    switch (group) {
        case ParameterGroup::features: return feature;
        case ParameterGroup::head: return !feature;
        case ParameterGroup::all: return true;
    }
    return false;
}

}  // namespace

std::vector<float> flat_parameters(const Model& model, ParameterGroup group) {
    std::vector<float> v;
    for (const auto& p : model.impl().net->named_parameters(true)) {
        if (!in_group(p.key(), group)) continue;
        const auto t = p.value().detach().contiguous();
        v.insert(v.end(), t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
    }
    return v;
}

std::vector<std::string> parameter_names(const Model& model, ParameterGroup group) {
    std::vector<std::string> names;
    for (const auto& p : model.impl().net->named_parameters(true)) {
        if (in_group(p.key(), group)) names.push_back(p.key());
    }
    return names;
}

std::vector<float> backbone_features(const Model& model, const cv::Mat& patch) {
    auto& m = model.impl();
    torch::NoGradGuard no_grad;
    const auto x = detail::to_input(std::span<const cv::Mat>(&patch, 1), m.spec.input_size, m.metadata.normalization);
    auto f = m.net->features->forward(x);
    f = m.net->features->global_pool() ? f.mean({2, 3}) : f.flatten(1);
    f = f.contiguous();
    return {f.data_ptr<float>(), f.data_ptr<float>() + f.numel()};
}

// ---------------------------------------------------------------- JSON

void to_json(nlohmann::json& j, const BackboneSpec& s) {
    j = nlohmann::json{{"family", to_string(s.family)},
                       {"input_size", s.input_size},
                       {"head", s.head},
                       {"pretrained_features", s.pretrained_features},
                       {"frozen_features", s.frozen_features},
                       {"num_outputs", s.num_outputs}};
}

void from_json(const nlohmann::json& j, BackboneSpec& s) {
    const auto family = backbone_family_from_string(j.at("family").get<std::string>());
    s = BackboneSpec::defaults(family, j.value("num_outputs", 2));
    s.input_size = j.value("input_size", s.input_size);
    s.head = j.value("head", s.head);
    s.pretrained_features = j.value("pretrained_features", s.pretrained_features);
    s.frozen_features = j.value("frozen_features", s.frozen_features);
}

void to_json(nlohmann::json& j, const ModelMetadata& m) {
    j = nlohmann::json{{"scenario_keys", m.scenario_keys},
                       {"seed", m.seed},
                       {"val_accuracy", m.val_accuracy},
                       {"chosen_epoch", m.chosen_epoch},
                       {"pretrain_checkpoint", m.pretrain_checkpoint},
                       {"normalization",
                        {{"name", m.normalization.name}, {"mean", m.normalization.mean}, {"std", m.normalization.stddev}}}};
}

void from_json(const nlohmann::json& j, ModelMetadata& m) {
    m = ModelMetadata{};
    m.scenario_keys = j.value("scenario_keys", m.scenario_keys);
    m.seed = j.value("seed", m.seed);
    m.val_accuracy = j.value("val_accuracy", m.val_accuracy);
    m.chosen_epoch = j.value("chosen_epoch", m.chosen_epoch);
    m.pretrain_checkpoint = j.value("pretrain_checkpoint", m.pretrain_checkpoint);
    if (j.contains("normalization")) {
        const auto& n = j["normalization"];
        m.normalization.name = n.value("name", std::string{"unit"});
        m.normalization.mean = n.at("mean").get<std::array<float, 3>>();
        m.normalization.stddev = n.at("std").get<std::array<float, 3>>();
    }
}

}  // namespace parkocc
