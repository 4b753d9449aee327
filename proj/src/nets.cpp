#include "nets.hpp"

#include <array>

#include "parkocc/errors.hpp"

namespace parkocc::nets {

namespace {

namespace nn = torch::nn;

nn::Functional activation(bool hardswish) {
    if (hardswish) return nn::Functional([](torch::Tensor x) { return torch::hardswish(x); });
    return nn::Functional([](torch::Tensor x) { return torch::relu(x); });
}

// ---------------------------------------------------------------- conv3

class Conv3 final : public Backbone {
public:
    Conv3() {
        body_ = register_module("body", nn::Sequential(
            nn::Conv2d(nn::Conv2dOptions(3, 32, 3).padding(1)), activation(false), nn::MaxPool2d(2),
            nn::Conv2d(nn::Conv2dOptions(32, 64, 3).padding(1)), activation(false), nn::MaxPool2d(2),
            nn::Conv2d(nn::Conv2dOptions(64, 192, 3).padding(1)), activation(false)));
    }
    torch::Tensor forward(torch::Tensor x) override { return body_->forward(x); }
    std::int64_t out_channels() const override { return 192; }
    bool global_pool() const override { return false; }

private:
    nn::Sequential body_{nullptr};
};

// ---------------------------------------------------------------- MobileNetV3-Large

int make_divisible(double v, int divisor = 8) {
    int new_v = std::max(divisor, static_cast<int>(v + divisor / 2.0) / divisor * divisor);
    if (new_v < 0.9 * v) new_v += divisor;
    return new_v;
}

// conv -> BN -> optional activation; children named 0 and 1 like the reference blocks.
class ConvNormAct final : public nn::Module {
public:
    ConvNormAct(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride, std::int64_t groups,
                int act /* 0 none, 1 relu, 2 hardswish */)
        : act_(act) {
        conv_ = register_module("0", nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding((k - 1) / 2)
                                                     .groups(groups).bias(false)));
        bn_ = register_module("1", nn::BatchNorm2d(nn::BatchNorm2dOptions(out).eps(0.001).momentum(0.01)));
    }
    torch::Tensor forward(torch::Tensor x) {
        x = bn_->forward(conv_->forward(x));
        if (act_ == 1) return torch::relu(x);
        if (act_ == 2) return torch::hardswish(x);
        return x;
    }

private:
    int act_;
    nn::Conv2d conv_{nullptr};
    nn::BatchNorm2d bn_{nullptr};
};

class SqueezeExcitation final : public nn::Module {
public:
    SqueezeExcitation(std::int64_t channels, std::int64_t squeeze) {
        fc1_ = register_module("fc1", nn::Conv2d(nn::Conv2dOptions(channels, squeeze, 1)));
        fc2_ = register_module("fc2", nn::Conv2d(nn::Conv2dOptions(squeeze, channels, 1)));
    }
    torch::Tensor forward(torch::Tensor x) {
        auto s = torch::adaptive_avg_pool2d(x, {1, 1});
        s = torch::relu(fc1_->forward(s));
        s = torch::hardsigmoid(fc2_->forward(s));
        return x * s;
    }

private:
    nn::Conv2d fc1_{nullptr}, fc2_{nullptr};
};

struct BneckConfig {
    int in, kernel, expanded, out;
    bool se, hardswish;
    int stride;
};

class InvertedResidual final : public nn::Module {
public:
    explicit InvertedResidual(const BneckConfig& c) : residual_(c.stride == 1 && c.in == c.out) {
        const int act = c.hardswish ? 2 : 1;
        nn::Sequential block;
        if (c.expanded != c.in) block->push_back(std::make_shared<ConvNormAct>(c.in, c.expanded, 1, 1, 1, act));
        block->push_back(std::make_shared<ConvNormAct>(c.expanded, c.expanded, c.kernel, c.stride, c.expanded, act));
        if (c.se) block->push_back(std::make_shared<SqueezeExcitation>(c.expanded, make_divisible(c.expanded / 4)));
        block->push_back(std::make_shared<ConvNormAct>(c.expanded, c.out, 1, 1, 1, 0));
        block_ = register_module("block", block);
    }
    torch::Tensor forward(torch::Tensor x) {
        auto y = block_->forward(x);
        return residual_ ? y + x : y;
    }

private:
    bool residual_;
    nn::Sequential block_{nullptr};
};

class MobileNetV3Large final : public Backbone {
public:
    MobileNetV3Large() {
        static const std::array<BneckConfig, 15> table{{
            {16, 3, 16, 16, false, false, 1},   {16, 3, 64, 24, false, false, 2},
            {24, 3, 72, 24, false, false, 1},   {24, 5, 72, 40, true, false, 2},
            {40, 5, 120, 40, true, false, 1},   {40, 5, 120, 40, true, false, 1},
            {40, 3, 240, 80, false, true, 2},   {80, 3, 200, 80, false, true, 1},
            {80, 3, 184, 80, false, true, 1},   {80, 3, 184, 80, false, true, 1},
            {80, 3, 480, 112, true, true, 1},   {112, 3, 672, 112, true, true, 1},
            {112, 5, 672, 160, true, true, 2},  {160, 5, 960, 160, true, true, 1},
            {160, 5, 960, 160, true, true, 1},
        }};
        nn::Sequential features;
        features->push_back(std::make_shared<ConvNormAct>(3, 16, 3, 2, 1, 2));
        for (const auto& c : table) features->push_back(std::make_shared<InvertedResidual>(c));
        features->push_back(std::make_shared<ConvNormAct>(160, 960, 1, 1, 1, 2));
        features_ = register_module("features", features);
    }
    torch::Tensor forward(torch::Tensor x) override { return features_->forward(x); }
    std::int64_t out_channels() const override { return 960; }
    bool global_pool() const override { return true; }

private:
    nn::Sequential features_{nullptr};
};

// ---------------------------------------------------------------- ResNet-50

class Bottleneck final : public nn::Module {
public:
    Bottleneck(std::int64_t in, std::int64_t planes, std::int64_t stride) {
        const std::int64_t out = planes * 4;
        conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, planes, 1).bias(false)));
        bn1_ = register_module("bn1", nn::BatchNorm2d(planes));
        conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(planes, planes, 3).stride(stride).padding(1).bias(false)));
        bn2_ = register_module("bn2", nn::BatchNorm2d(planes));
        conv3_ = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(planes, out, 1).bias(false)));
        bn3_ = register_module("bn3", nn::BatchNorm2d(out));
        if (stride != 1 || in != out) {
            downsample_ = register_module("downsample", nn::Sequential(
                nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)), nn::BatchNorm2d(out)));
        }
    }
    torch::Tensor forward(torch::Tensor x) {
        auto y = torch::relu(bn1_->forward(conv1_->forward(x)));
        y = torch::relu(bn2_->forward(conv2_->forward(y)));
        y = bn3_->forward(conv3_->forward(y));
        const auto identity = downsample_ ? downsample_->forward(x) : x;
        return torch::relu(y + identity);
    }

private:
    nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
    nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, bn3_{nullptr};
    nn::Sequential downsample_{nullptr};
};

class ResNet50 final : public Backbone {
public:
    ResNet50() {
        conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
        bn1_ = register_module("bn1", nn::BatchNorm2d(64));
        std::int64_t in = 64;
        const std::array<std::pair<std::int64_t, int>, 4> stages{{{64, 3}, {128, 4}, {256, 6}, {512, 3}}};
        for (std::size_t s = 0; s < stages.size(); ++s) {
            const auto [planes, blocks] = stages[s];
            nn::Sequential layer;
            for (int b = 0; b < blocks; ++b) {
                layer->push_back(std::make_shared<Bottleneck>(in, planes, (b == 0 && s > 0) ? 2 : 1));
                in = planes * 4;
            }
            layers_.push_back(register_module("layer" + std::to_string(s + 1), layer));
        }
    }
    torch::Tensor forward(torch::Tensor x) override {
        x = torch::relu(bn1_->forward(conv1_->forward(x)));
        x = torch::max_pool2d(x, 3, 2, 1);
        for (auto& layer : layers_) x = layer->forward(x);
        return x;
    }
    std::int64_t out_channels() const override { return 2048; }
    bool global_pool() const override { return true; }

private:
    nn::Conv2d conv1_{nullptr};
    nn::BatchNorm2d bn1_{nullptr};
    std::vector<nn::Sequential> layers_;
};

}  // namespace

std::shared_ptr<Backbone> make_conv3() { return std::make_shared<Conv3>(); }
std::shared_ptr<Backbone> make_mobilenetv3_large() { return std::make_shared<MobileNetV3Large>(); }
std::shared_ptr<Backbone> make_resnet50() { return std::make_shared<ResNet50>(); }

std::shared_ptr<Backbone> make_backbone(BackboneFamily family) {
    switch (family) {
        case BackboneFamily::conv3: return make_conv3();
        case BackboneFamily::mobilenetv3_large: return make_mobilenetv3_large();
        case BackboneFamily::resnet50: return make_resnet50();
    }
    throw ModelError("unknown backbone family");
}

std::string reference_key(const std::string& name) {
    const std::string prefix = "features.";
    return name.rfind(prefix, 0) == 0 ? name.substr(prefix.size()) : name;
}

std::int64_t feature_width(Backbone& backbone, int input_size) {
    if (backbone.global_pool()) return backbone.out_channels();
    // conv3 halves the side twice.
    const std::int64_t side = input_size / 4;
    return side * side * backbone.out_channels();
}

ClassifierNet::ClassifierNet(const BackboneSpec& spec) : frozen(spec.frozen_features) {
    features = register_module("features", make_backbone(spec.family));
    head = register_module("head", nn::Sequential());
    std::int64_t width = feature_width(*features, spec.input_size);
    for (int h : spec.head) {
        head->push_back(nn::Linear(width, h));
        head->push_back(activation(false));
        width = h;
    }
    output = register_module("output", nn::Linear(width, spec.num_outputs));
    if (frozen) {
        for (auto& p : features->parameters()) p.set_requires_grad(false);
    }
}

torch::Tensor ClassifierNet::embed(torch::Tensor x) {
    x = features->forward(x);
    x = features->global_pool() ? torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1) : x.flatten(1);
    if (!head->is_empty()) x = head->forward(x);
    return x;
}

torch::Tensor ClassifierNet::forward(torch::Tensor x) { return output->forward(embed(x)); }

void ClassifierNet::set_training(bool on) {
    train(on);
    if (frozen) features->eval();
}

}  // namespace parkocc::nets
