#pragma once

// libtorch modules behind the Model handle. Private to the library: torch's
// headers must not leak into the public interface.

#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "parkocc/backbones.hpp"

namespace parkocc::nets {

/// Feature extractor producing an [N, C, h, w] map.
class Backbone : public torch::nn::Module {
public:
    virtual torch::Tensor forward(torch::Tensor x) = 0;
    /// Channels of the output map.
    virtual std::int64_t out_channels() const = 0;
    /// Whether a global average pool follows (otherwise the map is flattened).
    virtual bool global_pool() const = 0;
};

std::shared_ptr<Backbone> make_conv3();
std::shared_ptr<Backbone> make_mobilenetv3_large();
std::shared_ptr<Backbone> make_resnet50();
std::shared_ptr<Backbone> make_backbone(BackboneFamily family);

/// Reference state_dict key for one of our parameter or buffer names: the
/// backbone is registered as "features" around the reference module tree.
std::string reference_key(const std::string& name);

/// Backbone, optional global pool, hidden dense layers with ReLU, output layer.
class ClassifierNet : public torch::nn::Module {
public:
    ClassifierNet(const BackboneSpec& spec);

    torch::Tensor forward(torch::Tensor x);
    /// Input to the output layer.
    torch::Tensor embed(torch::Tensor x);

    /// Switches training mode while keeping frozen features in inference mode.
    void set_training(bool on);

    std::shared_ptr<Backbone> features;
    torch::nn::Sequential head{nullptr};
    torch::nn::Linear output{nullptr};
    bool frozen = false;
};

/// Flattened feature width for a given input side.
std::int64_t feature_width(Backbone& backbone, int input_size);

}  // namespace parkocc::nets
