#pragma once

#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "nets.hpp"
#include "parkocc/backbones.hpp"

namespace parkocc::detail {

struct ModelImpl {
    BackboneSpec spec;
    ModelMetadata metadata;
    std::shared_ptr<nets::ClassifierNet> net;
};

/// [N, 3, side, side] float tensor: BGR -> RGB, scaled to [0, 1], normalized.
/// Every patch must already be side x side; DataError otherwise.
torch::Tensor to_input(std::span<const cv::Mat> patches, int side, const Normalization& norm);

/// Guards torch's global generator while seeded initialisers run.
std::mutex& torch_seed_mutex();

/// Fresh network for a spec, initialised from `seed`.
std::shared_ptr<nets::ClassifierNet> make_net(const BackboneSpec& spec, std::uint64_t seed);

/// Copies every parameter and buffer of `from` into `to` (same architecture).
void copy_state(const nets::ClassifierNet& from, nets::ClassifierNet& to);

/// Snapshot of parameters and buffers, used to remember the best epoch.
std::vector<torch::Tensor> snapshot_state(const nets::ClassifierNet& net);
void restore_state(nets::ClassifierNet& net, const std::vector<torch::Tensor>& state);

/// Parameters that the optimiser updates.
std::vector<torch::Tensor> trainable_parameters(const nets::ClassifierNet& net);

}  // namespace parkocc::detail
