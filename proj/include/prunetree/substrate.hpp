#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "prunetree/dataset.hpp"
#include "prunetree/layers.hpp"
#include "prunetree/model.hpp"
#include "prunetree/similarity.hpp"

namespace prunetree {

/// View over N images in N x C x H x W order.
struct ImageBatch {
    std::span<const float> data;
    int n = 0;
    int channels = 0;
    int height = 0;
    int width = 0;

    static ImageBatch of(const Dataset& d) { return {d.images, int(d.size()), d.channels, d.height, d.width}; }
};

struct ForwardOutput {
    RowMatrix<float> logits;  // N x classes
    RowMatrix<float> rep;     // N x d, pooled features of the last stage
};

ForwardOutput forward(const ModelState& model, const ImageBatch& batch);

struct LrStep {
    int epoch = 0;
    double multiplier = 1.0;
};

struct TrainConfig {
    int epochs = 0;
    int batch_size = 64;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::vector<LrStep> lr_schedule;  // multiplier applies from `epoch` (0-based, per call) on
};

/// Throws ValidationError on a bad config or batch_size > dataset_size.
void validate(const TrainConfig& cfg, std::size_t dataset_size);

/// Learning rate in effect at epoch `epoch` of a training call.
double learning_rate_at(const TrainConfig& cfg, int epoch);

/// Mini-batch SGD with momentum on softmax cross-entropy. Each epoch's order is
/// a shuffle seeded from (model.rng_seed, model.epoch_counter). Throws
/// TrainingDivergedError when a batch loss is non-finite.
ModelState train(ModelState model, const Dataset& data, const TrainConfig& cfg);

/// Fraction of examples whose argmax logit (lowest index on ties) equals the label.
double evaluate(const ModelState& model, const Dataset& data);

/// Mean cross-entropy over the dataset.
double mean_loss(const ModelState& model, const Dataset& data);

/// Pooled pre-logit features of every probe image (m >= 4).
RepMatrix extract_representation(const ModelState& model, const Dataset& probe);

/// Row-wise softmax in double precision.
Eigen::MatrixXd softmax_rows(const RowMatrix<float>& logits);

/// Probe activations recorded at every block input, so a forward pass of a
/// locally modified network can resume at the first affected block.
struct ActivationCache {
    std::vector<std::vector<Activation<float>>> block_inputs;  // [stage][block]
    std::vector<Activation<float>> stage_inputs;               // [stage]; last entry enters the pool
    RowMatrix<float> logits;

    const Activation<float>& input_at(std::size_t stage, std::size_t block) const;
};

ActivationCache forward_cached(const ModelState& model, const Dataset& probe);

/// Logits of (spec, params) given the activation entering position (stage, block).
RowMatrix<float> forward_resume(const NetworkSpec& spec, const Parameters& params, std::size_t stage,
                                std::size_t block, const Activation<float>& input);

}  // namespace prunetree
