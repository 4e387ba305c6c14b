#include "prunetree/substrate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prunetree/error.hpp"
#include "prunetree/executor.hpp"
#include "prunetree/rng.hpp"

namespace prunetree {

namespace {

constexpr int kInferenceChunk = 256;

Activation<float> to_activation(const ImageBatch& b) {
    return from_nchw<float, float>(b.data, b.n, b.channels, b.height, b.width);
}

void check_batch(const NetworkSpec& spec, const ImageBatch& b) {
    if (b.channels != spec.input.channels || b.height != spec.input.height || b.width != spec.input.width)
        throw StructuralError("batch shape " + std::to_string(b.channels) + "x" + std::to_string(b.height) + "x" +
                              std::to_string(b.width) + " does not match network input " +
                              std::to_string(spec.input.channels) + "x" + std::to_string(spec.input.height) + "x" +
                              std::to_string(spec.input.width));
    if (b.data.size() != std::size_t(b.n) * b.channels * b.height * b.width)
        throw StructuralError("batch buffer size does not match its declared shape");
}

ImageBatch slice(const Dataset& d, std::size_t begin, std::size_t count) {
    return {std::span<const float>(d.images.data() + begin * d.image_size(), count * d.image_size()), int(count),
            d.channels, d.height, d.width};
}

template <class T>
std::vector<std::vector<T>*> tensors(BasicParameters<T>& p) {
    std::vector<std::vector<T>*> out;
    for_each_tensor(p, [&](std::vector<T>& v) { out.push_back(&v); });
    return out;
}

}  // namespace

ForwardOutput forward(const ModelState& model, const ImageBatch& batch) {
    check_batch(model.spec, batch);
    Activation<float> a = exec::run_stem(model.spec, model.params, to_activation(batch), nullptr);
    a = exec::run_from(model.spec, model.params, 0, 0, std::move(a), nullptr);
    ForwardOutput out;
    exec::run_head(model.spec, model.params, a, out.rep, out.logits);
    return out;
}

void validate(const TrainConfig& cfg, std::size_t dataset_size) {
    if (cfg.epochs < 0) throw ValidationError("train: epochs must be non-negative");
    if (cfg.batch_size <= 0) throw ValidationError("train: batch_size must be positive");
    if (std::size_t(cfg.batch_size) > dataset_size)
        throw ValidationError("train: batch_size " + std::to_string(cfg.batch_size) + " exceeds dataset size " +
                              std::to_string(dataset_size));
    if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
        throw ValidationError("train: learning_rate must be a finite non-negative number");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ValidationError("train: momentum must lie in [0, 1)");
    if (!(cfg.weight_decay >= 0.0)) throw ValidationError("train: weight_decay must be non-negative");
    for (std::size_t i = 1; i < cfg.lr_schedule.size(); ++i)
        if (cfg.lr_schedule[i].epoch <= cfg.lr_schedule[i - 1].epoch)
            throw ValidationError("train: lr_schedule epochs must be strictly increasing");
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
    double mult = 1.0;
    for (const auto& step : cfg.lr_schedule)
        if (epoch >= step.epoch) mult = step.multiplier;
    return cfg.learning_rate * mult;
}

ModelState train(ModelState model, const Dataset& data, const TrainConfig& cfg) {
    validate(data);
    validate(cfg, data.size());
    if (data.shape() != model.spec.input) throw StructuralError("train: dataset shape does not match network input");
    if (cfg.epochs == 0) return model;

    BasicParameters<float> velocity = zero_parameters<float>(model.spec);
    BasicParameters<float> grad;
    auto params = tensors(model.params);
    auto vel = tensors(velocity);

    const std::size_t n = data.size();
    const std::size_t isz = data.image_size();
    std::vector<std::size_t> order(n);
    std::vector<float> buf;
    std::vector<int> labels;

    for (int e = 0; e < cfg.epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(model.rng_seed, {stream::kShuffle, model.epoch_counter}));
        std::shuffle(order.begin(), order.end(), rng);
        const float lr = static_cast<float>(learning_rate_at(cfg, e));
        const float mu = static_cast<float>(cfg.momentum);
        const float wd = static_cast<float>(cfg.weight_decay);

        for (std::size_t start = 0; start < n; start += std::size_t(cfg.batch_size)) {
            const std::size_t count = std::min<std::size_t>(cfg.batch_size, n - start);
            buf.resize(count * isz);
            labels.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                auto img = data.image(order[start + i]);
                std::copy(img.begin(), img.end(), buf.begin() + std::ptrdiff_t(i * isz));
                labels[i] = data.labels[order[start + i]];
            }
            Activation<float> x = from_nchw<float, float>(buf, int(count), data.channels, data.height, data.width);
            const double loss = exec::loss_and_gradient(model.spec, model.params, x, labels, grad);
            if (!std::isfinite(loss))
                throw TrainingDivergedError(e, "training diverged: non-finite loss at epoch " + std::to_string(e));
            if (lr == 0.0f) continue;
            auto g = tensors(grad);
            for (std::size_t t = 0; t < params.size(); ++t) {
                std::vector<float>& w = *params[t];
                std::vector<float>& v = *vel[t];
                const std::vector<float>& gt = *g[t];
                for (std::size_t i = 0; i < w.size(); ++i) {
                    v[i] = mu * v[i] + gt[i] + wd * w[i];
                    w[i] -= lr * v[i];
                }
            }
        }
        ++model.epoch_counter;
    }
    return model;
}

double evaluate(const ModelState& model, const Dataset& data) {
    validate(data);
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.size(); start += kInferenceChunk) {
        const std::size_t count = std::min<std::size_t>(kInferenceChunk, data.size() - start);
        ForwardOutput out = forward(model, slice(data, start, count));
        for (std::size_t i = 0; i < count; ++i) {
            Eigen::Index best = 0;
            for (Eigen::Index k = 1; k < out.logits.cols(); ++k)
                if (out.logits(Eigen::Index(i), k) > out.logits(Eigen::Index(i), best)) best = k;
            if (best == data.labels[start + i]) ++correct;
        }
    }
    return double(correct) / double(data.size());
}

double mean_loss(const ModelState& model, const Dataset& data) {
    validate(data);
    double total = 0.0;
    for (std::size_t start = 0; start < data.size(); start += kInferenceChunk) {
        const std::size_t count = std::min<std::size_t>(kInferenceChunk, data.size() - start);
        ForwardOutput out = forward(model, slice(data, start, count));
        RowMatrix<float> dl;
        const double l = layers::softmax_cross_entropy(
            out.logits, std::span<const int>(data.labels.data() + start, count), dl);
        total += l * double(count);
    }
    return total / double(data.size());
}

RepMatrix extract_representation(const ModelState& model, const Dataset& probe) {
    if (probe.size() < 4)
        throw PreconditionError("extract_representation: probe needs at least 4 images, got " +
                                std::to_string(probe.size()));
    RepMatrix rep;
    rep.data.resize(Eigen::Index(probe.size()), model.spec.representation_dim());
    for (std::size_t start = 0; start < probe.size(); start += kInferenceChunk) {
        const std::size_t count = std::min<std::size_t>(kInferenceChunk, probe.size() - start);
        ForwardOutput out = forward(model, slice(probe, start, count));
        rep.data.middleRows(Eigen::Index(start), Eigen::Index(count)) = out.rep.cast<double>();
    }
    return rep;
}

Eigen::MatrixXd softmax_rows(const RowMatrix<float>& logits) {
    Eigen::MatrixXd p = logits.cast<double>();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

const Activation<float>& ActivationCache::input_at(std::size_t stage, std::size_t block) const {
    if (stage >= block_inputs.size()) return stage_inputs.back();
    if (block < block_inputs[stage].size()) return block_inputs[stage][block];
    return stage_inputs.at(stage + 1);
}

ActivationCache forward_cached(const ModelState& model, const Dataset& probe) {
    validate(probe);
    const ImageBatch batch = ImageBatch::of(probe);
    check_batch(model.spec, batch);
    ActivationCache cache;
    const auto& spec = model.spec;
    Activation<float> a = exec::run_stem(spec, model.params, to_activation(batch), nullptr);
    cache.block_inputs.resize(spec.stages.size());
    for (std::size_t s = 0; s < spec.stages.size(); ++s) {
        cache.stage_inputs.push_back(a);
        for (std::size_t b = 0; b < spec.stages[s].blocks.size(); ++b) {
            cache.block_inputs[s].push_back(a);
            a = exec::run_block(spec.stages[s].blocks[b], model.params.blocks[s][b], a, nullptr);
        }
    }
    cache.stage_inputs.push_back(a);
    RowMatrix<float> rep;
    exec::run_head(spec, model.params, a, rep, cache.logits);
    return cache;
}

RowMatrix<float> forward_resume(const NetworkSpec& spec, const Parameters& params, std::size_t stage,
                                std::size_t block, const Activation<float>& input) {
    Activation<float> a = exec::run_from(spec, params, stage, block, input, nullptr);
    RowMatrix<float> rep, logits;
    exec::run_head(spec, params, a, rep, logits);
    return logits;
}

}  // namespace prunetree
