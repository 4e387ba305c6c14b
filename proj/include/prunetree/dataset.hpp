#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "prunetree/network.hpp"

namespace prunetree {

/// D images (D x C x H x W, values in [0,1]) with class labels.
struct Dataset {
    int channels = 0;
    int height = 0;
    int width = 0;
    int num_classes = 0;
    std::vector<float> images;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t image_size() const { return std::size_t(channels) * height * width; }
    InputShape shape() const { return {channels, height, width}; }
    std::span<const float> image(std::size_t i) const { return {images.data() + i * image_size(), image_size()}; }
};

/// Throws ValidationError on an empty set, label out of range or size mismatch.
void validate(const Dataset& data);

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

/// Samples `m` distinct indices uniformly (sorted) with the given seed.
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t m, std::uint64_t seed);

struct SyntheticConfig {
    std::uint64_t seed = 7;
    int classes = 4;
    int samples = 2048;
    int image_size = 16;
    int channels = 3;
    int blobs_per_class = 2;
    double jitter = 2.5;   // std of blob-centre displacement, in pixels
    double noise = 0.3;    // std of additive pixel noise
};

/// Gaussian class blobs rendered into image grids. Each class owns a fixed set
/// of coloured blobs (drawn from the seed); every sample re-renders its class's
/// blobs with jittered centres and amplitudes plus pixel noise. `split` picks an
/// independent sample stream over the same class prototypes (0 = train, 1 = test).
Dataset make_synthetic(const SyntheticConfig& cfg, int samples, std::uint64_t split);

// IDX binary files: big-endian header, unsigned-byte payload.
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Loads an image/label file pair; pixel bytes are scaled to [0,1] and the set
/// is single-channel. `num_classes` <= 0 infers max(label) + 1.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int num_classes = 0);

/// Writes a single-channel dataset as an IDX pair (pixels quantised to bytes).
void write_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels);

}  // namespace prunetree
