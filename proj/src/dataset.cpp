#include "prunetree/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "prunetree/error.hpp"
#include "prunetree/rng.hpp"

namespace prunetree {

void validate(const Dataset& data) {
    if (data.size() == 0) throw ValidationError("dataset is empty");
    if (data.channels <= 0 || data.height <= 0 || data.width <= 0)
        throw ValidationError("dataset image shape must be positive");
    if (data.images.size() != data.size() * data.image_size())
        throw ValidationError("dataset image buffer does not match D x C x H x W");
    for (int y : data.labels)
        if (y < 0 || y >= data.num_classes)
            throw ValidationError("label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(data.num_classes) + ")");
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
    Dataset out;
    out.channels = data.channels;
    out.height = data.height;
    out.width = data.width;
    out.num_classes = data.num_classes;
    out.images.reserve(indices.size() * data.image_size());
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= data.size()) throw ValidationError("subset index out of range");
        auto img = data.image(i);
        out.images.insert(out.images.end(), img.begin(), img.end());
        out.labels.push_back(data.labels[i]);
    }
    return out;
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t m, std::uint64_t seed) {
    if (m > population) throw ValidationError("cannot sample more indices than the population holds");
    std::vector<std::size_t> idx(population);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    // partial Fisher-Yates
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, population - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    return idx;
}

Dataset make_synthetic(const SyntheticConfig& cfg, int samples, std::uint64_t split) {
    if (cfg.classes <= 0 || samples <= 0 || cfg.image_size <= 0 || cfg.channels <= 0 || cfg.blobs_per_class <= 0)
        throw ValidationError("synthetic dataset parameters must be positive");

    struct Blob {
        double cy, cx, radius;
        std::vector<double> color;
    };
    const double size = cfg.image_size;
    Rng proto_rng(derive_seed(cfg.seed, {stream::kData, 0}));
    std::uniform_real_distribution<double> pos(0.2 * size, 0.8 * size);
    std::uniform_real_distribution<double> rad(0.1 * size, 0.22 * size);
    std::uniform_real_distribution<double> col(0.1, 1.0);
    std::vector<std::vector<Blob>> protos(cfg.classes);
    for (auto& blobs : protos)
        for (int b = 0; b < cfg.blobs_per_class; ++b) {
            Blob blob{pos(proto_rng), pos(proto_rng), rad(proto_rng), {}};
            for (int c = 0; c < cfg.channels; ++c) blob.color.push_back(col(proto_rng));
            blobs.push_back(std::move(blob));
        }

    Dataset d;
    d.channels = cfg.channels;
    d.height = cfg.image_size;
    d.width = cfg.image_size;
    d.num_classes = cfg.classes;
    d.images.assign(std::size_t(samples) * d.image_size(), 0.0f);
    d.labels.resize(samples);

    Rng rng(derive_seed(cfg.seed, {stream::kData, 1 + split}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> amp(0.7, 1.3);
    std::uniform_int_distribution<int> cls(0, cfg.classes - 1);
    const int hw = cfg.image_size * cfg.image_size;
    std::vector<double> canvas(std::size_t(cfg.channels) * hw);
    for (int i = 0; i < samples; ++i) {
        const int y = cls(rng);
        d.labels[i] = y;
        std::fill(canvas.begin(), canvas.end(), 0.0);
        for (const Blob& blob : protos[y]) {
            const double cy = blob.cy + cfg.jitter * normal(rng);
            const double cx = blob.cx + cfg.jitter * normal(rng);
            const double a = amp(rng);
            const double inv = 1.0 / (2.0 * blob.radius * blob.radius);
            for (int py = 0; py < cfg.image_size; ++py)
                for (int px = 0; px < cfg.image_size; ++px) {
                    const double g = a * std::exp(-((py - cy) * (py - cy) + (px - cx) * (px - cx)) * inv);
                    for (int c = 0; c < cfg.channels; ++c) canvas[std::size_t(c) * hw + py * cfg.image_size + px] += g * blob.color[c];
                }
        }
        float* dst = d.images.data() + std::size_t(i) * d.image_size();
        for (std::size_t k = 0; k < canvas.size(); ++k) {
            const double v = canvas[k] + cfg.noise * normal(rng);
            dst[k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return d;
}

namespace {

std::uint32_t read_be32(std::istream& is, const std::filesystem::path& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IngestionError(path.string() + ": truncated IDX header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

void write_be32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int num_classes) {
    std::ifstream fi(images, std::ios::binary);
    if (!fi) throw IngestionError(images.string() + ": cannot open IDX image file");
    std::ifstream fl(labels, std::ios::binary);
    if (!fl) throw IngestionError(labels.string() + ": cannot open IDX label file");

    const std::uint32_t mi = read_be32(fi, images);
    if (mi != kIdxImageMagic)
        throw IngestionError(images.string() + ": bad IDX image magic (expected 0x00000803)");
    const std::uint32_t n = read_be32(fi, images);
    const std::uint32_t rows = read_be32(fi, images);
    const std::uint32_t cols = read_be32(fi, images);
    const std::uint32_t ml = read_be32(fl, labels);
    if (ml != kIdxLabelMagic)
        throw IngestionError(labels.string() + ": bad IDX label magic (expected 0x00000801)");
    const std::uint32_t nl = read_be32(fl, labels);
    if (n != nl)
        throw IngestionError(labels.string() + ": label count " + std::to_string(nl) +
                             " differs from image count " + std::to_string(n));
    if (n == 0 || rows == 0 || cols == 0) throw IngestionError(images.string() + ": empty IDX image file");

    Dataset d;
    d.channels = 1;
    d.height = int(rows);
    d.width = int(cols);
    std::vector<unsigned char> buf(std::size_t(n) * rows * cols);
    if (!fi.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size())))
        throw IngestionError(images.string() + ": truncated IDX image payload");
    d.images.resize(buf.size());
    std::transform(buf.begin(), buf.end(), d.images.begin(), [](unsigned char v) { return float(v) / 255.0f; });
    std::vector<unsigned char> lb(n);
    if (!fl.read(reinterpret_cast<char*>(lb.data()), std::streamsize(lb.size())))
        throw IngestionError(labels.string() + ": truncated IDX label payload");
    d.labels.assign(lb.begin(), lb.end());
    const int max_label = *std::max_element(d.labels.begin(), d.labels.end());
    d.num_classes = num_classes > 0 ? num_classes : max_label + 1;
    if (max_label >= d.num_classes)
        throw IngestionError(labels.string() + ": label " + std::to_string(max_label) + " exceeds class count");
    return d;
}

void write_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels) {
    if (data.channels != 1) throw ValidationError("IDX export supports single-channel datasets only");
    std::ofstream fi(images, std::ios::binary);
    std::ofstream fl(labels, std::ios::binary);
    if (!fi || !fl) throw IoError("cannot open IDX output files for writing");
    write_be32(fi, kIdxImageMagic);
    write_be32(fi, std::uint32_t(data.size()));
    write_be32(fi, std::uint32_t(data.height));
    write_be32(fi, std::uint32_t(data.width));
    for (float v : data.images) {
        const auto b = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
        fi.put(static_cast<char>(b));
    }
    write_be32(fl, kIdxLabelMagic);
    write_be32(fl, std::uint32_t(data.size()));
    for (int y : data.labels) fl.put(static_cast<char>(static_cast<unsigned char>(y)));
}

}  // namespace prunetree
