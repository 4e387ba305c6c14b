#include "oracles.hpp"

#include <cmath>

namespace oracle {

namespace {

Eigen::MatrixXd matmul(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

Eigen::MatrixXd linear_gram(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd k(x.rows(), x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.rows(); ++j) {
            double s = 0.0;
            for (Eigen::Index f = 0; f < x.cols(); ++f) s += x(i, f) * x(j, f);
            k(i, j) = s;
        }
    return k;
}

}  // namespace

double brute_hsic(const Eigen::MatrixXd& K, const Eigen::MatrixXd& L) {
    const Eigen::Index m = K.rows();
    Eigen::MatrixXd H(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) H(i, j) = (i == j ? 1.0 : 0.0) - 1.0 / double(m);
    const Eigen::MatrixXd P = matmul(matmul(matmul(K, H), L), H);
    double tr = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) tr += P(i, i);
    return tr / double((m - 1) * (m - 1));
}

double brute_linear_cka(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    const Eigen::MatrixXd K = linear_gram(X), L = linear_gram(Y);
    return brute_hsic(K, L) / std::sqrt(brute_hsic(K, K) * brute_hsic(L, L));
}

Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd a(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) a(i, j) = n(rng);
    return a;
}

Eigen::MatrixXd random_psd(int m, int r, std::mt19937_64& rng) {
    const Eigen::MatrixXd a = random_matrix(m, r, rng);
    return matmul(a, a.transpose());
}

Eigen::MatrixXd random_orthogonal(int d, std::mt19937_64& rng) {
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(d, d, rng));
    return qr.householderQ();
}

Tensor from_images(const std::vector<float>& images, int n, int c, int h, int w) {
    Tensor t(n, c, h, w);
    for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] = images[i];
    return t;
}

Tensor conv(const ConvSpec& cs, const ConvParams<float>& p, const Tensor& in) {
    const int oh = (in.h + 2 * cs.padding - cs.kernel) / cs.stride + 1;
    const int ow = (in.w + 2 * cs.padding - cs.kernel) / cs.stride + 1;
    Tensor out(in.n, cs.out_channels, oh, ow);
    for (int i = 0; i < in.n; ++i)
        for (int o = 0; o < cs.out_channels; ++o)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    double s = p.bias[o];
                    for (int ci = 0; ci < cs.in_channels; ++ci)
                        for (int ky = 0; ky < cs.kernel; ++ky)
                            for (int kx = 0; kx < cs.kernel; ++kx) {
                                const int iy = y * cs.stride - cs.padding + ky;
                                const int ix = x * cs.stride - cs.padding + kx;
                                if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
                                const double wgt =
                                    p.weight[((std::size_t(o) * cs.in_channels + ci) * cs.kernel + ky) * cs.kernel + kx];
                                s += wgt * in.at(i, ci, iy, ix);
                            }
                    out.at(i, o, y, x) = s;
                }
    return out;
}

Tensor affine(const ConvParams<float>& p, const Tensor& in) {
    Tensor out = in;
    for (int i = 0; i < in.n; ++i)
        for (int ch = 0; ch < in.c; ++ch)
            for (int y = 0; y < in.h; ++y)
                for (int x = 0; x < in.w; ++x) out.at(i, ch, y, x) = in.at(i, ch, y, x) * p.scale[ch] + p.shift[ch];
    return out;
}

void relu(Tensor& t) {
    for (double& x : t.v) x = x > 0.0 ? x : 0.0;
}

std::vector<double> forward_logits(const NetworkSpec& spec, const prunetree::Parameters& params, const Tensor& input) {
    Tensor a = affine(params.stem, conv(spec.stem, params.stem, input));
    relu(a);
    for (std::size_t s = 0; s < spec.stages.size(); ++s)
        for (std::size_t b = 0; b < spec.stages[s].blocks.size(); ++b) {
            const auto& bs = spec.stages[s].blocks[b];
            const auto& bp = params.blocks[s][b];
            Tensor h = affine(bp.conv1, conv(bs.conv1, bp.conv1, a));
            relu(h);
            Tensor y = affine(bp.conv2, conv(bs.conv2, bp.conv2, h));
            const Tensor sc = bs.shortcut ? affine(*bp.shortcut, conv(*bs.shortcut, *bp.shortcut, a)) : a;
            for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += sc.v[i];
            relu(y);
            a = std::move(y);
        }
    const int classes = spec.head.num_classes;
    const int d = spec.head.in_features;
    std::vector<double> logits(std::size_t(a.n) * classes);
    for (int i = 0; i < a.n; ++i) {
        std::vector<double> rep(d, 0.0);
        for (int ch = 0; ch < d; ++ch) {
            for (int y = 0; y < a.h; ++y)
                for (int x = 0; x < a.w; ++x) rep[ch] += a.at(i, ch, y, x);
            rep[ch] /= double(a.h * a.w);
        }
        for (int k = 0; k < classes; ++k) {
            double z = params.head_bias[k];
            for (int f = 0; f < d; ++f) z += params.head_weight[std::size_t(k) * d + f] * rep[f];
            logits[std::size_t(i) * classes + k] = z;
        }
    }
    return logits;
}

void randomize(prunetree::Parameters& p, std::uint64_t seed, double std) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, std);
    prunetree::for_each_tensor(p, [&](std::vector<float>& v) {
        for (float& x : v) x = static_cast<float>(n(rng));
    });
}

NetworkSpec micro_spec(int channels, int size, int classes) {
    return prunetree::make_resnet_spec({channels, size, size}, {3, 4}, {2, 1}, classes);
}

prunetree::Dataset random_dataset(const prunetree::InputShape& shape, int n, int classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> lab(0, classes - 1);
    prunetree::Dataset d;
    d.channels = shape.channels;
    d.height = shape.height;
    d.width = shape.width;
    d.num_classes = classes;
    d.images.resize(std::size_t(n) * d.image_size());
    for (float& x : d.images) x = static_cast<float>(u(rng));
    for (int i = 0; i < n; ++i) d.labels.push_back(lab(rng));
    return d;
}

}  // namespace oracle
