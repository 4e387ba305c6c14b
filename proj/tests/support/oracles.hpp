#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library's numeric kernels: loops are written out directly.

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "prunetree/dataset.hpp"
#include "prunetree/model.hpp"
#include "prunetree/network.hpp"

namespace oracle {

using prunetree::ConvParams;
using prunetree::ConvSpec;
using prunetree::NetworkSpec;

/// tr(K H L H) / (m - 1)^2 with H = I - 11^T/m built explicitly and every
/// product written as plain loops.
double brute_hsic(const Eigen::MatrixXd& K, const Eigen::MatrixXd& L);

/// Linear-kernel CKA from brute_hsic.
double brute_linear_cka(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

/// A A^T with A m x r Gaussian.
Eigen::MatrixXd random_psd(int m, int r, std::mt19937_64& rng);
Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng);
/// Orthogonal d x d from a QR factorisation of a Gaussian matrix.
Eigen::MatrixXd random_orthogonal(int d, std::mt19937_64& rng);

/// N x C x H x W tensor in double.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_), v(std::size_t(n_) * c_ * h_ * w_, 0.0) {}
    double& at(int i, int ch, int y, int x) { return v[((std::size_t(i) * c + ch) * h + y) * w + x]; }
    double at(int i, int ch, int y, int x) const { return v[((std::size_t(i) * c + ch) * h + y) * w + x]; }
};

Tensor from_images(const std::vector<float>& images, int n, int c, int h, int w);

/// Straight-line conv + bias with zero padding.
Tensor conv(const ConvSpec& cs, const ConvParams<float>& p, const Tensor& in);
Tensor affine(const ConvParams<float>& p, const Tensor& in);
void relu(Tensor& t);

/// Whole-network forward pass: returns N x classes logits (row-major vector).
std::vector<double> forward_logits(const NetworkSpec& spec, const prunetree::Parameters& params, const Tensor& input);

/// Fills every tensor with N(0, std) values (scale and shift included).
void randomize(prunetree::Parameters& p, std::uint64_t seed, double std = 0.3);

/// Small net exercising every layer kind: stem, identity block, projection
/// block with stride 2, pooling and head.
NetworkSpec micro_spec(int channels = 2, int size = 5, int classes = 3);

/// Random images in [0, 1].
prunetree::Dataset random_dataset(const prunetree::InputShape& shape, int n, int classes, std::uint64_t seed);

}  // namespace oracle
