#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "prunetree/error.hpp"
#include "prunetree/similarity.hpp"

using namespace prunetree;

namespace {

GramMatrix as_gram(const Eigen::MatrixXd& m) {
    GramMatrix g;
    g.data = m;
    return g;
}

RepMatrix rep_of(const Eigen::MatrixXd& m) { return RepMatrix{m}; }

}  // namespace

TEST_CASE("hsic closed-form examples") {
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
    CHECK(hsic(as_gram(id), as_gram(id)) == doctest::Approx(1.0).epsilon(1e-12));

    std::mt19937_64 rng(1);
    const Eigen::MatrixXd k = oracle::random_psd(6, 3, rng);
    CHECK(std::abs(hsic(as_gram(k), as_gram(Eigen::MatrixXd::Ones(6, 6)))) < 1e-12);

    CHECK_THROWS_AS(hsic(as_gram(k), as_gram(Eigen::MatrixXd::Ones(5, 5))), ValidationError);
}

TEST_CASE("hsic equals the literal trace formula") {
    std::mt19937_64 rng(2024);
    for (int c = 0; c < 100; ++c) {
        const int m = 2 + c % 7;
        const Eigen::MatrixXd k = oracle::random_psd(m, 1 + c % 4, rng);
        const Eigen::MatrixXd l = oracle::random_psd(m, 1 + (c / 3) % 5, rng);
        CHECK(std::abs(hsic(as_gram(k), as_gram(l)) - oracle::brute_hsic(k, l)) < 1e-9);
    }
}

TEST_CASE("linear gram of a padded identity") {
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(4, 2);
    r(0, 0) = 1.0;
    r(1, 1) = 1.0;
    const GramMatrix g = gram(SimilarityMetric::linear(), rep_of(r));
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(4, 4);
    expected(0, 0) = expected(1, 1) = 1.0;
    CHECK(g.data == expected);
}

TEST_CASE("rbf gram: unit diagonal, symmetric, PSD, median fallback") {
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd r = oracle::random_matrix(8, 3, rng);
    const GramMatrix g = gram(SimilarityMetric::rbf(), rep_of(r));
    CHECK_FALSE(g.median_fallback);
    CHECK(g.sigma > 0.0);
    for (int i = 0; i < 8; ++i) CHECK(g.data(i, i) == 1.0);
    CHECK((g.data - g.data.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.data);
    CHECK(eig.eigenvalues().minCoeff() > -1e-6);

    const GramMatrix ones = gram(SimilarityMetric::rbf(), rep_of(Eigen::MatrixXd::Constant(5, 3, 0.7)));
    CHECK(ones.median_fallback);
    CHECK(ones.sigma == 1.0);
    CHECK(ones.data == Eigen::MatrixXd::Ones(5, 5));

    const GramMatrix fixed = gram(SimilarityMetric::rbf(2.0), rep_of(r));
    CHECK(fixed.sigma == 2.0);
    CHECK_THROWS_AS(gram(SimilarityMetric::rbf(-1.0), rep_of(r)), ValidationError);
}

TEST_CASE("median pairwise distance ignores zero distances") {
    Eigen::MatrixXd r(4, 1);
    r << 0.0, 0.0, 3.0, 7.0;
    // non-zero distances: 3, 7, 3, 7, 4 -> median 4
    bool fb = true;
    CHECK(median_pairwise_distance(r, &fb) == 4.0);
    CHECK_FALSE(fb);
}

TEST_CASE("gram rejects non-finite representations") {
    Eigen::MatrixXd r = Eigen::MatrixXd::Ones(4, 2);
    r(2, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(gram(SimilarityMetric::linear(), rep_of(r)), ValidationError);
    CHECK_THROWS_AS(validate(rep_of(r)), ValidationError);
    CHECK_THROWS_AS(validate(rep_of(Eigen::MatrixXd::Ones(3, 2))), ValidationError);
}

TEST_CASE("cka matches the brute-force oracle") {
    std::mt19937_64 rng(6);
    for (int c = 0; c < 100; ++c) {
        const int m = 4 + c % 5, dx = 1 + c % 6, dy = 1 + (c / 6) % 6;
        const Eigen::MatrixXd x = oracle::random_matrix(m, dx, rng), y = oracle::random_matrix(m, dy, rng);
        CHECK(std::abs(cka(rep_of(x), rep_of(y), SimilarityMetric::linear()) - oracle::brute_linear_cka(x, y)) < 1e-9);
    }
    const Eigen::MatrixXd a = oracle::random_matrix(6, 3, rng), b = oracle::random_matrix(6, 5, rng);
    CHECK(std::abs(cka(rep_of(a), rep_of(b), SimilarityMetric::linear()) - oracle::brute_linear_cka(a, b)) < 1e-9);
}

TEST_CASE("cka invariants") {
    std::mt19937_64 rng(7);
    const auto lin = SimilarityMetric::linear();
    for (int c = 0; c < 200; ++c) {
        const int m = 4 + c % 12, d = 1 + c % 7;
        const Eigen::MatrixXd r = oracle::random_matrix(m, d, rng);
        const Eigen::MatrixXd s = oracle::random_matrix(m, 1 + (c * 5) % 9, rng);
        CHECK(std::abs(cka(rep_of(r), rep_of(r), lin) - 1.0) < 1e-9);
        CHECK(std::abs(cka(rep_of(r), rep_of(r * oracle::random_orthogonal(d, rng)), lin) - 1.0) < 1e-6);
        CHECK(std::abs(cka(rep_of(r), rep_of(3.0 * s), lin) - cka(rep_of(r), rep_of(s), lin)) < 1e-9);
        CHECK(std::abs(cka(rep_of(r), rep_of(s), lin) - cka(rep_of(s), rep_of(r), lin)) < 1e-9);

        std::vector<int> cols(d);
        std::iota(cols.begin(), cols.end(), 0);
        std::shuffle(cols.begin(), cols.end(), rng);
        CHECK(std::abs(cka(rep_of(r(Eigen::all, cols)), rep_of(s), lin) - cka(rep_of(r), rep_of(s), lin)) < 1e-9);

        std::vector<int> rows(m);
        std::iota(rows.begin(), rows.end(), 0);
        std::shuffle(rows.begin(), rows.end(), rng);
        const auto rbf = SimilarityMetric::rbf();
        CHECK(std::abs(cka(rep_of(r(rows, Eigen::all)), rep_of(s(rows, Eigen::all)), lin) -
                       cka(rep_of(r), rep_of(s), lin)) < 1e-9);
        CHECK(std::abs(cka(rep_of(r(rows, Eigen::all)), rep_of(s(rows, Eigen::all)), rbf) -
                       cka(rep_of(r), rep_of(s), rbf)) < 1e-9);

        const double v = cka(rep_of(r), rep_of(s), rbf);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("cka errors") {
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd r = oracle::random_matrix(6, 3, rng);
    CHECK_THROWS_AS(cka(rep_of(r), rep_of(Eigen::MatrixXd::Constant(6, 3, 2.0)), SimilarityMetric::linear()),
                    DegenerateRepresentationError);
    CHECK_THROWS_AS(cka(rep_of(r), rep_of(oracle::random_matrix(5, 3, rng)), SimilarityMetric::linear()),
                    ValidationError);
}

TEST_CASE("metric text round-trips") {
    for (const char* t : {"linear", "rbf", "rbf:0.5"}) CHECK(to_string(parse_metric(t)) == t);
    CHECK_THROWS_AS(parse_metric("cosine"), ValidationError);
    CHECK_THROWS_AS(parse_metric("rbf:-2"), ValidationError);
}

TEST_CASE("representation CSV round-trips exactly") {
    std::mt19937_64 rng(9);
    const RepMatrix r = rep_of(oracle::random_matrix(5, 4, rng));
    std::stringstream ss;
    write_rep_csv(r, ss);
    CHECK(read_rep_csv(ss).data == r.data);

    std::stringstream ragged("1,2\n3\n");
    CHECK_THROWS_AS(read_rep_csv(ragged), ValidationError);
}
