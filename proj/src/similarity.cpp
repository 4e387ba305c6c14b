#include "prunetree/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "prunetree/error.hpp"

namespace prunetree {

void validate(const RepMatrix& rep) {
    if (rep.m() < 4)
        throw ValidationError("representation needs at least 4 probe rows, got " + std::to_string(rep.m()));
    if (rep.d() < 1) throw ValidationError("representation has no features");
    if (!rep.data.allFinite()) throw ValidationError("representation contains non-finite entries");
}

SimilarityMetric parse_metric(const std::string& text) {
    if (text == "linear") return SimilarityMetric::linear();
    if (text == "rbf" || text == "rbf:median") return SimilarityMetric::rbf();
    if (text.rfind("rbf:", 0) == 0) {
        double sigma = 0.0;
        try {
            sigma = std::stod(text.substr(4));
        } catch (const std::exception&) {
            throw ValidationError("bad rbf bandwidth in metric '" + text + "'");
        }
        if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("rbf bandwidth must be positive");
        return SimilarityMetric::rbf(sigma);
    }
    throw ValidationError("unknown similarity metric '" + text + "' (expected linear, rbf, rbf:<sigma>)");
}

std::string to_string(const SimilarityMetric& metric) {
    if (metric.kind == KernelKind::Linear) return "linear";
    if (!metric.sigma) return "rbf";
    std::ostringstream os;
    os << "rbf:" << *metric.sigma;
    return os.str();
}

double median_pairwise_distance(const Eigen::MatrixXd& rows, bool* fallback) {
    std::vector<double> dist;
    const Eigen::Index m = rows.rows();
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j) {
            const double dd = (rows.row(i) - rows.row(j)).norm();
            if (dd > 0.0) dist.push_back(dd);
        }
    if (fallback) *fallback = dist.empty();
    if (dist.empty()) return 1.0;
    const std::size_t mid = dist.size() / 2;
    std::nth_element(dist.begin(), dist.begin() + mid, dist.end());
    const double hi = dist[mid];
    if (dist.size() % 2 == 1) return hi;
    const double lo = *std::max_element(dist.begin(), dist.begin() + mid);
    return 0.5 * (lo + hi);
}

GramMatrix gram(const SimilarityMetric& metric, const RepMatrix& rep) {
    if (!rep.data.allFinite()) throw ValidationError("representation contains non-finite entries");
    GramMatrix g;
    g.kind = metric.kind;
    if (metric.kind == KernelKind::Linear) {
        g.data = rep.data * rep.data.transpose();
        return g;
    }
    if (metric.sigma) {
        if (!(*metric.sigma > 0.0)) throw ValidationError("rbf bandwidth must be positive");
        g.sigma = *metric.sigma;
    } else {
        g.sigma = median_pairwise_distance(rep.data, &g.median_fallback);
    }
    const Eigen::Index m = rep.m();
    const double inv = 1.0 / (2.0 * g.sigma * g.sigma);
    g.data.resize(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        g.data(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < m; ++j) {
            const double v = std::exp(-(rep.data.row(i) - rep.data.row(j)).squaredNorm() * inv);
            g.data(i, j) = v;
            g.data(j, i) = v;
        }
    }
    return g;
}

namespace {

// H K H via row, column and grand means.
Eigen::MatrixXd center(const Eigen::MatrixXd& k) {
    const Eigen::VectorXd row_mean = k.rowwise().mean();
    const Eigen::RowVectorXd col_mean = k.colwise().mean();
    const double grand = k.mean();
    Eigen::MatrixXd c = k;
    c.colwise() -= row_mean;
    c.rowwise() -= col_mean;
    c.array() += grand;
    return c;
}

// tr(A B) = sum_ij A_ij B_ji
double trace_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a.array() * b.transpose().array()).sum();
}

}  // namespace

double hsic(const GramMatrix& k, const GramMatrix& l) {
    const Eigen::Index m = k.data.rows();
    if (k.data.cols() != m || l.data.rows() != m || l.data.cols() != m)
        throw ValidationError("hsic: Gram matrices must be square with the same m");
    if (m < 2) throw ValidationError("hsic: needs m >= 2");
    const double denom = double(m - 1) * double(m - 1);
    return trace_product(center(k.data), l.data) / denom;
}

double cka(const RepMatrix& parent, const RepMatrix& child, const SimilarityMetric& metric) {
    if (parent.m() != child.m())
        throw ValidationError("cka: representations cover different probe counts (" + std::to_string(parent.m()) +
                              " vs " + std::to_string(child.m()) + ")");
    validate(parent);
    validate(child);
    const GramMatrix k = gram(metric, parent);
    const GramMatrix l = gram(metric, child);
    const Eigen::Index m = k.data.rows();
    const double denom = double(m - 1) * double(m - 1);
    const Eigen::MatrixXd kc = center(k.data);
    const Eigen::MatrixXd lc = center(l.data);
    const double kl = trace_product(kc, l.data) / denom;
    const double kk = trace_product(kc, k.data) / denom;
    const double ll = trace_product(lc, l.data) / denom;
    if (kk < 1e-12 || ll < 1e-12)
        throw DegenerateRepresentationError("cka: degenerate representation (self-HSIC " +
                                            std::to_string(std::min(kk, ll)) + ")");
    const double v = kl / std::sqrt(kk * ll);
    return std::clamp(v, 0.0, 1.0);
}

void write_rep_csv(const RepMatrix& rep, std::ostream& os) {
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < rep.m(); ++i) {
        for (Eigen::Index j = 0; j < rep.d(); ++j) {
            if (j) os << ',';
            os << rep.data(i, j);
        }
        os << '\n';
    }
}

void write_rep_csv(const RepMatrix& rep, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError(path.string() + ": cannot open for writing");
    write_rep_csv(rep, os);
}

RepMatrix read_rep_csv(std::istream& is) {
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                throw ValidationError("representation CSV: bad number '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ValidationError("representation CSV: ragged rows");
        rows.push_back(std::move(row));
    }
    RepMatrix rep;
    if (rows.empty()) return rep;
    rep.data.resize(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) rep.data(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
    return rep;
}

RepMatrix read_rep_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError(path.string() + ": cannot open for reading");
    return read_rep_csv(is);
}

}  // namespace prunetree
