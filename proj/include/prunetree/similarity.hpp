#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <Eigen/Core>

namespace prunetree {

/// m x d matrix of representations; row i belongs to probe example i.
struct RepMatrix {
    Eigen::MatrixXd data;

    Eigen::Index m() const { return data.rows(); }
    Eigen::Index d() const { return data.cols(); }
};

/// Throws ValidationError unless m >= 4 and every entry is finite.
void validate(const RepMatrix& rep);

enum class KernelKind { Linear, Rbf };

struct SimilarityMetric {
    KernelKind kind = KernelKind::Linear;
    std::optional<double> sigma;  // Rbf only; empty selects the median heuristic

    static SimilarityMetric linear() { return {}; }
    static SimilarityMetric rbf(std::optional<double> sigma = std::nullopt) { return {KernelKind::Rbf, sigma}; }
};

/// "linear", "rbf" (median heuristic), "rbf:<sigma>".
SimilarityMetric parse_metric(const std::string& text);
std::string to_string(const SimilarityMetric& metric);

struct GramMatrix {
    Eigen::MatrixXd data;
    KernelKind kind = KernelKind::Linear;
    double sigma = 0.0;               // bandwidth actually used (Rbf)
    bool median_fallback = false;     // median heuristic saw only zero distances
};

/// Linear: K = R R^T. Rbf: K_ij = exp(-|r_i - r_j|^2 / (2 sigma^2)).
GramMatrix gram(const SimilarityMetric& metric, const RepMatrix& rep);

/// Median of the non-zero pairwise Euclidean distances between rows; 1 when
/// every distance is zero.
double median_pairwise_distance(const Eigen::MatrixXd& rows, bool* fallback = nullptr);

/// Biased empirical HSIC, tr(K H L H) / (m - 1)^2 with H = I - 11^T / m.
/// H is applied as double centering rather than materialised.
double hsic(const GramMatrix& k, const GramMatrix& l);

/// Normalised HSIC between two representations of the same probe set, clamped
/// to [0, 1]. Throws DegenerateRepresentationError when either self-HSIC falls
/// below 1e-12 (e.g. all rows equal).
double cka(const RepMatrix& parent, const RepMatrix& child, const SimilarityMetric& metric);

// CSV with one row per probe example, no header, 17 significant digits.
void write_rep_csv(const RepMatrix& rep, std::ostream& os);
void write_rep_csv(const RepMatrix& rep, const std::filesystem::path& path);
RepMatrix read_rep_csv(std::istream& is);
RepMatrix read_rep_csv(const std::filesystem::path& path);

}  // namespace prunetree
