#pragma once

// Gaussian-kernel maximum mean discrepancy and the pairwise treatment-group
// balancing loss built on it. Sample sets are matrices with one sample per
// column.

#include <Eigen/Dense>
#include <vector>

namespace itebench::mmd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct KernelSpec {
    enum class Bandwidth { Fixed, MedianHeuristic };
    Bandwidth mode = Bandwidth::MedianHeuristic;
    double bandwidth = 1.0;  // used when mode == Fixed

    static KernelSpec fixed(double bandwidth);
    static KernelSpec median() { return {}; }
    void validate() const;
};

// exp(-|u - v|^2 / (2 bandwidth^2))
double rbf_kernel(const Vector& u, const Vector& v, double bandwidth);

// Median pairwise Euclidean distance over unordered pairs of columns;
// 1.0 when that median is zero. Throws InsufficientDataError for < 2 samples.
double median_heuristic(const Matrix& samples);

// Bandwidth the kernel resolves to over a sample pool (columns).
double resolve_bandwidth(const KernelSpec& kernel, const Matrix& pool);

// Biased (V-statistic) squared MMD, clamped at zero. A median-heuristic
// kernel takes its bandwidth from the union of A and B.
double mmd2_biased(const Matrix& a, const Matrix& b, const KernelSpec& kernel);

// Same estimator without the clamp; exposed for roundoff checks.
double mmd2_biased_raw(const Matrix& a, const Matrix& b, double bandwidth);

struct Mmd2Gradient {
    Matrix wrt_a;  // same shape as a
    Matrix wrt_b;
};

// Exact gradient of mmd2_biased; the bandwidth is held constant.
Mmd2Gradient mmd2_gradient(const Matrix& a, const Matrix& b, const KernelSpec& kernel);

// Joint embeddings of one mini-batch, column j belonging to group[j].
struct GroupedEmbeddings {
    Matrix embeddings;       // [dim x n]
    std::vector<int> group;  // 0-based group id per column, < num_groups
    int num_groups = 0;

    void validate() const;
};

struct RegularizationLoss {
    double value = 0.0;
    Matrix gradient;  // d(value)/d(embeddings), same shape as embeddings
    double bandwidth = 0.0;
    int groups_present = 0;
    int pairs = 0;
    // Fewer than two non-empty groups: value 0, zero gradient.
    bool degenerate = false;
};

// Mean of mmd2_biased over unordered pairs of non-empty groups. Pairs with an
// empty side are skipped and do not count towards the divisor.
RegularizationLoss treatment_regularization_loss(const GroupedEmbeddings& g, const KernelSpec& kernel);

}  // namespace itebench::mmd
