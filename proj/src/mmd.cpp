#include "itebench/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "itebench/errors.hpp"

namespace itebench::mmd {

namespace {

void require_same_dim(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw ShapeError("sample dimensions differ: " + std::to_string(a.rows()) + " vs " +
                         std::to_string(b.rows()));
}

Matrix concat_columns(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

Matrix gram(const Matrix& x, double bandwidth) {
    const Index n = x.cols();
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    Matrix k(n, n);
    for (Index i = 0; i < n; ++i) {
        k(i, i) = 1.0;
        for (Index j = i + 1; j < n; ++j) {
            const double v = std::exp(-(x.col(i) - x.col(j)).squaredNorm() * inv);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

// Gradient of sum_{p,j} (coef(p,j) / 2) k(x_p, x_j) with respect to every x_p,
// for a symmetric coefficient matrix.
Matrix weighted_kernel_gradient(const Matrix& x, const Matrix& kernel, const Matrix& coef, double bandwidth) {
    const Matrix w = coef.cwiseProduct(kernel);
    const Vector row_sums = w.rowwise().sum();
    Matrix grad = x * w.transpose();
    grad -= x * row_sums.asDiagonal();
    return grad / (bandwidth * bandwidth);
}

}  // namespace

KernelSpec KernelSpec::fixed(double bandwidth) {
    KernelSpec k{Bandwidth::Fixed, bandwidth};
    k.validate();
    return k;
}

void KernelSpec::validate() const {
    if (mode == Bandwidth::Fixed && !(bandwidth > 0.0 && std::isfinite(bandwidth)))
        throw ConfigError("kernel bandwidth must be positive and finite");
}

double rbf_kernel(const Vector& u, const Vector& v, double bandwidth) {
    if (u.size() != v.size()) throw ShapeError("rbf_kernel: dimension mismatch");
    return std::exp(-(u - v).squaredNorm() / (2.0 * bandwidth * bandwidth));
}

double median_heuristic(const Matrix& samples) {
    const Index n = samples.cols();
    if (n < 2) throw InsufficientDataError("median heuristic needs at least two samples");
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) dist.push_back((samples.col(i) - samples.col(j)).norm());
    const std::size_t mid = dist.size() / 2;
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
    double median = dist[mid];
    if (dist.size() % 2 == 0) {
        const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (median + lower);
    }
    return median > 0.0 ? median : 1.0;
}

double resolve_bandwidth(const KernelSpec& kernel, const Matrix& pool) {
    kernel.validate();
    return kernel.mode == KernelSpec::Bandwidth::Fixed ? kernel.bandwidth : median_heuristic(pool);
}

double mmd2_biased_raw(const Matrix& a, const Matrix& b, double bandwidth) {
    require_same_dim(a, b);
    if (a.cols() < 1 || b.cols() < 1) throw InsufficientDataError("mmd2: empty sample group");
    auto block_sum = [bandwidth](const Matrix& x, const Matrix& y) {
        double s = 0.0;
        for (Index i = 0; i < x.cols(); ++i)
            for (Index j = 0; j < y.cols(); ++j) s += rbf_kernel(x.col(i), y.col(j), bandwidth);
        return s;
    };
    const double m = static_cast<double>(a.cols());
    const double n = static_cast<double>(b.cols());
    return block_sum(a, a) / (m * m) + block_sum(b, b) / (n * n) - 2.0 * block_sum(a, b) / (m * n);
}

double mmd2_biased(const Matrix& a, const Matrix& b, const KernelSpec& kernel) {
    require_same_dim(a, b);
    if (a.cols() < 1 || b.cols() < 1) throw InsufficientDataError("mmd2: empty sample group");
    const double bw = resolve_bandwidth(kernel, concat_columns(a, b));
    return std::max(0.0, mmd2_biased_raw(a, b, bw));
}

Mmd2Gradient mmd2_gradient(const Matrix& a, const Matrix& b, const KernelSpec& kernel) {
    require_same_dim(a, b);
    if (a.cols() < 1 || b.cols() < 1) throw InsufficientDataError("mmd2: empty sample group");
    const Matrix x = concat_columns(a, b);
    const double bw = resolve_bandwidth(kernel, x);
    const Index m = a.cols();
    const Index n = b.cols();
    const double md = static_cast<double>(m);
    const double nd = static_cast<double>(n);

    Matrix coef(m + n, m + n);
    coef.topLeftCorner(m, m).setConstant(2.0 / (md * md));
    coef.bottomRightCorner(n, n).setConstant(2.0 / (nd * nd));
    coef.topRightCorner(m, n).setConstant(-2.0 / (md * nd));
    coef.bottomLeftCorner(n, m).setConstant(-2.0 / (md * nd));

    const Matrix grad = weighted_kernel_gradient(x, gram(x, bw), coef, bw);
    return {grad.leftCols(m), grad.rightCols(n)};
}

void GroupedEmbeddings::validate() const {
    if (static_cast<Index>(group.size()) != embeddings.cols())
        throw ShapeError("grouped embeddings: group label count != sample count");
    for (int g : group)
        if (g < 0 || g >= num_groups) throw ShapeError("grouped embeddings: group id out of range");
}

RegularizationLoss treatment_regularization_loss(const GroupedEmbeddings& g, const KernelSpec& kernel) {
    g.validate();
    RegularizationLoss out;
    out.gradient = Matrix::Zero(g.embeddings.rows(), g.embeddings.cols());

    std::vector<Index> sizes(static_cast<std::size_t>(g.num_groups), 0);
    for (int label : g.group) ++sizes[static_cast<std::size_t>(label)];
    std::vector<int> present;
    for (int t = 0; t < g.num_groups; ++t)
        if (sizes[static_cast<std::size_t>(t)] > 0) present.push_back(t);
    out.groups_present = static_cast<int>(present.size());
    if (present.size() < 2) {
        out.degenerate = true;
        return out;
    }

    const Matrix& x = g.embeddings;
    const Index n = x.cols();
    out.bandwidth = resolve_bandwidth(kernel, x);
    const Matrix k = gram(x, out.bandwidth);

    // Per-group kernel block sums S[a][b] = sum_{i in a, j in b} k(x_i, x_j).
    const auto ng = static_cast<std::size_t>(g.num_groups);
    std::vector<double> block(ng * ng, 0.0);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            block[static_cast<std::size_t>(g.group[i]) * ng + static_cast<std::size_t>(g.group[j])] += k(i, j);

    const int pairs = out.groups_present * (out.groups_present - 1) / 2;
    out.pairs = pairs;
    double total = 0.0;
    for (std::size_t ia = 0; ia < present.size(); ++ia) {
        for (std::size_t ib = 0; ib < ia; ++ib) {
            const auto a = static_cast<std::size_t>(present[ia]);
            const auto b = static_cast<std::size_t>(present[ib]);
            const double m = static_cast<double>(sizes[a]);
            const double nn = static_cast<double>(sizes[b]);
            const double raw = block[a * ng + a] / (m * m) + block[b * ng + b] / (nn * nn) -
                               2.0 * block[a * ng + b] / (m * nn);
            total += std::max(0.0, raw);
        }
    }
    out.value = total / static_cast<double>(pairs);

    // A same-group entry appears in (present - 1) pairs, a cross-group entry in one.
    const double p = static_cast<double>(pairs);
    const double same_count = static_cast<double>(out.groups_present - 1);
    Matrix coef(n, n);
    for (Index i = 0; i < n; ++i) {
        const double mi = static_cast<double>(sizes[static_cast<std::size_t>(g.group[i])]);
        for (Index j = 0; j < n; ++j) {
            const double mj = static_cast<double>(sizes[static_cast<std::size_t>(g.group[j])]);
            coef(i, j) = g.group[i] == g.group[j] ? 2.0 * same_count / (p * mi * mi) : -2.0 / (p * mi * mj);
        }
    }
    out.gradient = weighted_kernel_gradient(x, k, coef, out.bandwidth);
    return out;
}

}  // namespace itebench::mmd
