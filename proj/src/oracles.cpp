#include "lebench/oracles.hpp"

#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <limits>
#include <numeric>

namespace lebench::oracle {

MatrixXd materialize_gradients(const MatrixXd& q, const MatrixXd& v) {
    const Index n = q.rows(), k = q.cols(), d = v.cols();
    MatrixXd g(n, k * d);
    for (Index i = 0; i < n; ++i)
        for (Index c = 0; c < k; ++c)
            for (Index j = 0; j < d; ++j) g(i, c * d + j) = q(i, c) * v(i, j);
    return g;
}

double naive_sq_dist(const MatrixXd& g, Index i, Index j) {
    double s = 0.0;
    for (Index c = 0; c < g.cols(); ++c) {
        const double diff = g(i, c) - g(j, c);
        s += diff * diff;
    }
    return s;
}

IndexList naive_kmeanspp(const MatrixXd& g, Index batch, Rng& rng, bool first_by_norm) {
    const Index n = g.rows();
    std::vector<double> w(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = first_by_norm ? g.row(i).squaredNorm() : 1.0;
    IndexList picks;
    const auto first = rng.categorical(w);
    if (!first) return picks;
    std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    std::vector<bool> chosen(static_cast<std::size_t>(n), false);
    Index c = *first;
    while (true) {
        picks.push_back(c);
        chosen[static_cast<std::size_t>(c)] = true;
        if (static_cast<Index>(picks.size()) == batch) break;
        for (Index i = 0; i < n; ++i) {
            const auto s = static_cast<std::size_t>(i);
            dist[s] = chosen[s] ? 0.0 : std::min(dist[s], naive_sq_dist(g, i, c));
        }
        auto next = rng.categorical(dist);
        if (!next) {
            IndexList rest;
            for (Index i = 0; i < n; ++i)
                if (!chosen[static_cast<std::size_t>(i)]) rest.push_back(i);
            next = rest[rng.below(rest.size())];
        }
        c = *next;
    }
    return picks;
}

MatrixXd kronecker_fisher(const VectorXd& x, const VectorXd& pi, const MatrixXd& T) {
    const Eigen::MatrixXd cov = Eigen::MatrixXd(pi.asDiagonal()) - pi * pi.transpose();
    const Eigen::MatrixXd P = T.transpose() * cov * T;
    const Eigen::MatrixXd xx = x * x.transpose();
    return Eigen::kroneckerProduct(xx, P).eval();
}

double dense_bait_objective(const MatrixXd& projected, const MatrixXd& probs, const IndexList& selected,
                            double lambda) {
    const Index n = projected.rows(), k = probs.cols();
    // Helmert basis built independently of the implementation
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k - 1);
    for (Index j = 0; j < k - 1; ++j) {
        const double m = static_cast<double>(j + 1);
        T.col(j).head(j + 1).setConstant(1.0 / std::sqrt(m * (m + 1.0)));
        T(j + 1, j) = -m / std::sqrt(m * (m + 1.0));
    }
    const Index D = projected.cols() * (k - 1);
    Eigen::MatrixXd F_bar = Eigen::MatrixXd::Zero(D, D);
    for (Index i = 0; i < n; ++i)
        F_bar += kronecker_fisher(projected.row(i).transpose(), probs.row(i).transpose(), T);
    F_bar /= static_cast<double>(n);
    Eigen::MatrixXd A = lambda * Eigen::MatrixXd::Identity(D, D);
    for (Index i : selected) A += kronecker_fisher(projected.row(i).transpose(), probs.row(i).transpose(), T);
    return Eigen::LLT<Eigen::MatrixXd>(A).solve(F_bar).trace();
}

MetricPair brute_force_metrics(std::span<const std::uint32_t> y, std::span<const std::uint32_t> yhat, std::uint32_t k) {
    double balanced = 0.0, f1 = 0.0;
    for (std::uint32_t c = 0; c < k; ++c) {
        std::int64_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] == c && yhat[i] == c) ++tp;
            else if (y[i] != c && yhat[i] == c) ++fp;
            else if (y[i] == c && yhat[i] != c) ++fn;
        }
        if (tp + fn > 0) balanced += static_cast<double>(tp) / static_cast<double>(tp + fn);
        // harmonic mean of P = tp/(tp+fp) and R = tp/(tp+fn), as one exact ratio
        if (tp > 0) f1 += static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
    }
    return {balanced / k, f1 / k};
}

double covering_radius(const MatrixXd& points, const IndexList& centers) {
    double radius = 0.0;
    for (Index i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Index c : centers) best = std::min(best, (points.row(i) - points.row(c)).norm());
        radius = std::max(radius, best);
    }
    return radius;
}

double optimal_kcenter_radius(const MatrixXd& points, Index batch) {
    const Index n = points.rows();
    double best = std::numeric_limits<double>::infinity();
    std::vector<bool> mask(static_cast<std::size_t>(n), false);
    std::fill(mask.begin(), mask.begin() + batch, true);
    do {
        IndexList centers;
        for (Index i = 0; i < n; ++i)
            if (mask[static_cast<std::size_t>(i)]) centers.push_back(i);
        best = std::min(best, covering_radius(points, centers));
    } while (std::prev_permutation(mask.begin(), mask.end()));
    return best;
}

VectorXd numeric_gradient(const Classifier& model, const MatrixXd& X, std::span<const std::uint32_t> targets,
                          std::span<const double> weights, double normalizer, double step) {
    auto loss = [&](const Classifier& m) {
        const MatrixXd z = logits(m, X);
        double total = 0.0;
        for (Index i = 0; i < X.rows(); ++i) {
            const double mx = z.row(i).maxCoeff();
            const double lse = mx + std::log((z.row(i).array() - mx).exp().sum());
            total += weights[static_cast<std::size_t>(i)] * (lse - z(i, targets[static_cast<std::size_t>(i)]));
        }
        return total / normalizer;
    };
    Classifier probe = model;
    VectorXd grad(model.parameters().size());
    for (Index p = 0; p < grad.size(); ++p) {
        const double orig = probe.parameters()[p];
        probe.parameters()[p] = orig + step;
        const double up = loss(probe);
        probe.parameters()[p] = orig - step;
        const double down = loss(probe);
        probe.parameters()[p] = orig;
        grad[p] = (up - down) / (2.0 * step);
    }
    return grad;
}

VectorXd numeric_logit_gradient(const VectorXd& z, Index label, double step) {
    auto ce = [&](const VectorXd& logits) {
        const double mx = logits.maxCoeff();
        return mx + std::log((logits.array() - mx).exp().sum()) - logits[label];
    };
    VectorXd grad(z.size());
    VectorXd probe = z;
    for (Index c = 0; c < z.size(); ++c) {
        probe[c] = z[c] + step;
        const double up = ce(probe);
        probe[c] = z[c] - step;
        const double down = ce(probe);
        probe[c] = z[c];
        grad[c] = (up - down) / (2.0 * step);
    }
    return grad;
}

}  // namespace lebench::oracle
