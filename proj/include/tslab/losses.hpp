#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tslab/tensor.hpp"

// Temperature-parameterized losses, each returning the scalar value and the
// analytic gradient with respect to the network outputs it was fed.
//
// Contrastive similarities are plain dot products: projection rows arrive
// unit-normalized from the projection head, which also owns the
// normalization Jacobian. Exponentials are stabilized by per-row max
// subtraction; temperatures down to 0.025 push |sim/tau| to 40, which raw
// exp() survives but softmax chains should not rely on.

namespace tslab {

struct LossOutput {
    double value = 0.0;
    Tensor2 d_outputs;
};

// Two augmentations per source sample, interleaved: rows 2k and 2k+1 come
// from sample k and share its label.
struct MultiViewBatch {
    Tensor2 views;                // 2B x d
    std::vector<int> labels;      // per view
    std::vector<int> pair_index;  // view -> source sample index

    void validate() const {
        const std::size_t n = views.rows();
        if (n < 4 || n % 2 != 0)
            throw std::invalid_argument("multi-view batch: need 2B rows with B >= 2");
        if (labels.size() != n || pair_index.size() != n)
            throw std::invalid_argument("multi-view batch: label/pair size mismatch");
        for (std::size_t k = 0; k < n / 2; ++k) {
            if (labels[2 * k] != labels[2 * k + 1] || pair_index[2 * k] != pair_index[2 * k + 1])
                throw std::invalid_argument("multi-view batch: paired views must share label");
        }
    }
};

namespace detail {

inline void check_tau(double tau) {
    if (!(tau > 0.0)) throw std::domain_error("loss: temperature must be positive");
}

// Shared core of the contrastive losses. `target_weight(i, j)` returns the
// unnormalized weight of ordered pair (anchor i, candidate j != i); rows of
// weights are normalized to sum 1 before use. Gradient: with
// g_ij = (q_ij - wbar_ij)/(N*tau) on off-diagonal entries,
// dL/dZ = (G + G^T) Z.
template <typename WeightFn>
LossOutput contrastive_core(const Tensor2& z, std::span<const int> labels, double tau,
                            WeightFn&& target_weight) {
    check_tau(tau);
    const std::size_t n = z.rows();
    if (n < 2) throw std::invalid_argument("contrastive loss: need at least 2 rows");
    if (labels.size() != n) throw std::invalid_argument("contrastive loss: label count mismatch");

    const Tensor2 sim = matmul_a_bt(z, z);
    Tensor2 coef(n, n);  // G + G^T accumulates here
    double value = 0.0;

    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        double wsum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            w[j] = j == i ? 0.0 : target_weight(i, j);
            wsum += w[j];
        }
        if (!(wsum > 0.0))
            throw std::logic_error("contrastive loss: anchor " + std::to_string(i) +
                                   " has no positive");

        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) m = std::max(m, sim(i, j) / tau);
        double expsum = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) expsum += std::exp(sim(i, j) / tau - m);
        const double lse = m + std::log(expsum);

        double weighted_sim = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double wbar = w[j] / wsum;
            weighted_sim += wbar * (sim(i, j) / tau);
            const double q = std::exp(sim(i, j) / tau - lse);
            const double g = (q - wbar) / (static_cast<double>(n) * tau);
            coef(i, j) += g;
            coef(j, i) += g;
        }
        value += lse - weighted_sim;
    }
    LossOutput out;
    out.value = value / static_cast<double>(n);
    out.d_outputs = matmul(coef, z);
    if (!std::isfinite(out.value))
        throw std::runtime_error("contrastive loss: non-finite value");
    return out;
}

}  // namespace detail

// Mean negative log-likelihood of softmax(logits/tau).
// Gradient: (softmax(l/tau) - onehot) / (B*tau).
inline LossOutput ce_loss(const Tensor2& logits, std::span<const int> labels, double tau) {
    detail::check_tau(tau);
    const std::size_t b = logits.rows();
    const std::size_t c = logits.cols();
    if (b == 0 || c == 0) throw std::invalid_argument("ce_loss: empty logits");
    if (labels.size() != b) throw std::invalid_argument("ce_loss: label count mismatch");

    LossOutput out;
    out.d_outputs = Tensor2(b, c);
    double total = 0.0;
    std::vector<double> p(c);
    for (std::size_t r = 0; r < b; ++r) {
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw std::domain_error("ce_loss: label " + std::to_string(y) + " outside [0, " +
                                    std::to_string(c) + ")");
        double m = logits(r, 0) / tau;
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, logits(r, j) / tau);
        double expsum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            p[j] = std::exp(logits(r, j) / tau - m);
            expsum += p[j];
        }
        total += -(logits(r, static_cast<std::size_t>(y)) / tau - m - std::log(expsum));
        const double scale = 1.0 / (static_cast<double>(b) * tau);
        for (std::size_t j = 0; j < c; ++j) {
            out.d_outputs(r, j) = (p[j] / expsum) * scale;
        }
        out.d_outputs(r, static_cast<std::size_t>(y)) -= scale;
    }
    out.value = total / static_cast<double>(b);
    if (!std::isfinite(out.value)) throw std::runtime_error("ce_loss: non-finite value");
    return out;
}

// Supervised contrastive loss over a multi-view batch: positives of anchor
// i are all other rows with the same label, every non-anchor row appears in
// the denominator.
inline LossOutput supcon_loss(const Tensor2& projections, std::span<const int> labels,
                              double tau) {
    return detail::contrastive_core(projections, labels, tau,
                                    [&](std::size_t i, std::size_t j) {
                                        return labels[i] == labels[j] ? 1.0 : 0.0;
                                    });
}

// Label-smoothed variant: pair weights (1-alpha) for same-label pairs and
// alpha/(C-1) across labels, normalized per anchor. alpha = 0 recovers
// supcon_loss exactly.
inline LossOutput supcon_ls_loss(const Tensor2& projections, std::span<const int> labels,
                                 double tau, double alpha, int num_classes) {
    if (alpha < 0.0 || alpha >= 1.0)
        throw std::domain_error("supcon_ls_loss: alpha must be in [0, 1)");
    if (alpha > 0.0 && num_classes < 2)
        throw std::domain_error("supcon_ls_loss: smoothing needs at least 2 classes");
    const double cross = alpha > 0.0 ? alpha / static_cast<double>(num_classes - 1) : 0.0;
    return detail::contrastive_core(projections, labels, tau,
                                    [&](std::size_t i, std::size_t j) {
                                        return labels[i] == labels[j] ? 1.0 - alpha : cross;
                                    });
}

}  // namespace tslab
