#pragma once

#include <span>
#include <vector>

#include "sdvc/common.hpp"
#include "sdvc/tensor.hpp"

namespace sdvc {

struct CtcResult {
    double loss = 0.0;     // -log P(label | logits)
    bool feasible = true;  // false when the label cannot align to T frames
};

namespace detail {

// extended label sequence: blank, l1, blank, l2, ..., blank
inline std::vector<int> extend_label(std::span<const int> label, int blank) {
    std::vector<int> ext;
    ext.reserve(2 * label.size() + 1);
    ext.push_back(blank);
    for (int id : label) {
        ext.push_back(id);
        ext.push_back(blank);
    }
    return ext;
}

}  // namespace detail

// CTC negative log-likelihood of `label` under frame logits [T x (P+1)],
// computed with the standard log-domain forward recursion. `blank` is the
// blank symbol id (by convention the last column).
inline CtcResult ctc_loss(const Mat& logits, std::span<const int> label,
                          int blank) {
    const int t_len = logits.rows;
    for (int id : label)
        if (id < 0 || id >= logits.cols || id == blank)
            throw ValidationError("ctc: label id out of range");
    if (t_len == 0) return {0.0, false};
    if (static_cast<int>(label.size()) > t_len) return {0.0, false};

    const auto ext = detail::extend_label(label, blank);
    const int s_len = static_cast<int>(ext.size());

    std::vector<Vec> logp(t_len);
    for (int t = 0; t < t_len; ++t) logp[t] = log_softmax(logits.row(t));

    std::vector<double> alpha(s_len, kNegInf), prev(s_len, kNegInf);
    alpha[0] = logp[0][ext[0]];
    if (s_len > 1) alpha[1] = logp[0][ext[1]];
    for (int t = 1; t < t_len; ++t) {
        std::swap(prev, alpha);
        for (int s = 0; s < s_len; ++s) {
            double acc = prev[s];
            if (s >= 1) acc = log_sum_exp(acc, prev[s - 1]);
            if (s >= 2 && ext[s] != blank && ext[s] != ext[s - 2])
                acc = log_sum_exp(acc, prev[s - 2]);
            alpha[s] = acc == kNegInf ? kNegInf : acc + logp[t][ext[s]];
        }
    }
    double log_z = alpha[s_len - 1];
    if (s_len > 1) log_z = log_sum_exp(log_z, alpha[s_len - 2]);
    if (log_z == kNegInf) return {0.0, false};
    return {-log_z, true};
}

// Loss plus d(loss)/d(logits). The gradient of -log P wrt the logits is
// softmax(logits) - gamma, where gamma sums the state posteriors mapped back
// onto symbols.
inline CtcResult ctc_loss_grad(const Mat& logits, std::span<const int> label,
                               int blank, Mat* dlogits) {
    const int t_len = logits.rows;
    if (dlogits) {
        *dlogits = Mat(logits.rows, logits.cols);
    }
    const auto base = ctc_loss(logits, label, blank);
    if (!base.feasible || !dlogits) return base;

    const auto ext = detail::extend_label(label, blank);
    const int s_len = static_cast<int>(ext.size());
    std::vector<Vec> logp(t_len);
    for (int t = 0; t < t_len; ++t) logp[t] = log_softmax(logits.row(t));

    // full alpha/beta tables (T is small for aux-task windows)
    Mat alpha(t_len, s_len), beta(t_len, s_len);
    for (auto& v : alpha.d) v = kNegInf;
    for (auto& v : beta.d) v = kNegInf;

    alpha.at(0, 0) = logp[0][ext[0]];
    if (s_len > 1) alpha.at(0, 1) = logp[0][ext[1]];
    for (int t = 1; t < t_len; ++t)
        for (int s = 0; s < s_len; ++s) {
            double acc = alpha.at(t - 1, s);
            if (s >= 1) acc = log_sum_exp(acc, alpha.at(t - 1, s - 1));
            if (s >= 2 && ext[s] != blank && ext[s] != ext[s - 2])
                acc = log_sum_exp(acc, alpha.at(t - 1, s - 2));
            alpha.at(t, s) = acc == kNegInf ? kNegInf : acc + logp[t][ext[s]];
        }

    beta.at(t_len - 1, s_len - 1) = 0.0;
    if (s_len > 1) beta.at(t_len - 1, s_len - 2) = 0.0;
    for (int t = t_len - 2; t >= 0; --t)
        for (int s = 0; s < s_len; ++s) {
            double acc = beta.at(t + 1, s) + logp[t + 1][ext[s]];
            if (s + 1 < s_len)
                acc = log_sum_exp(acc, beta.at(t + 1, s + 1) + logp[t + 1][ext[s + 1]]);
            if (s + 2 < s_len && ext[s + 2] != blank && ext[s + 2] != ext[s])
                acc = log_sum_exp(acc, beta.at(t + 1, s + 2) + logp[t + 1][ext[s + 2]]);
            beta.at(t, s) = acc;
        }

    const double log_z = -base.loss;
    for (int t = 0; t < t_len; ++t) {
        Vec gamma(logits.cols, 0.0);
        for (int s = 0; s < s_len; ++s) {
            const double g = alpha.at(t, s) + beta.at(t, s) - log_z;
            if (g > -700.0) gamma[ext[s]] += std::exp(g);
        }
        const Vec p = softmax(logits.row(t));
        for (int k = 0; k < logits.cols; ++k)
            dlogits->at(t, k) = p[k] - gamma[k];
    }
    return base;
}

}  // namespace sdvc
