#pragma once

#include <cmath>
#include <vector>

#include "sdvc/common.hpp"
#include "sdvc/tensor.hpp"

namespace sdvc {

// Adam over a set of (param, grad) tensor pairs split into two learning-rate
// groups (classifier heads vs encoder).
class Adam {
  public:
    struct Group {
        std::vector<Mat*> params;
        std::vector<Mat*> grads;
        double lr = 1e-4;
    };

    explicit Adam(std::vector<Group> groups, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : groups_(std::move(groups)), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto& g : groups_) {
            if (g.params.size() != g.grads.size())
                throw ValidationError("adam: param/grad count mismatch");
            for (auto* p : g.params) {
                m_.emplace_back(p->rows, p->cols);
                v_.emplace_back(p->rows, p->cols);
            }
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        std::size_t slot = 0;
        for (auto& g : groups_) {
            for (std::size_t i = 0; i < g.params.size(); ++i, ++slot) {
                if (g.lr == 0.0) continue;  // frozen group: leave bits untouched
                Mat& p = *g.params[i];
                const Mat& grad = *g.grads[i];
                Mat& m = m_[slot];
                Mat& v = v_[slot];
                for (std::size_t k = 0; k < p.d.size(); ++k) {
                    m.d[k] = beta1_ * m.d[k] + (1.0 - beta1_) * grad.d[k];
                    v.d[k] = beta2_ * v.d[k] + (1.0 - beta2_) * grad.d[k] * grad.d[k];
                    const double mhat = m.d[k] / bc1;
                    const double vhat = v.d[k] / bc2;
                    p.d[k] -= g.lr * mhat / (std::sqrt(vhat) + eps_);
                }
            }
        }
    }

    void zero_grads() {
        for (auto& g : groups_)
            for (auto* grad : g.grads) grad->zero();
    }

    void scale_lr(double factor) {
        for (auto& g : groups_) g.lr *= factor;
    }

    std::vector<double> lrs() const {
        std::vector<double> out;
        for (const auto& g : groups_) out.push_back(g.lr);
        return out;
    }

    void set_lrs(const std::vector<double>& lrs) {
        if (lrs.size() != groups_.size())
            throw ValidationError("adam: lr count mismatch");
        for (std::size_t i = 0; i < lrs.size(); ++i) groups_[i].lr = lrs[i];
    }

    // moment state, exposed for checkpoint/resume
    std::vector<Mat>& m() { return m_; }
    std::vector<Mat>& v() { return v_; }
    long long& step_count() { return t_; }

  private:
    std::vector<Group> groups_;
    double beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<Mat> m_, v_;
};

}  // namespace sdvc
