#pragma once

#include <cmath>
#include <vector>

#include "stresskit/errors.hpp"
#include "stresskit/nd/tape.hpp"

namespace stresskit::nd {

// Adam with standard bias correction. One instance per model; moment tensors
// are keyed by parameter order.
template <typename T>
class Adam {
public:
    explicit Adam(std::vector<Parameter<T>*> params, T lr = T(1e-3), T beta1 = T(0.9),
                  T beta2 = T(0.999), T eps = T(1e-8))
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto* p : params_) {
            m_.push_back(Tensor<T>::zeros(p->value.shape));
            v_.push_back(Tensor<T>::zeros(p->value.shape));
        }
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

    void step() {
        for (auto* p : params_)
            if (!p->grad.all_finite())
                throw NonFiniteGradientError("non-finite gradient in parameter " + p->name);
        ++step_;
        T bc1 = T(1) - std::pow(beta1_, static_cast<T>(step_));
        T bc2 = T(1) - std::pow(beta2_, static_cast<T>(step_));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            auto& p = *params_[pi];
            auto& m = m_[pi].data;
            auto& v = v_[pi].data;
            for (std::size_t i = 0; i < p.value.numel(); ++i) {
                T g = p.grad.data[i];
                m[i] = beta1_ * m[i] + (T(1) - beta1_) * g;
                v[i] = beta2_ * v[i] + (T(1) - beta2_) * g * g;
                T mhat = m[i] / bc1;
                T vhat = v[i] / bc2;
                p.value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    long step_count() const { return step_; }
    T learning_rate() const { return lr_; }

private:
    std::vector<Parameter<T>*> params_;
    std::vector<Tensor<T>> m_, v_;
    T lr_, beta1_, beta2_, eps_;
    long step_ = 0;
};

}  // namespace stresskit::nd
