#include "pgan/optim.hpp"

#include <cmath>

namespace pgan {

AdamState AdamState::make(const std::vector<Tensor>& params, float lr, float beta1) {
    AdamState st;
    st.lr = lr;
    st.beta1 = beta1;
    for (const auto& p : params) {
        st.m.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
        st.v.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
    }
    return st;
}

void adam_step(std::vector<Tensor> params, AdamState& state) {
    if (params.size() != state.m.size())
        throw ContractError("adam_step: " + std::to_string(params.size()) + " params but state has " +
                            std::to_string(state.m.size()) + " slots");
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].numel() != static_cast<int64_t>(state.m[i].size()))
            throw ContractError("adam_step: slot " + std::to_string(i) + " size mismatch");
        if (!params[i].has_grad()) continue;
        for (float g : params[i].grad_vec())
            if (!std::isfinite(g))
                throw GradientError("adam_step: non-finite gradient in slot " + std::to_string(i) +
                                    "; step refused");
    }

    state.t += 1;
    const float bc1 = 1.0f - std::pow(state.beta1, static_cast<float>(state.t));
    const float bc2 = 1.0f - std::pow(state.beta2, static_cast<float>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        float* theta = params[i].data();
        float* m = state.m[i].data();
        float* v = state.v[i].data();
        const bool has_grad = params[i].has_grad();
        const float* g = has_grad ? params[i].grad() : nullptr;
        const int64_t n = params[i].numel();
        for (int64_t j = 0; j < n; ++j) {
            const float gj = has_grad ? g[j] : 0.0f;
            m[j] = state.beta1 * m[j] + (1.0f - state.beta1) * gj;
            v[j] = state.beta2 * v[j] + (1.0f - state.beta2) * gj * gj;
            const float m_hat = m[j] / bc1;
            const float v_hat = v[j] / bc2;
            theta[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

void zero_grads(std::vector<Tensor> params) {
    for (auto& p : params) p.zero_grad();
}

}  // namespace pgan
