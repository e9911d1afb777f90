#pragma once

#include <cstdint>
#include <vector>

#include "pgan/tensor.hpp"

namespace pgan {

// Adam moments, one (m, v) slot per parameter in the order the parameter
// list was registered. Bias-corrected update; see adam_step.
struct AdamState {
    uint64_t t = 0;
    float lr = 2e-4f;
    float beta1 = 0.5f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    std::vector<std::vector<float>> m, v;

    static AdamState make(const std::vector<Tensor>& params, float lr = 2e-4f, float beta1 = 0.5f);
};

// theta -= lr * m_hat / (sqrt(v_hat) + eps). Refuses to touch any parameter
// if any gradient entry is non-finite (GradientError); the state is then
// unchanged too. Missing grad buffers count as zero gradients.
void adam_step(std::vector<Tensor> params, AdamState& state);

void zero_grads(std::vector<Tensor> params);

}  // namespace pgan
