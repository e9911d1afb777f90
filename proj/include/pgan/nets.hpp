#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pgan/label.hpp"
#include "pgan/rng.hpp"
#include "pgan/tensor.hpp"

namespace pgan {

// N(0, 0.02) i.i.d. entries; the DCGAN weight initializer.
Tensor init_weights(Shape shape, Rng& rng);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// z+label -> dense 109->256*4*4 -> three 4x4/s2/p1 transposed-conv blocks
// (256->128->64->1), batch norm + leaky relu between, tanh head; 4-8-16-32.
struct GeneratorNet {
    int z_dim = 100;
    Tensor fc_w, fc_b;
    Tensor bn0_gamma, bn0_beta;
    BatchNormState bn0;
    Tensor ct1_w, ct1_b, bn1_gamma, bn1_beta;
    BatchNormState bn1;
    Tensor ct2_w, ct2_b, bn2_gamma, bn2_beta;
    BatchNormState bn2;
    Tensor ct3_w, ct3_b;

    std::vector<Tensor> params();             // trainable, fixed order
    NamedTensors named_params();              // same order, with names
    NamedTensors named_buffers();             // batch-norm running stats
    int64_t param_count();
};

// image + 9 broadcast label planes -> three 4x4/s2/p1 conv blocks
// (10->64->128->256), batch norm on all but the first, dense head, sigmoid.
struct DiscriminatorNet {
    Tensor c1_w, c1_b;
    Tensor c2_w, c2_b, bn2_gamma, bn2_beta;
    BatchNormState bn2;
    Tensor c3_w, c3_b, bn3_gamma, bn3_beta;
    BatchNormState bn3;
    Tensor fc_w, fc_b;

    std::vector<Tensor> params();
    NamedTensors named_params();
    NamedTensors named_buffers();
    int64_t param_count();
};

GeneratorNet build_generator(Rng& rng, int z_dim = 100);
DiscriminatorNet build_discriminator(Rng& rng);

// [N, 9] with a single 1 per row.
Tensor one_hot(const std::vector<GleasonLabel>& labels);
// [N, 9, 32, 32]; plane class_index is all ones, the rest zeros.
Tensor label_planes(const std::vector<GleasonLabel>& labels);

// z: [N, z_dim] -> images [N, 1, 32, 32] in [-1, 1].
Tensor forward_generator(Tape* tape, GeneratorNet& net, const Tensor& z, const std::vector<GleasonLabel>& labels,
                         BnMode mode);
// x: [N, 1, 32, 32] -> probabilities [N, 1] in (0, 1).
Tensor forward_discriminator(Tape* tape, DiscriminatorNet& net, const Tensor& x,
                             const std::vector<GleasonLabel>& labels, BnMode mode);

}  // namespace pgan
