#include "pgan/nets.hpp"

namespace pgan {

Tensor init_weights(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.vec()) v = rng.normal(0.0f, 0.02f);
    return t;
}

namespace {

constexpr float kLeakySlope = 0.2f;

void mark_trainable(std::vector<Tensor> params) {
    for (auto& p : params) p.set_requires_grad(true);
}

int64_t count(std::vector<Tensor> params) {
    int64_t n = 0;
    for (auto& p : params) n += p.numel();
    return n;
}

}  // namespace

std::vector<Tensor> GeneratorNet::params() {
    return {fc_w, fc_b, bn0_gamma, bn0_beta, ct1_w, ct1_b, bn1_gamma, bn1_beta,
            ct2_w, ct2_b, bn2_gamma, bn2_beta, ct3_w, ct3_b};
}

NamedTensors GeneratorNet::named_params() {
    return {{"g.fc.w", fc_w},         {"g.fc.b", fc_b},         {"g.bn0.gamma", bn0_gamma},
            {"g.bn0.beta", bn0_beta}, {"g.ct1.w", ct1_w},       {"g.ct1.b", ct1_b},
            {"g.bn1.gamma", bn1_gamma}, {"g.bn1.beta", bn1_beta}, {"g.ct2.w", ct2_w},
            {"g.ct2.b", ct2_b},       {"g.bn2.gamma", bn2_gamma}, {"g.bn2.beta", bn2_beta},
            {"g.ct3.w", ct3_w},       {"g.ct3.b", ct3_b}};
}

NamedTensors GeneratorNet::named_buffers() {
    return {{"g.bn0.rmean", bn0.running_mean}, {"g.bn0.rvar", bn0.running_var},
            {"g.bn1.rmean", bn1.running_mean}, {"g.bn1.rvar", bn1.running_var},
            {"g.bn2.rmean", bn2.running_mean}, {"g.bn2.rvar", bn2.running_var}};
}

int64_t GeneratorNet::param_count() { return count(params()); }

std::vector<Tensor> DiscriminatorNet::params() {
    return {c1_w, c1_b, c2_w, c2_b, bn2_gamma, bn2_beta, c3_w, c3_b, bn3_gamma, bn3_beta, fc_w, fc_b};
}

NamedTensors DiscriminatorNet::named_params() {
    return {{"d.c1.w", c1_w}, {"d.c1.b", c1_b}, {"d.c2.w", c2_w}, {"d.c2.b", c2_b},
            {"d.bn2.gamma", bn2_gamma}, {"d.bn2.beta", bn2_beta}, {"d.c3.w", c3_w}, {"d.c3.b", c3_b},
            {"d.bn3.gamma", bn3_gamma}, {"d.bn3.beta", bn3_beta}, {"d.fc.w", fc_w}, {"d.fc.b", fc_b}};
}

NamedTensors DiscriminatorNet::named_buffers() {
    return {{"d.bn2.rmean", bn2.running_mean}, {"d.bn2.rvar", bn2.running_var},
            {"d.bn3.rmean", bn3.running_mean}, {"d.bn3.rvar", bn3.running_var}};
}

int64_t DiscriminatorNet::param_count() { return count(params()); }

GeneratorNet build_generator(Rng& rng, int z_dim) {
    if (z_dim < 1) throw ValidationError("z_dim must be >= 1, got " + std::to_string(z_dim));
    GeneratorNet net;
    net.z_dim = z_dim;
    net.fc_w = init_weights({z_dim + kNumClasses, 256 * 4 * 4}, rng);
    net.fc_b = Tensor::zeros({256 * 4 * 4});
    net.bn0_gamma = Tensor::full({256}, 1.0f);
    net.bn0_beta = Tensor::zeros({256});
    net.bn0 = BatchNormState::make(256);
    net.ct1_w = init_weights({256, 128, 4, 4}, rng);
    net.ct1_b = Tensor::zeros({128});
    net.bn1_gamma = Tensor::full({128}, 1.0f);
    net.bn1_beta = Tensor::zeros({128});
    net.bn1 = BatchNormState::make(128);
    net.ct2_w = init_weights({128, 64, 4, 4}, rng);
    net.ct2_b = Tensor::zeros({64});
    net.bn2_gamma = Tensor::full({64}, 1.0f);
    net.bn2_beta = Tensor::zeros({64});
    net.bn2 = BatchNormState::make(64);
    net.ct3_w = init_weights({64, 1, 4, 4}, rng);
    net.ct3_b = Tensor::zeros({1});
    mark_trainable(net.params());
    return net;
}

DiscriminatorNet build_discriminator(Rng& rng) {
    DiscriminatorNet net;
    net.c1_w = init_weights({64, 1 + kNumClasses, 4, 4}, rng);
    net.c1_b = Tensor::zeros({64});
    net.c2_w = init_weights({128, 64, 4, 4}, rng);
    net.c2_b = Tensor::zeros({128});
    net.bn2_gamma = Tensor::full({128}, 1.0f);
    net.bn2_beta = Tensor::zeros({128});
    net.bn2 = BatchNormState::make(128);
    net.c3_w = init_weights({256, 128, 4, 4}, rng);
    net.c3_b = Tensor::zeros({256});
    net.bn3_gamma = Tensor::full({256}, 1.0f);
    net.bn3_beta = Tensor::zeros({256});
    net.bn3 = BatchNormState::make(256);
    net.fc_w = init_weights({256 * 4 * 4, 1}, rng);
    net.fc_b = Tensor::zeros({1});
    mark_trainable(net.params());
    return net;
}

Tensor one_hot(const std::vector<GleasonLabel>& labels) {
    if (labels.empty()) throw ContractError("one_hot: empty label list");
    Tensor out(Shape{static_cast<int64_t>(labels.size()), kNumClasses});
    for (size_t i = 0; i < labels.size(); ++i) out.data()[i * kNumClasses + labels[i].class_index] = 1.0f;
    return out;
}

Tensor label_planes(const std::vector<GleasonLabel>& labels) {
    if (labels.empty()) throw ContractError("label_planes: empty label list");
    Tensor out(Shape{static_cast<int64_t>(labels.size()), kNumClasses, 32, 32});
    for (size_t i = 0; i < labels.size(); ++i) {
        float* plane = out.data() + (i * kNumClasses + static_cast<size_t>(labels[i].class_index)) * 32 * 32;
        for (int p = 0; p < 32 * 32; ++p) plane[p] = 1.0f;
    }
    return out;
}

Tensor forward_generator(Tape* tape, GeneratorNet& net, const Tensor& z, const std::vector<GleasonLabel>& labels,
                         BnMode mode) {
    if (z.ndim() != 2 || z.dim(1) != net.z_dim)
        throw ShapeError("forward_generator: z must be [N, " + std::to_string(net.z_dim) + "], got " +
                         shape_str(z.shape()));
    if (static_cast<int64_t>(labels.size()) != z.dim(0))
        throw ContractError("forward_generator: " + std::to_string(labels.size()) + " labels for batch of " +
                            std::to_string(z.dim(0)));
    const int64_t n = z.dim(0);
    Tensor h = concat(tape, {z, one_hot(labels)}, 1);
    h = linear(tape, h, net.fc_w, net.fc_b);
    h = reshape(tape, h, {n, 256, 4, 4});
    h = batch_norm2d(tape, h, net.bn0_gamma, net.bn0_beta, net.bn0, mode);
    h = leaky_relu(tape, h, kLeakySlope);
    h = conv_transpose2d(tape, h, net.ct1_w, net.ct1_b, 2, 1);
    h = batch_norm2d(tape, h, net.bn1_gamma, net.bn1_beta, net.bn1, mode);
    h = leaky_relu(tape, h, kLeakySlope);
    h = conv_transpose2d(tape, h, net.ct2_w, net.ct2_b, 2, 1);
    h = batch_norm2d(tape, h, net.bn2_gamma, net.bn2_beta, net.bn2, mode);
    h = leaky_relu(tape, h, kLeakySlope);
    h = conv_transpose2d(tape, h, net.ct3_w, net.ct3_b, 2, 1);
    return tanh(tape, h);
}

Tensor forward_discriminator(Tape* tape, DiscriminatorNet& net, const Tensor& x,
                             const std::vector<GleasonLabel>& labels, BnMode mode) {
    if (x.ndim() != 4 || x.dim(1) != 1 || x.dim(2) != 32 || x.dim(3) != 32)
        throw ShapeError("forward_discriminator: input must be [N, 1, 32, 32], got " + shape_str(x.shape()));
    if (static_cast<int64_t>(labels.size()) != x.dim(0))
        throw ContractError("forward_discriminator: " + std::to_string(labels.size()) + " labels for batch of " +
                            std::to_string(x.dim(0)));
    const int64_t n = x.dim(0);
    Tensor h = concat(tape, {x, label_planes(labels)}, 1);
    h = conv2d(tape, h, net.c1_w, net.c1_b, 2, 1);
    h = leaky_relu(tape, h, kLeakySlope);
    h = conv2d(tape, h, net.c2_w, net.c2_b, 2, 1);
    h = batch_norm2d(tape, h, net.bn2_gamma, net.bn2_beta, net.bn2, mode);
    h = leaky_relu(tape, h, kLeakySlope);
    h = conv2d(tape, h, net.c3_w, net.c3_b, 2, 1);
    h = batch_norm2d(tape, h, net.bn3_gamma, net.bn3_beta, net.bn3, mode);
    h = leaky_relu(tape, h, kLeakySlope);
    h = reshape(tape, h, {n, 256 * 4 * 4});
    h = linear(tape, h, net.fc_w, net.fc_b);
    return sigmoid(tape, h);
}

}  // namespace pgan
