#include "pgan/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pgan/errors.hpp"

namespace fs = std::filesystem;

namespace pgan {
namespace {

constexpr uint64_t kInitGTag = 0x696e69745f67;  // "init_g"
constexpr uint64_t kInitDTag = 0x696e69745f64;  // "init_d"
constexpr uint64_t kTrainTag = 0x747261696e;    // "train"
constexpr uint64_t kGridTag = 0x677269645f7a;   // "grid_z"

std::vector<GleasonLabel> uniform_labels(int n, Rng& rng) {
    std::vector<GleasonLabel> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        out.push_back(GleasonLabel::from_index(static_cast<int>(rng.uniform_int(kNumClasses))));
    return out;
}

const Tensor& find_tensor(const Checkpoint& ckpt, const std::string& name) {
    for (const auto& [tensor_name, t] : ckpt.tensors)
        if (tensor_name == name) return t;
    throw CheckpointError("checkpoint missing tensor " + name);
}

void apply_tensors(const Checkpoint& ckpt, NamedTensors targets) {
    for (auto& [name, dst] : targets) {
        const Tensor& src = find_tensor(ckpt, name);
        if (src.shape() != dst.shape())
            throw CheckpointError("checkpoint tensor " + name + " has shape " + shape_str(src.shape()) +
                                  ", expected " + shape_str(dst.shape()));
        dst.vec() = src.vec();
    }
}

void check_opt(const AdamState& opt, const std::vector<Tensor>& params) {
    bool ok = opt.m.size() == params.size() && opt.v.size() == params.size();
    for (size_t i = 0; ok && i < params.size(); ++i)
        ok = opt.m[i].size() == static_cast<size_t>(params[i].numel()) && opt.v[i].size() == opt.m[i].size();
    if (!ok) throw CheckpointError("checkpoint optimizer state does not match the parameter list");
}

std::string snapshot_name(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_epoch%04d.bin", epoch);
    return buf;
}

// Rewrite the loss CSV keeping the header and rows up to keep_epoch, so a
// resumed run appends exactly where the checkpointed one left off.
void truncate_csv(const std::string& path, int keep_epoch) {
    std::vector<std::string> kept;
    {
        std::ifstream in(path);
        std::string line;
        bool first = true;
        while (in && std::getline(in, line)) {
            if (first) {
                first = false;
                continue;
            }
            if (line.empty()) continue;
            int epoch = std::atoi(line.c_str());
            if (epoch >= 1 && epoch <= keep_epoch) kept.push_back(line);
        }
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << "epoch,batch,d_loss,g_loss\n";
    for (const std::string& line : kept) out << line << '\n';
    if (!out) throw IoError("short write to " + path);
}

Checkpoint snapshot_state(const TrainConfig& config, GeneratorNet& g, DiscriminatorNet& d, const AdamState& opt_g,
                          const AdamState& opt_d, const EvalGrid& grid, const Rng& train_rng, int epoch) {
    Checkpoint ckpt;
    ckpt.version = 1;
    ckpt.config_echo = config.echo();
    ckpt.epoch = static_cast<uint32_t>(epoch);
    for (const auto& nt : g.named_params()) ckpt.tensors.push_back(nt);
    for (const auto& nt : g.named_buffers()) ckpt.tensors.push_back(nt);
    for (const auto& nt : d.named_params()) ckpt.tensors.push_back(nt);
    for (const auto& nt : d.named_buffers()) ckpt.tensors.push_back(nt);
    ckpt.tensors.emplace_back("grid.z", grid.z);
    ckpt.opt_g = opt_g;
    ckpt.opt_d = opt_d;
    ckpt.rng_state = train_rng.state();
    ckpt.rng_inc = train_rng.inc();
    return ckpt;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("epochs must be positive");
    if (batch_size < 1) throw ValidationError("batch size must be positive");
    if (z_dim < 1) throw ValidationError("z dim must be positive");
    if (!(lr > 0.0f)) throw ValidationError("lr must be positive");
    if (!(beta1 > 0.0f && beta1 < 1.0f)) throw ValidationError("beta1 must be in (0, 1)");
    if (out_dir.empty()) throw ValidationError("out dir must be set");
    for (int e : snapshot_epochs)
        if (e < 1 || e > epochs)
            throw ValidationError("snapshot epoch " + std::to_string(e) + " outside [1, " + std::to_string(epochs) +
                                  "]");
}

std::string TrainConfig::echo() const {
    char num[64];
    std::string s;
    s += "epochs = " + std::to_string(epochs) + "\n";
    s += "batch-size = " + std::to_string(batch_size) + "\n";
    s += "z-dim = " + std::to_string(z_dim) + "\n";
    std::snprintf(num, sizeof num, "%g", static_cast<double>(lr));
    s += std::string("lr = ") + num + "\n";
    std::snprintf(num, sizeof num, "%g", static_cast<double>(beta1));
    s += std::string("beta1 = ") + num + "\n";
    s += "leaky-slope = 0.2\n";
    s += "seed = " + std::to_string(master_seed) + "\n";
    s += "snapshot-epochs = ";
    for (size_t i = 0; i < snapshot_epochs.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(snapshot_epochs[i]);
    }
    s += "\n";
    s += "out = " + out_dir + "\n";
    return s;
}

EvalGrid make_eval_grid(int z_dim, uint64_t master_seed) {
    Rng rng = derive_rng(master_seed, {kGridTag});
    return EvalGrid{sample_noise(kNumClasses, z_dim, rng)};
}

Tensor sample_noise(int n, int z_dim, Rng& rng) {
    if (n < 1 || z_dim < 1) throw ValidationError("noise dims must be positive");
    Tensor z(Shape{n, z_dim});
    float* p = z.data();
    const int64_t total = z.numel();
    for (int64_t i = 0; i < total; ++i) p[i] = rng.uniform(-1.0f, 1.0f);
    return z;
}

float train_step_discriminator(GeneratorNet& g, DiscriminatorNet& d, const Batch& batch, AdamState& opt_d,
                               Rng& rng) {
    const int n = static_cast<int>(batch.images.dim(0));
    Tensor z = sample_noise(n, g.z_dim, rng);
    std::vector<GleasonLabel> y_fake = uniform_labels(n, rng);
    Tensor fake = forward_generator(nullptr, g, z, y_fake, BnMode::Train);

    zero_grads(d.params());
    Tape tape;
    Tensor p_real = forward_discriminator(&tape, d, batch.images, batch.labels, BnMode::Train);
    Tensor p_fake = forward_discriminator(&tape, d, fake, y_fake, BnMode::Train);
    Tensor loss = add(&tape, bce_loss(&tape, p_real, Tensor::full(Shape{n, 1}, 1.0f)),
                      bce_loss(&tape, p_fake, Tensor::zeros(Shape{n, 1})));
    const float value = loss.item();
    if (!std::isfinite(value)) throw GradientError("discriminator loss is not finite");
    tape.backward(loss);
    adam_step(d.params(), opt_d);
    return value;
}

float train_step_generator(GeneratorNet& g, DiscriminatorNet& d, int batch_size, AdamState& opt_g, Rng& rng) {
    Tensor z = sample_noise(batch_size, g.z_dim, rng);
    std::vector<GleasonLabel> y = uniform_labels(batch_size, rng);

    zero_grads(g.params());
    Tape tape;
    Tensor fake = forward_generator(&tape, g, z, y, BnMode::Train);
    Tensor p = forward_discriminator(&tape, d, fake, y, BnMode::Train);
    Tensor loss = bce_loss(&tape, p, Tensor::full(Shape{batch_size, 1}, 1.0f));
    const float value = loss.item();
    if (!std::isfinite(value)) throw GradientError("generator loss is not finite");
    tape.backward(loss);
    adam_step(g.params(), opt_g);
    return value;
}

Tensor grid_tiles(GeneratorNet& g, const EvalGrid& grid) {
    std::vector<GleasonLabel> labels;
    labels.reserve(kNumClasses);
    for (int i = 0; i < kNumClasses; ++i) labels.push_back(GleasonLabel::from_index(i));
    return forward_generator(nullptr, g, grid.z, labels, BnMode::Eval);
}

Tensor real_reference_tiles(const std::vector<ImageRecord>& dataset) {
    constexpr size_t tile = static_cast<size_t>(kCanvas) * kCanvas;
    Tensor out(Shape{kNumClasses, 1, kCanvas, kCanvas}, -1.0f);
    std::array<bool, kNumClasses> seen{};
    for (const ImageRecord& rec : dataset) {
        const size_t c = static_cast<size_t>(rec.label.class_index);
        if (seen[c]) continue;
        seen[c] = true;
        std::vector<float> canvas = fit_to_canvas(rec);
        std::memcpy(out.data() + c * tile, canvas.data(), tile * sizeof(float));
    }
    return out;
}

PgmImage render_grid(const std::vector<Tensor>& snapshot_tiles, const Tensor& real_refs) {
    constexpr int gap = 2;
    constexpr size_t tile = static_cast<size_t>(kCanvas) * kCanvas;
    const int ncols = static_cast<int>(snapshot_tiles.size()) + 1;
    const int width = ncols * kCanvas + (ncols - 1) * gap;
    const int height = kNumClasses * kCanvas + (kNumClasses - 1) * gap;

    PgmImage img;
    img.width = width;
    img.height = height;
    img.pixels.assign(static_cast<size_t>(width) * static_cast<size_t>(height), 255);
    for (int col = 0; col < ncols; ++col) {
        const Tensor& stack = col + 1 < ncols ? snapshot_tiles[static_cast<size_t>(col)] : real_refs;
        if (stack.shape() != Shape{kNumClasses, 1, kCanvas, kCanvas})
            throw ShapeError("grid tiles must be [9, 1, 32, 32], got " + shape_str(stack.shape()));
        for (int row = 0; row < kNumClasses; ++row) {
            const float* src = stack.data() + static_cast<size_t>(row) * tile;
            std::vector<uint8_t> bytes = quantize_image(std::vector<float>(src, src + tile));
            for (int y = 0; y < kCanvas; ++y) {
                uint8_t* dst = img.pixels.data() +
                               static_cast<size_t>((row * (kCanvas + gap) + y)) * static_cast<size_t>(width) +
                               static_cast<size_t>(col * (kCanvas + gap));
                std::memcpy(dst, bytes.data() + static_cast<size_t>(y) * kCanvas, kCanvas);
            }
        }
    }
    return img;
}

GeneratorNet generator_from_checkpoint(const Checkpoint& ckpt) {
    const Tensor& fc = find_tensor(ckpt, "g.fc.w");
    const int z_dim = static_cast<int>(fc.dim(0)) - kNumClasses;
    if (z_dim < 1) throw CheckpointError("checkpoint g.fc.w implies a non-positive z dim");
    Rng scratch(0);
    GeneratorNet g = build_generator(scratch, z_dim);
    apply_tensors(ckpt, g.named_params());
    apply_tensors(ckpt, g.named_buffers());
    return g;
}

DiscriminatorNet discriminator_from_checkpoint(const Checkpoint& ckpt) {
    Rng scratch(0);
    DiscriminatorNet d = build_discriminator(scratch);
    apply_tensors(ckpt, d.named_params());
    apply_tensors(ckpt, d.named_buffers());
    return d;
}

void train(const TrainConfig& config, const std::vector<ImageRecord>& dataset, const std::string& resume_from,
           const ProgressFn& on_batch) {
    config.validate();
    if (dataset.empty()) throw ValidationError("training dataset is empty");

    const fs::path dir(config.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output dir " + config.out_dir);
    {
        std::ofstream echo_out(dir / "config.echo", std::ios::trunc);
        echo_out << config.echo();
        if (!echo_out) throw IoError("cannot write " + (dir / "config.echo").string());
    }

    std::vector<int> snaps = config.snapshot_epochs;
    std::sort(snaps.begin(), snaps.end());
    snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());

    Rng g_init = derive_rng(config.master_seed, {kInitGTag});
    Rng d_init = derive_rng(config.master_seed, {kInitDTag});
    GeneratorNet g = build_generator(g_init, config.z_dim);
    DiscriminatorNet d = build_discriminator(d_init);
    AdamState opt_g = AdamState::make(g.params(), config.lr, config.beta1);
    AdamState opt_d = AdamState::make(d.params(), config.lr, config.beta1);
    EvalGrid grid = make_eval_grid(config.z_dim, config.master_seed);
    Rng train_rng = derive_rng(config.master_seed, {kTrainTag});
    int start_epoch = 1;
    std::vector<Tensor> tiles;

    if (!resume_from.empty()) {
        Checkpoint ckpt = load_checkpoint(resume_from);
        apply_tensors(ckpt, g.named_params());
        apply_tensors(ckpt, g.named_buffers());
        apply_tensors(ckpt, d.named_params());
        apply_tensors(ckpt, d.named_buffers());
        opt_g = ckpt.opt_g;
        check_opt(opt_g, g.params());
        opt_d = ckpt.opt_d;
        check_opt(opt_d, d.params());
        const Tensor& z = find_tensor(ckpt, "grid.z");
        if (z.shape() != Shape{kNumClasses, config.z_dim})
            throw CheckpointError("checkpoint grid noise has shape " + shape_str(z.shape()));
        grid.z = z;
        train_rng.set_raw(ckpt.rng_state, ckpt.rng_inc);
        start_epoch = static_cast<int>(ckpt.epoch) + 1;
        // Earlier grid columns are reproducible from the snapshot checkpoints.
        for (int e : snaps) {
            if (e > static_cast<int>(ckpt.epoch)) continue;
            Checkpoint past = load_checkpoint((dir / snapshot_name(e)).string());
            GeneratorNet past_g = generator_from_checkpoint(past);
            EvalGrid past_grid{find_tensor(past, "grid.z")};
            tiles.push_back(grid_tiles(past_g, past_grid));
        }
    }

    const std::string csv_path = (dir / "loss.csv").string();
    truncate_csv(csv_path, start_epoch - 1);
    std::ofstream csv(csv_path, std::ios::app);
    if (!csv) throw IoError("cannot write " + csv_path);

    Tensor real_refs = real_reference_tiles(dataset);

    for (int epoch = start_epoch; epoch <= config.epochs; ++epoch) {
        const std::vector<Batch> batches = batch_iter(dataset, config.batch_size, epoch, config.master_seed);
        for (const Batch& b : batches) {
            float d_loss = 0.0f;
            float g_loss = 0.0f;
            try {
                d_loss = train_step_discriminator(g, d, b, opt_d, train_rng);
                g_loss = train_step_generator(g, d, static_cast<int>(b.images.dim(0)), opt_g, train_rng);
            } catch (const GradientError& err) {
                csv.flush();
                throw GradientError(std::string(err.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(b.batch_index) + ")");
            }
            char row[80];
            std::snprintf(row, sizeof row, "%d,%d,%.6f,%.6f\n", epoch, b.batch_index, d_loss, g_loss);
            csv << row;
            csv.flush();
            if (on_batch) on_batch(BatchLog{epoch, b.batch_index, d_loss, g_loss});
        }
        if (std::find(snaps.begin(), snaps.end(), epoch) != snaps.end()) {
            tiles.push_back(grid_tiles(g, grid));
            write_pgm((dir / "grid.pgm").string(), render_grid(tiles, real_refs));
            save_checkpoint((dir / snapshot_name(epoch)).string(),
                            snapshot_state(config, g, d, opt_g, opt_d, grid, train_rng, epoch));
        }
    }
}

}  // namespace pgan
