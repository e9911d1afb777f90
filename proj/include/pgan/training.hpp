#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pgan/data.hpp"
#include "pgan/nets.hpp"
#include "pgan/optim.hpp"
#include "pgan/pgm.hpp"

namespace pgan {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 64;
    int z_dim = 100;
    float lr = 2e-4f;
    float beta1 = 0.5f;
    uint64_t master_seed = 0;
    std::vector<int> snapshot_epochs = {1, 5, 10, 20, 30, 50, 100};
    std::string out_dir = "run";

    void validate() const;
    std::string echo() const;  // flat "key = value" lines, one per knob
};

// Fixed latent rows for progress grids: z is [9, z_dim], row r = class index r.
// Sampled once per run and never resampled.
struct EvalGrid {
    Tensor z;
};

EvalGrid make_eval_grid(int z_dim, uint64_t master_seed);

// [n, z_dim] of i.i.d. Uniform(-1, 1).
Tensor sample_noise(int n, int z_dim, Rng& rng);

// One Adam step on D: real batch toward 1, freshly generated fakes (uniform
// labels) toward 0. G parameters stay bitwise untouched.
float train_step_discriminator(GeneratorNet& g, DiscriminatorNet& d, const Batch& batch, AdamState& opt_d, Rng& rng);

// One non-saturating Adam step on G: push D(G(z, y), y) toward 1 for uniform
// labels y. D parameters stay bitwise untouched.
float train_step_generator(GeneratorNet& g, DiscriminatorNet& d, int batch_size, AdamState& opt_g, Rng& rng);

// Eval-mode generator output for the grid rows; [9, 1, 32, 32].
Tensor grid_tiles(GeneratorNet& g, const EvalGrid& grid);

// First record of each class, fit to the canvas; [9, 1, 32, 32]. Classes
// absent from the dataset give a blank (-1) tile.
Tensor real_reference_tiles(const std::vector<ImageRecord>& dataset);

// 9 rows x (one column per snapshot + trailing real-reference column) with
// 2 px white gaps; tile bytes are round((x + 1) * 127.5).
PgmImage render_grid(const std::vector<Tensor>& snapshot_tiles, const Tensor& real_refs);

// Everything needed to continue a run bit-for-bit.
struct Checkpoint {
    uint32_t version = 1;
    std::string config_echo;
    uint32_t epoch = 0;
    NamedTensors tensors;  // G/D params, batch-norm stats, grid noise "grid.z"
    AdamState opt_g, opt_d;
    uint64_t rng_state = 0;
    uint64_t rng_inc = 0;
};

// Little-endian binary; the write goes to a temp file first, then renames.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Rebuild nets from a checkpoint's named tensors (shapes included).
GeneratorNet generator_from_checkpoint(const Checkpoint& ckpt);
DiscriminatorNet discriminator_from_checkpoint(const Checkpoint& ckpt);

struct BatchLog {
    int epoch = 0;
    int batch = 0;
    float d_loss = 0.0f;
    float g_loss = 0.0f;
};
using ProgressFn = std::function<void(const BatchLog&)>;

// The full run: per batch one D step then one G step; per snapshot epoch a
// cumulative progress grid plus a checkpoint; every batch appends a loss CSV
// row. resume_from continues a checkpointed run through the same schedule.
void train(const TrainConfig& config, const std::vector<ImageRecord>& dataset, const std::string& resume_from = "",
           const ProgressFn& on_batch = nullptr);

}  // namespace pgan
