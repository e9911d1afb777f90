#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pgan/data.hpp"
#include "pgan/errors.hpp"
#include "pgan/phantom.hpp"
#include "pgan/training.hpp"

using namespace pgan;
namespace fs = std::filesystem;

namespace {

std::vector<ImageRecord> phantom_set(int n, uint64_t seed) {
    std::vector<ImageRecord> recs;
    recs.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        recs.push_back(
            generate_phantom(GleasonLabel::from_index(i % kNumClasses), derive_seed(seed, {static_cast<uint64_t>(i)})));
    return recs;
}

std::vector<std::vector<float>> copy_params(std::vector<Tensor> params) {
    std::vector<std::vector<float>> out;
    out.reserve(params.size());
    for (Tensor& p : params) out.push_back(p.vec());
    return out;
}

bool same_params(const std::vector<std::vector<float>>& before, std::vector<Tensor> params) {
    if (before.size() != params.size()) return false;
    for (size_t i = 0; i < params.size(); ++i) {
        if (before[i].size() != static_cast<size_t>(params[i].numel())) return false;
        if (std::memcmp(before[i].data(), params[i].data(), before[i].size() * sizeof(float)) != 0) return false;
    }
    return true;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir;
}

const Tensor& tensor_named(const Checkpoint& ckpt, const std::string& name) {
    for (const auto& [tensor_name, t] : ckpt.tensors)
        if (tensor_name == name) return t;
    REQUIRE_MESSAGE(false, "tensor not in checkpoint: ", name);
    return ckpt.tensors.front().second;
}

Checkpoint tiny_checkpoint() {
    Checkpoint c;
    c.version = 1;
    c.config_echo = "alpha = 1\nbeta = two\n";
    c.epoch = 7;
    c.tensors.emplace_back("a.w", Tensor::of({1.5f, -2.25f, 3.0f, 0.0f, 1e-7f, -0.0f}, {2, 3}));
    c.tensors.emplace_back("b", Tensor::of({4.0f}, {1}));
    c.opt_g.t = 42;
    c.opt_g.lr = 0.001f;
    c.opt_g.beta1 = 0.5f;
    c.opt_g.beta2 = 0.999f;
    c.opt_g.eps = 1e-8f;
    c.opt_g.m = {{0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f}, {7.0f}};
    c.opt_g.v = {{1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f}, {8.0f}};
    c.opt_d.t = 3;
    c.opt_d.lr = 0.01f;
    c.opt_d.beta1 = 0.9f;
    c.opt_d.beta2 = 0.99f;
    c.opt_d.eps = 1e-7f;
    c.opt_d.m = {{-1.0f}};
    c.opt_d.v = {{2.5f}};
    c.rng_state = 0xdeadbeefcafef00dULL;
    c.rng_inc = 0x12345ULL;
    return c;
}

}  // namespace

TEST_CASE("sample_noise shape, support, mean, determinism") {
    Rng rng(314);
    Tensor z = sample_noise(64, 100, rng);
    REQUIRE(z.shape() == Shape{64, 100});

    Rng big(271);
    Tensor lots = sample_noise(1000, 1000, big);
    double acc = 0.0;
    float lo = 1.0f, hi = -1.0f;
    for (int64_t i = 0; i < lots.numel(); ++i) {
        float v = lots.data()[i];
        acc += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double mean = acc / static_cast<double>(lots.numel());
    CHECK(std::abs(mean) < 0.005);
    CHECK(lo >= -1.0f);
    CHECK(hi < 1.0f);

    Rng a(5), b(5);
    Tensor za = sample_noise(7, 11, a);
    Tensor zb = sample_noise(7, 11, b);
    CHECK(std::memcmp(za.data(), zb.data(), static_cast<size_t>(za.numel()) * sizeof(float)) == 0);

    Rng c(6);
    CHECK_THROWS_AS(sample_noise(0, 10, c), ValidationError);
    CHECK_THROWS_AS(sample_noise(10, 0, c), ValidationError);
}

TEST_CASE("train config validation and echo") {
    TrainConfig cfg;
    cfg.out_dir = "somewhere";
    CHECK_NOTHROW(cfg.validate());
    std::string echo = cfg.echo();
    CHECK(echo.find("epochs = 100\n") != std::string::npos);
    CHECK(echo.find("batch-size = 64\n") != std::string::npos);
    CHECK(echo.find("z-dim = 100\n") != std::string::npos);
    CHECK(echo.find("lr = 0.0002\n") != std::string::npos);
    CHECK(echo.find("beta1 = 0.5\n") != std::string::npos);
    CHECK(echo.find("leaky-slope = 0.2\n") != std::string::npos);
    CHECK(echo.find("snapshot-epochs = 1,5,10,20,30,50,100\n") != std::string::npos);

    TrainConfig bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.batch_size = -1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.lr = 0.0f;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.beta1 = 1.0f;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.epochs = 10;
    bad.snapshot_epochs = {1, 11};
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.out_dir.clear();
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("step losses at a coin-flip discriminator match the analytic value") {
    std::vector<ImageRecord> recs = phantom_set(16, 21);
    Batch batch = batch_iter(recs, 16, 1, 77)[0];

    Rng gi = derive_rng(8, {1});
    Rng di = derive_rng(8, {2});
    GeneratorNet g = build_generator(gi, 32);
    DiscriminatorNet d = build_discriminator(di);
    // Zeroing the head makes D output exactly sigmoid(0) = 0.5 everywhere.
    std::fill(d.fc_w.vec().begin(), d.fc_w.vec().end(), 0.0f);
    std::fill(d.fc_b.vec().begin(), d.fc_b.vec().end(), 0.0f);

    AdamState opt_d = AdamState::make(d.params());
    Rng step_rng(99);
    float d_loss = train_step_discriminator(g, d, batch, opt_d, step_rng);
    CHECK(d_loss == doctest::Approx(2.0 * 0.6931472).epsilon(1e-4));

    DiscriminatorNet d2 = build_discriminator(di);
    std::fill(d2.fc_w.vec().begin(), d2.fc_w.vec().end(), 0.0f);
    std::fill(d2.fc_b.vec().begin(), d2.fc_b.vec().end(), 0.0f);
    AdamState opt_g = AdamState::make(g.params());
    float g_loss = train_step_generator(g, d2, 16, opt_g, step_rng);
    CHECK(g_loss == doctest::Approx(0.6931472).epsilon(1e-4));
}

TEST_CASE("alternation discipline: each step touches only its own net") {
    std::vector<ImageRecord> recs = phantom_set(16, 22);
    Batch batch = batch_iter(recs, 16, 1, 78)[0];

    Rng gi = derive_rng(9, {1});
    Rng di = derive_rng(9, {2});
    GeneratorNet g = build_generator(gi, 32);
    DiscriminatorNet d = build_discriminator(di);
    AdamState opt_g = AdamState::make(g.params());
    AdamState opt_d = AdamState::make(d.params());
    Rng step_rng(123);

    auto g_before = copy_params(g.params());
    auto d_before = copy_params(d.params());
    float d_loss = train_step_discriminator(g, d, batch, opt_d, step_rng);
    CHECK(std::isfinite(d_loss));
    CHECK(d_loss >= 0.0f);
    CHECK(same_params(g_before, g.params()));
    CHECK_FALSE(same_params(d_before, d.params()));

    auto d_after = copy_params(d.params());
    float g_loss = train_step_generator(g, d, 16, opt_g, step_rng);
    CHECK(std::isfinite(g_loss));
    CHECK(g_loss >= 0.0f);
    CHECK(same_params(d_after, d.params()));
    CHECK_FALSE(same_params(g_before, g.params()));
}

TEST_CASE("one-epoch run emits csv rows, checkpoint, grid, and config echo") {
    fs::path dir = fresh_dir("pgan_train_run");
    std::vector<ImageRecord> recs = phantom_set(130, 23);

    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 64;
    cfg.z_dim = 24;
    cfg.master_seed = 404;
    cfg.snapshot_epochs = {1};
    cfg.out_dir = dir.string();

    int calls = 0;
    train(cfg, recs, "", [&](const BatchLog& log) {
        CHECK(log.epoch == 1);
        CHECK(log.batch == calls);
        ++calls;
    });
    CHECK(calls == 3);

    std::ifstream csv(dir / "loss.csv");
    REQUIRE(bool(csv));
    std::string line;
    REQUIRE(std::getline(csv, line));
    CHECK(line == "epoch,batch,d_loss,g_loss");
    int rows = 0;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        int epoch = 0, batch = 0;
        float dl = -1.0f, gl = -1.0f;
        REQUIRE(std::sscanf(line.c_str(), "%d,%d,%f,%f", &epoch, &batch, &dl, &gl) == 4);
        CHECK(epoch == 1);
        CHECK(batch == rows);
        CHECK(std::isfinite(dl));
        CHECK(std::isfinite(gl));
        CHECK(dl >= 0.0f);
        CHECK(gl >= 0.0f);
        ++rows;
    }
    CHECK(rows == 3);

    std::string echo = slurp(dir / "config.echo");
    CHECK(echo == cfg.echo());

    Checkpoint ckpt = load_checkpoint((dir / "ckpt_epoch0001.bin").string());
    CHECK(ckpt.epoch == 1);
    CHECK(ckpt.config_echo == cfg.echo());
    CHECK(ckpt.opt_g.t == 3);
    CHECK(ckpt.opt_d.t == 3);

    // 2 columns (snapshot + real reference), 9 rows, 2 px gaps.
    PgmImage grid = read_pgm((dir / "grid.pgm").string());
    CHECK(grid.width == 2 * 32 + 2);
    CHECK(grid.height == 9 * 32 + 8 * 2);
    for (int y = 0; y < grid.height; ++y)
        for (int x = 32; x < 34; ++x) CHECK(grid.pixels[static_cast<size_t>(y) * grid.width + x] == 255);

    // Column 0 regenerates bitwise from the stored generator and noise.
    GeneratorNet g = generator_from_checkpoint(ckpt);
    EvalGrid eval_grid{tensor_named(ckpt, "grid.z").clone()};
    Tensor tiles = grid_tiles(g, eval_grid);
    for (int row = 0; row < kNumClasses; ++row) {
        const float* src = tiles.data() + static_cast<size_t>(row) * 1024;
        std::vector<uint8_t> expect = quantize_image(std::vector<float>(src, src + 1024));
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                CHECK(grid.pixels[static_cast<size_t>(row * 34 + y) * grid.width + x] == expect[y * 32 + x]);
    }

    // Column 1 is the first dataset record of each class, fit to the canvas.
    for (int row = 0; row < kNumClasses; ++row) {
        std::vector<uint8_t> expect = quantize_image(fit_to_canvas(recs[static_cast<size_t>(row)]));
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                CHECK(grid.pixels[static_cast<size_t>(row * 34 + y) * grid.width + 34 + x] == expect[y * 32 + x]);
    }

    fs::remove_all(dir);
}

TEST_CASE("resume from a checkpoint matches the uninterrupted run byte for byte") {
    fs::path dir = fresh_dir("pgan_train_resume");
    std::vector<ImageRecord> recs = phantom_set(48, 24);

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.z_dim = 16;
    cfg.master_seed = 515;
    cfg.snapshot_epochs = {1, 2};
    cfg.out_dir = dir.string();

    train(cfg, recs);
    std::string full_csv = slurp(dir / "loss.csv");
    std::string full_grid = slurp(dir / "grid.pgm");
    std::string full_ckpt2 = slurp(dir / "ckpt_epoch0002.bin");
    fs::remove_all(dir);

    TrainConfig first = cfg;
    first.epochs = 1;
    first.snapshot_epochs = {1};
    train(first, recs);
    REQUIRE(fs::exists(dir / "ckpt_epoch0001.bin"));
    CHECK_FALSE(fs::exists(dir / "ckpt_epoch0002.bin"));

    train(cfg, recs, (dir / "ckpt_epoch0001.bin").string());
    CHECK(slurp(dir / "loss.csv") == full_csv);
    CHECK(slurp(dir / "grid.pgm") == full_grid);
    CHECK(slurp(dir / "ckpt_epoch0002.bin") == full_ckpt2);

    // The fixed grid noise never changes between snapshots.
    Checkpoint c1 = load_checkpoint((dir / "ckpt_epoch0001.bin").string());
    Checkpoint c2 = load_checkpoint((dir / "ckpt_epoch0002.bin").string());
    const Tensor& z1 = tensor_named(c1, "grid.z");
    const Tensor& z2 = tensor_named(c2, "grid.z");
    REQUIRE(z1.shape() == z2.shape());
    CHECK(std::memcmp(z1.data(), z2.data(), static_cast<size_t>(z1.numel()) * sizeof(float)) == 0);

    // Re-running the full config from scratch reproduces everything again.
    fs::remove_all(dir);
    train(cfg, recs);
    CHECK(slurp(dir / "loss.csv") == full_csv);
    CHECK(slurp(dir / "grid.pgm") == full_grid);
    CHECK(slurp(dir / "ckpt_epoch0002.bin") == full_ckpt2);

    fs::remove_all(dir);
}

TEST_CASE("checkpoint round-trip is byte-identical and errors are distinct") {
    fs::path dir = fresh_dir("pgan_ckpt_io");
    fs::create_directories(dir);
    fs::path a = dir / "a.bin";
    fs::path b = dir / "b.bin";

    Checkpoint c = tiny_checkpoint();
    save_checkpoint(a.string(), c);
    std::string bytes_a = slurp(a);
    CHECK(bytes_a.substr(0, 4) == "PGAN");
    CHECK_FALSE(fs::exists(dir / "a.bin.tmp"));

    Checkpoint back = load_checkpoint(a.string());
    CHECK(back.version == 1);
    CHECK(back.epoch == 7);
    CHECK(back.config_echo == c.config_echo);
    REQUIRE(back.tensors.size() == 2);
    CHECK(back.tensors[0].first == "a.w");
    CHECK(back.tensors[0].second.shape() == Shape{2, 3});
    CHECK(std::memcmp(back.tensors[0].second.data(), c.tensors[0].second.data(), 6 * sizeof(float)) == 0);
    CHECK(back.opt_g.t == 42);
    CHECK(back.opt_g.m[1][0] == 7.0f);
    CHECK(back.opt_d.beta2 == 0.99f);
    CHECK(back.rng_state == c.rng_state);
    CHECK(back.rng_inc == c.rng_inc);

    save_checkpoint(b.string(), back);
    CHECK(slurp(b) == bytes_a);

    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "missing.bin").string()), doctest::Contains("cannot read"),
                         IoError);

    std::string corrupt = bytes_a;
    corrupt[0] = 'X';
    std::ofstream(dir / "magic.bin", std::ios::binary) << corrupt;
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "magic.bin").string()), doctest::Contains("bad magic"),
                         BadMagicError);

    corrupt = bytes_a;
    corrupt[4] = 2;
    std::ofstream(dir / "version.bin", std::ios::binary) << corrupt;
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "version.bin").string()),
                         doctest::Contains("unsupported checkpoint version 2"), VersionError);

    std::ofstream(dir / "short.bin", std::ios::binary) << bytes_a.substr(0, bytes_a.size() / 2);
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "short.bin").string()), doctest::Contains("truncated"),
                         TruncatedError);

    std::ofstream(dir / "stub.bin", std::ios::binary) << "PG";
    CHECK_THROWS_AS(load_checkpoint((dir / "stub.bin").string()), TruncatedError);

    fs::remove_all(dir);
}

TEST_CASE("generation after load is bitwise equal to before save") {
    fs::path dir = fresh_dir("pgan_ckpt_forward");
    fs::create_directories(dir);

    Rng gi = derive_rng(99, {1});
    Rng di = derive_rng(99, {2});
    GeneratorNet g = build_generator(gi, 16);
    DiscriminatorNet d = build_discriminator(di);
    EvalGrid grid = make_eval_grid(16, 99);

    // Move batch-norm running stats off their initial values first.
    std::vector<GleasonLabel> labels;
    for (int i = 0; i < kNumClasses; ++i) labels.push_back(GleasonLabel::from_index(i));
    Rng warm(4);
    Tensor warm_images = forward_generator(nullptr, g, sample_noise(kNumClasses, 16, warm), labels, BnMode::Train);
    forward_discriminator(nullptr, d, warm_images, labels, BnMode::Train);

    Tensor tiles_before = grid_tiles(g, grid);
    Tensor probs_before = forward_discriminator(nullptr, d, tiles_before, labels, BnMode::Eval);

    Checkpoint c;
    c.config_echo = "";
    c.epoch = 1;
    for (const auto& nt : g.named_params()) c.tensors.push_back(nt);
    for (const auto& nt : g.named_buffers()) c.tensors.push_back(nt);
    for (const auto& nt : d.named_params()) c.tensors.push_back(nt);
    for (const auto& nt : d.named_buffers()) c.tensors.push_back(nt);
    c.tensors.emplace_back("grid.z", grid.z);
    c.opt_g = AdamState::make(g.params());
    c.opt_d = AdamState::make(d.params());
    fs::path path = dir / "state.bin";
    save_checkpoint(path.string(), c);

    Checkpoint loaded = load_checkpoint(path.string());
    GeneratorNet g2 = generator_from_checkpoint(loaded);
    DiscriminatorNet d2 = discriminator_from_checkpoint(loaded);
    EvalGrid grid2{tensor_named(loaded, "grid.z").clone()};
    Tensor tiles_after = grid_tiles(g2, grid2);
    Tensor probs_after = forward_discriminator(nullptr, d2, tiles_after, labels, BnMode::Eval);

    CHECK(std::memcmp(tiles_before.data(), tiles_after.data(),
                      static_cast<size_t>(tiles_before.numel()) * sizeof(float)) == 0);
    CHECK(std::memcmp(probs_before.data(), probs_after.data(),
                      static_cast<size_t>(probs_before.numel()) * sizeof(float)) == 0);

    fs::remove_all(dir);
}

TEST_CASE("exploding optimizer aborts with an epoch and batch diagnostic") {
    fs::path dir = fresh_dir("pgan_train_nan");
    std::vector<ImageRecord> recs = phantom_set(16, 25);

    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.z_dim = 16;
    cfg.lr = 1e25f;
    cfg.master_seed = 616;
    cfg.snapshot_epochs = {};
    cfg.out_dir = dir.string();

    CHECK_THROWS_WITH_AS(train(cfg, recs), doctest::Contains("epoch 1"), GradientError);
    CHECK(fs::exists(dir / "loss.csv"));  // partial log kept for post-mortem
    fs::remove_all(dir);
}

TEST_CASE("render_grid validates tile stacks") {
    Tensor good(Shape{kNumClasses, 1, 32, 32}, -1.0f);
    Tensor bad(Shape{kNumClasses, 1, 16, 16}, 0.0f);
    CHECK_THROWS_AS(render_grid({bad}, good), ShapeError);
    CHECK_THROWS_AS(render_grid({good}, bad), ShapeError);

    Tensor bright(Shape{kNumClasses, 1, 32, 32}, 1.0f);
    PgmImage img = render_grid({good}, bright);
    CHECK(img.width == 66);
    CHECK(img.height == 304);
    CHECK(img.pixels[0] == 0);                        // -1 maps to 0
    CHECK(img.pixels[34] == 255);                     // real-ref column, +1 maps to 255
    CHECK(img.pixels[static_cast<size_t>(32) * 66] == 255);  // gap row
}

TEST_CASE("real reference tiles take the first record per class, blank when absent") {
    std::vector<ImageRecord> recs;
    recs.push_back(generate_phantom(GleasonLabel::from_score(2), 100));
    recs.push_back(generate_phantom(GleasonLabel::from_score(0), 101));
    recs.push_back(generate_phantom(GleasonLabel::from_score(2), 102));

    Tensor refs = real_reference_tiles(recs);
    REQUIRE(refs.shape() == Shape{kNumClasses, 1, 32, 32});

    std::vector<float> class0 = fit_to_canvas(recs[1]);
    std::vector<float> class1 = fit_to_canvas(recs[0]);
    CHECK(std::memcmp(refs.data(), class0.data(), 1024 * sizeof(float)) == 0);
    CHECK(std::memcmp(refs.data() + 1024, class1.data(), 1024 * sizeof(float)) == 0);
    for (int c = 2; c < kNumClasses; ++c)
        for (int i = 0; i < 1024; ++i) CHECK(refs.data()[c * 1024 + i] == -1.0f);
}
