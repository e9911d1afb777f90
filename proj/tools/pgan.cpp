#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "pgan/data.hpp"
#include "pgan/errors.hpp"
#include "pgan/eval.hpp"
#include "pgan/gradcheck.hpp"
#include "pgan/phantom.hpp"
#include "pgan/training.hpp"

namespace fs = std::filesystem;

namespace {

using namespace pgan;

constexpr uint64_t kGenerateTag = 0x67656e;   // "gen"
constexpr uint64_t kEvalGenTag = 0x6576676e;  // "evgn"

std::string resolve_out(const std::string& flag_value, const char* fallback) {
    if (!flag_value.empty()) return flag_value;
    const char* env = std::getenv("PGAN_OUT_DIR");
    if (env && *env) return env;
    return fallback;
}

std::string trim_ws(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::pair<std::string, std::string>> read_flat_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config file " + path);
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    while (std::getline(in, line)) {
        const std::string text = trim_ws(line);
        if (text.empty() || text[0] == '#') continue;
        const size_t eq = text.find('=');
        const std::string key = eq == std::string::npos ? "" : trim_ws(text.substr(0, eq));
        if (key.empty()) throw ValidationError("bad config line '" + text + "' in " + path);
        pairs.emplace_back(key, trim_ws(text.substr(eq + 1)));
    }
    return pairs;
}

// Flat "key = value" files never reach subcommand options through CLI11's own
// config machinery, so splice them in as flags before parsing. Keys already on
// the command line win; keys the subcommand does not recognize are skipped.
std::vector<std::string> apply_config_file(std::vector<std::string> args, const std::vector<CLI::App*>& cmds) {
    size_t sub_at = args.size();
    const CLI::App* sub = nullptr;
    for (size_t i = 0; i < args.size() && !sub; ++i)
        for (const CLI::App* cand : cmds)
            if (args[i] == cand->get_name()) {
                sub = cand;
                sub_at = i;
                break;
            }
    if (!sub) return args;
    std::string cfg_path;
    for (size_t i = sub_at + 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) cfg_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) cfg_path = args[i].substr(9);
    }
    if (cfg_path.empty()) return args;
    std::vector<std::string> spliced(args.begin(), args.begin() + sub_at + 1);
    for (const auto& [key, value] : read_flat_config(cfg_path)) {
        if (key == "config") continue;
        const std::string flag = "--" + key;
        if (sub->get_option_no_throw(flag) == nullptr) continue;
        bool given = false;
        for (size_t i = sub_at + 1; i < args.size() && !given; ++i)
            given = args[i] == flag || args[i].rfind(flag + "=", 0) == 0;
        if (given) continue;
        spliced.push_back(flag);
        spliced.push_back(value);
    }
    spliced.insert(spliced.end(), args.begin() + sub_at + 1, args.end());
    return spliced;
}

void write_echo(const std::string& out_dir, const std::string& text) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output dir " + out_dir);
    const fs::path path = fs::path(out_dir) / "config.echo";
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

std::vector<int> parse_epoch_list(const std::string& text) {
    std::vector<int> out;
    size_t at = 0;
    for (;;) {
        const size_t comma = text.find(',', at);
        const std::string tok = comma == std::string::npos ? text.substr(at) : text.substr(at, comma - at);
        if (!tok.empty()) {
            size_t used = 0;
            int value = 0;
            try {
                value = std::stoi(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != tok.size()) throw ValidationError("bad snapshot epoch '" + tok + "'");
            out.push_back(value);
        }
        if (comma == std::string::npos) break;
        at = comma + 1;
    }
    return out;
}

const Tensor& ckpt_tensor(const Checkpoint& ckpt, const std::string& name) {
    for (const auto& [tensor_name, t] : ckpt.tensors)
        if (tensor_name == name) return t;
    throw CheckpointError("checkpoint missing tensor " + name);
}

std::pair<Tensor, std::vector<GleasonLabel>> stack_records(const std::vector<ImageRecord>& recs) {
    constexpr size_t tile = static_cast<size_t>(kCanvas) * kCanvas;
    Tensor images(Shape{static_cast<int64_t>(recs.size()), 1, kCanvas, kCanvas});
    std::vector<GleasonLabel> labels;
    labels.reserve(recs.size());
    for (size_t i = 0; i < recs.size(); ++i) {
        const std::vector<float> canvas = fit_to_canvas(recs[i]);
        std::memcpy(images.data() + i * tile, canvas.data(), tile * sizeof(float));
        labels.push_back(recs[i].label);
    }
    return {images, labels};
}

// Eval-mode samples of one class written into dst, chunked to bound memory.
void generate_class(GeneratorNet& g, const GleasonLabel& label, int n, Rng& rng, float* dst) {
    constexpr size_t tile = static_cast<size_t>(kCanvas) * kCanvas;
    int done = 0;
    while (done < n) {
        const int take = std::min(64, n - done);
        Tensor z = sample_noise(take, g.z_dim, rng);
        const std::vector<GleasonLabel> labels(static_cast<size_t>(take), label);
        Tensor imgs = forward_generator(nullptr, g, z, labels, BnMode::Eval);
        std::memcpy(dst + static_cast<size_t>(done) * tile, imgs.data(),
                    static_cast<size_t>(imgs.numel()) * sizeof(float));
        done += take;
    }
}

void run_phantom(int per_class, uint64_t seed, const std::string& out_dir) {
    std::string echo;
    echo += "n = " + std::to_string(per_class) + "\n";
    echo += "seed = " + std::to_string(seed) + "\n";
    echo += "out = " + out_dir + "\n";
    write_echo(out_dir, echo);
    const std::string manifest = generate_dataset(per_class, seed, out_dir);
    std::printf("manifest=%s\n", manifest.c_str());
}

void run_train(TrainConfig cfg, const std::string& data, const std::string& resume) {
    const std::vector<ImageRecord> recs = load_manifest(data);
    train(cfg, recs, resume, [](const BatchLog& log) {
        std::printf("epoch=%d batch=%d d_loss=%.6f g_loss=%.6f\n", log.epoch, log.batch,
                    static_cast<double>(log.d_loss), static_cast<double>(log.g_loss));
        std::fflush(stdout);
    });
    std::ofstream echo(fs::path(cfg.out_dir) / "config.echo", std::ios::app);
    echo << "data = " << data << "\n";
    if (!resume.empty()) echo << "ckpt = " << resume << "\n";
}

void run_generate(const std::string& ckpt_path, int score, int n, uint64_t seed, const std::string& out_dir) {
    constexpr size_t tile = static_cast<size_t>(kCanvas) * kCanvas;
    const GleasonLabel label = GleasonLabel::from_score(score);
    if (n < 1) throw ValidationError("n must be positive");
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    GeneratorNet g = generator_from_checkpoint(ckpt);

    std::string echo;
    echo += "ckpt = " + ckpt_path + "\n";
    echo += "score = " + std::to_string(score) + "\n";
    echo += "n = " + std::to_string(n) + "\n";
    echo += "seed = " + std::to_string(seed) + "\n";
    echo += "out = " + out_dir + "\n";
    write_echo(out_dir, echo);

    Rng rng = derive_rng(seed, {kGenerateTag});
    Tensor all(Shape{n, 1, kCanvas, kCanvas});
    generate_class(g, label, n, rng, all.data());
    for (int i = 0; i < n; ++i) {
        const float* src = all.data() + static_cast<size_t>(i) * tile;
        PgmImage img;
        img.width = kCanvas;
        img.height = kCanvas;
        img.pixels = quantize_image(std::vector<float>(src, src + tile));
        char name[48];
        std::snprintf(name, sizeof name, "gen_s%d_%04d.pgm", score, i);
        const std::string path = (fs::path(out_dir) / name).string();
        write_pgm(path, img);
        std::printf("wrote=%s\n", path.c_str());
    }
}

void run_grid(const std::vector<std::string>& ckpts, const std::string& data, const std::string& out_dir) {
    std::vector<std::pair<uint32_t, Tensor>> cols;
    for (const std::string& path : ckpts) {
        Checkpoint ckpt = load_checkpoint(path);
        GeneratorNet g = generator_from_checkpoint(ckpt);
        const EvalGrid grid{ckpt_tensor(ckpt, "grid.z").clone()};
        cols.emplace_back(ckpt.epoch, grid_tiles(g, grid));
    }
    std::stable_sort(cols.begin(), cols.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Tensor> tiles;
    tiles.reserve(cols.size());
    for (auto& [epoch, t] : cols) tiles.push_back(t);
    const Tensor refs = data.empty() ? Tensor(Shape{kNumClasses, 1, kCanvas, kCanvas}, -1.0f)
                                     : real_reference_tiles(load_manifest(data));

    std::string echo;
    for (const std::string& path : ckpts) echo += "ckpt = " + path + "\n";
    if (!data.empty()) echo += "data = " + data + "\n";
    echo += "out = " + out_dir + "\n";
    write_echo(out_dir, echo);

    const std::string path = (fs::path(out_dir) / "grid.pgm").string();
    write_pgm(path, render_grid(tiles, refs));
    std::printf("grid=%s cols=%zu\n", path.c_str(), tiles.size() + 1);
}

void run_eval(const std::vector<std::string>& ckpts, const std::string& data, int n, uint64_t seed,
              const std::string& out_dir) {
    constexpr size_t tile = static_cast<size_t>(kCanvas) * kCanvas;
    if (n < 1) throw ValidationError("n must be positive");
    const std::vector<ImageRecord> recs = load_manifest(data);
    auto [train_images, train_labels] = stack_records(recs);
    const CentroidModel model = centroid_fit(train_images, train_labels);

    std::vector<ReportRow> rows;
    for (const std::string& path : ckpts) {
        Checkpoint ckpt = load_checkpoint(path);
        GeneratorNet g = generator_from_checkpoint(ckpt);
        const EvalGrid grid{ckpt_tensor(ckpt, "grid.z").clone()};
        Tensor tiles = grid_tiles(g, grid);
        std::vector<float> energies;
        energies.reserve(kNumClasses);
        for (int r = 0; r < kNumClasses; ++r) {
            const float* src = tiles.data() + static_cast<size_t>(r) * tile;
            energies.push_back(checkerboard_energy(std::vector<float>(src, src + tile)));
        }
        std::sort(energies.begin(), energies.end());

        Rng rng = derive_rng(seed, {kEvalGenTag, ckpt.epoch});
        Tensor gen(Shape{static_cast<int64_t>(kNumClasses) * n, 1, kCanvas, kCanvas});
        std::vector<GleasonLabel> gen_labels;
        gen_labels.reserve(static_cast<size_t>(kNumClasses) * static_cast<size_t>(n));
        for (int c = 0; c < kNumClasses; ++c) {
            const GleasonLabel label = GleasonLabel::from_index(c);
            generate_class(g, label, n, rng, gen.data() + static_cast<size_t>(c) * n * tile);
            gen_labels.insert(gen_labels.end(), static_cast<size_t>(n), label);
        }

        ReportRow row;
        row.epoch = static_cast<int>(ckpt.epoch);
        row.cb_energy = energies[energies.size() / 2];
        row.acc = centroid_accuracy(model, gen, gen_labels);
        row.darkness = class_darkness(gen, gen_labels);
        rows.push_back(row);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) { return a.epoch < b.epoch; });

    std::string echo;
    for (const std::string& path : ckpts) echo += "ckpt = " + path + "\n";
    echo += "data = " + data + "\n";
    echo += "n = " + std::to_string(n) + "\n";
    echo += "seed = " + std::to_string(seed) + "\n";
    echo += "out = " + out_dir + "\n";
    write_echo(out_dir, echo);

    for (const ReportRow& row : rows)
        std::printf("epoch=%d cb_energy=%.6g acc=%.4f\n", row.epoch, static_cast<double>(row.cb_energy),
                    static_cast<double>(row.acc));
    const std::string report = (fs::path(out_dir) / "report.csv").string();
    write_report(report, rows);
    std::printf("report=%s\n", report.c_str());
}

bool run_gradcheck(uint64_t seed) {
    const std::vector<GradCheckEntry> entries = gradcheck_suite(seed);
    for (const GradCheckEntry& e : entries)
        std::printf("op=%s max_rel=%.6g\n", e.name.c_str(), static_cast<double>(e.max_rel_err));
    const bool ok = gradcheck_passed(entries);
    std::printf("passed=%d\n", ok ? 1 : 0);
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conditional DCGAN phantom toolkit"};
    app.require_subcommand(1);
    std::string cfg_file;

    auto* cmd_phantom = app.add_subcommand("phantom", "write a labeled phantom dataset");
    int ph_n = 128;
    uint64_t ph_seed = 0;
    std::string ph_out;
    cmd_phantom->add_option("--n", ph_n, "images per class");
    cmd_phantom->add_option("--seed", ph_seed, "master seed");
    cmd_phantom->add_option("--out", ph_out, "output dir ($PGAN_OUT_DIR or phantom_data)");
    cmd_phantom->add_option("--config", cfg_file, "flat key = value config file");

    auto* cmd_train = app.add_subcommand("train", "train the conditional GAN");
    TrainConfig tc;
    std::string tr_data, tr_ckpt, tr_out;
    std::string tr_snaps = "1,5,10,20,30,50,100";
    cmd_train->add_option("--epochs", tc.epochs, "training epochs");
    cmd_train->add_option("--batch-size", tc.batch_size, "batch size");
    cmd_train->add_option("--z-dim", tc.z_dim, "latent dimension");
    cmd_train->add_option("--lr", tc.lr, "Adam learning rate");
    cmd_train->add_option("--beta1", tc.beta1, "Adam beta1");
    cmd_train->add_option("--seed", tc.master_seed, "master seed");
    cmd_train->add_option("--data", tr_data, "training manifest")->required();
    cmd_train->add_option("--ckpt", tr_ckpt, "checkpoint to resume from");
    cmd_train->add_option("--out", tr_out, "output dir ($PGAN_OUT_DIR or run)");
    cmd_train->add_option("--snapshot-epochs", tr_snaps, "comma list of snapshot epochs");
    cmd_train->add_option("--config", cfg_file, "flat key = value config file");

    auto* cmd_generate = app.add_subcommand("generate", "sample images for one score from a checkpoint");
    int gen_score = 0;
    int gen_n = 16;
    uint64_t gen_seed = 0;
    std::string gen_ckpt, gen_out;
    cmd_generate->add_option("--ckpt", gen_ckpt, "checkpoint file")->required();
    cmd_generate->add_option("--score", gen_score, "Gleason score")->required();
    cmd_generate->add_option("--n", gen_n, "number of samples");
    cmd_generate->add_option("--seed", gen_seed, "sampling seed");
    cmd_generate->add_option("--out", gen_out, "output dir ($PGAN_OUT_DIR or generated)");
    cmd_generate->add_option("--config", cfg_file, "flat key = value config file");

    auto* cmd_grid = app.add_subcommand("grid", "re-emit the progress grid from checkpoints");
    std::vector<std::string> grid_ckpts;
    std::string grid_data, grid_out;
    cmd_grid->add_option("--ckpt", grid_ckpts, "checkpoint files, one column each")->required();
    cmd_grid->add_option("--data", grid_data, "manifest for the real reference column");
    cmd_grid->add_option("--out", grid_out, "output dir ($PGAN_OUT_DIR or grid_out)");
    cmd_grid->add_option("--config", cfg_file, "flat key = value config file");

    auto* cmd_eval = app.add_subcommand("eval", "score generated samples against the phantom oracle");
    std::vector<std::string> ev_ckpts;
    std::string ev_data, ev_out;
    int ev_n = 64;
    uint64_t ev_seed = 0;
    cmd_eval->add_option("--ckpt", ev_ckpts, "checkpoint files, one report row each")->required();
    cmd_eval->add_option("--data", ev_data, "manifest the centroid model is fit on")->required();
    cmd_eval->add_option("--n", ev_n, "generated samples per class");
    cmd_eval->add_option("--seed", ev_seed, "sampling seed");
    cmd_eval->add_option("--out", ev_out, "output dir ($PGAN_OUT_DIR or eval_out)");
    cmd_eval->add_option("--config", cfg_file, "flat key = value config file");

    auto* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op");
    uint64_t gc_seed = 7;
    cmd_gradcheck->add_option("--seed", gc_seed, "suite seed");
    cmd_gradcheck->add_option("--config", cfg_file, "flat key = value config file");

    const std::vector<CLI::App*> cmds{cmd_phantom, cmd_train, cmd_generate, cmd_grid, cmd_eval, cmd_gradcheck};
    std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
    try {
        args = apply_config_file(std::move(args), cmds);
    } catch (const ValidationError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    std::reverse(args.begin(), args.end());

    try {
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 1;
    }

    try {
        if (cmd_phantom->parsed()) {
            run_phantom(ph_n, ph_seed, resolve_out(ph_out, "phantom_data"));
        } else if (cmd_train->parsed()) {
            tc.snapshot_epochs = parse_epoch_list(tr_snaps);
            tc.out_dir = resolve_out(tr_out, "run");
            run_train(tc, tr_data, tr_ckpt);
        } else if (cmd_generate->parsed()) {
            run_generate(gen_ckpt, gen_score, gen_n, gen_seed, resolve_out(gen_out, "generated"));
        } else if (cmd_grid->parsed()) {
            run_grid(grid_ckpts, grid_data, resolve_out(grid_out, "grid_out"));
        } else if (cmd_eval->parsed()) {
            run_eval(ev_ckpts, ev_data, ev_n, ev_seed, resolve_out(ev_out, "eval_out"));
        } else if (cmd_gradcheck->parsed()) {
            return run_gradcheck(gc_seed) ? 0 : 2;
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
}
