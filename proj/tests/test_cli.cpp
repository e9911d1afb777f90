#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pgan/data.hpp"
#include "pgan/pgm.hpp"

namespace fs = std::filesystem;
using namespace pgan;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
};

CmdResult run(const std::string& cmd) {
    CmdResult r;
    FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[512];
    while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string bin() { return PGAN_BIN; }

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

// Tiny dataset shared across cases that only need some manifest to train on.
std::string make_data(const fs::path& dir, int per_class, uint64_t seed) {
    const CmdResult r = run(bin() + " phantom --n " + std::to_string(per_class) + " --seed " +
                            std::to_string(seed) + " --out " + dir.string());
    REQUIRE(r.code == 0);
    return (dir / "manifest.tsv").string();
}

std::string tiny_train_flags() { return " --epochs 1 --batch-size 8 --z-dim 16 --snapshot-epochs 1"; }

}  // namespace

TEST_CASE("usage errors exit 1 and help exits 0") {
    CHECK(run(bin()).code == 1);
    CHECK(run(bin() + " frobnicate").code == 1);

    const CmdResult help = run(bin() + " --help");
    CHECK(help.code == 0);
    CHECK(contains(help.out, "phantom"));
    CHECK(contains(help.out, "train"));
    CHECK(contains(help.out, "gradcheck"));

    const CmdResult train_help = run(bin() + " train --help");
    CHECK(train_help.code == 0);
    CHECK(contains(train_help.out, "--epochs"));
    CHECK(contains(train_help.out, "--snapshot-epochs"));

    const CmdResult missing_required = run(bin() + " train --epochs 1");
    CHECK(missing_required.code == 1);
    CHECK(contains(missing_required.out, "--data"));

    const CmdResult bad_flag = run(bin() + " phantom --frobs 3");
    CHECK(bad_flag.code == 1);
}

TEST_CASE("generate rejects scores outside the label set before touching the checkpoint") {
    const CmdResult r = run(bin() + " generate --ckpt missing.bin --score 1 --n 4");
    CHECK(r.code == 1);
    CHECK(contains(r.out, "score 1 not in label set"));

    const CmdResult runtime = run(bin() + " generate --ckpt missing.bin --score 4 --n 1 --out " +
                                  (fs::temp_directory_path() / "pgan_cli_nockpt").string());
    CHECK(runtime.code == 2);
    CHECK(contains(runtime.out, "missing.bin"));
}

TEST_CASE("bad snapshot list and missing data map to the right exit codes") {
    const fs::path dir = fresh_dir("pgan_cli_codes");
    CHECK(run(bin() + " train --data x.tsv --snapshot-epochs 1,x --out " + dir.string()).code == 1);
    const CmdResult missing_data = run(bin() + " train" + tiny_train_flags() + " --data " +
                                       (dir / "absent.tsv").string() + " --out " + dir.string());
    CHECK(missing_data.code == 2);
}

TEST_CASE("phantom writes manifest, images, and echo") {
    const fs::path dir = fresh_dir("pgan_cli_phantom");
    const CmdResult r = run(bin() + " phantom --n 2 --seed 3 --out " + dir.string());
    CHECK(r.code == 0);
    CHECK(contains(r.out, "manifest="));
    CHECK(fs::exists(dir / "manifest.tsv"));
    CHECK(load_manifest((dir / "manifest.tsv").string()).size() == 18);

    const std::string echo = slurp(dir / "config.echo");
    CHECK(contains(echo, "n = 2\n"));
    CHECK(contains(echo, "seed = 3\n"));
}

TEST_CASE("gradcheck prints a per-op table and passes") {
    const CmdResult r = run(bin() + " gradcheck --seed 7");
    CHECK(r.code == 0);
    CHECK(contains(r.out, "op="));
    CHECK(contains(r.out, "max_rel="));
    CHECK(contains(r.out, "passed=1"));
}

TEST_CASE("train runs twice to byte-identical artifacts") {
    const fs::path dir = fresh_dir("pgan_cli_det");
    const std::string manifest = make_data(dir / "data", 2, 1);
    for (const char* name : {"r1", "r2"}) {
        const CmdResult r = run(bin() + " train" + tiny_train_flags() + " --seed 11 --data " + manifest +
                                " --out " + (dir / name).string());
        CHECK(r.code == 0);
        CHECK(contains(r.out, "epoch=1 batch=0 d_loss="));
        CHECK(contains(r.out, "g_loss="));
    }
    CHECK(slurp(dir / "r1" / "loss.csv") == slurp(dir / "r2" / "loss.csv"));
    CHECK(slurp(dir / "r1" / "grid.pgm") == slurp(dir / "r2" / "grid.pgm"));
}

TEST_CASE("config file fills unset flags and loses to explicit ones") {
    const fs::path dir = fresh_dir("pgan_cli_cfg");
    const std::string manifest = make_data(dir / "data", 2, 1);
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "epochs = 1\nbatch-size = 8\nz-dim = 16\nseed = 42\nsnapshot-epochs = 1\n"
            << "leaky-slope = 0.2\n# filler comment\n\n";
    }

    const CmdResult from_cfg = run(bin() + " train --config " + (dir / "run.cfg").string() + " --data " +
                                   manifest + " --out " + (dir / "a").string());
    CHECK(from_cfg.code == 0);
    const std::string echo_a = slurp(dir / "a" / "config.echo");
    CHECK(contains(echo_a, "seed = 42\n"));
    CHECK(contains(echo_a, "batch-size = 8\n"));
    CHECK(contains(echo_a, "epochs = 1\n"));

    const CmdResult flag_wins = run(bin() + " train --config " + (dir / "run.cfg").string() +
                                    " --seed 7 --data " + manifest + " --out " + (dir / "b").string());
    CHECK(flag_wins.code == 0);
    const std::string echo_b = slurp(dir / "b" / "config.echo");
    CHECK(contains(echo_b, "seed = 7\n"));
    CHECK(contains(echo_b, "batch-size = 8\n"));

    CHECK(run(bin() + " train --config " + (dir / "nope.cfg").string() + " --data " + manifest).code == 1);
}

TEST_CASE("config echo reproduces the run it came from") {
    const fs::path dir = fresh_dir("pgan_cli_echo");
    const std::string manifest = make_data(dir / "data", 2, 1);
    CHECK(run(bin() + " train" + tiny_train_flags() + " --seed 4 --data " + manifest + " --out " +
              (dir / "a").string())
              .code == 0);
    CHECK(run(bin() + " train --config " + (dir / "a" / "config.echo").string() + " --out " +
              (dir / "b").string())
              .code == 0);
    CHECK(slurp(dir / "a" / "loss.csv") == slurp(dir / "b" / "loss.csv"));
    CHECK(slurp(dir / "a" / "grid.pgm") == slurp(dir / "b" / "grid.pgm"));
}

TEST_CASE("PGAN_OUT_DIR is the fallback out dir and flags beat it") {
    const fs::path dir = fresh_dir("pgan_cli_env");
    const CmdResult env_used = run("PGAN_OUT_DIR=" + (dir / "env").string() + " " + bin() +
                                   " phantom --n 1 --seed 2");
    CHECK(env_used.code == 0);
    CHECK(fs::exists(dir / "env" / "manifest.tsv"));

    const CmdResult flag_wins = run("PGAN_OUT_DIR=" + (dir / "unused").string() + " " + bin() +
                                    " phantom --n 1 --seed 2 --out " + (dir / "flag").string());
    CHECK(flag_wins.code == 0);
    CHECK(fs::exists(dir / "flag" / "manifest.tsv"));
    CHECK(!fs::exists(dir / "unused"));
}

TEST_CASE("grid and eval rebuild reports from checkpoints") {
    const fs::path dir = fresh_dir("pgan_cli_post");
    const std::string manifest = make_data(dir / "data", 2, 1);
    const CmdResult tr = run(bin() + " train --epochs 2 --batch-size 8 --z-dim 16 --snapshot-epochs 1,2" +
                             " --seed 4 --data " + manifest + " --out " + (dir / "run").string());
    REQUIRE(tr.code == 0);
    const std::string ck1 = (dir / "run" / "ckpt_epoch0001.bin").string();
    const std::string ck2 = (dir / "run" / "ckpt_epoch0002.bin").string();
    REQUIRE(fs::exists(ck1));
    REQUIRE(fs::exists(ck2));

    const CmdResult grid = run(bin() + " grid --ckpt " + ck2 + " --ckpt " + ck1 + " --data " + manifest +
                               " --out " + (dir / "grid").string());
    CHECK(grid.code == 0);
    CHECK(contains(grid.out, "cols=3"));
    const PgmImage img = read_pgm((dir / "grid" / "grid.pgm").string());
    CHECK(img.width == 3 * 32 + 2 * 2);
    CHECK(img.height == 9 * 32 + 8 * 2);

    const CmdResult ev = run(bin() + " eval --ckpt " + ck1 + " --ckpt " + ck2 + " --data " + manifest +
                             " --n 2 --seed 3 --out " + (dir / "eval").string());
    CHECK(ev.code == 0);
    CHECK(contains(ev.out, "epoch=1 cb_energy="));
    CHECK(contains(ev.out, "epoch=2 cb_energy="));
    CHECK(contains(ev.out, "report="));
    const std::string report = slurp(dir / "eval" / "report.csv");
    CHECK(contains(report, "epoch,cb_energy,acc"));
    CHECK(contains(report, "\n1,"));
    CHECK(contains(report, "\n2,"));
}
