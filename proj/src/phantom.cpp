#include "pgan/phantom.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pgan/errors.hpp"
#include "pgan/pgm.hpp"
#include "pgan/rng.hpp"

namespace pgan {
namespace {

constexpr uint64_t kPhantomTag = 0x7068616e;  // "phan"
constexpr float kBackground = -0.9f;
constexpr float kNoiseSigma = 0.05f;

struct Disc {
    float cx, cy, r;
};

}  // namespace

ImageRecord generate_phantom(GleasonLabel label, uint64_t seed) {
    Rng rng = derive_rng(seed, {kPhantomTag, static_cast<uint64_t>(label.score)});

    const float cx = 15.5f + rng.uniform(-3.0f, 3.0f);
    const float cy = 15.5f + rng.uniform(-3.0f, 3.0f);
    // Gland geometry and brightness both encode the class, staying inside
    // the 8..14 px and 0.3..0.6 bands. A pixel-space centroid is nearly
    // linear in the image, so per-image size variance would bury any in-band
    // intensity ladder; instead the class picks a (width, height) cell from a
    // 3x3 grid of well-separated semi-axis bands. Width and height survive
    // the center jitter (both edges move together), so all nine classes stay
    // separable, not just the lesioned ones. Higher scores get smaller,
    // darker glands, so the central-crop darkness statistic falls with score.
    const int inv = kNumClasses - 1 - label.class_index;
    const float ax = rng.uniform(0.0f, 0.6f) + 8.0f + 2.7f * static_cast<float>(inv / 3);
    const float ay = rng.uniform(0.0f, 0.6f) + 8.0f + 2.7f * static_cast<float>(inv % 3);
    const float base = 0.59f - 0.035f * static_cast<float>(label.class_index) + rng.uniform(-0.01f, 0.01f);

    const int lesion_count = label.score >= 6 ? label.score - 5 : 0;
    const float depression = 0.4f + 0.05f * static_cast<float>(label.score - 6);
    std::vector<Disc> lesions;
    for (int l = 0; l < lesion_count; ++l) {
        const float r = rng.uniform(2.0f, 4.0f);
        // rejection-sample the center inside the ellipse shrunk by r, so the
        // whole disc stays within the gland
        const float sx = ax - r, sy = ay - r;
        float px, py;
        do {
            px = rng.uniform(-sx, sx);
            py = rng.uniform(-sy, sy);
        } while ((px / sx) * (px / sx) + (py / sy) * (py / sy) > 1.0f);
        lesions.push_back({cx + px, cy + py, r});
    }

    ImageRecord rec;
    rec.height = kCanvas;
    rec.width = kCanvas;
    rec.label = label;
    rec.source_id = "phantom:s" + std::to_string(label.score) + ":" + std::to_string(seed);
    rec.pixels.resize(static_cast<size_t>(kCanvas) * kCanvas);
    for (int y = 0; y < kCanvas; ++y) {
        for (int x = 0; x < kCanvas; ++x) {
            const float ex = (static_cast<float>(x) - cx) / ax;
            const float ey = (static_cast<float>(y) - cy) / ay;
            float v;
            if (ex * ex + ey * ey <= 1.0f) {
                v = base;
                for (const Disc& d : lesions) {
                    const float dx = static_cast<float>(x) - d.cx;
                    const float dy = static_cast<float>(y) - d.cy;
                    if (dx * dx + dy * dy <= d.r * d.r) {
                        v = base - depression;
                        break;
                    }
                }
            } else {
                v = kBackground + rng.normal(0.0f, kNoiseSigma);
            }
            rec.pixels[static_cast<size_t>(y) * kCanvas + x] = std::clamp(v, -1.0f, 1.0f);
        }
    }
    return rec;
}

std::string generate_dataset(int per_class, uint64_t master_seed, const std::string& out_dir) {
    if (per_class < 1) throw ValidationError("per_class must be >= 1");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create directory " + out_dir);

    const fs::path manifest_path = fs::path(out_dir) / "manifest.tsv";
    std::ofstream manifest(manifest_path, std::ios::trunc);
    if (!manifest) throw IoError("cannot write " + manifest_path.string());
    manifest << "# phantom dataset: " << per_class << " per class, seed " << master_seed << "\n";

    for (int score : kScores) {
        const GleasonLabel label = GleasonLabel::from_score(score);
        for (int i = 0; i < per_class; ++i) {
            const uint64_t seed =
                derive_seed(master_seed, {kPhantomTag, static_cast<uint64_t>(score), static_cast<uint64_t>(i)});
            const ImageRecord rec = generate_phantom(label, seed);
            char name[32];
            std::snprintf(name, sizeof(name), "gleason%d_%04d.pgm", score, i);
            PgmImage img;
            img.width = kCanvas;
            img.height = kCanvas;
            img.pixels = quantize_image(rec.pixels);
            write_pgm((fs::path(out_dir) / name).string(), img);
            manifest << name << "\t" << score << "\n";
        }
    }
    manifest.close();
    if (!manifest) throw IoError("write failed: " + manifest_path.string());
    return manifest_path.string();
}

}  // namespace pgan
