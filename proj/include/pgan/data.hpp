#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgan/label.hpp"
#include "pgan/rng.hpp"
#include "pgan/tensor.hpp"

namespace pgan {

inline constexpr int kCanvas = 32;

// One ingested image at its original resolution, pixels already in [-1, 1].
struct ImageRecord {
    std::vector<float> pixels;  // row-major height x width
    int height = 0;
    int width = 0;
    GleasonLabel label;
    std::string source_id;
};

struct Batch {
    Tensor images;  // [N, 1, 32, 32], values in [-1, 1]
    std::vector<GleasonLabel> labels;
    int epoch = 0;
    int batch_index = 0;
    uint64_t rng_stream_id = 0;
};

// u8 -> x/127.5 - 1 and its rounding inverse (for emitting images back to PGM).
std::vector<float> normalize_image(const std::vector<uint8_t>& raw);
std::vector<uint8_t> quantize_image(const std::vector<float>& pixels);

// Exact pixel permutations; rotate90 is a clockwise quarter turn.
ImageRecord rotate90(const ImageRecord& rec);
ImageRecord hflip(const ImageRecord& rec);

// Uniform draw over {rot 0/90/180/270} x {flip, no flip}; exactly two rng draws.
ImageRecord augment(const ImageRecord& rec, Rng& rng);

// Bilinear resize so the longer side becomes 32, centered on a 32x32 canvas
// filled with -1. A 32x32 input is returned unchanged.
std::vector<float> fit_to_canvas(const ImageRecord& rec);

// Manifest: one "path<TAB>score" per line, '#' comments, paths relative to the
// manifest's directory. Images are loaded, validated, and normalized.
std::vector<ImageRecord> load_manifest(const std::string& manifest_path);

// Deterministic shuffled epoch: every record once, final short batch kept.
// The shuffle is a function of (master_seed, epoch); each sample's
// augmentation rng is a function of (master_seed, epoch, position).
std::vector<Batch> batch_iter(const std::vector<ImageRecord>& records, int batch_size, int epoch,
                              uint64_t master_seed);

}  // namespace pgan
