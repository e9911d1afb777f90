#include "pgan/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "pgan/errors.hpp"
#include "pgan/pgm.hpp"

namespace pgan {
namespace {

constexpr uint64_t kShuffleTag = 0x736866;  // "shf"
constexpr uint64_t kAugmentTag = 0x617567;  // "aug"

void check_record_dims(const ImageRecord& rec, int lo, int hi) {
    if (rec.height < lo || rec.height > hi || rec.width < lo || rec.width > hi)
        throw ValidationError("image is " + std::to_string(rec.height) + "x" + std::to_string(rec.width) +
                              ", accepted range is " + std::to_string(lo) + ".." + std::to_string(hi));
    if (rec.pixels.size() != static_cast<size_t>(rec.height) * static_cast<size_t>(rec.width))
        throw ValidationError("pixel count does not match image dimensions");
}

// Lerp-form bilinear with pixel-center alignment; clamped edges and the
// a + f*(b-a) form keep constant regions exactly constant.
std::vector<float> resize_bilinear(const float* src, int h, int w, int oh, int ow) {
    std::vector<float> dst(static_cast<size_t>(oh) * static_cast<size_t>(ow));
    for (int oy = 0; oy < oh; ++oy) {
        const double sy = (oy + 0.5) * h / oh - 0.5;
        const int y0 = static_cast<int>(std::floor(sy));
        const float fy = static_cast<float>(sy - y0);
        const int ya = std::clamp(y0, 0, h - 1);
        const int yb = std::clamp(y0 + 1, 0, h - 1);
        for (int ox = 0; ox < ow; ++ox) {
            const double sx = (ox + 0.5) * w / ow - 0.5;
            const int x0 = static_cast<int>(std::floor(sx));
            const float fx = static_cast<float>(sx - x0);
            const int xa = std::clamp(x0, 0, w - 1);
            const int xb = std::clamp(x0 + 1, 0, w - 1);
            const float top = src[ya * w + xa] + fx * (src[ya * w + xb] - src[ya * w + xa]);
            const float bot = src[yb * w + xa] + fx * (src[yb * w + xb] - src[yb * w + xa]);
            dst[static_cast<size_t>(oy) * ow + ox] = top + fy * (bot - top);
        }
    }
    return dst;
}

}  // namespace

std::vector<float> normalize_image(const std::vector<uint8_t>& raw) {
    std::vector<float> out(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(raw[i]) / 127.5f - 1.0f;
    return out;
}

std::vector<uint8_t> quantize_image(const std::vector<float>& pixels) {
    std::vector<uint8_t> out(pixels.size());
    for (size_t i = 0; i < pixels.size(); ++i) {
        const float v = (std::clamp(pixels[i], -1.0f, 1.0f) + 1.0f) * 127.5f;
        out[i] = static_cast<uint8_t>(std::lround(v));
    }
    return out;
}

ImageRecord rotate90(const ImageRecord& rec) {
    check_record_dims(rec, 1, 1 << 15);
    ImageRecord out;
    out.height = rec.width;
    out.width = rec.height;
    out.label = rec.label;
    out.source_id = rec.source_id;
    out.pixels.resize(rec.pixels.size());
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.pixels[static_cast<size_t>(y) * out.width + x] =
                rec.pixels[static_cast<size_t>(rec.height - 1 - x) * rec.width + y];
    return out;
}

ImageRecord hflip(const ImageRecord& rec) {
    check_record_dims(rec, 1, 1 << 15);
    ImageRecord out = rec;
    for (int y = 0; y < rec.height; ++y)
        for (int x = 0; x < rec.width; ++x)
            out.pixels[static_cast<size_t>(y) * rec.width + x] =
                rec.pixels[static_cast<size_t>(y) * rec.width + (rec.width - 1 - x)];
    return out;
}

ImageRecord augment(const ImageRecord& rec, Rng& rng) {
    const uint32_t quarter_turns = rng.uniform_int(4);
    const uint32_t flip = rng.uniform_int(2);
    ImageRecord out = rec;
    for (uint32_t k = 0; k < quarter_turns; ++k) out = rotate90(out);
    if (flip) out = hflip(out);
    return out;
}

std::vector<float> fit_to_canvas(const ImageRecord& rec) {
    check_record_dims(rec, 1, 64);
    if (rec.height == kCanvas && rec.width == kCanvas) return rec.pixels;

    const int longer = std::max(rec.height, rec.width);
    const int oh = std::max(1, static_cast<int>(std::lround(static_cast<double>(rec.height) * kCanvas / longer)));
    const int ow = std::max(1, static_cast<int>(std::lround(static_cast<double>(rec.width) * kCanvas / longer)));
    std::vector<float> resized = resize_bilinear(rec.pixels.data(), rec.height, rec.width, oh, ow);

    std::vector<float> canvas(static_cast<size_t>(kCanvas) * kCanvas, -1.0f);
    const int y0 = (kCanvas - oh) / 2;
    const int x0 = (kCanvas - ow) / 2;
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            canvas[static_cast<size_t>(y0 + y) * kCanvas + (x0 + x)] =
                std::clamp(resized[static_cast<size_t>(y) * ow + x], -1.0f, 1.0f);
    return canvas;
}

std::vector<ImageRecord> load_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest " + manifest_path);
    const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();

    std::vector<ImageRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto at = [&](const std::string& msg) {
            return ValidationError("manifest line " + std::to_string(lineno) + ": " + msg);
        };

        const size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
            throw at("expected \"path<TAB>score\"");
        const std::string rel = line.substr(0, tab);
        const std::string score_text = line.substr(tab + 1);
        int score = 0;
        const auto [end, ec] = std::from_chars(score_text.data(), score_text.data() + score_text.size(), score);
        if (ec != std::errc() || end != score_text.data() + score_text.size())
            throw at("bad score \"" + score_text + "\"");

        ImageRecord rec;
        try {
            rec.label = GleasonLabel::from_score(score);
        } catch (const ValidationError& e) {
            throw at(e.what());
        }
        const PgmImage img = read_pgm((base / rel).string());
        rec.height = img.height;
        rec.width = img.width;
        rec.pixels = normalize_image(img.pixels);
        rec.source_id = rel;
        try {
            check_record_dims(rec, 10, 64);
        } catch (const ValidationError& e) {
            throw at(rel + ": " + e.what());
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<Batch> batch_iter(const std::vector<ImageRecord>& records, int batch_size, int epoch,
                              uint64_t master_seed) {
    if (records.empty()) throw ValidationError("batch_iter: no records");
    if (batch_size < 1) throw ValidationError("batch_iter: batch size must be positive");

    const int64_t n = static_cast<int64_t>(records.size());
    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng shuffle_rng = derive_rng(master_seed, {kShuffleTag, static_cast<uint64_t>(epoch)});
    for (int64_t i = n - 1; i > 0; --i)
        std::swap(perm[static_cast<size_t>(i)], perm[shuffle_rng.uniform_int(static_cast<uint32_t>(i + 1))]);

    std::vector<Batch> out;
    constexpr int64_t kPixels = kCanvas * kCanvas;
    for (int64_t start = 0; start < n; start += batch_size) {
        const int64_t count = std::min<int64_t>(batch_size, n - start);
        Batch b;
        b.images = Tensor(Shape{count, 1, kCanvas, kCanvas});
        b.epoch = epoch;
        b.batch_index = static_cast<int>(start / batch_size);
        b.rng_stream_id = derive_seed(master_seed, {kShuffleTag, static_cast<uint64_t>(epoch)});
        for (int64_t i = 0; i < count; ++i) {
            const int64_t position = start + i;
            const ImageRecord& rec = records[static_cast<size_t>(perm[static_cast<size_t>(position)])];
            Rng aug_rng =
                derive_rng(master_seed, {kAugmentTag, static_cast<uint64_t>(epoch), static_cast<uint64_t>(position)});
            const std::vector<float> canvas = fit_to_canvas(augment(rec, aug_rng));
            std::memcpy(b.images.data() + i * kPixels, canvas.data(), sizeof(float) * kPixels);
            b.labels.push_back(rec.label);
        }
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace pgan
