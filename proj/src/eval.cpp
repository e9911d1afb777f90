#include "pgan/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "pgan/errors.hpp"

namespace pgan {
namespace {

void check_image_stack(const Tensor& images, const std::vector<GleasonLabel>& labels) {
    const Shape& s = images.shape();
    if (s.size() != 4 || s[1] != 1 || s[2] != 32 || s[3] != 32)
        throw ShapeError("expected images of shape [N, 1, 32, 32]");
    if (static_cast<size_t>(s[0]) != labels.size()) throw ContractError("image count does not match label count");
}

}  // namespace

float checkerboard_energy(const std::vector<float>& image, int h, int w) {
    if (h < 1 || w < 1 || image.size() != static_cast<size_t>(h) * static_cast<size_t>(w))
        throw ShapeError("image size does not match dimensions");
    double den = 0.0;
    for (float v : image) den += static_cast<double>(v) * v;
    if (den < 1e-12) return 0.0f;
    double num = 0.0;
    for (int y = 0; y + 1 < h; ++y) {
        const float* row = image.data() + static_cast<size_t>(y) * w;
        const float* next = row + w;
        for (int x = 0; x + 1 < w; ++x) {
            const double d = static_cast<double>(row[x]) - row[x + 1] - next[x] + next[x + 1];
            num += d * d;
        }
    }
    return static_cast<float>(num / den);
}

ClassDarkness class_darkness(const Tensor& images, const std::vector<GleasonLabel>& labels) {
    check_image_stack(images, labels);
    std::array<double, kNumClasses> sum{};
    std::array<int64_t, kNumClasses> count{};
    const int64_t n = images.shape()[0];
    for (int64_t i = 0; i < n; ++i) {
        const float* px = images.data() + i * 1024;
        const int c = labels[static_cast<size_t>(i)].class_index;
        for (int y = 8; y < 24; ++y)
            for (int x = 8; x < 24; ++x) sum[static_cast<size_t>(c)] += px[y * 32 + x];
        ++count[static_cast<size_t>(c)];
    }
    ClassDarkness out;
    for (int c = 0; c < kNumClasses; ++c) {
        out.present[static_cast<size_t>(c)] = count[static_cast<size_t>(c)] > 0;
        out.mean[static_cast<size_t>(c)] =
            out.present[static_cast<size_t>(c)]
                ? static_cast<float>(sum[static_cast<size_t>(c)] / (256.0 * static_cast<double>(count[static_cast<size_t>(c)])))
                : std::numeric_limits<float>::quiet_NaN();
    }
    return out;
}

CentroidModel centroid_fit(const Tensor& images, const std::vector<GleasonLabel>& labels) {
    check_image_stack(images, labels);
    std::vector<std::vector<double>> sum(kNumClasses, std::vector<double>(1024, 0.0));
    std::array<int64_t, kNumClasses> count{};
    const int64_t n = images.shape()[0];
    for (int64_t i = 0; i < n; ++i) {
        const float* px = images.data() + i * 1024;
        const int c = labels[static_cast<size_t>(i)].class_index;
        for (int j = 0; j < 1024; ++j) sum[static_cast<size_t>(c)][static_cast<size_t>(j)] += px[j];
        ++count[static_cast<size_t>(c)];
    }
    CentroidModel model;
    model.centroids.resize(kNumClasses, std::vector<float>(1024));
    for (int c = 0; c < kNumClasses; ++c) {
        if (count[static_cast<size_t>(c)] == 0)
            throw ContractError("score " + std::to_string(kScores[static_cast<size_t>(c)]) +
                                " missing from centroid training set");
        for (int j = 0; j < 1024; ++j)
            model.centroids[static_cast<size_t>(c)][static_cast<size_t>(j)] = static_cast<float>(
                sum[static_cast<size_t>(c)][static_cast<size_t>(j)] / static_cast<double>(count[static_cast<size_t>(c)]));
    }
    return model;
}

int centroid_predict(const CentroidModel& model, const float* image) {
    if (model.centroids.size() != kNumClasses) throw ContractError("centroid model is not fitted");
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < kNumClasses; ++c) {
        const std::vector<float>& ctr = model.centroids[static_cast<size_t>(c)];
        double d = 0.0;
        for (int j = 0; j < 1024; ++j) {
            const double diff = static_cast<double>(image[j]) - ctr[static_cast<size_t>(j)];
            d += diff * diff;
        }
        if (d < best_d) {  // strict: ties keep the lowest class index
            best_d = d;
            best = c;
        }
    }
    return best;
}

float centroid_accuracy(const CentroidModel& model, const Tensor& images, const std::vector<GleasonLabel>& labels) {
    check_image_stack(images, labels);
    const int64_t n = images.shape()[0];
    if (n == 0) throw ContractError("empty test set");
    int64_t hits = 0;
    for (int64_t i = 0; i < n; ++i)
        if (centroid_predict(model, images.data() + i * 1024) == labels[static_cast<size_t>(i)].class_index) ++hits;
    return static_cast<float>(static_cast<double>(hits) / static_cast<double>(n));
}

void write_report(const std::string& path, const std::vector<ReportRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << "epoch,cb_energy,acc";
    for (int score : kScores) out << ",dark_" << score;
    out << "\n";
    char buf[32];
    auto cell = [&](float v) {
        std::snprintf(buf, sizeof(buf), ",%.6f", static_cast<double>(v));
        out << buf;
    };
    for (const ReportRow& r : rows) {
        out << r.epoch;
        cell(r.cb_energy);
        cell(r.acc);
        for (int c = 0; c < kNumClasses; ++c) cell(r.darkness.mean[static_cast<size_t>(c)]);
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace pgan
