#pragma once

#include <array>
#include <string>
#include <vector>

#include "pgan/label.hpp"
#include "pgan/tensor.hpp"

namespace pgan {

// Ratio of 2x2 alternating-kernel response energy to total image energy;
// grid-like stride-2 artifacts light this up, smooth images do not.
float checkerboard_energy(const std::vector<float>& image, int h = 32, int w = 32);

// Mean intensity of the central 16x16 crop, per class (ascending score).
struct ClassDarkness {
    std::array<float, kNumClasses> mean{};
    std::array<bool, kNumClasses> present{};
};
ClassDarkness class_darkness(const Tensor& images, const std::vector<GleasonLabel>& labels);

struct CentroidModel {
    std::vector<std::vector<float>> centroids;  // kNumClasses x 1024
};
CentroidModel centroid_fit(const Tensor& images, const std::vector<GleasonLabel>& labels);
int centroid_predict(const CentroidModel& model, const float* image);  // ties -> lowest class index
float centroid_accuracy(const CentroidModel& model, const Tensor& images, const std::vector<GleasonLabel>& labels);

struct ReportRow {
    int epoch = 0;
    float cb_energy = 0.0f;
    float acc = 0.0f;
    ClassDarkness darkness;
};
void write_report(const std::string& path, const std::vector<ReportRow>& rows);

}  // namespace pgan
