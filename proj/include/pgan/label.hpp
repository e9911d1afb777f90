#pragma once

#include <array>
#include <string>

#include "pgan/errors.hpp"

namespace pgan {

inline constexpr int kNumClasses = 9;
inline constexpr std::array<int, kNumClasses> kScores = {0, 2, 3, 4, 5, 6, 7, 8, 9};

// Gleason score and its dense class index; the only valid scores are the nine
// in kScores (ascending), so index i <-> kScores[i].
struct GleasonLabel {
    int score = 0;
    int class_index = 0;

    static GleasonLabel from_score(int score) {
        for (int i = 0; i < kNumClasses; ++i)
            if (kScores[static_cast<size_t>(i)] == score) return GleasonLabel{score, i};
        throw ValidationError("score " + std::to_string(score) + " not in label set");
    }

    static GleasonLabel from_index(int index) {
        if (index < 0 || index >= kNumClasses)
            throw ValidationError("class index " + std::to_string(index) + " out of range [0, 8]");
        return GleasonLabel{kScores[static_cast<size_t>(index)], index};
    }
};

}  // namespace pgan
