#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pgan {

struct GradCheckEntry {
    std::string name;
    float max_rel_err;
};

// Central-difference verification of every differentiable op plus a
// generator-discriminator composite at 8x8 scale (2-sample batch, eps 1e-3,
// every parameter coordinate). Entries pass below 1e-2.
std::vector<GradCheckEntry> gradcheck_suite(uint64_t seed);

inline bool gradcheck_passed(const std::vector<GradCheckEntry>& entries, float bound = 1e-2f) {
    for (const auto& e : entries)
        if (!(e.max_rel_err < bound)) return false;
    return true;
}

}  // namespace pgan
