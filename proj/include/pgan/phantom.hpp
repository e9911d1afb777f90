#pragma once

#include <cstdint>
#include <string>

#include "pgan/data.hpp"
#include "pgan/label.hpp"

namespace pgan {

// Synthetic 32x32 "gland on dark background" image: a bright ellipse whose
// base level steps down with class index, plus score-5 dark lesion discs for
// scores >= 6. Pure function of (label, seed).
ImageRecord generate_phantom(GleasonLabel label, uint64_t seed);

// Writes 9*per_class PGM files plus manifest.tsv into out_dir and returns the
// manifest path. Same (per_class, master_seed) -> identical bytes.
std::string generate_dataset(int per_class, uint64_t master_seed, const std::string& out_dir);

}  // namespace pgan
