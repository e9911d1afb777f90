#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pgan {

struct PgmImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // row-major, maxval 255
};

PgmImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const PgmImage& img);

}  // namespace pgan
