#include "pgan/pgm.hpp"

#include <cctype>
#include <fstream>

#include "pgan/errors.hpp"

namespace pgan {
namespace {

// Next integer token, skipping whitespace and '#' comment lines.
int header_int(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) throw IoError(path + ": malformed PGM header");
    long value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        if (value > 1 << 20) throw IoError(path + ": PGM header value out of range");
        c = in.get();
    }
    if (c != EOF) in.unget();
    return static_cast<int>(value);
}

}  // namespace

PgmImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    if (in.get() != 'P' || in.get() != '5') throw IoError(path + ": not a binary PGM (P5)");
    PgmImage img;
    img.width = header_int(in, path);
    img.height = header_int(in, path);
    const int maxval = header_int(in, path);
    if (img.width < 1 || img.height < 1) throw IoError(path + ": bad PGM dimensions");
    if (maxval != 255) throw IoError(path + ": PGM maxval must be 255");
    in.get();  // the single whitespace byte before the raster
    const std::streamsize count = static_cast<std::streamsize>(img.width) * img.height;
    img.pixels.resize(static_cast<size_t>(count));
    in.read(reinterpret_cast<char*>(img.pixels.data()), count);
    if (in.gcount() != count) throw IoError(path + ": truncated PGM pixel data");
    return img;
}

void write_pgm(const std::string& path, const PgmImage& img) {
    const size_t count = static_cast<size_t>(img.width) * static_cast<size_t>(img.height);
    if (img.width < 1 || img.height < 1 || img.pixels.size() != count)
        throw ValidationError("PGM image dimensions do not match pixel count");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(count));
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace pgan
