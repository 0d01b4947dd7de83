#include "noboxlab/core/pnm.hpp"

#include <cctype>
#include <fstream>

#include "noboxlab/core/errors.hpp"

namespace noboxlab {

namespace {

// Reads the next whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty())
        throw IngestionError(path + ": truncated header");
    return tok;
}

std::size_t parse_size(const std::string& tok, const std::string& path,
                       const char* what) {
    std::size_t v = 0;
    for (char ch : tok) {
        if (!std::isdigit(static_cast<unsigned char>(ch)))
            throw IngestionError(path + ": bad " + what + " '" + tok + "'");
        v = v * 10 + static_cast<std::size_t>(ch - '0');
        if (v > 1000000)
            throw IngestionError(path + ": " + what + " out of range");
    }
    return v;
}

}

RasterImage read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IngestionError(path + ": cannot open");
    std::string magic = next_token(in, path);
    std::size_t channels;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw IngestionError(path + ": unsupported magic '" + magic + "'");

    std::size_t width = parse_size(next_token(in, path), path, "width");
    std::size_t height = parse_size(next_token(in, path), path, "height");
    std::size_t maxval = parse_size(next_token(in, path), path, "maxval");
    if (width == 0 || height == 0)
        throw IngestionError(path + ": zero-sized image");
    if (maxval != 255)
        throw IngestionError(path + ": only maxval 255 supported");

    RasterImage img;
    img.height = height;
    img.width = width;
    img.channels = channels;
    img.pixels.resize(height * width * channels);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.pixels.size())
        throw IngestionError(path + ": truncated pixel data");
    return img;
}

void write_pnm(const std::string& path, const RasterImage& img) {
    if (img.channels != 1 && img.channels != 3)
        throw DomainError("write_pnm: channels must be 1 or 3");
    if (img.pixels.size() != img.height * img.width * img.channels)
        throw DomainError("write_pnm: pixel buffer size mismatch");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw PersistenceError(path + ": cannot open for write");
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out)
        throw PersistenceError(path + ": write failed");
}

}
