#include "noboxlab/core/fsutil.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "noboxlab/core/errors.hpp"

namespace noboxlab {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError(path + ": cannot open");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IngestionError(path + ": read failed");
    return buf.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw PersistenceError(tmp + ": cannot open for write");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw PersistenceError(tmp + ": write failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::remove(tmp.c_str());
        throw PersistenceError(path + ": rename failed: " + ec.message());
    }
}

}
