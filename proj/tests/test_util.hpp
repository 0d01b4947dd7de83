#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

// Creates a unique scratch directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        std::uint64_t tag = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        path_ = std::filesystem::temp_directory_path() /
                ("noboxlab_test_" + std::to_string(tag));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};
