#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "agentinstruct/util.hpp"

#ifndef AGENTINSTRUCT_FIXTURES_DIR
#define AGENTINSTRUCT_FIXTURES_DIR "tests/fixtures"
#endif

namespace testutil {

inline std::filesystem::path fixtures_dir() {
    return std::filesystem::path(AGENTINSTRUCT_FIXTURES_DIR);
}

inline std::string fixture_text(const std::string& relative) {
    return agentinstruct::read_file(fixtures_dir() / relative);
}

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("agentinstruct_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
