#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "orthodoc/corpus.hpp"
#include "orthodoc/kgraph.hpp"

namespace testutil {

inline std::filesystem::path data_dir() {
    const char* env = std::getenv("ORTHODOC_DATA");
    return env ? std::filesystem::path(env) : std::filesystem::path("data");
}

inline std::filesystem::path golden_dir() {
    const char* env = std::getenv("ORTHODOC_GOLDEN");
    return env ? std::filesystem::path(env) : std::filesystem::path("tests/golden");
}

inline std::filesystem::path synthetic_dir() { return data_dir() / "synthetic"; }

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
}

// Scratch directory unique per test binary run.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("orthodoc_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline orthodoc::Document make_doc(const std::string& id, const std::string& text) {
    return orthodoc::Document{id, "title of " + id, "test source", text};
}

inline orthodoc::LexiconEntry lex(const std::string& pattern, const std::string& canonical,
                                  orthodoc::EntityType type,
                                  std::vector<std::string> hints = {}) {
    return orthodoc::LexiconEntry{pattern, canonical, type, std::move(hints)};
}

} // namespace testutil
