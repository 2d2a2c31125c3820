#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <unistd.h>
#include <vector>

#include "annoembed/corpus.hpp"

namespace testutil {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("annoembed_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// (example_id, annotator_id, label index), text = "text of <example_id>".
inline annoembed::Dataset make_dataset(const std::vector<std::tuple<std::string, std::string, std::size_t>>& rows,
                                       std::vector<std::string> labels = {"A", "B"}) {
    std::vector<annoembed::AnnotatedExample> ex;
    for (const auto& [id, ann, label] : rows) ex.push_back({id, "text of " + id, ann, label, {}});
    return annoembed::Dataset("test", std::move(labels), std::move(ex));
}

}  // namespace testutil
