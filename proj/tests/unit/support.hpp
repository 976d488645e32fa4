#pragma once
// Small fixtures shared by the unit suites.

#include "bpr/corpus.hpp"
#include "bpr/synth.hpp"

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

namespace bpr::test {

inline corpus::Passage make_passage(std::string id, std::vector<std::string> tokens) {
    corpus::Passage p;
    p.passage_id = std::move(id);
    p.tokens = std::move(tokens);
    for (std::size_t i = 0; i < p.tokens.size(); ++i) p.text += (i ? " " : "") + p.tokens[i];
    return p;
}

inline synth::SynthConfig small_synth(int passages = 20, int subjects = 2, std::uint64_t seed = 1) {
    synth::SynthConfig c;
    c.passages = passages;
    c.subjects = subjects;
    c.feature_dim = 12;
    c.semantic_dim = 4;
    c.min_length = 4;
    c.max_length = 9;
    c.seed = seed;
    return c;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("bpr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path_.string(); }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

}  // namespace bpr::test
