#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cpl {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

struct ArtifactRef {
    std::string name;
    std::string path;
    std::string sha256;
};

/// Per-stage run record: command, config snapshot, seed, and content hashes
/// of every input and output artifact. The timestamp honors
/// SOURCE_DATE_EPOCH so reruns can be made byte-identical.
struct Manifest {
    std::string command;
    nlohmann::ordered_json config;
    std::uint64_t seed = 0;
    std::vector<ArtifactRef> inputs;
    std::vector<ArtifactRef> outputs;
    std::string timestamp;

    void save(const std::filesystem::path& path) const;
    static Manifest load(const std::filesystem::path& path);

    /// Recorded output hash for a file name, empty if absent.
    std::string output_hash(std::string_view name) const;
};

std::string manifest_timestamp();

/// Hash mismatch between a recorded artifact and the file on disk.
struct StaleArtifactError : std::runtime_error {
    StaleArtifactError(const std::string& path, const std::string& expected, const std::string& actual)
        : std::runtime_error("stale artifact " + path + ": expected sha256 " + expected + ", found " + actual) {}
};

/// Verifies that `file` under `dir` still matches the hash recorded by the
/// stage manifest in `dir`. Returns the artifact's full path.
std::filesystem::path require_artifact(const std::filesystem::path& dir, std::string_view file);

}  // namespace cpl
