#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace wateruse {

inline constexpr std::string_view kVersion = "0.1.0";

std::string sha256_hex(std::string_view data);
/// Throws IoError when the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

struct FileDigest {
    std::string path;
    std::string sha256;
};

/// Record of one command invocation, written next to its outputs.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    nlohmann::json config = nlohmann::json::object();
    std::vector<FileDigest> inputs;
    std::vector<FileDigest> outputs;
    std::optional<std::uint64_t> seed;
    std::string version = std::string(kVersion);
    double wall_time_s = 0.0;

    void add_input(const std::filesystem::path& path);
    void add_output(const std::filesystem::path& path);
};

nlohmann::json to_json(const RunManifest& m);

}  // namespace wateruse
