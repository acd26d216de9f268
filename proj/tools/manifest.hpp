#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace dovis::cli {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Run manifest: written when a command starts and rewritten when it ends.
class RunManifest {
public:
    RunManifest(std::filesystem::path out_dir, std::string command, std::filesystem::path config_path,
                std::string config_text, std::vector<std::uint64_t> seeds);

    void finish(std::string_view status, const std::vector<std::string> &outputs);

    const nlohmann::ordered_json &document() const noexcept { return doc_; }

private:
    void write() const;

    std::filesystem::path path_;
    nlohmann::ordered_json doc_;
};

} // namespace dovis::cli
