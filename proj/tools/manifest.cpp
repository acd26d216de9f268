#include "manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <sodium.h>

#include "dovis/error.hpp"
#include "dovis/signing.hpp"

#ifndef DOVIS_VERSION
#define DOVIS_VERSION "unknown"
#endif

namespace dovis::cli {
namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

} // namespace

std::string sha256_hex(std::string_view bytes) {
    if (sodium_init() < 0) {
        throw Error("libsodium failed to initialize");
    }
    unsigned char digest[crypto_hash_sha256_BYTES];
    crypto_hash_sha256(digest, reinterpret_cast<const unsigned char *>(bytes.data()), bytes.size());
    return oat::to_hex(digest, sizeof digest);
}

RunManifest::RunManifest(std::filesystem::path out_dir, std::string command, std::filesystem::path config_path,
                         std::string config_text, std::vector<std::uint64_t> seeds)
    : path_(out_dir / "manifest.json") {
    doc_["command"] = std::move(command);
    doc_["config_path"] = config_path.empty() ? std::string{} : config_path.string();
    doc_["config_sha256"] = sha256_hex(config_text);
    doc_["seeds"] = std::move(seeds);
    doc_["out_dir"] = out_dir.string();
    doc_["version"] = DOVIS_VERSION;
    doc_["started_at"] = utc_now();
    doc_["finished_at"] = nullptr;
    doc_["status"] = "running";
    doc_["outputs"] = nlohmann::ordered_json::array();
    write();
}

void RunManifest::finish(std::string_view status, const std::vector<std::string> &outputs) {
    doc_["finished_at"] = utc_now();
    doc_["status"] = status;
    doc_["outputs"] = outputs;
    write();
}

void RunManifest::write() const {
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InvalidArgument("cannot write " + path_.string());
    }
    out << doc_.dump(2) << '\n';
}

} // namespace dovis::cli
