#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace xmtc {

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a over the file bytes; identifies inputs in run manifests.
std::string file_digest_hex(const std::string& path);

// Written to the run directory before any long computation. Re-running a
// command with an identical manifest reproduces identical outputs.
struct RunManifest {
    std::string command;
    std::string version = kToolVersion;
    std::uint64_t seed = 0;
    nlohmann::json options;                          // resolved flag values
    std::map<std::string, std::string> input_digests; // path -> fnv1a hex
};

void write_manifest(const std::string& path, const RunManifest& manifest);

} // namespace xmtc
