#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string_view>

namespace pingpong {

inline constexpr std::string_view kCodeVersion = "pingpong 1.0.0";

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Config, seed and version hashes, enough to regenerate a run.
nlohmann::json make_manifest(const nlohmann::json& config, std::uint64_t seed);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace pingpong
