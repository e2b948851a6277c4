#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace mdpose {

std::uint64_t fnv1a64(std::string_view data);
std::string to_hex(std::uint64_t value);

// Writes content to a temp file next to `path` and renames it into place, so
// readers never observe a partially written file.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

std::string read_text_file(const std::filesystem::path& path);

// Checkpoint envelope shared by every model file: format/version markers, a
// tag naming what the body is, the producing config hash, and a content hash
// over the body that is verified on open.
nlohmann::json make_envelope(const std::string& tag, const std::string& config_hash,
                             nlohmann::json body);

struct Envelope {
  std::string tag;
  std::string config_hash;
  nlohmann::json body;
};

Envelope open_envelope(const std::string& text,
                       const std::optional<std::string>& expected_tag = {});

}  // namespace mdpose
