#include "mdpose/io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mdpose/version.hpp"

namespace mdpose {

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string to_hex(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

void atomic_write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) {
      throw std::runtime_error("cannot open for writing: " + tmp.string());
    }
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) {
      throw std::runtime_error("write failed: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw std::runtime_error("cannot open for reading: " + path.string());
  }
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

nlohmann::json make_envelope(const std::string& tag, const std::string& config_hash,
                             nlohmann::json body) {
  return {{"format", "mdpose-checkpoint"},
          {"version", kVersion},
          {"tag", tag},
          {"config_hash", config_hash},
          {"content_hash", to_hex(fnv1a64(body.dump()))},
          {"body", std::move(body)}};
}

Envelope open_envelope(const std::string& text, const std::optional<std::string>& expected_tag) {
  const nlohmann::json file = nlohmann::json::parse(text);
  if (file.at("format").get<std::string>() != "mdpose-checkpoint") {
    throw std::invalid_argument("checkpoint: unrecognized format tag");
  }
  Envelope env;
  env.body = file.at("body");
  if (to_hex(fnv1a64(env.body.dump())) != file.at("content_hash").get<std::string>()) {
    throw std::invalid_argument("checkpoint: content hash mismatch (corrupt file)");
  }
  env.tag = file.at("tag").get<std::string>();
  if (expected_tag.has_value() && env.tag != *expected_tag) {
    throw std::invalid_argument("checkpoint: tag '" + env.tag + "' does not match expected '" +
                                *expected_tag + "'");
  }
  env.config_hash = file.at("config_hash").get<std::string>();
  return env;
}

}  // namespace mdpose
