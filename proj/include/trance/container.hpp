#pragma once

// Shared on-disk layout for activation archives and model checkpoints:
//   bytes 0-3   magic
//   bytes 4-11  u64 little-endian length L of the JSON index
//   bytes 12..  UTF-8 JSON index (L bytes)
//   then        float32 little-endian payload; index entries carry byte
//               offsets relative to the first payload byte.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trance/error.hpp"

namespace trance::container {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

using Magic = std::array<char, 4>;

inline constexpr Magic kArchiveMagic{'T', 'A', 'F', '1'};
inline constexpr Magic kCheckpointMagic{'T', 'V', 'M', '1'};

/// Accumulates float payload sections and hands back their index entries.
class PayloadWriter {
 public:
  nlohmann::json append(std::span<const float> values) {
    nlohmann::json entry{{"offset", payload_.size() * sizeof(float)}, {"count", values.size()}};
    payload_.insert(payload_.end(), values.begin(), values.end());
    return entry;
  }

  const std::vector<float>& payload() const { return payload_; }

 private:
  std::vector<float> payload_;
};

struct Contents {
  nlohmann::json index;
  std::vector<char> payload;

  /// Copy out the section described by an index entry {offset, count}.
  std::vector<float> section(const nlohmann::json& entry) const {
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto count = entry.at("count").get<std::uint64_t>();
    require(offset % sizeof(float) == 0, ErrorCode::TruncatedPayload, "misaligned payload offset");
    require(offset <= payload.size() && count <= (payload.size() - offset) / sizeof(float),
            ErrorCode::TruncatedPayload,
            "section at offset " + std::to_string(offset) + " with " + std::to_string(count) +
                " floats exceeds payload of " + std::to_string(payload.size()) + " bytes");
    std::vector<float> out(count);
    if (count) std::memcpy(out.data(), payload.data() + offset, count * sizeof(float));
    return out;
  }
};

inline void write_file(const std::filesystem::path& path, const Magic& magic,
                       const nlohmann::json& index, std::span<const float> payload) {
  const std::string text = index.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "' for writing");
  const std::uint64_t len = text.size();
  out.write(magic.data(), magic.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size_bytes()));
  out.flush();
  if (!out) fail(ErrorCode::IoFailure, "write to '" + path.string() + "' failed");
}

inline Contents read_file(const std::filesystem::path& path, const Magic& magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::string_view expected(magic.data(), magic.size());
  if (bytes.size() < magic.size() || std::string_view(bytes.data(), magic.size()) != expected)
    fail(ErrorCode::MagicMismatch, "'" + path.string() + "' does not start with \"" +
                                       std::string(expected) + "\"");
  require(bytes.size() >= 12, ErrorCode::TruncatedPayload, "missing index length");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 4, sizeof(len));
  require(len <= bytes.size() - 12, ErrorCode::TruncatedPayload,
          "index length " + std::to_string(len) + " exceeds file size");

  Contents contents;
  try {
    contents.index = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::TruncatedPayload, std::string("malformed index: ") + e.what());
  }
  contents.payload.assign(bytes.begin() + 12 + static_cast<std::ptrdiff_t>(len), bytes.end());
  return contents;
}

}  // namespace trance::container
