#pragma once

#include <bit>
#include <cstdio>
#include <cstring>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "tabfm/core/csv.hpp"
#include "tabfm/core/error.hpp"
#include "tabfm/models/synthesizer.hpp"

namespace tabfm::training {

static_assert(std::endian::native == std::endian::little, "checkpoint payload is written as native little-endian");

inline constexpr int kCheckpointVersion = 1;
inline constexpr std::string_view kMagic = "TABFM-CHECKPOINT";

/// Layout on disk:
///   TABFM-CHECKPOINT\n
///   <header byte length>\n
///   <header JSON>
///   <payload: float32 arrays back to back>
///   crc32 <8 hex digits>\n
/// The checksum covers every byte before the trailer line.
struct Checkpoint {
  int version = kCheckpointVersion;
  models::ModelConfig config;
  nlohmann::json state;  // table-specific synthesizer state
  models::TensorMap tensors;
  nlohmann::json provenance = nlohmann::json::object();

  bool operator==(const Checkpoint& o) const {
    if (version != o.version || config.to_json() != o.config.to_json() || state != o.state ||
        provenance != o.provenance || tensors.size() != o.tensors.size())
      return false;
    for (const auto& [name, t] : tensors) {
      auto it = o.tensors.find(name);
      if (it == o.tensors.end() || it->second.shape != t.shape ||
          std::memcmp(it->second.data.data(), t.data.data(), t.data.size() * sizeof(float)) != 0)
        return false;
    }
    return true;
  }
};

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks
  while (!bytes.empty()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size(), 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), chunk);
    bytes.remove_prefix(chunk);
  }
  return static_cast<std::uint32_t>(crc);
}

/// Appends the checksum trailer to an unsealed body.
inline std::string seal(std::string body) {
  char trailer[32];
  std::snprintf(trailer, sizeof(trailer), "crc32 %08x\n", crc32_of(body));
  return body + trailer;
}

inline std::string encode_checkpoint(const Checkpoint& c) {
  nlohmann::json dir = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, t] : c.tensors) {
    dir.push_back({{"name", name}, {"shape", t.shape}, {"offset", payload.size()}});
    payload.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  }
  const nlohmann::json header = {{"version", c.version},    {"method", models::to_string(c.config.method)},
                                 {"config", c.config.to_json()}, {"state", c.state},
                                 {"tensors", dir},          {"provenance", c.provenance},
                                 {"payload_bytes", payload.size()}};
  const std::string h = header.dump();
  return seal(std::string(kMagic) + "\n" + std::to_string(h.size()) + "\n" + h + payload);
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  auto bad = [](const std::string& what) { fail(ErrorKind::Format, "checkpoint: " + what); };
  // trailer is fixed width: "crc32 " + 8 hex + "\n"
  constexpr std::size_t kTrailer = 15;
  if (bytes.size() < kMagic.size() + 1 + kTrailer || bytes.substr(0, kMagic.size()) != kMagic ||
      bytes[kMagic.size()] != '\n')
    bad("not a checkpoint file");
  const auto body = bytes.substr(0, bytes.size() - kTrailer);
  const auto trailer = bytes.substr(bytes.size() - kTrailer);
  unsigned stored = 0;
  if (trailer.substr(0, 6) != "crc32 " || trailer.back() != '\n' ||
      std::sscanf(std::string(trailer.substr(6, 8)).c_str(), "%8x", &stored) != 1)
    bad("truncated (missing checksum trailer)");
  if (stored != crc32_of(body)) bad("checksum mismatch");

  std::string_view rest = body.substr(kMagic.size() + 1);
  const auto nl = rest.find('\n');
  if (nl == std::string_view::npos) bad("truncated header");
  std::size_t header_len = 0;
  try {
    header_len = std::stoull(std::string(rest.substr(0, nl)));
  } catch (const std::exception&) {
    bad("malformed header length");
  }
  rest.remove_prefix(nl + 1);
  if (header_len > rest.size()) bad("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(rest.substr(0, header_len));
  } catch (const nlohmann::json::exception& e) {
    bad(std::string("malformed header: ") + e.what());
  }
  const std::string_view payload = rest.substr(header_len);

  Checkpoint c;
  c.version = header.value("version", 0);
  if (c.version != kCheckpointVersion)
    bad("unsupported version " + std::to_string(c.version) + " (expected " + std::to_string(kCheckpointVersion) + ")");
  c.config = models::ModelConfig::from_json(header.at("config"));
  c.state = header.at("state");
  c.provenance = header.value("provenance", nlohmann::json::object());
  std::size_t expected = 0;
  for (const auto& e : header.at("tensors")) {
    nn::Tensor<float> t;
    t.shape = e.at("shape").get<std::vector<std::size_t>>();
    std::size_t count = 1;
    for (auto d : t.shape) count *= d;
    const auto offset = e.at("offset").get<std::size_t>();
    const std::size_t bytes_needed = count * sizeof(float);
    if (offset != expected || offset + bytes_needed > payload.size())
      bad("truncated payload for tensor " + e.at("name").get<std::string>());
    t.data.resize(count);
    std::memcpy(t.data.data(), payload.data() + offset, bytes_needed);
    expected += bytes_needed;
    c.tensors[e.at("name").get<std::string>()] = std::move(t);
  }
  if (expected != payload.size()) bad("payload length " + std::to_string(payload.size()) +
                                      " does not match the tensor directory (" + std::to_string(expected) + ")");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) { csv::write_file(path, encode_checkpoint(c)); }

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(csv::read_file(path)); }

/// Checksum of the whole encoded checkpoint, for comparing runs.
inline std::string checkpoint_digest(const Checkpoint& c) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", crc32_of(encode_checkpoint(c)));
  return buf;
}

}  // namespace tabfm::training
