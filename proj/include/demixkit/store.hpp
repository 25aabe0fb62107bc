#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "demixkit/adam.hpp"
#include "demixkit/demix.hpp"
#include "demixkit/extractor.hpp"
#include "demixkit/nn.hpp"

namespace demixkit {

// Single-file container: magic "SEDM", u32 format version, u64 header
// length, canonical JSON header (sorted keys, no whitespace), then all
// tensor payloads as little-endian 32-bit floats in header order. The
// header records an FNV-1a 64 checksum of the payload, verified on load.
constexpr char kStoreMagic[4] = {'S', 'E', 'D', 'M'};
constexpr std::uint32_t kStoreVersion = 1;

struct Checkpoint {
  std::string architecture;
  std::uint64_t seed = 0;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;
  std::string payload_checksum;  // filled on load / after save
};

// Atomic write (temp file + rename). Values are quantised to f32.
void save_checkpoint(const std::filesystem::path& path, Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// The payload checksum recorded in a container's header, without loading
// the payload. Used as a provenance id for trained artifacts.
std::string checkpoint_checksum(const std::filesystem::path& path);

std::map<std::string, Tensor> tensor_map(const Checkpoint& checkpoint);

std::string fnv1a64_hex(const unsigned char* data, std::size_t len);

// ---- model-level wrappers ----

constexpr const char* kExtractorArch = "extractor-classifier-v1";
constexpr const char* kBankArch = "embedding-bank-v1";
constexpr const char* kHeadArch = "demix-head-v1";

struct EmbeddingModel {
  Extractor extractor;
  Classifier classifier;
  std::uint64_t seed = 0;
};

// Returns the saved file's payload checksum.
std::string save_embedding_model(const std::filesystem::path& path, EmbeddingModel& model,
                                 const nlohmann::json& extra_meta = nlohmann::json::object(),
                                 const Adam* optimizer = nullptr);
EmbeddingModel load_embedding_model(const std::filesystem::path& path);

std::string save_bank(const std::filesystem::path& path, const EmbeddingBank& bank);
EmbeddingBank load_bank(const std::filesystem::path& path);

struct TrainedHead {
  DemixHead head;
  double snr_db = 0.0;
  Direction direction = Direction::kKnownInterferer;
  std::uint64_t seed = 0;
  std::string extractor_checksum;
  std::string bank_checksum;
  double final_mae = 0.0;
};

std::string save_head(const std::filesystem::path& path, TrainedHead& trained);
TrainedHead load_head(const std::filesystem::path& path);

}  // namespace demixkit
