#include "demixkit/store.hpp"

#include <cstring>
#include <fstream>

namespace demixkit {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

void put_f32(std::vector<unsigned char>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

float get_f32(const unsigned char* p) {
  const std::uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint: " + path.string());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(file)),
                                    std::istreambuf_iterator<char>());
}

nlohmann::json parse_header(const std::vector<unsigned char>& bytes,
                            const std::filesystem::path& path, std::size_t* payload_at) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kStoreMagic, 4) != 0) {
    throw IoError("corrupt checkpoint (bad magic): " + path.string());
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kStoreVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " +
                  path.string());
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (16 + header_len > bytes.size()) {
    throw IoError("corrupt checkpoint (truncated header): " + path.string());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  *payload_at = 16 + static_cast<std::size_t>(header_len);
  return header;
}

}  // namespace

std::string fnv1a64_hex(const unsigned char* data, std::size_t len) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    hash ^= data[i];
    hash *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

void save_checkpoint(const std::filesystem::path& path, Checkpoint& checkpoint) {
  std::vector<unsigned char> payload;
  nlohmann::json descriptors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const NamedTensor& entry : checkpoint.tensors) {
    descriptors.push_back({{"name", entry.name},
                           {"offset", offset},
                           {"shape", entry.tensor.shape()}});
    for (double v : entry.tensor.values()) put_f32(payload, static_cast<float>(v));
    offset += entry.tensor.size() * 4;
  }
  checkpoint.payload_checksum = fnv1a64_hex(payload.data(), payload.size());

  nlohmann::json header;
  header["architecture"] = checkpoint.architecture;
  header["checksum"] = checkpoint.payload_checksum;
  header["meta"] = checkpoint.meta;
  header["seed"] = checkpoint.seed;
  header["tensors"] = descriptors;
  const std::string header_str = header.dump();

  std::vector<unsigned char> out;
  out.reserve(16 + header_str.size() + payload.size());
  out.insert(out.end(), kStoreMagic, kStoreMagic + 4);
  put_u32(out, kStoreVersion);
  put_u64(out, header_str.size());
  out.insert(out.end(), header_str.begin(), header_str.end());
  out.insert(out.end(), payload.begin(), payload.end());

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot write checkpoint: " + tmp.string());
    file.write(reinterpret_cast<const char*>(out.data()),
               static_cast<std::streamsize>(out.size()));
    if (!file) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_all(path);
  std::size_t payload_at = 0;
  const nlohmann::json header = parse_header(bytes, path, &payload_at);

  Checkpoint checkpoint;
  try {
    checkpoint.architecture = header.at("architecture").get<std::string>();
    checkpoint.seed = header.at("seed").get<std::uint64_t>();
    checkpoint.meta = header.at("meta");
    checkpoint.payload_checksum = header.at("checksum").get<std::string>();

    const unsigned char* payload = bytes.data() + payload_at;
    const std::size_t payload_len = bytes.size() - payload_at;
    std::size_t expected_len = 0;
    for (const auto& desc : header.at("tensors")) {
      expected_len += shape_product(desc.at("shape").get<std::vector<std::size_t>>()) * 4;
    }
    if (expected_len != payload_len) {
      throw IoError("corrupt checkpoint (payload is " + std::to_string(payload_len) +
                    " bytes, descriptors need " + std::to_string(expected_len) + "): " +
                    path.string());
    }
    if (fnv1a64_hex(payload, payload_len) != checkpoint.payload_checksum) {
      throw IoError("corrupt checkpoint (payload checksum mismatch): " + path.string());
    }
    for (const auto& desc : header.at("tensors")) {
      const auto shape = desc.at("shape").get<std::vector<std::size_t>>();
      const std::size_t offset = desc.at("offset").get<std::size_t>();
      const std::size_t count = shape_product(shape);
      if (offset + count * 4 > payload_len) {
        throw IoError("corrupt checkpoint (descriptor out of range): " + path.string());
      }
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) {
        values[i] = static_cast<double>(get_f32(payload + offset + 4 * i));
      }
      checkpoint.tensors.push_back(
          {desc.at("name").get<std::string>(), Tensor(shape, std::move(values))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  return checkpoint;
}

std::string checkpoint_checksum(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_all(path);
  std::size_t payload_at = 0;
  const nlohmann::json header = parse_header(bytes, path, &payload_at);
  try {
    return header.at("checksum").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
}

std::map<std::string, Tensor> tensor_map(const Checkpoint& checkpoint) {
  std::map<std::string, Tensor> out;
  for (const NamedTensor& entry : checkpoint.tensors) {
    out.emplace(entry.name, entry.tensor);
  }
  return out;
}

std::string save_embedding_model(const std::filesystem::path& path, EmbeddingModel& model,
                                 const nlohmann::json& extra_meta, const Adam* optimizer) {
  Checkpoint checkpoint;
  checkpoint.architecture = kExtractorArch;
  checkpoint.seed = model.seed;
  checkpoint.meta = extra_meta;
  checkpoint.meta["n_speakers"] = model.classifier.n_speakers();
  checkpoint.tensors = model.extractor.named_tensors();
  for (NamedTensor& t : model.classifier.named_tensors()) {
    checkpoint.tensors.push_back(std::move(t));
  }
  if (optimizer != nullptr) {
    checkpoint.meta["optimizer"] = {
        {"type", "adam"},
        {"step", optimizer->step_count()},
        {"learning_rate", optimizer->config().learning_rate},
        {"beta1", optimizer->config().beta1},
        {"beta2", optimizer->config().beta2},
        {"epsilon", optimizer->config().epsilon},
    };
    for (std::size_t i = 0; i < optimizer->first_moments().size(); ++i) {
      const auto& m = optimizer->first_moments()[i];
      const auto& v = optimizer->second_moments()[i];
      checkpoint.tensors.push_back(
          {"adam.m." + std::to_string(i), Tensor({m.size()}, m)});
      checkpoint.tensors.push_back(
          {"adam.v." + std::to_string(i), Tensor({v.size()}, v)});
    }
  }
  save_checkpoint(path, checkpoint);
  return checkpoint.payload_checksum;
}

EmbeddingModel load_embedding_model(const std::filesystem::path& path) {
  Checkpoint checkpoint = load_checkpoint(path);
  if (checkpoint.architecture != kExtractorArch) {
    throw IoError("checkpoint " + path.string() + " holds '" +
                  checkpoint.architecture + "', expected '" + kExtractorArch + "'");
  }
  std::size_t n_speakers = 0;
  try {
    n_speakers = checkpoint.meta.at("n_speakers").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint " + path.string() + " lacks n_speakers: " + e.what());
  }
  Rng rng(0);
  EmbeddingModel model{Extractor::init(rng), Classifier::init(n_speakers, rng),
                       checkpoint.seed};
  const auto tensors = tensor_map(checkpoint);
  model.extractor.load_named(tensors);
  model.classifier.load_named(tensors);
  model.extractor.validate();
  return model;
}

std::string save_bank(const std::filesystem::path& path, const EmbeddingBank& bank) {
  Checkpoint checkpoint;
  checkpoint.architecture = kBankArch;
  checkpoint.seed = bank.seed;
  checkpoint.meta["speakers"] = bank.speaker_ids();
  checkpoint.meta["segments_per_speaker"] = bank.segments_per_speaker;
  checkpoint.meta["extractor_checksum"] = bank.extractor_checksum;
  for (const auto& [speaker, values] : bank.entries) {
    if (values.size() != kEmbeddingDim) {
      throw ShapeError("bank entry for '" + speaker + "' has dimension " +
                       std::to_string(values.size()));
    }
    checkpoint.tensors.push_back({"bank." + speaker, Tensor({1, kEmbeddingDim}, values)});
  }
  save_checkpoint(path, checkpoint);
  return checkpoint.payload_checksum;
}

EmbeddingBank load_bank(const std::filesystem::path& path) {
  Checkpoint checkpoint = load_checkpoint(path);
  if (checkpoint.architecture != kBankArch) {
    throw IoError("checkpoint " + path.string() + " holds '" +
                  checkpoint.architecture + "', expected '" + kBankArch + "'");
  }
  EmbeddingBank bank;
  bank.seed = checkpoint.seed;
  std::vector<std::string> speakers;
  try {
    speakers = checkpoint.meta.at("speakers").get<std::vector<std::string>>();
    bank.segments_per_speaker = checkpoint.meta.at("segments_per_speaker").get<int>();
    bank.extractor_checksum = checkpoint.meta.at("extractor_checksum").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt bank (missing speaker table) in " + path.string() + ": " +
                  e.what());
  }
  const auto tensors = tensor_map(checkpoint);
  for (const std::string& speaker : speakers) {
    const auto it = tensors.find("bank." + speaker);
    if (it == tensors.end()) {
      throw IoError("corrupt bank: no tensor for speaker '" + speaker + "' in " +
                    path.string());
    }
    if (it->second.size() != kEmbeddingDim) {
      throw IoError("corrupt bank: entry for '" + speaker + "' has size " +
                    std::to_string(it->second.size()));
    }
    bank.entries[speaker] = it->second.values();
  }
  return bank;
}

std::string save_head(const std::filesystem::path& path, TrainedHead& trained) {
  Checkpoint checkpoint;
  checkpoint.architecture = kHeadArch;
  checkpoint.seed = trained.seed;
  checkpoint.meta["variant"] = to_string(trained.head.variant);
  checkpoint.meta["final_activation"] = to_string(trained.head.final_activation);
  checkpoint.meta["snr_db"] = trained.snr_db;
  checkpoint.meta["direction"] = to_string(trained.direction);
  checkpoint.meta["extractor_checksum"] = trained.extractor_checksum;
  checkpoint.meta["bank_checksum"] = trained.bank_checksum;
  checkpoint.meta["final_mae"] = trained.final_mae;
  checkpoint.tensors = trained.head.params;
  save_checkpoint(path, checkpoint);
  return checkpoint.payload_checksum;
}

TrainedHead load_head(const std::filesystem::path& path) {
  Checkpoint checkpoint = load_checkpoint(path);
  if (checkpoint.architecture != kHeadArch) {
    throw IoError("checkpoint " + path.string() + " holds '" +
                  checkpoint.architecture + "', expected '" + kHeadArch + "'");
  }
  TrainedHead trained;
  try {
    const DemixVariant variant =
        parse_variant(checkpoint.meta.at("variant").get<std::string>());
    const FinalActivation act = parse_final_activation(
        checkpoint.meta.at("final_activation").get<std::string>());
    Rng rng(0);
    trained.head = DemixHead::init(variant, rng, act);
    trained.snr_db = checkpoint.meta.at("snr_db").get<double>();
    trained.direction = parse_direction(checkpoint.meta.at("direction").get<std::string>());
    trained.extractor_checksum =
        checkpoint.meta.at("extractor_checksum").get<std::string>();
    trained.bank_checksum = checkpoint.meta.at("bank_checksum").get<std::string>();
    trained.final_mae = checkpoint.meta.value("final_mae", 0.0);
    trained.seed = checkpoint.seed;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt head checkpoint in " + path.string() + ": " + e.what());
  }
  const auto tensors = tensor_map(checkpoint);
  for (NamedTensor& p : trained.head.params) {
    const auto it = tensors.find(p.name);
    if (it == tensors.end()) {
      throw IoError("corrupt head checkpoint: missing parameter '" + p.name + "'");
    }
    if (it->second.shape() != p.tensor.shape()) {
      throw IoError("corrupt head checkpoint: parameter '" + p.name + "' has shape " +
                    it->second.shape_str() + ", expected " + p.tensor.shape_str());
    }
    p.tensor.values() = it->second.values();
  }
  trained.head.validate();
  return trained;
}

}  // namespace demixkit
