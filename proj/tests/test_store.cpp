#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "demixkit/rng.hpp"
#include "demixkit/store.hpp"

using namespace demixkit;
namespace fs = std::filesystem;

namespace {

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("demixkit_store_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<unsigned char> file_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

Checkpoint small_checkpoint(std::uint64_t seed) {
  Rng rng(seed);
  Checkpoint c;
  c.architecture = "test-arch";
  c.seed = seed;
  c.meta = {{"note", "fixture"}};
  Tensor a({3, 4}), b({7});
  for (double& v : a.values()) v = uniform(rng, -2.0, 2.0);
  for (double& v : b.values()) v = uniform(rng, -2.0, 2.0);
  c.tensors.push_back({"a", a});
  c.tensors.push_back({"b", b});
  return c;
}

}  // namespace

TEST_CASE("save-load-save produces byte-identical files") {
  const fs::path dir = work_dir("roundtrip");
  Checkpoint original = small_checkpoint(1);
  save_checkpoint(dir / "one.sedm", original);
  Checkpoint loaded = load_checkpoint(dir / "one.sedm");
  save_checkpoint(dir / "two.sedm", loaded);
  CHECK(file_bytes(dir / "one.sedm") == file_bytes(dir / "two.sedm"));
}

TEST_CASE("values quantise to nearest f32 on disk") {
  const fs::path dir = work_dir("quantise");
  Checkpoint c;
  c.architecture = "test-arch";
  c.tensors.push_back({"third", Tensor({1}, {1.0 / 3.0})});
  save_checkpoint(dir / "third.sedm", c);
  const Checkpoint back = load_checkpoint(dir / "third.sedm");
  const double expected = static_cast<double>(static_cast<float>(1.0 / 3.0));
  CHECK(back.tensors[0].tensor.values()[0] == expected);
  CHECK(back.tensors[0].tensor.values()[0] == doctest::Approx(0.33333334).epsilon(1e-8));
}

TEST_CASE("flipped magic byte is rejected cleanly") {
  const fs::path dir = work_dir("magic");
  Checkpoint c = small_checkpoint(2);
  save_checkpoint(dir / "ok.sedm", c);
  auto bytes = file_bytes(dir / "ok.sedm");
  bytes[0] ^= 0xFF;
  write_bytes(dir / "bad.sedm", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.sedm"), IoError);
}

TEST_CASE("payload corruption is caught by the checksum") {
  const fs::path dir = work_dir("checksum");
  Checkpoint c = small_checkpoint(3);
  save_checkpoint(dir / "ok.sedm", c);
  auto bytes = file_bytes(dir / "ok.sedm");
  bytes[bytes.size() - 3] ^= 0x40;
  write_bytes(dir / "bad.sedm", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.sedm"), IoError);
}

TEST_CASE("truncated payloads are rejected") {
  const fs::path dir = work_dir("truncate");
  Checkpoint c = small_checkpoint(4);
  save_checkpoint(dir / "ok.sedm", c);
  auto bytes = file_bytes(dir / "ok.sedm");
  bytes.resize(bytes.size() - 9);
  write_bytes(dir / "bad.sedm", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.sedm"), IoError);
}

TEST_CASE("unsupported version is rejected") {
  const fs::path dir = work_dir("version");
  Checkpoint c = small_checkpoint(5);
  save_checkpoint(dir / "ok.sedm", c);
  auto bytes = file_bytes(dir / "ok.sedm");
  bytes[4] = 9;  // version field
  write_bytes(dir / "bad.sedm", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.sedm"), IoError);
}

TEST_CASE("embedding model round trip preserves values at f32 precision") {
  const fs::path dir = work_dir("model");
  Rng rng(6);
  EmbeddingModel model{Extractor::init(rng), Classifier::init(7, rng), 42};
  const std::string checksum = save_embedding_model(dir / "model.ckpt", model);
  CHECK(checksum == checkpoint_checksum(dir / "model.ckpt"));

  EmbeddingModel back = load_embedding_model(dir / "model.ckpt");
  CHECK(back.seed == 42);
  CHECK(back.classifier.n_speakers() == 7);
  const auto original = model.extractor.named_tensors();
  const auto restored = back.extractor.named_tensors();
  REQUIRE(original.size() == restored.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    CHECK(original[i].name == restored[i].name);
    REQUIRE(original[i].tensor.size() == restored[i].tensor.size());
    for (std::size_t j = 0; j < original[i].tensor.size(); ++j) {
      const double expected = static_cast<double>(
          static_cast<float>(original[i].tensor.values()[j]));
      CHECK(restored[i].tensor.values()[j] == expected);
    }
  }
}

TEST_CASE("optimizer state rides along in the model checkpoint") {
  const fs::path dir = work_dir("opt");
  Rng rng(7);
  EmbeddingModel model{Extractor::init(rng), Classifier::init(3, rng), 1};
  std::vector<Tensor> params = model.extractor.trainable();
  Adam opt(params);
  save_embedding_model(dir / "model.ckpt", model, {}, &opt);
  const Checkpoint raw = load_checkpoint(dir / "model.ckpt");
  CHECK(raw.meta.contains("optimizer"));
  CHECK(raw.meta["optimizer"]["beta1"] == 0.95);
  bool found_moment = false;
  for (const NamedTensor& t : raw.tensors) {
    if (t.name.rfind("adam.m.", 0) == 0) found_moment = true;
  }
  CHECK(found_moment);
}

TEST_CASE("bank round trip: order, values, degenerate size, corrupt table") {
  const fs::path dir = work_dir("bank");
  Rng rng(8);
  EmbeddingBank bank;
  bank.segments_per_speaker = 200;
  bank.seed = 11;
  bank.extractor_checksum = "feedface00000000";
  for (const char* speaker : {"spk002", "spk000", "spk001"}) {
    std::vector<double> v(kEmbeddingDim);
    for (double& x : v) x = uniform(rng, -1.0, 1.0);
    bank.entries[speaker] = std::move(v);
  }
  save_bank(dir / "bank.ckpt", bank);
  const EmbeddingBank back = load_bank(dir / "bank.ckpt");
  CHECK(back.speaker_ids() == bank.speaker_ids());  // sorted map order
  CHECK(back.segments_per_speaker == 200);
  CHECK(back.extractor_checksum == bank.extractor_checksum);
  for (const auto& [speaker, values] : bank.entries) {
    const auto& restored = back.at(speaker);
    for (std::size_t i = 0; i < values.size(); ++i) {
      CHECK(restored[i] == static_cast<double>(static_cast<float>(values[i])));
    }
  }
  CHECK_THROWS_AS(back.at("spk999"), ValueError);

  // single-speaker bank is valid
  EmbeddingBank tiny;
  tiny.entries["solo"] = std::vector<double>(kEmbeddingDim, 0.25);
  save_bank(dir / "tiny.ckpt", tiny);
  CHECK(load_bank(dir / "tiny.ckpt").entries.size() == 1);

  // a bank container without the speaker table is corrupt
  Checkpoint no_table;
  no_table.architecture = kBankArch;
  no_table.tensors.push_back({"bank.x", Tensor({1, kEmbeddingDim})});
  save_checkpoint(dir / "notable.ckpt", no_table);
  CHECK_THROWS_AS(load_bank(dir / "notable.ckpt"), IoError);
}

TEST_CASE("head round trip keeps metadata and tied parameters") {
  const fs::path dir = work_dir("head");
  Rng rng(9);
  TrainedHead trained;
  trained.head = DemixHead::init(DemixVariant::kShareConcat, rng);
  trained.snr_db = -5.0;
  trained.direction = Direction::kKnownTarget;
  trained.seed = 3;
  trained.extractor_checksum = "aaaa";
  trained.bank_checksum = "bbbb";
  trained.final_mae = 0.123;
  save_head(dir / "head.head", trained);
  const TrainedHead back = load_head(dir / "head.head");
  CHECK(back.head.variant == DemixVariant::kShareConcat);
  CHECK(back.snr_db == -5.0);
  CHECK(back.direction == Direction::kKnownTarget);
  CHECK(back.extractor_checksum == "aaaa");
  CHECK(back.final_mae == doctest::Approx(0.123));
  // the shared branch is still a single storage after loading
  CHECK(back.head.params.size() == 4);

  // architecture mismatch is rejected
  CHECK_THROWS_AS(load_bank(dir / "head.head"), IoError);
}

TEST_CASE("fuzzed corruption always yields clean errors (sample)") {
  const fs::path dir = work_dir("fuzz");
  Checkpoint c = small_checkpoint(10);
  save_checkpoint(dir / "ok.sedm", c);
  const auto good = file_bytes(dir / "ok.sedm");
  Rng rng(99);
  for (int i = 0; i < 60; ++i) {
    auto bytes = good;
    const std::size_t pos = uniform_index(rng, bytes.size());
    bytes[pos] ^= static_cast<unsigned char>(1 + uniform_index(rng, 255));
    write_bytes(dir / "fuzz.sedm", bytes);
    try {
      const Checkpoint loaded = load_checkpoint(dir / "fuzz.sedm");
      // A flip that misses every checked field can still load; that is fine.
      (void)loaded;
    } catch (const Error&) {
      // clean, typed failure
    }
  }
  CHECK(true);  // reaching here means no crash / no foreign exception
}
