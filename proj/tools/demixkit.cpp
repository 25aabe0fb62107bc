// Command-line driver for the two-step speaker embedding de-mixing
// pipeline: synthesize a corpus, train the extractor, collect the clean
// embedding bank, train de-mixing heads and evaluate them.
//
// Exit codes: 0 success, 1 usage, 2 data/config error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "demixkit/config.hpp"
#include "demixkit/dataset.hpp"
#include "demixkit/eval.hpp"
#include "demixkit/gradcheck.hpp"
#include "demixkit/store.hpp"
#include "demixkit/train.hpp"

namespace fs = std::filesystem;
using namespace demixkit;

namespace {

// CLI-level misuse that should exit 1 rather than 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw IoError("cannot write " + path.string());
  file << text;
}

void write_training_log(const fs::path& path, const std::vector<EpochRecord>& log) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw IoError("cannot write " + path.string());
  for (const EpochRecord& r : log) {
    nlohmann::json line = {{"epoch", r.epoch},
                           {"loss", r.loss},
                           {"holdout_accuracy", r.holdout_accuracy}};
    file << line.dump() << "\n";
  }
}

struct SynthArgs {
  int speakers = 20;
  int utts_per_speaker = 8;
  double duration_s = 3.0;
  std::uint64_t seed = 7;
  std::string out;
  bool force = false;
};

int cmd_synth_data(const SynthArgs& args) {
  if (args.speakers < 2) {
    throw UsageError("--speakers must be at least 2 (mixing needs two speakers)");
  }
  if (args.utts_per_speaker < 2) {
    throw UsageError("--utts-per-speaker must be at least 2");
  }
  const fs::path out(args.out);
  if (fs::exists(out) && !fs::is_empty(out) && !args.force) {
    throw UsageError("output directory " + out.string() +
                     " is not empty (use --force to write anyway)");
  }
  SynthConfig config{args.speakers, args.utts_per_speaker, args.duration_s, args.seed};
  const CorpusManifest manifest = synth_corpus(config, out);
  std::cout << "wrote " << manifest.entries.size() << " utterances for "
            << manifest.speakers.size() << " speakers under " << out.string() << "\n";
  for (const std::string& w : manifest.warnings) std::cout << "warning: " << w << "\n";
  return 0;
}

struct TrainExtractorArgs {
  std::string manifest;
  std::string config_path;
  std::string out;
  int epochs = -1;  // -1: take from config/defaults
  int batch_size = -1;
  int crop_frames = -1;
  int crops_per_utt = -1;
  double learning_rate = -1.0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool linear_probe = false;
};

int cmd_train_extractor(const TrainExtractorArgs& args) {
  StepOneConfig config;
  if (!args.config_path.empty()) {
    config = ExperimentConfig::load(args.config_path).step_one;
  }
  if (args.epochs >= 0) config.epochs = args.epochs;
  if (args.batch_size > 0) config.batch_size = args.batch_size;
  if (args.crop_frames > 0) config.crop_frames = args.crop_frames;
  if (args.crops_per_utt > 0) config.crops_per_utterance = args.crops_per_utt;
  if (args.learning_rate > 0) config.adam.learning_rate = args.learning_rate;
  if (args.seed_set) config.seed = args.seed;
  if (args.linear_probe) config.linear_probe = true;

  const Dataset data = Dataset::open(args.manifest);
  StepOneResult result = train_step_one(data, config);
  const std::string checksum = save_embedding_model(args.out, result.model);
  write_training_log(fs::path(args.out).string() + ".log.jsonl", result.log);
  std::cout << "extractor checkpoint " << args.out << " (payload " << checksum << ")\n";
  if (!result.log.empty()) {
    std::cout << "final holdout accuracy " << result.log.back().holdout_accuracy
              << "\n";
  }
  return 0;
}

struct BuildBankArgs {
  std::string manifest;
  std::string extractor;
  std::string out;
  int segments = 200;
  int crop_frames = 200;
  std::uint64_t seed = 2;
};

int cmd_build_bank(const BuildBankArgs& args) {
  const Dataset data = Dataset::open(args.manifest);
  EmbeddingModel model = load_embedding_model(args.extractor);
  const std::string extractor_checksum = checkpoint_checksum(args.extractor);
  const EmbeddingBank bank = build_bank(model.extractor, data, args.segments,
                                        args.crop_frames, args.seed,
                                        extractor_checksum);
  save_bank(args.out, bank);
  std::cout << "bank " << args.out << " with " << bank.entries.size()
            << " speakers (extractor " << extractor_checksum << ")\n";
  return 0;
}

struct TrainDemixArgs {
  std::string manifest;
  std::string extractor;
  std::string bank;
  std::string variant = "separate-concat";
  double snr_db = 0.0;
  std::string direction = "known-interferer";
  std::string final_activation = "relu";
  std::string out;
  int epochs = 12;
  int passes = 4;
  int batch_size = 32;
  int crop_frames = 200;
  std::uint64_t seed = 3;
  double learning_rate = 1e-3;
};

int cmd_train_demix(const TrainDemixArgs& args) {
  const Dataset data = Dataset::open(args.manifest);
  EmbeddingModel model = load_embedding_model(args.extractor);
  EmbeddingBank bank = load_bank(args.bank);
  const std::string extractor_checksum = checkpoint_checksum(args.extractor);
  if (bank.extractor_checksum != extractor_checksum) {
    throw ValueError("bank " + args.bank + " was built from extractor " +
                     bank.extractor_checksum + ", not " + extractor_checksum +
                     " (provenance mismatch)");
  }

  StepTwoConfig config;
  config.variant = parse_variant(args.variant);
  config.snr_db = args.snr_db;
  config.direction = parse_direction(args.direction);
  config.final_activation = parse_final_activation(args.final_activation);
  config.epochs = args.epochs;
  config.passes_per_epoch = args.passes;
  config.batch_size = args.batch_size;
  config.crop_frames = args.crop_frames;
  config.seed = args.seed;
  config.adam.learning_rate = args.learning_rate;

  MixtureEmbeddingCache cache;
  StepTwoResult result = train_step_two(model.extractor, bank, data, config, cache);
  result.trained.extractor_checksum = extractor_checksum;
  result.trained.bank_checksum = checkpoint_checksum(args.bank);
  save_head(args.out, result.trained);
  std::cout << "head " << args.out << " (" << to_string(config.variant) << ", "
            << args.snr_db << " dB, " << to_string(config.direction)
            << ") final MAE " << result.trained.final_mae << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string manifest;
  std::string extractor;
  std::string bank;
  std::string heads_dir;
  std::string test_pairs;
  int pairs_per_snr = 200;
  std::uint64_t seed = 4;
  int crop_frames = 200;
  std::string out = "report.json";
  std::string dump_mixtures;
};

int cmd_evaluate(const EvaluateArgs& args) {
  const Dataset data = Dataset::open(args.manifest);
  EmbeddingModel model = load_embedding_model(args.extractor);
  EmbeddingBank bank = load_bank(args.bank);
  const std::string extractor_checksum = checkpoint_checksum(args.extractor);
  const std::string bank_checksum = checkpoint_checksum(args.bank);
  if (bank.extractor_checksum != extractor_checksum) {
    throw ValueError("bank/extractor provenance mismatch");
  }

  std::vector<TrainedHead> heads;
  std::vector<fs::path> head_files;
  if (fs::exists(args.heads_dir)) {
    for (const auto& entry : fs::directory_iterator(args.heads_dir)) {
      if (entry.path().extension() == ".head") head_files.push_back(entry.path());
    }
  }
  std::sort(head_files.begin(), head_files.end());
  for (const fs::path& file : head_files) {
    TrainedHead head = load_head(file);
    if (head.extractor_checksum != extractor_checksum ||
        head.bank_checksum != bank_checksum) {
      throw ValueError("head " + file.string() + " was trained against different "
                       "extractor/bank artifacts (provenance mismatch)");
    }
    heads.push_back(std::move(head));
  }
  if (heads.empty()) {
    throw ValueError("no .head files found in '" + args.heads_dir + "'");
  }

  // SNR grid and directions present among the heads.
  std::set<double> snrs;
  std::set<Direction> directions;
  for (const TrainedHead& h : heads) {
    snrs.insert(h.snr_db);
    directions.insert(h.direction);
  }

  // Test pairs per SNR: either from a file or sampled here.
  std::map<long, std::vector<MixSpec>> pairs_by_mdb;
  if (!args.test_pairs.empty()) {
    for (MixSpec& p : load_pairs(args.test_pairs)) {
      pairs_by_mdb[std::lround(p.snr_db * 1000)].push_back(std::move(p));
    }
  } else {
    for (double snr : snrs) {
      pairs_by_mdb[std::lround(snr * 1000)] =
          sample_pairs(data.manifest(), Split::kTest, args.pairs_per_snr, snr,
                       args.seed);
    }
  }
  // Enforce the split discipline on whatever pairs we evaluate.
  for (const auto& [mdb, pairs] : pairs_by_mdb) {
    for (const MixSpec& p : pairs) {
      if (data.manifest().entry(p.target_utt).split != Split::kTest ||
          data.manifest().entry(p.interferer_utt).split != Split::kTest) {
        throw ValueError("test pair uses non-test utterances: " + p.target_utt +
                         " / " + p.interferer_utt);
      }
    }
  }

  if (!args.dump_mixtures.empty()) {
    fs::create_directories(args.dump_mixtures);
    for (const auto& [mdb, pairs] : pairs_by_mdb) {
      for (const MixSpec& p : pairs) {
        const MixResult mixed =
            mix_at_snr(data.waveform(p.target_utt), data.waveform(p.interferer_utt),
                       p.snr_db);
        write_wav(fs::path(args.dump_mixtures) /
                      (p.target_utt + "__" + p.interferer_utt + "__" +
                       std::to_string(mdb) + "mdb.wav"),
                  mixed.mixture);
      }
    }
  }

  MixtureEmbeddingCache cache;
  EvalContext ctx{model.extractor, model.classifier, bank,   data,
                  cache,           args.crop_frames,  args.seed};
  EvalReport report;
  for (Direction direction : directions) {
    for (const auto& [mdb, pairs] : pairs_by_mdb) {
      const double snr = mdb / 1000.0;
      if (pairs.empty()) continue;
      report.set(direction, "before", snr, evaluate_cell(nullptr, pairs, direction, ctx));
      for (const TrainedHead& h : heads) {
        if (h.direction != direction || std::lround(h.snr_db * 1000) != mdb) continue;
        report.set(direction, to_string(h.head.variant), snr,
                   evaluate_cell(&h.head, pairs, direction, ctx));
      }
      report.set(direction, "clean", snr, evaluate_clean(pairs, direction, ctx));
    }
  }

  write_text(args.out, report.to_json());
  std::cout << report.to_table();
  return 0;
}

struct ReportArgs {
  std::string in = "report.json";
  std::string format = "table";
};

int cmd_report(const ReportArgs& args) {
  std::ifstream file(args.in);
  if (!file) throw IoError("cannot open report: " + args.in);
  std::string text((std::istreambuf_iterator<char>(file)),
                   std::istreambuf_iterator<char>());
  const EvalReport report = EvalReport::from_json(text);
  std::cout << render_report(report, parse_report_format(args.format));
  return 0;
}

struct GridArgs {
  std::string config_path;
  std::string out;
};

int cmd_run_grid(const GridArgs& args) {
  const ExperimentConfig config = args.config_path.empty()
                                      ? ExperimentConfig{}
                                      : ExperimentConfig::load(args.config_path);
  const fs::path out(args.out);
  fs::create_directories(out / "heads");

  // Corpus.
  fs::path manifest_path;
  if (config.synthetic) {
    synth_corpus(*config.synthetic, out / "corpus");
    manifest_path = out / "corpus" / "manifest.json";
  } else {
    manifest_path = config.manifest_path;
  }
  const Dataset data = Dataset::open(manifest_path);
  std::cout << "corpus: " << data.manifest().entries.size() << " utterances, "
            << data.manifest().speakers.size() << " speakers\n";

  // Step one.
  StepOneResult one = train_step_one(data, config.step_one);
  EmbeddingModel& model = one.model;
  const fs::path extractor_path = out / "extractor.ckpt";
  const std::string extractor_checksum =
      save_embedding_model(extractor_path, model);
  write_training_log(out / "extractor.ckpt.log.jsonl", one.log);
  std::cout << "step one done; holdout accuracy "
            << (one.log.empty() ? 0.0 : one.log.back().holdout_accuracy) << "\n";

  // Bank.
  const EmbeddingBank bank =
      build_bank(model.extractor, data, config.bank_segments_per_speaker,
                 config.step_one.crop_frames, config.bank_seed, extractor_checksum);
  const fs::path bank_path = out / "bank.ckpt";
  save_bank(bank_path, bank);
  const std::string bank_checksum = checkpoint_checksum(bank_path);

  // Step two grid; one shared mixture-embedding cache.
  MixtureEmbeddingCache cache;
  std::vector<TrainedHead> heads;
  for (Direction direction : config.directions) {
    for (double snr : config.snrs_db) {
      for (DemixVariant variant : config.variants) {
        StepTwoConfig head_config = config.step_two;
        head_config.variant = variant;
        head_config.snr_db = snr;
        head_config.direction = direction;
        StepTwoResult result =
            train_step_two(model.extractor, bank, data, head_config, cache);
        result.trained.extractor_checksum = extractor_checksum;
        result.trained.bank_checksum = bank_checksum;
        char name[128];
        std::snprintf(name, sizeof(name), "%s_%gdb_%s.head",
                      to_string(variant).c_str(), snr,
                      to_string(direction).c_str());
        save_head(out / "heads" / name, result.trained);
        std::cout << "trained " << name << " (final MAE "
                  << result.trained.final_mae << ")\n";
        heads.push_back(std::move(result.trained));
      }
    }
  }

  // Evaluation over the same grid.
  EvalContext ctx{model.extractor, model.classifier,       bank, data, cache,
                  config.step_two.crop_frames, config.eval_seed};
  EvalReport report;
  for (Direction direction : config.directions) {
    for (double snr : config.snrs_db) {
      const auto pairs = sample_pairs(data.manifest(), Split::kTest,
                                      config.eval_pairs_per_snr, snr,
                                      config.eval_seed);
      report.set(direction, "before", snr,
                 evaluate_cell(nullptr, pairs, direction, ctx));
      for (const TrainedHead& h : heads) {
        if (h.direction != direction || h.snr_db != snr) continue;
        report.set(direction, to_string(h.head.variant), snr,
                   evaluate_cell(&h.head, pairs, direction, ctx));
      }
      report.set(direction, "clean", snr, evaluate_clean(pairs, direction, ctx));
    }
  }
  write_text(out / "report.json", report.to_json());
  write_text(out / "report.csv", report.to_csv());
  write_text(out / "report.txt", report.to_table());
  std::cout << report.to_table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"demixkit - speaker embedding de-mixing toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth-data", "generate a synthetic corpus");
  synth_cmd->add_option("--speakers", synth.speakers, "number of speakers");
  synth_cmd->add_option("--utts-per-speaker", synth.utts_per_speaker,
                        "utterances per speaker");
  synth_cmd->add_option("--duration-s", synth.duration_s, "utterance length (s)");
  synth_cmd->add_option("--seed", synth.seed, "corpus seed");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_flag("--force", synth.force, "write into a non-empty directory");

  TrainExtractorArgs tex;
  auto* tex_cmd = app.add_subcommand("train-extractor", "step one: train the "
                                     "embedding extractor and classifier");
  tex_cmd->add_option("--manifest", tex.manifest, "corpus manifest")->required();
  tex_cmd->add_option("--config", tex.config_path, "experiment config JSON");
  tex_cmd->add_option("--out", tex.out, "checkpoint path")->required();
  tex_cmd->add_option("--epochs", tex.epochs, "training epochs");
  tex_cmd->add_option("--batch-size", tex.batch_size, "segments per batch");
  tex_cmd->add_option("--crop-frames", tex.crop_frames, "training crop (frames)");
  tex_cmd->add_option("--crops-per-utt", tex.crops_per_utt,
                      "crops per utterance per epoch");
  tex_cmd->add_option("--lr", tex.learning_rate, "Adam learning rate");
  tex_cmd->add_option("--seed", tex.seed, "training seed")
      ->each([&tex](const std::string&) { tex.seed_set = true; });
  tex_cmd->add_flag("--linear-probe", tex.linear_probe,
                    "re-fit the classifier on frozen embeddings afterwards");

  BuildBankArgs bank_args;
  auto* bank_cmd = app.add_subcommand("build-bank", "collect per-speaker clean "
                                      "embedding averages");
  bank_cmd->add_option("--manifest", bank_args.manifest, "corpus manifest")->required();
  bank_cmd->add_option("--extractor", bank_args.extractor, "extractor checkpoint")
      ->required();
  bank_cmd->add_option("--out", bank_args.out, "bank path")->required();
  bank_cmd->add_option("--segments", bank_args.segments, "segments per speaker");
  bank_cmd->add_option("--crop-frames", bank_args.crop_frames, "segment length");
  bank_cmd->add_option("--seed", bank_args.seed, "sampling seed");

  TrainDemixArgs dmx;
  auto* dmx_cmd = app.add_subcommand("train-demix", "step two: train one "
                                     "de-mixing head");
  dmx_cmd->add_option("--manifest", dmx.manifest, "corpus manifest")->required();
  dmx_cmd->add_option("--extractor", dmx.extractor, "extractor checkpoint")->required();
  dmx_cmd->add_option("--bank", dmx.bank, "embedding bank")->required();
  dmx_cmd->add_option("--variant", dmx.variant,
                      "sub|mul|concat1|concat2|share-concat|separate-concat");
  dmx_cmd->add_option("--snr-db", dmx.snr_db, "target-to-interferer SNR (dB)");
  dmx_cmd->add_option("--direction", dmx.direction,
                      "known-interferer|known-target");
  dmx_cmd->add_option("--final-activation", dmx.final_activation, "relu|none");
  dmx_cmd->add_option("--out", dmx.out, "head path")->required();
  dmx_cmd->add_option("--epochs", dmx.epochs, "training epochs");
  dmx_cmd->add_option("--passes", dmx.passes, "optimization passes per epoch");
  dmx_cmd->add_option("--batch-size", dmx.batch_size, "pairs per batch");
  dmx_cmd->add_option("--crop-frames", dmx.crop_frames, "mixture crop (frames)");
  dmx_cmd->add_option("--seed", dmx.seed, "training seed");
  dmx_cmd->add_option("--lr", dmx.learning_rate, "Adam learning rate");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "score heads on test mixtures");
  ev_cmd->add_option("--manifest", ev.manifest, "corpus manifest")->required();
  ev_cmd->add_option("--extractor", ev.extractor, "extractor checkpoint")->required();
  ev_cmd->add_option("--bank", ev.bank, "embedding bank")->required();
  ev_cmd->add_option("--heads", ev.heads_dir, "directory of .head files")->required();
  ev_cmd->add_option("--test-pairs", ev.test_pairs, "MixSpec JSON file");
  ev_cmd->add_option("--pairs", ev.pairs_per_snr, "pairs to sample per SNR");
  ev_cmd->add_option("--seed", ev.seed, "pair sampling seed");
  ev_cmd->add_option("--crop-frames", ev.crop_frames, "mixture crop (frames)");
  ev_cmd->add_option("--out", ev.out, "report JSON path");
  ev_cmd->add_option("--dump-mixtures", ev.dump_mixtures,
                     "write evaluated mixtures as WAV to this directory");

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "render a report file");
  rep_cmd->add_option("--in", rep.in, "report JSON path");
  rep_cmd->add_option("--format", rep.format, "table|json|csv");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient "
                                      "suite (CI gate)");

  GridArgs grid;
  auto* grid_cmd = app.add_subcommand("run-grid", "full pipeline: corpus, step "
                                      "one, bank, all heads, evaluation");
  grid_cmd->add_option("--config", grid.config_path, "experiment config JSON");
  grid_cmd->add_option("--out", grid.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth_data(synth);
    if (tex_cmd->parsed()) return cmd_train_extractor(tex);
    if (bank_cmd->parsed()) return cmd_build_bank(bank_args);
    if (dmx_cmd->parsed()) return cmd_train_demix(dmx);
    if (ev_cmd->parsed()) return cmd_evaluate(ev);
    if (rep_cmd->parsed()) return cmd_report(rep);
    if (grad_cmd->parsed()) {
      return run_gradient_suite(std::cout) == 0 ? 0 : 3;
    }
    if (grid_cmd->parsed()) return cmd_run_grid(grid);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
