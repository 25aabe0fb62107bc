#include "demixkit/config.hpp"

#include <fstream>

#include <json.hpp>

#include "demixkit/errors.hpp"

namespace demixkit {

namespace {

AdamConfig adam_from_json(const nlohmann::json& j, AdamConfig base) {
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.beta1 = j.value("beta1", base.beta1);
  base.beta2 = j.value("beta2", base.beta2);
  base.epsilon = j.value("epsilon", base.epsilon);
  return base;
}

nlohmann::json adam_to_json(const AdamConfig& a) {
  return {{"learning_rate", a.learning_rate},
          {"beta1", a.beta1},
          {"beta2", a.beta2},
          {"epsilon", a.epsilon}};
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed config JSON: ") + e.what());
  }
  ExperimentConfig config;
  try {
    if (doc.contains("corpus")) {
      const auto& corpus = doc.at("corpus");
      if (corpus.contains("manifest")) {
        config.manifest_path = corpus.at("manifest").get<std::string>();
        config.synthetic.reset();
      } else if (corpus.contains("synthetic")) {
        const auto& synth = corpus.at("synthetic");
        SynthConfig s;
        s.n_speakers = synth.value("speakers", s.n_speakers);
        s.utts_per_speaker = synth.value("utts_per_speaker", s.utts_per_speaker);
        s.duration_s = synth.value("duration_s", s.duration_s);
        s.seed = synth.value("seed", s.seed);
        config.synthetic = s;
      }
    }
    if (doc.contains("step_one")) {
      const auto& one = doc.at("step_one");
      config.step_one.epochs = one.value("epochs", config.step_one.epochs);
      config.step_one.batch_size = one.value("batch_size", config.step_one.batch_size);
      config.step_one.crop_frames = one.value("crop_frames", config.step_one.crop_frames);
      config.step_one.crops_per_utterance =
          one.value("crops_per_utterance", config.step_one.crops_per_utterance);
      config.step_one.seed = one.value("seed", config.step_one.seed);
      config.step_one.linear_probe =
          one.value("linear_probe", config.step_one.linear_probe);
      if (one.contains("adam")) {
        config.step_one.adam = adam_from_json(one.at("adam"), config.step_one.adam);
      }
    }
    if (doc.contains("bank")) {
      const auto& bank = doc.at("bank");
      config.bank_segments_per_speaker =
          bank.value("segments_per_speaker", config.bank_segments_per_speaker);
      config.bank_seed = bank.value("seed", config.bank_seed);
    }
    if (doc.contains("step_two")) {
      const auto& two = doc.at("step_two");
      if (two.contains("variants")) {
        config.variants.clear();
        for (const auto& name : two.at("variants")) {
          config.variants.push_back(parse_variant(name.get<std::string>()));
        }
      }
      if (two.contains("snrs_db")) {
        config.snrs_db = two.at("snrs_db").get<std::vector<double>>();
      }
      if (two.contains("directions")) {
        config.directions.clear();
        for (const auto& name : two.at("directions")) {
          config.directions.push_back(parse_direction(name.get<std::string>()));
        }
      }
      config.step_two.epochs = two.value("epochs", config.step_two.epochs);
      config.step_two.passes_per_epoch =
          two.value("passes_per_epoch", config.step_two.passes_per_epoch);
      config.step_two.batch_size = two.value("batch_size", config.step_two.batch_size);
      config.step_two.crop_frames =
          two.value("crop_frames", config.step_two.crop_frames);
      config.step_two.seed = two.value("seed", config.step_two.seed);
      if (two.contains("final_activation")) {
        config.step_two.final_activation =
            parse_final_activation(two.at("final_activation").get<std::string>());
      }
      if (two.contains("adam")) {
        config.step_two.adam = adam_from_json(two.at("adam"), config.step_two.adam);
      }
    }
    if (doc.contains("evaluation")) {
      const auto& ev = doc.at("evaluation");
      config.eval_pairs_per_snr = ev.value("pairs_per_snr", config.eval_pairs_per_snr);
      config.eval_seed = ev.value("seed", config.eval_seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed config JSON: ") + e.what());
  }
  return config;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot open config: " + path.string());
  std::string text((std::istreambuf_iterator<char>(file)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string ExperimentConfig::to_json_text() const {
  nlohmann::json doc;
  if (synthetic) {
    doc["corpus"]["synthetic"] = {{"speakers", synthetic->n_speakers},
                                  {"utts_per_speaker", synthetic->utts_per_speaker},
                                  {"duration_s", synthetic->duration_s},
                                  {"seed", synthetic->seed}};
  } else {
    doc["corpus"]["manifest"] = manifest_path;
  }
  doc["step_one"] = {{"epochs", step_one.epochs},
                     {"batch_size", step_one.batch_size},
                     {"crop_frames", step_one.crop_frames},
                     {"crops_per_utterance", step_one.crops_per_utterance},
                     {"seed", step_one.seed},
                     {"linear_probe", step_one.linear_probe},
                     {"adam", adam_to_json(step_one.adam)}};
  doc["bank"] = {{"segments_per_speaker", bank_segments_per_speaker},
                 {"seed", bank_seed}};
  nlohmann::json variant_names = nlohmann::json::array();
  for (DemixVariant v : variants) variant_names.push_back(to_string(v));
  nlohmann::json direction_names = nlohmann::json::array();
  for (Direction d : directions) direction_names.push_back(to_string(d));
  doc["step_two"] = {{"variants", variant_names},
                     {"snrs_db", snrs_db},
                     {"directions", direction_names},
                     {"epochs", step_two.epochs},
                     {"passes_per_epoch", step_two.passes_per_epoch},
                     {"batch_size", step_two.batch_size},
                     {"crop_frames", step_two.crop_frames},
                     {"seed", step_two.seed},
                     {"final_activation", to_string(step_two.final_activation)},
                     {"adam", adam_to_json(step_two.adam)}};
  doc["evaluation"] = {{"pairs_per_snr", eval_pairs_per_snr}, {"seed", eval_seed}};
  return doc.dump(2) + "\n";
}

}  // namespace demixkit
