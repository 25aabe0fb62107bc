#include "demixkit/extractor.hpp"

#include <cmath>

namespace demixkit {

const std::vector<double>& EmbeddingBank::at(const std::string& speaker_id) const {
  const auto it = entries.find(speaker_id);
  if (it == entries.end()) {
    throw ValueError("embedding bank has no entry for speaker '" + speaker_id + "'");
  }
  return it->second;
}

std::vector<std::string> EmbeddingBank::speaker_ids() const {
  std::vector<std::string> ids;
  ids.reserve(entries.size());
  for (const auto& [id, _] : entries) ids.push_back(id);
  return ids;
}

ResidualBlock ResidualBlock::init(Rng& rng) {
  ResidualBlock block;
  block.conv5 = TdnnLayer::init({-2, -1, 0, 1, 2}, kFrameWidth, kFrameWidth, rng);
  block.conv1 = LinearLayer::init(kFrameWidth, kFrameWidth,
                                  std::sqrt(2.0 / kFrameWidth), rng);
  block.bn1 = BatchNormLayer::init(kFrameWidth);
  return block;
}

Tensor ResidualBlock::forward(const Tensor& x, Mode mode, std::size_t n_segments) {
  Tensor h = conv5.forward(x, mode, n_segments);
  h = bn1.forward(conv1.forward(h), mode);
  // The 5-tap splice trims two frames per side, so the skip path is cropped
  // to line up with the conv path.
  Tensor skip = crop_rows(x, 2, 2, n_segments);
  return relu(add(h, skip));
}

Extractor Extractor::init(Rng& rng) {
  Extractor net;
  net.layer1 = TdnnLayer::init({-1, 0, 1}, kFeatureDim, kFrameWidth, rng);
  net.layer2 = TdnnLayer::init({0}, kFrameWidth, kFrameWidth, rng);
  net.res1 = ResidualBlock::init(rng);
  net.res2 = ResidualBlock::init(rng);
  net.res3 = ResidualBlock::init(rng);
  net.layer3 = TdnnLayer::init({0}, kFrameWidth, kPrePoolWidth, rng);
  net.segment = LinearLayer::init(kPooledWidth, kEmbeddingDim,
                                  std::sqrt(2.0 / kPooledWidth), rng);
  net.segment_bn = BatchNormLayer::init(kEmbeddingDim);
  net.embedding = LinearLayer::init(kEmbeddingDim, kEmbeddingDim,
                                    std::sqrt(1.0 / kEmbeddingDim), rng);
  net.validate();
  return net;
}

std::size_t Extractor::context_shrink() {
  return 2 + 0 + 3 * ResidualBlock::kShrink + 0;
}

Tensor Extractor::forward(const Tensor& frames, Mode mode, std::size_t n_segments) {
  Tensor h = layer1.forward(frames, mode, n_segments);
  h = layer2.forward(h, mode, n_segments);
  h = res1.forward(h, mode, n_segments);
  h = res2.forward(h, mode, n_segments);
  h = res3.forward(h, mode, n_segments);
  h = layer3.forward(h, mode, n_segments);
  Tensor pooled = stats_pool(h, n_segments);
  Tensor seg = relu(segment_bn.forward(segment.forward(pooled), mode));
  return embedding.forward(seg);
}

std::vector<Tensor> Extractor::trainable() const {
  std::vector<Tensor> params;
  append_params(params, layer1);
  append_params(params, layer2);
  for (const ResidualBlock* block : {&res1, &res2, &res3}) {
    append_params(params, block->conv5);
    append_params(params, block->conv1);
    append_params(params, block->bn1);
  }
  append_params(params, layer3);
  append_params(params, segment);
  append_params(params, segment_bn);
  append_params(params, embedding);
  return params;
}

namespace {

void push_linear(std::vector<NamedTensor>& out, const std::string& prefix,
                 const LinearLayer& layer) {
  out.push_back({prefix + ".weight", layer.weight});
  out.push_back({prefix + ".bias", layer.bias});
}

void push_bn(std::vector<NamedTensor>& out, const std::string& prefix,
             const BatchNormLayer& layer) {
  out.push_back({prefix + ".gamma", layer.gamma});
  out.push_back({prefix + ".beta", layer.beta});
  out.push_back({prefix + ".running_mean", layer.mean_tensor()});
  out.push_back({prefix + ".running_var", layer.var_tensor()});
}

void push_tdnn(std::vector<NamedTensor>& out, const std::string& prefix,
               const TdnnLayer& layer) {
  push_linear(out, prefix, layer.affine);
  push_bn(out, prefix + ".bn", layer.bn);
}

const Tensor& named(const std::map<std::string, Tensor>& tensors,
                    const std::string& name) {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw IoError("checkpoint is missing tensor '" + name + "'");
  return it->second;
}

void pull_linear(const std::map<std::string, Tensor>& tensors,
                 const std::string& prefix, LinearLayer& layer) {
  const Tensor& w = named(tensors, prefix + ".weight");
  const Tensor& b = named(tensors, prefix + ".bias");
  if (w.shape() != layer.weight.shape() || b.shape() != layer.bias.shape()) {
    throw IoError("checkpoint tensor '" + prefix + "' has shape " + w.shape_str() +
                  ", expected " + layer.weight.shape_str());
  }
  layer.weight.values() = w.values();
  layer.bias.values() = b.values();
}

void pull_bn(const std::map<std::string, Tensor>& tensors, const std::string& prefix,
             BatchNormLayer& layer) {
  const Tensor& gamma = named(tensors, prefix + ".gamma");
  const Tensor& beta = named(tensors, prefix + ".beta");
  if (gamma.shape() != layer.gamma.shape() || beta.shape() != layer.beta.shape()) {
    throw IoError("checkpoint tensor '" + prefix + "' has unexpected shape");
  }
  layer.gamma.values() = gamma.values();
  layer.beta.values() = beta.values();
  layer.set_stats(named(tensors, prefix + ".running_mean"),
                  named(tensors, prefix + ".running_var"));
}

void pull_tdnn(const std::map<std::string, Tensor>& tensors, const std::string& prefix,
               TdnnLayer& layer) {
  pull_linear(tensors, prefix, layer.affine);
  pull_bn(tensors, prefix + ".bn", layer.bn);
}

}  // namespace

std::vector<NamedTensor> Extractor::named_tensors() const {
  std::vector<NamedTensor> out;
  push_tdnn(out, "layer1", layer1);
  push_tdnn(out, "layer2", layer2);
  const ResidualBlock* blocks[] = {&res1, &res2, &res3};
  for (int i = 0; i < 3; ++i) {
    const std::string prefix = "res" + std::to_string(i + 1);
    push_tdnn(out, prefix + ".conv5", blocks[i]->conv5);
    push_linear(out, prefix + ".conv1", blocks[i]->conv1);
    push_bn(out, prefix + ".bn1", blocks[i]->bn1);
  }
  push_tdnn(out, "layer3", layer3);
  push_linear(out, "segment", segment);
  push_bn(out, "segment.bn", segment_bn);
  push_linear(out, "embedding", embedding);
  return out;
}

void Extractor::load_named(const std::map<std::string, Tensor>& tensors) {
  pull_tdnn(tensors, "layer1", layer1);
  pull_tdnn(tensors, "layer2", layer2);
  ResidualBlock* blocks[] = {&res1, &res2, &res3};
  for (int i = 0; i < 3; ++i) {
    const std::string prefix = "res" + std::to_string(i + 1);
    pull_tdnn(tensors, prefix + ".conv5", blocks[i]->conv5);
    pull_linear(tensors, prefix + ".conv1", blocks[i]->conv1);
    pull_bn(tensors, prefix + ".bn1", blocks[i]->bn1);
  }
  pull_tdnn(tensors, "layer3", layer3);
  pull_linear(tensors, "segment", segment);
  pull_bn(tensors, "segment.bn", segment_bn);
  pull_linear(tensors, "embedding", embedding);
}

void Extractor::validate() const {
  auto expect = [](bool ok, const std::string& what) {
    if (!ok) throw ShapeError("extractor layer width mismatch: " + what);
  };
  expect(layer1.affine.in_dim() == 3 * kFeatureDim &&
             layer1.affine.out_dim() == kFrameWidth,
         "layer1");
  expect(layer2.affine.in_dim() == kFrameWidth &&
             layer2.affine.out_dim() == kFrameWidth,
         "layer2");
  for (const ResidualBlock* block : {&res1, &res2, &res3}) {
    expect(block->conv5.affine.in_dim() == 5 * kFrameWidth &&
               block->conv5.affine.out_dim() == kFrameWidth,
           "residual 5-tap conv");
    expect(block->conv1.in_dim() == kFrameWidth &&
               block->conv1.out_dim() == kFrameWidth,
           "residual 1-tap conv");
  }
  expect(layer3.affine.in_dim() == kFrameWidth &&
             layer3.affine.out_dim() == kPrePoolWidth,
         "layer3");
  expect(segment.in_dim() == kPooledWidth && segment.out_dim() == kEmbeddingDim,
         "segment layer");
  expect(embedding.in_dim() == kEmbeddingDim && embedding.out_dim() == kEmbeddingDim,
         "embedding layer");
}

Classifier Classifier::init(std::size_t n_speakers, Rng& rng) {
  Classifier c;
  c.hidden = LinearLayer::init(kEmbeddingDim, kEmbeddingDim,
                               std::sqrt(2.0 / kEmbeddingDim), rng);
  c.bn = BatchNormLayer::init(kEmbeddingDim);
  c.output = LinearLayer::init(kEmbeddingDim, n_speakers,
                               std::sqrt(1.0 / kEmbeddingDim), rng);
  return c;
}

Tensor Classifier::forward(const Tensor& embeddings, Mode mode) {
  Tensor h = relu(bn.forward(hidden.forward(embeddings), mode));
  return output.forward(h);
}

std::vector<Tensor> Classifier::trainable() const {
  std::vector<Tensor> params;
  append_params(params, hidden);
  append_params(params, bn);
  append_params(params, output);
  return params;
}

std::vector<NamedTensor> Classifier::named_tensors() const {
  std::vector<NamedTensor> out;
  push_linear(out, "classifier.hidden", hidden);
  push_bn(out, "classifier.bn", bn);
  push_linear(out, "classifier.output", output);
  return out;
}

void Classifier::load_named(const std::map<std::string, Tensor>& tensors) {
  pull_linear(tensors, "classifier.hidden", hidden);
  pull_bn(tensors, "classifier.bn", bn);
  pull_linear(tensors, "classifier.output", output);
}

Tensor embedding_to_tensor(const SpeakerEmbedding& e) {
  if (e.values.size() != kEmbeddingDim) {
    throw ShapeError("embedding has dimension " + std::to_string(e.values.size()) +
                     ", expected " + std::to_string(kEmbeddingDim));
  }
  return Tensor({1, kEmbeddingDim}, e.values);
}

namespace {

Tensor features_to_tensor(const FeatureMatrix& f) {
  return Tensor({f.num_frames, FeatureMatrix::kNumCoeffs}, f.frames);
}

}  // namespace

SpeakerEmbedding extract_embedding(Extractor& extractor, const FeatureMatrix& features,
                                   Mode mode) {
  if (features.num_frames < Extractor::min_frames()) {
    throw ValueError("segment of " + std::to_string(features.num_frames) +
                     " frames is too short; the extractor needs at least " +
                     std::to_string(Extractor::min_frames()));
  }
  Tensor emb = extractor.forward(features_to_tensor(features), mode, 1);
  SpeakerEmbedding out;
  out.values = emb.values();
  return out;
}

std::vector<SpeakerEmbedding> extract_embeddings(Extractor& extractor,
                                                 const std::vector<FeatureMatrix>& segments,
                                                 std::size_t batch_size) {
  std::vector<SpeakerEmbedding> out(segments.size());
  std::size_t at = 0;
  while (at < segments.size()) {
    const std::size_t take = std::min(batch_size, segments.size() - at);
    const std::size_t t = segments[at].num_frames;
    bool uniform_len = true;
    for (std::size_t i = 0; i < take; ++i) {
      uniform_len = uniform_len && segments[at + i].num_frames == t;
    }
    if (!uniform_len || t < Extractor::min_frames()) {
      // Fall back to one at a time for ragged input.
      out[at] = extract_embedding(extractor, segments[at], Mode::kEval);
      ++at;
      continue;
    }
    Tensor frames({take * t, FeatureMatrix::kNumCoeffs});
    double* dst = frames.values().data();
    for (std::size_t i = 0; i < take; ++i) {
      std::copy(segments[at + i].frames.begin(), segments[at + i].frames.end(),
                dst + i * t * FeatureMatrix::kNumCoeffs);
    }
    Tensor emb = extractor.forward(frames, Mode::kEval, take);
    for (std::size_t i = 0; i < take; ++i) {
      out[at + i].values.assign(emb.values().begin() + i * kEmbeddingDim,
                                emb.values().begin() + (i + 1) * kEmbeddingDim);
    }
    at += take;
  }
  return out;
}

std::vector<double> classify(Classifier& classifier, const SpeakerEmbedding& embedding) {
  Tensor logits = classifier.forward(embedding_to_tensor(embedding), Mode::kEval);
  return softmax_row(logits.values());
}

}  // namespace demixkit
