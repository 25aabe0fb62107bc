#pragma once

#include <map>
#include <string>
#include <vector>

#include "demixkit/mfcc.hpp"
#include "demixkit/nn.hpp"

namespace demixkit {

constexpr std::size_t kFeatureDim = 20;
constexpr std::size_t kFrameWidth = 512;
constexpr std::size_t kPrePoolWidth = 1500;
constexpr std::size_t kPooledWidth = 2 * kPrePoolWidth;
constexpr std::size_t kEmbeddingDim = 512;

struct SpeakerEmbedding {
  std::vector<double> values;  // exactly kEmbeddingDim entries
  std::string speaker_id;      // optional label
};

// Per-speaker averaged clean embeddings collected after step-one training.
struct EmbeddingBank {
  std::map<std::string, std::vector<double>> entries;
  int segments_per_speaker = 0;
  std::uint64_t seed = 0;
  std::string extractor_checksum;  // provenance of the extractor that produced it

  const std::vector<double>& at(const std::string& speaker_id) const;
  std::vector<std::string> speaker_ids() const;
};

// Frame-level residual TDNN block: 5-tap affine -> BN -> ReLU ->
// 1-tap affine -> BN -> add cropped skip -> ReLU.
struct ResidualBlock {
  TdnnLayer conv5;       // context [-2..2]
  LinearLayer conv1;     // context [t]
  BatchNormLayer bn1;

  static ResidualBlock init(Rng& rng);
  Tensor forward(const Tensor& x, Mode mode, std::size_t n_segments);
  static constexpr std::size_t kShrink = 4;  // frames lost per block
};

// The speaker-embedding network: two TDNN layers, three residual TDNN
// blocks, a 1500-wide TDNN layer, statistics pooling, a 512-wide segment
// layer, and a bare affine embedding layer (no BN, no activation).
struct Extractor {
  TdnnLayer layer1;          // context [t-1, t, t+1], 60 -> 512
  TdnnLayer layer2;          // context [t], 512 -> 512
  ResidualBlock res1, res2, res3;
  TdnnLayer layer3;          // context [t], 512 -> 1500
  LinearLayer segment;       // 3000 -> 512
  BatchNormLayer segment_bn;
  LinearLayer embedding;     // 512 -> 512

  static Extractor init(Rng& rng);

  // frames: [n_segments * t x 20] -> embeddings [n_segments x 512].
  Tensor forward(const Tensor& frames, Mode mode, std::size_t n_segments);

  std::vector<Tensor> trainable() const;
  std::vector<NamedTensor> named_tensors() const;  // includes BN running stats
  void load_named(const std::map<std::string, Tensor>& tensors);
  void validate() const;  // layer widths against the published architecture

  // Total frames lost to valid splicing across the frame-level stack.
  static std::size_t context_shrink();
  // Shortest segment that still yields one pooled frame.
  static std::size_t min_frames() { return context_shrink() + 1; }
};

// Softmax speaker classifier over embeddings: one 512-wide hidden layer
// (BN + ReLU) and an affine output layer.
struct Classifier {
  LinearLayer hidden;
  BatchNormLayer bn;
  LinearLayer output;

  static Classifier init(std::size_t n_speakers, Rng& rng);
  Tensor forward(const Tensor& embeddings, Mode mode);  // logits [b x n_speakers]
  std::size_t n_speakers() const { return output.out_dim(); }

  std::vector<Tensor> trainable() const;
  std::vector<NamedTensor> named_tensors() const;
  void load_named(const std::map<std::string, Tensor>& tensors);
};

SpeakerEmbedding extract_embedding(Extractor& extractor, const FeatureMatrix& features,
                                   Mode mode);

// Eval-mode extraction of many equal-length segments, batched for speed.
std::vector<SpeakerEmbedding> extract_embeddings(Extractor& extractor,
                                                 const std::vector<FeatureMatrix>& segments,
                                                 std::size_t batch_size = 32);

// Probabilities over speakers for one embedding (softmax of classifier output).
std::vector<double> classify(Classifier& classifier, const SpeakerEmbedding& embedding);

Tensor embedding_to_tensor(const SpeakerEmbedding& e);

}  // namespace demixkit
