#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sentspan/rng.hpp"
#include "sentspan/spanprep.hpp"

namespace sentspan {

/// Score assigned to masked positions instead of -inf so downstream
/// softmax/decode arithmetic stays finite.
inline constexpr double kMaskedLogit = -1e9;

/// Layer-norm variance epsilon, pinned so independent recomputations agree.
inline constexpr double kLayerNormEpsilon = 1e-5;

struct ModelConfig {
  int vocab_size = 0;
  int model_dim = 64;
  int num_heads = 4;
  int num_layers = 2;
  int ffn_dim = 128;
  int max_source_length = 96;
  double dropout_rate = 0.1;
  uint64_t seed = 1;

  int head_dim() const { return model_dim / num_heads; }

  /// Throws BadConfig unless all dimension invariants hold.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Per-token start/end scores over one source sequence.
struct SpanLogits {
  std::vector<double> start_logits;
  std::vector<double> end_logits;
};

/// Named slice of the flat parameter buffer.
struct ParamSegment {
  std::string name;
  std::vector<int> shape;
  size_t offset = 0;
  size_t size = 0;
};

/// All model weights in one flat buffer with a named-segment layout.
/// The segment order is fixed (embeddings, then per-layer blocks, then the
/// span head) and is the order checkpoints store data in.
class Params {
 public:
  explicit Params(const ModelConfig& config);  // zero-filled, layout only

  /// Deterministic initialization from config.seed: every 2-D segment is
  /// uniform in [-r, r] with r = sqrt(6 / (rows + cols)); layer-norm scales
  /// are 1; all biases and offsets are 0.
  static Params init(const ModelConfig& config);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<ParamSegment>& segments() const { return segments_; }
  size_t total_size() const { return data_.size(); }

  std::span<double> view(std::string_view name);
  std::span<const double> view(std::string_view name) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // Segment name helpers ("layer3.attn_wq" etc).
  static std::string layer_name(int layer, std::string_view field);

 private:
  ModelConfig cfg_;
  std::vector<ParamSegment> segments_;
  std::unordered_map<std::string, size_t> index_;
  std::vector<double> data_;
};

/// Cached per-example activations from a training-mode forward pass; owns
/// the buffers backward() reads. Reusable across examples of equal shape.
struct ForwardCache {
  struct Layer {
    std::vector<double> input;        // L x D
    std::vector<double> q, k, v;      // L x D each
    std::vector<double> attn_weights; // H x L x L, post-softmax
    std::vector<double> attn_concat;  // L x D, heads concatenated
    std::vector<double> attn_proj;    // L x D, after output projection
    std::vector<double> drop_mask1;   // L x D (empty when dropout off)
    std::vector<double> ln1_xhat, ln2_xhat;      // L x D
    std::vector<double> ln1_inv_std, ln2_inv_std; // L
    std::vector<double> ln1_out;      // L x D
    std::vector<double> ffn_pre;      // L x F
    std::vector<double> ffn_act;      // L x F
    std::vector<double> ffn_out;      // L x D
    std::vector<double> drop_mask2;   // L x D
  };
  std::vector<int> ids;
  std::vector<int> mask;
  std::vector<double> embedded;  // L x D
  std::vector<Layer> layers;
  std::vector<double> hidden;    // L x D, final states feeding the head
};

/// Inference forward pass: embeddings, num_layers encoder blocks, span
/// head. Attention never attends to masked positions and logits at masked
/// positions are kMaskedLogit. Dropout is off.
/// Throws ShapeMismatch / AllMasked.
SpanLogits forward(const Params& params, std::span<const int> source_ids,
                   std::span<const int> source_mask);

/// Forward pass that records activations for backward(). When `dropout_rng`
/// is non-null and the config's dropout_rate > 0, inverted dropout is
/// applied to the attention and feed-forward block outputs.
SpanLogits forward_cached(const Params& params, std::span<const int> source_ids,
                          std::span<const int> source_mask, ForwardCache& cache,
                          Rng* dropout_rng = nullptr);

/// Accumulate d(loss)/d(params) into `grad` (flat, same layout as params)
/// given d(loss)/d(logits) for one example. Gradients at masked positions
/// must already be zero in `dlogits`.
void backward(const Params& params, const ForwardCache& cache,
              const SpanLogits& dlogits, std::vector<double>& grad);

/// Element-wise map of forward over the batch.
std::vector<SpanLogits> forward_batch(const Params& params,
                                      const std::vector<TokenizedExample>& batch);

/// JSON checkpoint: config + named segments + flat data in segment order.
void save_checkpoint(const Params& params, const std::string& path);
Params load_checkpoint(const std::string& path);

/// load_checkpoint plus a ShapeMismatch error when the stored config
/// disagrees with `expected` on any shape-bearing field.
Params load_checkpoint_checked(const std::string& path, const ModelConfig& expected);

}  // namespace sentspan
