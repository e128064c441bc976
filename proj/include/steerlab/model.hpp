#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "steerlab/tensor.hpp"
#include "steerlab/tokenizer.hpp"
#include "steerlab/vocab.hpp"

namespace steerlab {

struct ModelConfig {
  int d = 64;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int attention_heads = 4;
  int max_tokens = 128;
  int ffn_hidden = 256;
  bool tied_decoder = true;
  int max_generated_tokens = 12;
  double init_std = 0.02;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Contextualized token representations plus the token metadata heads consume.
struct EncodedInput {
  TokenizedInput tokens;
  Tensor H;  // d x n
};

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct EncoderLayerParams {
  AttentionParams attn;
  Tensor ln1_g, ln1_b;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Tensor ln2_g, ln2_b;
};

struct DecoderLayerParams {
  EncoderLayerParams base;  // self-attention + FFN; aliases the encoder layer when tied
  AttentionParams cross;
  Tensor ln_cross_g, ln_cross_b;
};

// Per-layer, per-head cross-attention weights captured during a decode step;
// used to assert that value swaps leave the key side untouched.
struct DecodeTrace {
  std::vector<std::vector<double>> cross_weights;  // flattened m x n per (layer, head)
};

struct GeneratedSequence {
  std::vector<int> ids;                          // emitted tokens, [EOS] excluded
  std::vector<std::vector<double>> step_logits;  // vocabulary logits per emitted step
  bool hit_eos = false;
};

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

// Miniature transformer encoder-decoder over a digit-aware vocabulary.
class Model {
 public:
  Model(ModelConfig config, Vocabulary vocab, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  Tokenizer tokenizer() const { return Tokenizer(&vocab_, config_.max_tokens); }

  // H = LM(x); deterministic given parameters and input.
  Tensor encode_ids(const std::vector<int>& ids) const;
  EncodedInput encode(const TokenizedInput& tokens) const;

  // Next-token logits for every prefix position (V x m). Cross-attention uses
  // H as keys; as values it uses H with columns i and j swapped when
  // value_override is set. cross_key_mask removes key positions entirely.
  Tensor decoder_logits(const std::vector<int>& prefix_ids, const Tensor& H,
                        std::optional<std::pair<int, int>> value_override = std::nullopt,
                        const std::vector<bool>* cross_key_mask = nullptr,
                        DecodeTrace* trace = nullptr) const;

  // Single-step form: logits for the token following the prefix.
  std::vector<double> decode_step(const std::vector<int>& prefix_ids, const Tensor& H,
                                  std::optional<std::pair<int, int>> value_override = std::nullopt,
                                  const std::vector<bool>* cross_key_mask = nullptr,
                                  DecodeTrace* trace = nullptr) const;

  // Greedy decoding from [BOS]; argmax ties break toward the lowest token id.
  GeneratedSequence generate(const Tensor& H,
                             std::optional<std::pair<int, int>> value_override = std::nullopt,
                             const std::vector<bool>* cross_key_mask = nullptr) const;

  void visit_params(const ParamVisitor& fn);

  const Tensor& embedding() const { return embedding_; }
  const Tensor& decoder_embedding() const { return config_.tied_decoder ? embedding_ : decoder_embedding_; }

 private:
  Tensor attention(const AttentionParams& p, const Tensor& queries_in, const Tensor& keys_in,
                   const Tensor& values_in, const Tensor* additive_mask,
                   std::vector<std::vector<double>>* weight_sink) const;
  Tensor encoder_layer(const EncoderLayerParams& p, const Tensor& x) const;
  Tensor ffn(const EncoderLayerParams& p, const Tensor& x) const;
  Tensor positions(int n) const;

  ModelConfig config_;
  Vocabulary vocab_;
  Tensor embedding_;          // d x V, shared with the decoder when tied
  Tensor decoder_embedding_;  // untied mode only: input lookup and output projection
  Tensor position_encoding_;  // d x max_tokens, sinusoidal, not trained
  std::vector<EncoderLayerParams> encoder_;
  std::vector<DecoderLayerParams> decoder_;
};

// ---- checkpoint container ----
// Self-describing binary: magic line, little-endian u64 header length, JSON
// header (config record, vocabulary, tensor directory, free-form meta), then
// row-major float64 payload.

inline constexpr const char* kCheckpointMagic = "STEERLAB-CKPT-v1\n";

struct NamedTensors {
  std::vector<std::pair<std::string, Tensor>> items;
  void collect(const std::string& prefix, Model& m);
  Tensor& at(const std::string& name);
};

void save_checkpoint(const std::string& path, const ModelConfig& config, const Vocabulary& vocab,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const nlohmann::json& meta = nlohmann::json::object());

struct LoadedCheckpoint {
  ModelConfig config;
  Vocabulary vocab;
  nlohmann::json meta;
  std::vector<std::pair<std::string, std::pair<std::vector<int>, std::vector<double>>>> tensors;

  // Overwrites matching parameters; throws on unknown names or shape mismatch.
  void restore(const std::vector<std::pair<std::string, Tensor>>& params) const;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace steerlab
