#include "steerlab/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace steerlab {

using nlohmann::json;

void ModelConfig::validate() const {
  if (d <= 0 || encoder_layers <= 0 || decoder_layers <= 0 || attention_heads <= 0)
    throw std::invalid_argument("ModelConfig: dimensions must be positive");
  if (d % attention_heads != 0)
    throw std::invalid_argument("ModelConfig: d=" + std::to_string(d) + " not divisible by " +
                                std::to_string(attention_heads) + " attention heads");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"d", c.d},
           {"encoder_layers", c.encoder_layers},
           {"decoder_layers", c.decoder_layers},
           {"attention_heads", c.attention_heads},
           {"max_tokens", c.max_tokens},
           {"ffn_hidden", c.ffn_hidden},
           {"tied_decoder", c.tied_decoder},
           {"max_generated_tokens", c.max_generated_tokens},
           {"init_std", c.init_std}};
}

void from_json(const json& j, ModelConfig& c) {
  c = ModelConfig{};
  if (j.contains("d")) j.at("d").get_to(c.d);
  if (j.contains("encoder_layers")) j.at("encoder_layers").get_to(c.encoder_layers);
  if (j.contains("decoder_layers")) j.at("decoder_layers").get_to(c.decoder_layers);
  if (j.contains("attention_heads")) j.at("attention_heads").get_to(c.attention_heads);
  if (j.contains("max_tokens")) j.at("max_tokens").get_to(c.max_tokens);
  if (j.contains("ffn_hidden")) j.at("ffn_hidden").get_to(c.ffn_hidden);
  if (j.contains("tied_decoder")) j.at("tied_decoder").get_to(c.tied_decoder);
  if (j.contains("max_generated_tokens")) j.at("max_generated_tokens").get_to(c.max_generated_tokens);
  if (j.contains("init_std")) j.at("init_std").get_to(c.init_std);
}

namespace {

AttentionParams make_attention(int d, Rng& rng, double std) {
  AttentionParams p;
  p.wq = Tensor::randn(d, d, rng, std);
  p.bq = Tensor::zeros(d, 1, true);
  p.wk = Tensor::randn(d, d, rng, std);
  p.bk = Tensor::zeros(d, 1, true);
  p.wv = Tensor::randn(d, d, rng, std);
  p.bv = Tensor::zeros(d, 1, true);
  p.wo = Tensor::randn(d, d, rng, std);
  p.bo = Tensor::zeros(d, 1, true);
  return p;
}

EncoderLayerParams make_encoder_layer(int d, int hidden, Rng& rng, double std) {
  EncoderLayerParams p;
  p.attn = make_attention(d, rng, std);
  p.ln1_g = Tensor::full(d, 1, 1.0, true);
  p.ln1_b = Tensor::zeros(d, 1, true);
  p.ffn_w1 = Tensor::randn(hidden, d, rng, std);
  p.ffn_b1 = Tensor::zeros(hidden, 1, true);
  p.ffn_w2 = Tensor::randn(d, hidden, rng, std);
  p.ffn_b2 = Tensor::zeros(d, 1, true);
  p.ln2_g = Tensor::full(d, 1, 1.0, true);
  p.ln2_b = Tensor::zeros(d, 1, true);
  return p;
}

AttentionParams clone_attention(const AttentionParams& p) {
  AttentionParams c;
  c.wq = p.wq.clone();
  c.bq = p.bq.clone();
  c.wk = p.wk.clone();
  c.bk = p.bk.clone();
  c.wv = p.wv.clone();
  c.bv = p.bv.clone();
  c.wo = p.wo.clone();
  c.bo = p.bo.clone();
  return c;
}

EncoderLayerParams clone_encoder_layer(const EncoderLayerParams& p) {
  EncoderLayerParams c;
  c.attn = clone_attention(p.attn);
  c.ln1_g = p.ln1_g.clone();
  c.ln1_b = p.ln1_b.clone();
  c.ffn_w1 = p.ffn_w1.clone();
  c.ffn_b1 = p.ffn_b1.clone();
  c.ffn_w2 = p.ffn_w2.clone();
  c.ffn_b2 = p.ffn_b2.clone();
  c.ln2_g = p.ln2_g.clone();
  c.ln2_b = p.ln2_b.clone();
  return c;
}

void visit_attention(const std::string& prefix, AttentionParams& p, const ParamVisitor& fn) {
  fn(prefix + ".wq", p.wq);
  fn(prefix + ".bq", p.bq);
  fn(prefix + ".wk", p.wk);
  fn(prefix + ".bk", p.bk);
  fn(prefix + ".wv", p.wv);
  fn(prefix + ".bv", p.bv);
  fn(prefix + ".wo", p.wo);
  fn(prefix + ".bo", p.bo);
}

void visit_encoder_layer(const std::string& prefix, EncoderLayerParams& p, const ParamVisitor& fn) {
  visit_attention(prefix + ".attn", p.attn, fn);
  fn(prefix + ".ln1_g", p.ln1_g);
  fn(prefix + ".ln1_b", p.ln1_b);
  fn(prefix + ".ffn_w1", p.ffn_w1);
  fn(prefix + ".ffn_b1", p.ffn_b1);
  fn(prefix + ".ffn_w2", p.ffn_w2);
  fn(prefix + ".ffn_b2", p.ffn_b2);
  fn(prefix + ".ln2_g", p.ln2_g);
  fn(prefix + ".ln2_b", p.ln2_b);
}

}  // namespace

Model::Model(ModelConfig config, Vocabulary vocab, uint64_t seed)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.validate();
  Rng rng(seed);
  const int d = config_.d;
  embedding_ = Tensor::randn(d, vocab_.size(), rng, config_.init_std);
  for (int l = 0; l < config_.encoder_layers; ++l)
    encoder_.push_back(make_encoder_layer(d, config_.ffn_hidden, rng, config_.init_std));
  for (int l = 0; l < config_.decoder_layers; ++l) {
    DecoderLayerParams p;
    const EncoderLayerParams& src = encoder_[static_cast<size_t>(l % config_.encoder_layers)];
    p.base = config_.tied_decoder ? src : clone_encoder_layer(src);
    p.cross = make_attention(d, rng, config_.init_std);
    p.ln_cross_g = Tensor::full(d, 1, 1.0, true);
    p.ln_cross_b = Tensor::zeros(d, 1, true);
    decoder_.push_back(std::move(p));
  }
  if (!config_.tied_decoder) decoder_embedding_ = embedding_.clone();

  // Fixed sinusoidal position encoding.
  position_encoding_ = Tensor::zeros(d, config_.max_tokens);
  for (int pos = 0; pos < config_.max_tokens; ++pos) {
    for (int i = 0; i < d / 2; ++i) {
      const double angle = pos / std::pow(10000.0, (2.0 * i) / d);
      position_encoding_.set(2 * i, pos, std::sin(angle));
      position_encoding_.set(2 * i + 1, pos, std::cos(angle));
    }
  }
}

Tensor Model::positions(int n) const {
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  return gather_cols(position_encoding_, idx);
}

Tensor Model::attention(const AttentionParams& p, const Tensor& queries_in, const Tensor& keys_in,
                        const Tensor& values_in, const Tensor* additive_mask,
                        std::vector<std::vector<double>>* weight_sink) const {
  const int d = config_.d;
  const int heads = config_.attention_heads;
  const int dk = d / heads;
  Tensor q = add_bias_cols(matmul(p.wq, queries_in), p.bq);
  Tensor k = add_bias_cols(matmul(p.wk, keys_in), p.bk);
  Tensor v = add_bias_cols(matmul(p.wv, values_in), p.bv);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_rows(q, h * dk, (h + 1) * dk);
    Tensor kh = slice_rows(k, h * dk, (h + 1) * dk);
    Tensor vh = slice_rows(v, h * dk, (h + 1) * dk);
    Tensor scores = scale(matmul(transpose(qh), kh), inv_sqrt_dk);  // m x n
    if (additive_mask) scores = add(scores, *additive_mask);
    Tensor weights = softmax(scores, 1);  // each query row sums to 1 over keys
    if (weight_sink) weight_sink->push_back(weights.data());
    outs.push_back(matmul(vh, transpose(weights)));  // dk x m
  }
  return add_bias_cols(matmul(p.wo, concat_rows(outs)), p.bo);
}

Tensor Model::ffn(const EncoderLayerParams& p, const Tensor& x) const {
  Tensor h = relu(add_bias_cols(matmul(p.ffn_w1, x), p.ffn_b1));
  return add_bias_cols(matmul(p.ffn_w2, h), p.ffn_b2);
}

Tensor Model::encoder_layer(const EncoderLayerParams& p, const Tensor& x) const {
  Tensor a = attention(p.attn, x, x, x, nullptr, nullptr);
  Tensor y = layer_norm_cols(add(x, a), p.ln1_g, p.ln1_b);
  Tensor f = ffn(p, y);
  return layer_norm_cols(add(y, f), p.ln2_g, p.ln2_b);
}

Tensor Model::encode_ids(const std::vector<int>& ids) const {
  if (ids.empty()) throw std::invalid_argument("encode: empty input");
  if (static_cast<int>(ids.size()) > config_.max_tokens)
    throw std::length_error("encode: input of " + std::to_string(ids.size()) + " tokens exceeds max " +
                            std::to_string(config_.max_tokens));
  Tensor x = add(embedding_cols(embedding_, ids), positions(static_cast<int>(ids.size())));
  for (const auto& layer : encoder_) x = encoder_layer(layer, x);
  return x;
}

EncodedInput Model::encode(const TokenizedInput& tokens) const {
  return EncodedInput{tokens, encode_ids(tokens.token_ids)};
}

Tensor Model::decoder_logits(const std::vector<int>& prefix_ids, const Tensor& H,
                             std::optional<std::pair<int, int>> value_override,
                             const std::vector<bool>* cross_key_mask, DecodeTrace* trace) const {
  if (prefix_ids.empty()) throw std::invalid_argument("decoder: prefix must start with [BOS]");
  const int m = static_cast<int>(prefix_ids.size());
  const int n = H.cols();

  Tensor values = H;
  if (value_override) {
    const auto [i, j] = *value_override;
    if (i < 0 || i >= n || j < 0 || j >= n)
      throw std::out_of_range("value_override (" + std::to_string(i) + "," + std::to_string(j) +
                              ") outside H with " + std::to_string(n) + " columns");
    std::vector<int> perm(static_cast<size_t>(n));
    for (int c = 0; c < n; ++c) perm[static_cast<size_t>(c)] = c;
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
    values = gather_cols(H, perm);
  }

  Tensor causal = Tensor::zeros(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) causal.set(i, j, -1e9);

  Tensor key_mask;
  if (cross_key_mask) {
    if (static_cast<int>(cross_key_mask->size()) != n)
      throw std::invalid_argument("cross_key_mask length does not match H");
    key_mask = Tensor::zeros(m, n);
    for (int j = 0; j < n; ++j) {
      if (!(*cross_key_mask)[static_cast<size_t>(j)])
        for (int i = 0; i < m; ++i) key_mask.set(i, j, -1e9);
    }
  }

  const Tensor& dec_emb = decoder_embedding();
  Tensor y = add(embedding_cols(dec_emb, prefix_ids), positions(m));
  for (const auto& layer : decoder_) {
    Tensor a = attention(layer.base.attn, y, y, y, &causal, nullptr);
    y = layer_norm_cols(add(y, a), layer.base.ln1_g, layer.base.ln1_b);
    Tensor c = attention(layer.cross, y, H, values, cross_key_mask ? &key_mask : nullptr,
                         trace ? &trace->cross_weights : nullptr);
    y = layer_norm_cols(add(y, c), layer.ln_cross_g, layer.ln_cross_b);
    Tensor f = ffn(layer.base, y);
    y = layer_norm_cols(add(y, f), layer.base.ln2_g, layer.base.ln2_b);
  }
  return matmul(transpose(dec_emb), y);  // V x m
}

std::vector<double> Model::decode_step(const std::vector<int>& prefix_ids, const Tensor& H,
                                       std::optional<std::pair<int, int>> value_override,
                                       const std::vector<bool>* cross_key_mask, DecodeTrace* trace) const {
  Tensor logits = decoder_logits(prefix_ids, H, value_override, cross_key_mask, trace);
  const int v = logits.rows();
  const int last = logits.cols() - 1;
  std::vector<double> out(static_cast<size_t>(v));
  for (int i = 0; i < v; ++i) out[static_cast<size_t>(i)] = logits.at(i, last);
  return out;
}

GeneratedSequence Model::generate(const Tensor& H, std::optional<std::pair<int, int>> value_override,
                                  const std::vector<bool>* cross_key_mask) const {
  NoGradGuard ng;
  GeneratedSequence out;
  std::vector<int> prefix = {Vocabulary::kBos};
  for (int step = 0; step < config_.max_generated_tokens; ++step) {
    std::vector<double> logits = decode_step(prefix, H, value_override, cross_key_mask);
    int best = 0;
    for (int i = 1; i < static_cast<int>(logits.size()); ++i)
      if (logits[static_cast<size_t>(i)] > logits[static_cast<size_t>(best)]) best = i;
    out.step_logits.push_back(std::move(logits));
    if (best == Vocabulary::kEos) {
      out.hit_eos = true;
      break;
    }
    out.ids.push_back(best);
    prefix.push_back(best);
  }
  return out;
}

void Model::visit_params(const ParamVisitor& fn) {
  fn("embedding", embedding_);
  if (!config_.tied_decoder) fn("decoder.embedding", decoder_embedding_);
  for (size_t l = 0; l < encoder_.size(); ++l)
    visit_encoder_layer("encoder." + std::to_string(l), encoder_[l], fn);
  for (size_t l = 0; l < decoder_.size(); ++l) {
    const std::string prefix = "decoder." + std::to_string(l);
    // In tied mode the decoder's base block aliases the encoder layer and is
    // visited there; only decoder-owned parameters appear under this prefix.
    if (!config_.tied_decoder) visit_encoder_layer(prefix + ".base", decoder_[l].base, fn);
    visit_attention(prefix + ".cross", decoder_[l].cross, fn);
    fn(prefix + ".ln_cross_g", decoder_[l].ln_cross_g);
    fn(prefix + ".ln_cross_b", decoder_[l].ln_cross_b);
  }
}

// ---- checkpoint ----

void NamedTensors::collect(const std::string& prefix, Model& m) {
  m.visit_params([&](const std::string& name, Tensor& t) { items.emplace_back(prefix + name, t); });
}

Tensor& NamedTensors::at(const std::string& name) {
  for (auto& [n, t] : items)
    if (n == name) return t;
  throw std::out_of_range("no tensor named " + name);
}

void save_checkpoint(const std::string& path, const ModelConfig& config, const Vocabulary& vocab,
                     const std::vector<std::pair<std::string, Tensor>>& tensors, const json& meta) {
  json header;
  header["config"] = config;
  header["vocab"] = vocab.tokens();
  header["meta"] = meta;
  json dir = json::array();
  for (const auto& [name, t] : tensors)
    dir.push_back(json{{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
  header["tensors"] = dir;
  const std::string header_str = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(kCheckpointMagic, static_cast<std::streamsize>(std::strlen(kCheckpointMagic)));
  const uint64_t len = header_str.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, t] : tensors) {
    f.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.data().size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string magic(std::strlen(kCheckpointMagic), '\0');
  f.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (magic != kCheckpointMagic) throw std::runtime_error(path + ": not a checkpoint (bad magic)");
  uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  f.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!f) throw std::runtime_error(path + ": truncated header");
  json header = json::parse(header_str);

  LoadedCheckpoint out;
  out.config = header.at("config").get<ModelConfig>();
  out.vocab = Vocabulary::from_tokens(header.at("vocab").get<std::vector<std::string>>());
  out.meta = header.value("meta", json::object());
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const int rows = entry.at("rows").get<int>();
    const int cols = entry.at("cols").get<int>();
    std::vector<double> data(static_cast<size_t>(rows) * cols);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!f) throw std::runtime_error(path + ": truncated payload at " + name);
    out.tensors.emplace_back(name, std::make_pair(std::vector<int>{rows, cols}, std::move(data)));
  }
  return out;
}

void LoadedCheckpoint::restore(const std::vector<std::pair<std::string, Tensor>>& params) const {
  std::map<std::string, const std::pair<std::vector<int>, std::vector<double>>*> by_name;
  for (const auto& [name, payload] : tensors) by_name[name] = &payload;
  for (const auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint missing tensor: " + name);
    const auto& [shape, data] = *it->second;
    if (shape[0] != t.rows() || shape[1] != t.cols())
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    Tensor mutable_t = t;
    mutable_t.mutable_data() = data;
  }
}

}  // namespace steerlab
