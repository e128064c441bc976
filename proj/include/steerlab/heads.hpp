#pragma once

#include <string>
#include <variant>
#include <vector>

#include "steerlab/model.hpp"
#include "steerlab/tensor.hpp"

namespace steerlab {

enum class HeadKind { Mse, Sse, Type2, Type4, Sum, Gen };

std::string head_name(HeadKind k);

struct HeadSpec {
  HeadKind kind;
  int depth = 1;  // number of linear layers in the FFNN
};

// BIO probabilities (3 x n); each column is a distribution over {B, I, O}.
struct BioGrid {
  int n = 0;
  std::vector<double> probs;  // row-major 3 x n

  double at(int tag, int j) const { return probs[static_cast<size_t>(tag) * n + j]; }
};
enum BioTag { kTagB = 0, kTagI = 1, kTagO = 2 };

// Start and end distributions over token positions; each row sums to 1.
struct StartEndGrid {
  int n = 0;
  std::vector<double> start;
  std::vector<double> end;
};

struct TypeLogits {
  std::vector<double> logits;  // 2 or 4 entries
};

// One score per sentence [CLS]; the question's score is kept separate so
// summary selection can exclude it while still ranking it.
struct SentenceScores {
  std::vector<double> context_scores;
  bool has_question = false;
  double question_score = 0.0;
};

using HeadOutput = std::variant<BioGrid, StartEndGrid, TypeLogits, SentenceScores, GeneratedSequence>;

// Type-head class orders. Ties break toward the lowest class index.
enum class Type2Class { Mse = 0, Gen = 1 };
enum class Type4Class { Yes = 0, No = 1, Span = 2, NoAnswer = 3 };

int argmax_lowest(const std::vector<double>& v);
Type2Class route_setting1(const TypeLogits& t);
Type4Class route_setting2(const TypeLogits& t);

// FFNN^(l): l linear layers mapping d -> out with hidden width d and ReLU
// between layers.
class Ffnn {
 public:
  Ffnn() = default;
  Ffnn(int in, int out, int depth, Rng& rng, double init_std);

  bool defined() const { return !weights_.empty(); }
  int depth() const { return static_cast<int>(weights_.size()); }
  Tensor forward(const Tensor& x) const;
  void visit_params(const std::string& prefix, const ParamVisitor& fn);

 private:
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// The thin output heads over H. The generative head is the model's decoder;
// it is reached through apply() for uniformity. Heads are pure functions of
// EncodedInput: none reads another head's output.
class HeadSet {
 public:
  HeadSet(const ModelConfig& config, const std::vector<HeadKind>& kinds, int depth, uint64_t seed);

  bool has(HeadKind kind) const;
  int depth() const { return depth_; }
  const std::vector<HeadKind>& kinds() const { return kinds_; }

  // Logit-level surfaces used by training.
  Tensor mse_logits(const Tensor& H) const;  // 3 x n
  Tensor sse_logits(const Tensor& H) const;  // 2 x n
  Tensor type2_logits(const Tensor& H) const;
  Tensor type4_logits(const Tensor& H) const;
  Tensor sum_logits(const Tensor& H, const std::vector<int>& cls_positions) const;  // 1 x m

  // Inference contract: normalized outputs in plain buffers.
  HeadOutput apply(HeadKind kind, const Model& model, const EncodedInput& enc) const;

  void visit_params(const ParamVisitor& fn);

 private:
  const Ffnn& ffnn_for(HeadKind kind) const;

  std::vector<HeadKind> kinds_;
  int depth_ = 1;
  Ffnn mse_, sse_, type2_, type4_, sum_;
};

}  // namespace steerlab
