#include "steerlab/heads.hpp"

#include <algorithm>
#include <stdexcept>

namespace steerlab {

std::string head_name(HeadKind k) {
  switch (k) {
    case HeadKind::Mse: return "mse";
    case HeadKind::Sse: return "sse";
    case HeadKind::Type2: return "type2";
    case HeadKind::Type4: return "type4";
    case HeadKind::Sum: return "sum";
    case HeadKind::Gen: return "gen";
  }
  throw std::logic_error("head_name: bad kind");
}

int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
  return best;
}

Type2Class route_setting1(const TypeLogits& t) {
  if (t.logits.size() != 2) throw std::invalid_argument("route_setting1 expects 2 logits");
  return static_cast<Type2Class>(argmax_lowest(t.logits));
}

Type4Class route_setting2(const TypeLogits& t) {
  if (t.logits.size() != 4) throw std::invalid_argument("route_setting2 expects 4 logits");
  return static_cast<Type4Class>(argmax_lowest(t.logits));
}

Ffnn::Ffnn(int in, int out, int depth, Rng& rng, double init_std) {
  if (depth < 1) throw std::invalid_argument("Ffnn depth must be >= 1");
  for (int l = 0; l < depth; ++l) {
    const int rows = (l == depth - 1) ? out : in;
    weights_.push_back(Tensor::randn(rows, in, rng, init_std));
    biases_.push_back(Tensor::zeros(rows, 1, true));
  }
}

Tensor Ffnn::forward(const Tensor& x) const {
  Tensor h = x;
  for (size_t l = 0; l < weights_.size(); ++l) {
    h = add_bias_cols(matmul(weights_[l], h), biases_[l]);
    if (l + 1 < weights_.size()) h = relu(h);
  }
  return h;
}

void Ffnn::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  for (size_t l = 0; l < weights_.size(); ++l) {
    fn(prefix + ".w" + std::to_string(l), weights_[l]);
    fn(prefix + ".b" + std::to_string(l), biases_[l]);
  }
}

HeadSet::HeadSet(const ModelConfig& config, const std::vector<HeadKind>& kinds, int depth, uint64_t seed)
    : kinds_(kinds), depth_(depth) {
  Rng rng(seed);
  const int d = config.d;
  for (HeadKind k : kinds_) {
    switch (k) {
      case HeadKind::Mse: mse_ = Ffnn(d, 3, depth, rng, config.init_std); break;
      case HeadKind::Sse: sse_ = Ffnn(d, 2, depth, rng, config.init_std); break;
      case HeadKind::Type2: type2_ = Ffnn(d, 2, depth, rng, config.init_std); break;
      case HeadKind::Type4: type4_ = Ffnn(d, 4, depth, rng, config.init_std); break;
      case HeadKind::Sum: sum_ = Ffnn(d, 1, depth, rng, config.init_std); break;
      case HeadKind::Gen: break;  // the decoder is the generative head
    }
  }
}

bool HeadSet::has(HeadKind kind) const {
  return std::find(kinds_.begin(), kinds_.end(), kind) != kinds_.end();
}

const Ffnn& HeadSet::ffnn_for(HeadKind kind) const {
  const Ffnn* f = nullptr;
  switch (kind) {
    case HeadKind::Mse: f = &mse_; break;
    case HeadKind::Sse: f = &sse_; break;
    case HeadKind::Type2: f = &type2_; break;
    case HeadKind::Type4: f = &type4_; break;
    case HeadKind::Sum: f = &sum_; break;
    case HeadKind::Gen: throw std::logic_error("the generative head has no FFNN");
  }
  if (!f->defined()) throw std::logic_error(head_name(kind) + " head not present in this head set");
  return *f;
}

Tensor HeadSet::mse_logits(const Tensor& H) const { return ffnn_for(HeadKind::Mse).forward(H); }

Tensor HeadSet::sse_logits(const Tensor& H) const { return ffnn_for(HeadKind::Sse).forward(H); }

Tensor HeadSet::type2_logits(const Tensor& H) const {
  return ffnn_for(HeadKind::Type2).forward(gather_cols(H, {0}));
}

Tensor HeadSet::type4_logits(const Tensor& H) const {
  return ffnn_for(HeadKind::Type4).forward(gather_cols(H, {0}));
}

Tensor HeadSet::sum_logits(const Tensor& H, const std::vector<int>& cls_positions) const {
  if (cls_positions.empty())
    throw std::invalid_argument("sum head requires at least one sentence [CLS] position");
  return ffnn_for(HeadKind::Sum).forward(gather_cols(H, cls_positions));
}

HeadOutput HeadSet::apply(HeadKind kind, const Model& model, const EncodedInput& enc) const {
  NoGradGuard ng;
  const Tensor& H = enc.H;
  const int n = H.cols();
  switch (kind) {
    case HeadKind::Mse: {
      Tensor p = softmax(mse_logits(H), 0);
      BioGrid g;
      g.n = n;
      g.probs = p.data();
      return g;
    }
    case HeadKind::Sse: {
      Tensor p = softmax(sse_logits(H), 1);  // rows: start, end; distributions over tokens
      StartEndGrid g;
      g.n = n;
      g.start.assign(p.data().begin(), p.data().begin() + n);
      g.end.assign(p.data().begin() + n, p.data().end());
      return g;
    }
    case HeadKind::Type2: return TypeLogits{type2_logits(H).data()};
    case HeadKind::Type4: return TypeLogits{type4_logits(H).data()};
    case HeadKind::Sum: {
      const auto& toks = enc.tokens;
      if (toks.sentence_cls_positions.empty())
        throw std::invalid_argument("sum head applied to input without sentence markers");
      std::vector<int> cls = toks.sentence_cls_positions;
      SentenceScores s;
      if (toks.has_question()) {
        cls.push_back(toks.question_cls_position);
        s.has_question = true;
      }
      Tensor scores = sum_logits(H, cls);
      const auto& v = scores.data();
      s.context_scores.assign(v.begin(), v.begin() + static_cast<long>(toks.sentence_cls_positions.size()));
      if (s.has_question) s.question_score = v.back();
      return s;
    }
    case HeadKind::Gen: return model.generate(H);
  }
  throw std::logic_error("apply: bad head kind");
}

void HeadSet::visit_params(const ParamVisitor& fn) {
  for (HeadKind k : kinds_) {
    if (k == HeadKind::Gen) continue;
    Ffnn* f = nullptr;
    switch (k) {
      case HeadKind::Mse: f = &mse_; break;
      case HeadKind::Sse: f = &sse_; break;
      case HeadKind::Type2: f = &type2_; break;
      case HeadKind::Type4: f = &type4_; break;
      case HeadKind::Sum: f = &sum_; break;
      case HeadKind::Gen: break;
    }
    if (f) f->visit_params("heads." + head_name(k), fn);
  }
}

}  // namespace steerlab
