#pragma once

// Toy differentiable text classifier: a mean-of-embeddings encoder, a masked
// token prediction head, and an ensemble of one-hidden-layer voter heads.
// Everything is templated on the scalar type so that gradient checks can be
// run at any precision; production code uses double.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "xling/corpus.hpp"
#include "xling/error.hpp"
#include "xling/random.hpp"

namespace xling {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// A probability vector over the task classes.
template <typename Scalar>
using Distribution = Vector<Scalar>;

struct ModelDims {
  std::size_t vocab = 0;
  std::size_t dim = 16;
  std::size_t classes = 2;
  std::size_t voters = 3;
  std::size_t base_hidden = 32;
  std::size_t hidden_step = 4;

  /// Voter i's hidden width; voters differ slightly by construction.
  std::size_t hidden(std::size_t voter) const { return base_hidden + voter * hidden_step; }

  bool operator==(const ModelDims&) const = default;
};

template <typename Scalar>
struct VoterNet {
  Matrix<Scalar> w1;  // hidden x dim
  Vector<Scalar> b1;  // hidden
  Matrix<Scalar> w2;  // classes x hidden
  Vector<Scalar> b2;  // classes
};

template <typename Scalar>
struct ModelParams {
  ModelDims dims;
  Matrix<Scalar> embeddings;  // vocab x dim
  Matrix<Scalar> mlm_weight;  // vocab x dim; logits = mlm_weight * context + mlm_bias
  Vector<Scalar> mlm_bias;    // vocab
  std::vector<VoterNet<Scalar>> voters;

  static ModelParams zeros(const ModelDims& dims) {
    if (dims.voters == 0) throw ConfigError("model needs at least one voter");
    if (dims.vocab <= Vocab::kReserved || dims.dim == 0 || dims.classes < 2) {
      throw ConfigError("model dimensions are degenerate");
    }
    ModelParams p;
    p.dims = dims;
    const auto v = static_cast<Eigen::Index>(dims.vocab);
    const auto d = static_cast<Eigen::Index>(dims.dim);
    const auto c = static_cast<Eigen::Index>(dims.classes);
    p.embeddings = Matrix<Scalar>::Zero(v, d);
    p.mlm_weight = Matrix<Scalar>::Zero(v, d);
    p.mlm_bias = Vector<Scalar>::Zero(v);
    for (std::size_t i = 0; i < dims.voters; ++i) {
      const auto h = static_cast<Eigen::Index>(dims.hidden(i));
      p.voters.push_back({Matrix<Scalar>::Zero(h, d), Vector<Scalar>::Zero(h),
                          Matrix<Scalar>::Zero(c, h), Vector<Scalar>::Zero(c)});
    }
    return p;
  }

  template <typename To>
  ModelParams<To> cast() const {
    ModelParams<To> out;
    out.dims = dims;
    out.embeddings = embeddings.template cast<To>();
    out.mlm_weight = mlm_weight.template cast<To>();
    out.mlm_bias = mlm_bias.template cast<To>();
    for (const auto& v : voters) {
      out.voters.push_back({v.w1.template cast<To>(), v.b1.template cast<To>(),
                            v.w2.template cast<To>(), v.b2.template cast<To>()});
    }
    return out;
  }
};

/// Parameter groups, used to restrict which tensors an update touches.
enum class ParamGroup { embeddings, mlm_head, voters };

/// Visits every tensor of one or more identically shaped parameter sets in a
/// fixed order: fn(name, group, tensor_of_first, tensor_of_second, ...).
template <typename Fn, typename First, typename... Rest>
void for_each_tensor(Fn&& fn, First& first, Rest&... rest) {
  fn(std::string("embeddings"), ParamGroup::embeddings, first.embeddings, rest.embeddings...);
  fn(std::string("mlm_weight"), ParamGroup::mlm_head, first.mlm_weight, rest.mlm_weight...);
  fn(std::string("mlm_bias"), ParamGroup::mlm_head, first.mlm_bias, rest.mlm_bias...);
  for (std::size_t i = 0; i < first.voters.size(); ++i) {
    const std::string prefix = "voters." + std::to_string(i) + ".";
    fn(prefix + "w1", ParamGroup::voters, first.voters[i].w1, rest.voters[i].w1...);
    fn(prefix + "b1", ParamGroup::voters, first.voters[i].b1, rest.voters[i].b1...);
    fn(prefix + "w2", ParamGroup::voters, first.voters[i].w2, rest.voters[i].w2...);
    fn(prefix + "b2", ParamGroup::voters, first.voters[i].b2, rest.voters[i].b2...);
  }
}

namespace detail {

inline constexpr double kInitRange = 0.05;

template <typename Derived>
void fill_uniform(Eigen::DenseBase<Derived>& m, Rng& rng) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      m(i, j) = static_cast<typename Derived::Scalar>((2.0 * uniform_unit(rng) - 1.0) * kInitRange);
    }
  }
}

}  // namespace detail

/// Fresh voter heads: weights ~ U(-0.05, 0.05), biases zero.
template <typename Scalar>
void reinit_voters(ModelParams<Scalar>& params, std::uint64_t seed) {
  Rng rng = make_rng(seed, "voters");
  for (auto& v : params.voters) {
    detail::fill_uniform(v.w1, rng);
    v.b1.setZero();
    detail::fill_uniform(v.w2, rng);
    v.b2.setZero();
  }
}

template <typename Scalar = double>
ModelParams<Scalar> init_params(const ModelDims& dims, std::uint64_t seed) {
  auto p = ModelParams<Scalar>::zeros(dims);
  Rng rng = make_rng(seed, "encoder");
  detail::fill_uniform(p.embeddings, rng);
  detail::fill_uniform(p.mlm_weight, rng);
  reinit_voters(p, seed);
  return p;
}

template <typename Scalar>
bool all_finite(const ModelParams<Scalar>& params) {
  bool ok = true;
  for_each_tensor([&](const std::string&, ParamGroup, const auto& t) { ok = ok && t.allFinite(); },
                  params);
  return ok;
}

template <typename Scalar>
bool bit_identical(const ModelParams<Scalar>& a, const ModelParams<Scalar>& b) {
  if (!(a.dims == b.dims)) return false;
  bool same = true;
  for_each_tensor(
      [&](const std::string&, ParamGroup, const auto& x, const auto& y) {
        same = same && x.rows() == y.rows() && x.cols() == y.cols() &&
               std::equal(x.data(), x.data() + x.size(), y.data(),
                          [](Scalar p, Scalar q) { return std::memcmp(&p, &q, sizeof p) == 0; });
      },
      a, b);
  return same;
}

// ---------------------------------------------------------------------------
// Forward pass

/// Mean embedding of the non-[PAD] tokens.
template <typename Scalar>
Vector<Scalar> encode(const ModelParams<Scalar>& params, std::span<const TokenId> ids) {
  Vector<Scalar> sum = Vector<Scalar>::Zero(params.embeddings.cols());
  std::size_t n = 0;
  for (TokenId id : ids) {
    if (id == Vocab::kPad) continue;
    sum += params.embeddings.row(id).transpose();
    ++n;
  }
  if (n == 0) throw DataError("encode: input has no non-[PAD] tokens");
  return sum / static_cast<Scalar>(n);
}

template <typename Scalar>
Distribution<Scalar> softmax(const Vector<Scalar>& logits) {
  Vector<Scalar> e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

template <typename Scalar>
struct VoterActivation {
  Vector<Scalar> hidden;       // tanh(w1 x + b1)
  Distribution<Scalar> probs;  // softmax(w2 h + b2)
};

template <typename Scalar>
VoterActivation<Scalar> voter_forward(const VoterNet<Scalar>& net, const Vector<Scalar>& feature) {
  VoterActivation<Scalar> a;
  a.hidden = (net.w1 * feature + net.b1).array().tanh();
  a.probs = softmax<Scalar>(net.w2 * a.hidden + net.b2);
  return a;
}

/// One distribution per voter.
template <typename Scalar>
std::vector<Distribution<Scalar>> voters_forward(const ModelParams<Scalar>& params,
                                                 const Vector<Scalar>& feature) {
  std::vector<Distribution<Scalar>> out;
  out.reserve(params.voters.size());
  for (const auto& v : params.voters) out.push_back(voter_forward(v, feature).probs);
  return out;
}

template <typename Scalar>
Distribution<Scalar> mean_distribution(std::span<const Distribution<Scalar>> dists) {
  Distribution<Scalar> mean = Distribution<Scalar>::Zero(dists.front().size());
  for (const auto& d : dists) mean += d;
  return mean / static_cast<Scalar>(dists.size());
}

/// Ensemble prediction: argmax of the voter-averaged distribution.
template <typename Scalar>
int predict_label(const ModelParams<Scalar>& params, std::span<const TokenId> ids) {
  const auto dists = voters_forward(params, encode(params, ids));
  Eigen::Index best;
  mean_distribution<Scalar>(dists).maxCoeff(&best);
  return static_cast<int>(best);
}

// ---------------------------------------------------------------------------
// Per-sample losses

/// Voter-paired mean squared difference of probabilities, averaged over voters and classes.
template <typename Scalar>
Scalar soft_loss(std::span<const Distribution<Scalar>> teacher,
                 std::span<const Distribution<Scalar>> student) {
  if (teacher.size() != student.size() || teacher.empty()) {
    throw DataError("soft_loss: teacher and student voter counts differ");
  }
  Scalar total = 0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    if (teacher[i].size() != student[i].size()) {
      throw DataError("soft_loss: class counts differ at voter " + std::to_string(i));
    }
    total += (teacher[i] - student[i]).squaredNorm() / static_cast<Scalar>(teacher[i].size());
  }
  return total / static_cast<Scalar>(teacher.size());
}

/// Mean over voters of -ln p_i[label].
template <typename Scalar>
Scalar hard_loss(int label, std::span<const Distribution<Scalar>> student) {
  if (student.empty()) throw DataError("hard_loss: no voter outputs");
  Scalar total = 0;
  for (const auto& p : student) {
    if (label < 0 || label >= p.size()) {
      throw DataError("hard_loss: label " + std::to_string(label) + " outside [0, " +
                      std::to_string(p.size()) + ")");
    }
    total -= std::log(p(label));
  }
  return total / static_cast<Scalar>(student.size());
}

// ---------------------------------------------------------------------------
// Batched objectives and exact gradients

/// Unlabeled sample with teacher targets: one distribution per voter.
template <typename Scalar>
struct SoftSample {
  std::vector<TokenId> ids;
  std::vector<Distribution<Scalar>> teacher;
};

struct HardSample {
  std::vector<TokenId> ids;
  int label = 0;
};

template <typename Scalar>
struct Gradient {
  Scalar loss = 0;
  ModelParams<Scalar> grad;
};

namespace detail {

/// Mean of the visible (non-[PAD], non-[MASK]) embeddings; zero when nothing is visible.
template <typename Scalar>
Vector<Scalar> mlm_context(const ModelParams<Scalar>& params, std::span<const TokenId> input,
                           std::size_t& visible) {
  Vector<Scalar> sum = Vector<Scalar>::Zero(params.embeddings.cols());
  visible = 0;
  for (TokenId id : input) {
    if (id == Vocab::kPad || id == Vocab::kMask) continue;
    sum += params.embeddings.row(id).transpose();
    ++visible;
  }
  return visible ? Vector<Scalar>(sum / static_cast<Scalar>(visible)) : sum;
}

/// Adds d(feature) into the rows of the tokens that were averaged.
template <typename Scalar>
void scatter_mean(Matrix<Scalar>& grad_embeddings, std::span<const TokenId> ids,
                  const Vector<Scalar>& d_feature, bool skip_mask) {
  std::size_t n = 0;
  for (TokenId id : ids) n += id != Vocab::kPad && !(skip_mask && id == Vocab::kMask);
  if (n == 0) return;
  const Vector<Scalar> share = d_feature / static_cast<Scalar>(n);
  for (TokenId id : ids) {
    if (id == Vocab::kPad || (skip_mask && id == Vocab::kMask)) continue;
    grad_embeddings.row(id) += share.transpose();
  }
}

/// Backpropagates d(loss)/d(probs) of one voter into its parameters; returns d(loss)/d(feature).
template <typename Scalar>
Vector<Scalar> voter_backward(const VoterNet<Scalar>& net, VoterNet<Scalar>& grad,
                              const Vector<Scalar>& feature, const VoterActivation<Scalar>& act,
                              const Vector<Scalar>& d_logits) {
  grad.w2.noalias() += d_logits * act.hidden.transpose();
  grad.b2 += d_logits;
  const Vector<Scalar> d_pre =
      ((net.w2.transpose() * d_logits).array() * (1 - act.hidden.array().square())).matrix();
  grad.w1.noalias() += d_pre * feature.transpose();
  grad.b1 += d_pre;
  return net.w1.transpose() * d_pre;
}

template <typename Scalar>
void check_finite(Gradient<Scalar>& g) {
  if (!std::isfinite(static_cast<double>(g.loss))) throw NumericError("non-finite loss");
  for_each_tensor(
      [](const std::string& name, ParamGroup, const auto& t) {
        if (!t.allFinite()) throw NumericError("non-finite gradient in '" + name + "'");
      },
      g.grad);
}

}  // namespace detail

/// Mean masked-token cross-entropy over every target in the batch. The
/// context of a document is the mean embedding of its unmasked tokens.
template <typename Scalar>
Gradient<Scalar> backward(const ModelParams<Scalar>& params, std::span<const MaskedBatch> batch,
                          bool freeze_embeddings = false) {
  std::size_t total_targets = 0;
  for (const auto& b : batch) total_targets += b.targets.size();
  if (total_targets == 0) throw DataError("MLM batch has no masked targets");

  Gradient<Scalar> out{0, ModelParams<Scalar>::zeros(params.dims)};
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(total_targets);
  for (const auto& b : batch) {
    if (b.targets.empty()) continue;
    std::size_t visible = 0;
    const Vector<Scalar> context = detail::mlm_context(params, b.input, visible);
    const Vector<Scalar> probs =
        softmax<Scalar>(params.mlm_weight * context + params.mlm_bias);
    Vector<Scalar> d_logits = Vector<Scalar>::Zero(probs.size());
    for (const auto& [pos, target] : b.targets) {
      out.loss -= std::log(probs(target)) * inv_n;
      d_logits += probs * inv_n;
      d_logits(target) -= inv_n;
    }
    out.grad.mlm_weight.noalias() += d_logits * context.transpose();
    out.grad.mlm_bias += d_logits;
    if (!freeze_embeddings && visible > 0) {
      const Vector<Scalar> d_context = params.mlm_weight.transpose() * d_logits;
      detail::scatter_mean(out.grad.embeddings, b.input, d_context, /*skip_mask=*/true);
    }
  }
  detail::check_finite(out);
  return out;
}

/// Mean over the batch of soft_loss(teacher, student).
template <typename Scalar>
Gradient<Scalar> backward(const ModelParams<Scalar>& params,
                          std::span<const SoftSample<Scalar>> batch,
                          bool freeze_embeddings = false) {
  if (batch.empty()) throw DataError("soft batch is empty");
  Gradient<Scalar> out{0, ModelParams<Scalar>::zeros(params.dims)};
  const auto m = params.voters.size();
  const auto c = static_cast<Scalar>(params.dims.classes);
  const Scalar scale = Scalar(1) / (static_cast<Scalar>(batch.size()) * static_cast<Scalar>(m));
  for (const auto& sample : batch) {
    if (sample.teacher.size() != m) throw DataError("soft sample: teacher voter count mismatch");
    const Vector<Scalar> feature = encode(params, sample.ids);
    Vector<Scalar> d_feature = Vector<Scalar>::Zero(feature.size());
    for (std::size_t i = 0; i < m; ++i) {
      const auto act = voter_forward(params.voters[i], feature);
      const Vector<Scalar> diff = act.probs - sample.teacher[i];
      out.loss += scale * diff.squaredNorm() / c;
      const Vector<Scalar> d_probs = (2 * scale / c) * diff;
      const Vector<Scalar> d_logits =
          (act.probs.array() * (d_probs.array() - act.probs.dot(d_probs))).matrix();
      d_feature += detail::voter_backward(params.voters[i], out.grad.voters[i], feature, act,
                                          d_logits);
    }
    if (!freeze_embeddings) {
      detail::scatter_mean(out.grad.embeddings, sample.ids, d_feature, /*skip_mask=*/false);
    }
  }
  detail::check_finite(out);
  return out;
}

/// Mean over the batch of hard_loss(label, student).
template <typename Scalar>
Gradient<Scalar> backward(const ModelParams<Scalar>& params, std::span<const HardSample> batch,
                          bool freeze_embeddings = false) {
  if (batch.empty()) throw DataError("hard batch is empty");
  Gradient<Scalar> out{0, ModelParams<Scalar>::zeros(params.dims)};
  const auto m = params.voters.size();
  const Scalar scale = Scalar(1) / (static_cast<Scalar>(batch.size()) * static_cast<Scalar>(m));
  for (const auto& sample : batch) {
    if (sample.label < 0 || sample.label >= static_cast<int>(params.dims.classes)) {
      throw DataError("hard sample label " + std::to_string(sample.label) + " out of range");
    }
    const Vector<Scalar> feature = encode(params, sample.ids);
    Vector<Scalar> d_feature = Vector<Scalar>::Zero(feature.size());
    for (std::size_t i = 0; i < m; ++i) {
      const auto act = voter_forward(params.voters[i], feature);
      out.loss -= scale * std::log(act.probs(sample.label));
      Vector<Scalar> d_logits = scale * act.probs;
      d_logits(sample.label) -= scale;
      d_feature += detail::voter_backward(params.voters[i], out.grad.voters[i], feature, act,
                                          d_logits);
    }
    if (!freeze_embeddings) {
      detail::scatter_mean(out.grad.embeddings, sample.ids, d_feature, /*skip_mask=*/false);
    }
  }
  detail::check_finite(out);
  return out;
}

/// Forward-only batch objective; mirrors backward() without gradients.
template <typename Scalar>
Scalar batch_loss(const ModelParams<Scalar>& params, std::span<const MaskedBatch> batch) {
  std::size_t total_targets = 0;
  for (const auto& b : batch) total_targets += b.targets.size();
  if (total_targets == 0) throw DataError("MLM batch has no masked targets");
  Scalar loss = 0;
  for (const auto& b : batch) {
    if (b.targets.empty()) continue;
    std::size_t visible = 0;
    const Vector<Scalar> context = detail::mlm_context(params, b.input, visible);
    const Vector<Scalar> probs = softmax<Scalar>(params.mlm_weight * context + params.mlm_bias);
    for (const auto& target : b.targets) loss -= std::log(probs(target.second));
  }
  return loss / static_cast<Scalar>(total_targets);
}

template <typename Scalar>
Scalar batch_loss(const ModelParams<Scalar>& params, std::span<const SoftSample<Scalar>> batch) {
  if (batch.empty()) throw DataError("soft batch is empty");
  Scalar loss = 0;
  for (const auto& s : batch) {
    const auto student = voters_forward(params, encode(params, s.ids));
    loss += soft_loss<Scalar>(s.teacher, student);
  }
  return loss / static_cast<Scalar>(batch.size());
}

template <typename Scalar>
Scalar batch_loss(const ModelParams<Scalar>& params, std::span<const HardSample> batch) {
  if (batch.empty()) throw DataError("hard batch is empty");
  Scalar loss = 0;
  for (const auto& s : batch) {
    const auto student = voters_forward(params, encode(params, s.ids));
    loss += hard_loss<Scalar>(s.label, student);
  }
  return loss / static_cast<Scalar>(batch.size());
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

/// Which parameter groups an update may touch.
struct Trainable {
  bool embeddings = true;
  bool mlm_head = false;
  bool voters = true;

  bool allows(ParamGroup g) const {
    switch (g) {
      case ParamGroup::embeddings: return embeddings;
      case ParamGroup::mlm_head: return mlm_head;
      case ParamGroup::voters: return voters;
    }
    return false;
  }
};

template <typename Scalar>
struct AdamState {
  ModelParams<Scalar> first;
  ModelParams<Scalar> second;
  std::uint64_t step = 0;

  explicit AdamState(const ModelDims& dims)
      : first(ModelParams<Scalar>::zeros(dims)), second(ModelParams<Scalar>::zeros(dims)) {}
};

/// One AdamW step at learning rate `lr` (the caller applies any schedule).
template <typename Scalar>
void optimizer_step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grad,
                    AdamState<Scalar>& state, const AdamConfig& config, double lr,
                    const Trainable& trainable) {
  ++state.step;
  const Scalar b1 = static_cast<Scalar>(config.beta1);
  const Scalar b2 = static_cast<Scalar>(config.beta2);
  const Scalar correction1 = 1 - std::pow(b1, static_cast<Scalar>(state.step));
  const Scalar correction2 = 1 - std::pow(b2, static_cast<Scalar>(state.step));
  const Scalar step_lr = static_cast<Scalar>(lr);
  const Scalar eps = static_cast<Scalar>(config.epsilon);
  const Scalar decay = static_cast<Scalar>(config.weight_decay);
  for_each_tensor(
      [&](const std::string&, ParamGroup group, auto& p, const auto& g, auto& m, auto& v) {
        if (!trainable.allows(group)) return;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g.cwiseAbs2();
        const auto m_hat = m.array() / correction1;
        const auto v_hat = v.array() / correction2;
        if (decay != 0) p *= 1 - step_lr * decay;
        p.array() -= step_lr * m_hat / (v_hat.sqrt() + eps);
      },
      params, grad, state.first, state.second);
}

}  // namespace xling
