#pragma once

// Linear-softmax toy policies with exact gradients, and the perturbed sampler
// variant that emulates inference/training engine mismatch.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace agentrl {

// Dense row-major matrix of policy parameters, rows = features, cols = actions.
class ParamMatrix {
 public:
  ParamMatrix() = default;
  ParamMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  ParamMatrix& operator+=(const ParamMatrix& o);
  ParamMatrix& operator-=(const ParamMatrix& o);
  ParamMatrix& operator*=(double s);
  // this += s * o
  void axpy(double s, const ParamMatrix& o);

  double norm() const;
  bool same_shape(const ParamMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const ParamMatrix&, const ParamMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

ParamMatrix operator-(ParamMatrix a, const ParamMatrix& b);
ParamMatrix operator+(ParamMatrix a, const ParamMatrix& b);
ParamMatrix operator*(double s, ParamMatrix a);

class ToyPolicy {
 public:
  ToyPolicy(std::size_t feature_dim, std::size_t vocab_size, int version = 0);
  ToyPolicy(ParamMatrix params, int version = 0);

  // Parameters drawn uniformly from [-scale, scale].
  static ToyPolicy random(std::size_t feature_dim, std::size_t vocab_size, double scale,
                          std::uint64_t seed);

  std::size_t feature_dim() const { return params_.rows(); }
  std::size_t vocab_size() const { return params_.cols(); }
  int version() const { return version_; }
  const ParamMatrix& params() const { return params_; }

  std::vector<double> logits(std::span<const double> features) const;
  std::vector<double> log_probs(std::span<const double> features) const;
  double logprob(std::span<const double> features, int action) const;
  ParamMatrix logprob_grad(std::span<const double> features, int action) const;
  // acc += weight * d logprob / d params
  void accumulate_logprob_grad(std::span<const double> features, int action, double weight,
                               ParamMatrix& acc) const;
  int sample_action(std::span<const double> features, std::uint64_t seed) const;

  // Gradient-ascent step: params + step * direction, version + 1.
  ToyPolicy updated(const ParamMatrix& direction, double step) const;
  ToyPolicy with_params(ParamMatrix params) const { return ToyPolicy(std::move(params), version_); }

 private:
  void check_action(int action) const;
  void check_features(std::span<const double> features) const;

  ParamMatrix params_;
  int version_ = 0;
};

// Log-softmax with max subtraction.
std::vector<double> log_softmax(std::span<const double> logits);
// Inverse-CDF draw from exp(log_probs).
int sample_from_log_probs(std::span<const double> log_probs, std::uint64_t seed);

struct SamplerConfig {
  double perturbation_scale = 0.0;
  std::uint64_t perturbation_seed = 0;
  std::optional<int> rounding_bits;
};

// Inference-engine view of a policy: same parameters plus a deterministic
// perturbation field, optionally followed by logit quantization.
class SamplerVariant {
 public:
  SamplerVariant(ToyPolicy base, SamplerConfig cfg = {});

  const ToyPolicy& base() const { return base_; }
  const SamplerConfig& config() const { return cfg_; }

  std::vector<double> log_probs(std::span<const double> features) const;
  double logprob(std::span<const double> features, int action) const;
  int sample_action(std::span<const double> features, std::uint64_t seed) const;

 private:
  ToyPolicy base_;
  SamplerConfig cfg_;
  ToyPolicy effective_;
};

// Fixed perturbation direction in [-1, 1] for every parameter entry.
ParamMatrix perturbation_field(std::size_t rows, std::size_t cols, std::uint64_t seed);

// One-hot state features indexed by (task slot, turn index, offset within the
// turn). Turn and offset saturate at the last bucket.
struct FeatureLayout {
  int task_slots = 1;
  int max_turns = 1;
  int turn_length = 1;

  std::size_t dim() const {
    return static_cast<std::size_t>(task_slots) * max_turns * turn_length;
  }
  std::size_t index(int task_slot, std::size_t turn, std::size_t offset) const;
  std::vector<double> features(int task_slot, std::size_t turn, std::size_t offset) const;
};

// Policy checkpoint: named-field text with version and row-major parameters.
void save_checkpoint(const std::string& path, const ToyPolicy& policy);
ToyPolicy load_checkpoint(const std::string& path);
std::string checkpoint_text(const ToyPolicy& policy);
ToyPolicy checkpoint_from_text(const std::string& text);

}  // namespace agentrl
