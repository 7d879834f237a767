#include "agentrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "agentrl/rng.hpp"

namespace agentrl {

ParamMatrix& ParamMatrix::operator+=(const ParamMatrix& o) {
  if (!same_shape(o)) throw std::invalid_argument("ParamMatrix shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

ParamMatrix& ParamMatrix::operator-=(const ParamMatrix& o) {
  if (!same_shape(o)) throw std::invalid_argument("ParamMatrix shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

ParamMatrix& ParamMatrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

void ParamMatrix::axpy(double s, const ParamMatrix& o) {
  if (!same_shape(o)) throw std::invalid_argument("ParamMatrix shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
}

double ParamMatrix::norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

ParamMatrix operator-(ParamMatrix a, const ParamMatrix& b) { return a -= b; }
ParamMatrix operator+(ParamMatrix a, const ParamMatrix& b) { return a += b; }
ParamMatrix operator*(double s, ParamMatrix a) { return a *= s; }

std::vector<double> log_softmax(std::span<const double> logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  double lse = m + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::min(0.0, logits[i] - lse);
  return out;
}

int sample_from_log_probs(std::span<const double> log_probs, std::uint64_t seed) {
  double u = rng::to_unit(rng::splitmix64(seed));
  double cum = 0.0;
  for (std::size_t a = 0; a < log_probs.size(); ++a) {
    cum += std::exp(log_probs[a]);
    if (u < cum) return static_cast<int>(a);
  }
  // Rounding left u above the accumulated mass; take the last action with
  // non-negligible probability.
  for (std::size_t a = log_probs.size(); a-- > 0;)
    if (std::isfinite(log_probs[a]) && log_probs[a] > -700.0) return static_cast<int>(a);
  return static_cast<int>(log_probs.size()) - 1;
}

ToyPolicy::ToyPolicy(std::size_t feature_dim, std::size_t vocab_size, int version)
    : params_(feature_dim, vocab_size), version_(version) {
  if (feature_dim == 0 || vocab_size == 0) throw std::invalid_argument("empty policy shape");
}

ToyPolicy::ToyPolicy(ParamMatrix params, int version) : params_(std::move(params)), version_(version) {
  if (params_.rows() == 0 || params_.cols() == 0) throw std::invalid_argument("empty policy shape");
  for (double v : params_.flat())
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite policy parameter");
}

ToyPolicy ToyPolicy::random(std::size_t feature_dim, std::size_t vocab_size, double scale,
                            std::uint64_t seed) {
  ParamMatrix p(feature_dim, vocab_size);
  rng::Stream s(seed);
  for (double& v : p.flat()) v = scale * (2.0 * s.uniform() - 1.0);
  return ToyPolicy(std::move(p));
}

void ToyPolicy::check_action(int action) const {
  if (action < 0 || static_cast<std::size_t>(action) >= vocab_size())
    throw std::out_of_range("action " + std::to_string(action) + " outside vocabulary of size " +
                            std::to_string(vocab_size()));
}

void ToyPolicy::check_features(std::span<const double> features) const {
  if (features.size() != feature_dim())
    throw std::invalid_argument("feature vector has dimension " + std::to_string(features.size()) +
                                ", policy expects " + std::to_string(feature_dim()));
}

std::vector<double> ToyPolicy::logits(std::span<const double> features) const {
  check_features(features);
  std::vector<double> z(vocab_size(), 0.0);
  for (std::size_t i = 0; i < feature_dim(); ++i) {
    double x = features[i];
    if (x == 0.0) continue;
    for (std::size_t a = 0; a < vocab_size(); ++a) z[a] += x * params_(i, a);
  }
  return z;
}

std::vector<double> ToyPolicy::log_probs(std::span<const double> features) const {
  return log_softmax(logits(features));
}

double ToyPolicy::logprob(std::span<const double> features, int action) const {
  check_action(action);
  return log_probs(features)[action];
}

ParamMatrix ToyPolicy::logprob_grad(std::span<const double> features, int action) const {
  ParamMatrix g(feature_dim(), vocab_size());
  accumulate_logprob_grad(features, action, 1.0, g);
  return g;
}

void ToyPolicy::accumulate_logprob_grad(std::span<const double> features, int action, double weight,
                                        ParamMatrix& acc) const {
  check_action(action);
  if (!acc.same_shape(params_)) throw std::invalid_argument("gradient accumulator shape mismatch");
  std::vector<double> lp = log_probs(features);
  // d log softmax(z)[a] / d z_b = 1[a == b] - p_b, and z_b = sum_i x_i W_ib.
  for (std::size_t i = 0; i < feature_dim(); ++i) {
    double x = features[i];
    if (x == 0.0) continue;
    for (std::size_t b = 0; b < vocab_size(); ++b) {
      double d = (static_cast<int>(b) == action ? 1.0 : 0.0) - std::exp(lp[b]);
      acc(i, b) += weight * x * d;
    }
  }
}

int ToyPolicy::sample_action(std::span<const double> features, std::uint64_t seed) const {
  return sample_from_log_probs(log_probs(features), seed);
}

ToyPolicy ToyPolicy::updated(const ParamMatrix& direction, double step) const {
  ParamMatrix p = params_;
  p.axpy(step, direction);
  return ToyPolicy(std::move(p), version_ + 1);
}

ParamMatrix perturbation_field(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  ParamMatrix u(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      u(r, c) = 2.0 * rng::to_unit(rng::derive({seed, r, c})) - 1.0;
  return u;
}

namespace {

ToyPolicy perturbed(const ToyPolicy& base, const SamplerConfig& cfg) {
  if (cfg.perturbation_scale < 0.0) throw std::invalid_argument("negative perturbation_scale");
  if (cfg.perturbation_scale == 0.0) return base;
  ParamMatrix p = base.params();
  p.axpy(cfg.perturbation_scale,
         perturbation_field(p.rows(), p.cols(), cfg.perturbation_seed));
  return ToyPolicy(std::move(p), base.version());
}

}  // namespace

SamplerVariant::SamplerVariant(ToyPolicy base, SamplerConfig cfg)
    : base_(std::move(base)), cfg_(cfg), effective_(perturbed(base_, cfg_)) {
  if (cfg_.rounding_bits && *cfg_.rounding_bits < 0)
    throw std::invalid_argument("rounding_bits must be non-negative");
}

std::vector<double> SamplerVariant::log_probs(std::span<const double> features) const {
  std::vector<double> z = effective_.logits(features);
  if (cfg_.rounding_bits) {
    double q = std::ldexp(1.0, *cfg_.rounding_bits);
    for (double& v : z) v = std::nearbyint(v * q) / q;
  }
  return log_softmax(z);
}

double SamplerVariant::logprob(std::span<const double> features, int action) const {
  if (action < 0 || static_cast<std::size_t>(action) >= base_.vocab_size())
    throw std::out_of_range("action outside vocabulary");
  return log_probs(features)[action];
}

int SamplerVariant::sample_action(std::span<const double> features, std::uint64_t seed) const {
  return sample_from_log_probs(log_probs(features), seed);
}

std::size_t FeatureLayout::index(int task_slot, std::size_t turn, std::size_t offset) const {
  if (task_slot < 0 || task_slot >= task_slots)
    throw std::out_of_range("task slot " + std::to_string(task_slot) + " outside layout");
  std::size_t t = std::min<std::size_t>(turn, max_turns - 1);
  std::size_t o = std::min<std::size_t>(offset, turn_length - 1);
  return (static_cast<std::size_t>(task_slot) * max_turns + t) * turn_length + o;
}

std::vector<double> FeatureLayout::features(int task_slot, std::size_t turn, std::size_t offset) const {
  std::vector<double> x(dim(), 0.0);
  x[index(task_slot, turn, offset)] = 1.0;
  return x;
}

std::string checkpoint_text(const ToyPolicy& policy) {
  std::ostringstream out;
  out << "version " << policy.version() << '\n'
      << "feature_dim " << policy.feature_dim() << '\n'
      << "vocab_size " << policy.vocab_size() << '\n'
      << "params\n";
  char buf[32];
  const ParamMatrix& p = policy.params();
  for (std::size_t r = 0; r < p.rows(); ++r) {
    for (std::size_t c = 0; c < p.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", p(r, c));
      out << (c ? " " : "") << buf;
    }
    out << '\n';
  }
  return out.str();
}

ToyPolicy checkpoint_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string key;
  int version = 0;
  std::size_t rows = 0, cols = 0;
  auto expect = [&](const char* name) {
    if (!(in >> key) || key != name)
      throw std::runtime_error(std::string("checkpoint: expected field '") + name + "'");
  };
  expect("version");
  in >> version;
  expect("feature_dim");
  in >> rows;
  expect("vocab_size");
  in >> cols;
  expect("params");
  if (!in || rows == 0 || cols == 0) throw std::runtime_error("checkpoint: bad header");
  ParamMatrix p(rows, cols);
  for (double& v : p.flat()) {
    std::string tok;
    if (!(in >> tok)) throw std::runtime_error("checkpoint: truncated parameter matrix");
    v = std::stod(tok);
  }
  return ToyPolicy(std::move(p), version);
}

void save_checkpoint(const std::string& path, const ToyPolicy& policy) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << checkpoint_text(policy);
}

ToyPolicy load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_text(ss.str());
}

}  // namespace agentrl
