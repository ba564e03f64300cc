#pragma once

// The differentiable policy under attack.
//
// A frozen, seeded stand-in for a vision-language-action model:
//
//   pooled = non-overlapping patch means of the observation (row-major
//            cells, RGB interleaved)
//   x      = [pooled ; embedding(instruction)]
//   h1     = act(W1 x + b1),  h2 = act(W2 h1 + b2)
//   a      = Wh h2 + bh,  a[6] = act(a[6])   (gripper)
//
// with act = tanh (or the identity for linear-probe test configurations).
// The attack only needs forward actions and input gradients, which the
// abstract Policy interface isolates.

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "advtex/image.hpp"
#include "advtex/rng.hpp"

namespace advtex {

inline constexpr int kActionDim = 7;
inline constexpr int kGripperChannel = 6;

/// (dx, dy, dz, droll, dpitch, dyaw, gripper).
using ActionVector = std::array<double, kActionDim>;

struct Instruction {
  int id = 0;
};

enum class Activation { tanh, identity };

struct PolicySpec {
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  int patch = 8;
  std::array<int, 2> hidden{64, 64};
  int embed_dim = 16;
  int instruction_count = 8;
  double weight_gain = 1.0;  // multiplies the Glorot bound of every affine layer
  Activation activation = Activation::tanh;
};

inline void validate_policy_spec(const PolicySpec& s) {
  if (s.height <= 0 || s.width <= 0 || s.patch <= 0) throw std::invalid_argument("policy: sizes must be positive");
  if (s.height % s.patch != 0 || s.width % s.patch != 0)
    throw std::invalid_argument("policy: input height/width must be divisible by the patch size");
  if (s.hidden[0] <= 0 || s.hidden[1] <= 0) throw std::invalid_argument("policy: hidden widths must be positive");
  if (s.embed_dim < 0 || s.instruction_count <= 0) throw std::invalid_argument("policy: bad embedding table shape");
  if (!(s.weight_gain > 0.0 && std::isfinite(s.weight_gain))) throw std::invalid_argument("policy: bad weight gain");
}

class Policy {
 public:
  virtual ~Policy() = default;
  virtual ImageSize input_size() const = 0;
  virtual ActionVector forward(const Observation& obs, Instruction instr) const = 0;
  /// Gradient of <forward(obs, instr), d_action> with respect to obs.
  virtual Observation input_gradient(const Observation& obs, Instruction instr, const ActionVector& d_action) const = 0;
};

class PatchPoolPolicy final : public Policy {
 public:
  explicit PatchPoolPolicy(const PolicySpec& spec) : spec_(spec) {
    validate_policy_spec(spec);
    cells_h_ = spec.height / spec.patch;
    cells_w_ = spec.width / spec.patch;
    const int pooled = cells_h_ * cells_w_ * 3;
    Rng rng(spec.seed, "policy-weights");
    auto affine = [&](Eigen::MatrixXd& w, Eigen::VectorXd& b, int out, int in) {
      const double bound = spec.weight_gain * std::sqrt(6.0 / (in + out));
      w.resize(out, in);
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) w(r, c) = rng.uniform(-bound, bound);
      b.resize(out);
      for (int r = 0; r < out; ++r) b(r) = rng.uniform(-0.1, 0.1);
    };
    affine(w1_, b1_, spec.hidden[0], pooled + spec.embed_dim);
    affine(w2_, b2_, spec.hidden[1], spec.hidden[0]);
    affine(wh_, bh_, kActionDim, spec.hidden[1]);
    embedding_.resize(spec.instruction_count, spec.embed_dim);
    for (int r = 0; r < spec.instruction_count; ++r)
      for (int c = 0; c < spec.embed_dim; ++c) embedding_(r, c) = rng.uniform(-1.0, 1.0);
  }

  const PolicySpec& spec() const { return spec_; }
  ImageSize input_size() const override { return {spec_.height, spec_.width}; }
  int pooled_dim() const { return cells_h_ * cells_w_ * 3; }

  const Eigen::MatrixXd& w1() const { return w1_; }
  const Eigen::MatrixXd& w2() const { return w2_; }
  const Eigen::MatrixXd& head() const { return wh_; }
  const Eigen::VectorXd& b1() const { return b1_; }
  const Eigen::VectorXd& b2() const { return b2_; }
  const Eigen::VectorXd& head_bias() const { return bh_; }
  const Eigen::MatrixXd& embedding() const { return embedding_; }

  Eigen::VectorXd pool(const Observation& obs) const {
    check_input(obs);
    Eigen::VectorXd pooled = Eigen::VectorXd::Zero(pooled_dim());
    const double inv = 1.0 / (spec_.patch * spec_.patch);
    for (int r = 0; r < obs.height; ++r) {
      const int cr = r / spec_.patch;
      for (int c = 0; c < obs.width; ++c) {
        const int cell = cr * cells_w_ + c / spec_.patch;
        for (int ch = 0; ch < 3; ++ch) pooled(cell * 3 + ch) += obs.at(r, c, ch);
      }
    }
    return pooled * inv;
  }

  ActionVector forward(const Observation& obs, Instruction instr) const override {
    return evaluate(obs, instr).action;
  }

  Observation input_gradient(const Observation& obs, Instruction instr, const ActionVector& d_action) const override {
    const Activations a = evaluate(obs, instr);
    Eigen::VectorXd dy(kActionDim);
    for (int k = 0; k < kActionDim; ++k) dy(k) = d_action[k];
    dy(kGripperChannel) *= act_derivative(a.action[kGripperChannel]);
    const Eigen::VectorXd dpre2 = (wh_.transpose() * dy).cwiseProduct(a.h2.unaryExpr([this](double h) { return act_derivative(h); }));
    const Eigen::VectorXd dpre1 = (w2_.transpose() * dpre2).cwiseProduct(a.h1.unaryExpr([this](double h) { return act_derivative(h); }));
    const Eigen::VectorXd dx = w1_.leftCols(pooled_dim()).transpose() * dpre1;

    Observation grad(obs.height, obs.width, 0.0);
    const double inv = 1.0 / (spec_.patch * spec_.patch);
    for (int r = 0; r < obs.height; ++r) {
      const int cr = r / spec_.patch;
      for (int c = 0; c < obs.width; ++c) {
        const int cell = cr * cells_w_ + c / spec_.patch;
        for (int ch = 0; ch < 3; ++ch) grad.at(r, c, ch) = dx(cell * 3 + ch) * inv;
      }
    }
    return grad;
  }

 private:
  struct Activations {
    Eigen::VectorXd h1, h2;
    ActionVector action{};
  };

  double act(double x) const { return spec_.activation == Activation::tanh ? std::tanh(x) : x; }
  // In terms of the activation's output value.
  double act_derivative(double y) const { return spec_.activation == Activation::tanh ? 1.0 - y * y : 1.0; }

  void check_input(const Observation& obs) const {
    if (obs.height != spec_.height || obs.width != spec_.width)
      throw std::invalid_argument("policy: observation is " + std::to_string(obs.height) + "x" +
                                  std::to_string(obs.width) + ", expected " + std::to_string(spec_.height) + "x" +
                                  std::to_string(spec_.width));
  }

  Activations evaluate(const Observation& obs, Instruction instr) const {
    if (instr.id < 0 || instr.id >= spec_.instruction_count)
      throw std::invalid_argument("policy: instruction id " + std::to_string(instr.id) + " out of range");
    Eigen::VectorXd x(w1_.cols());
    x.head(pooled_dim()) = pool(obs);
    x.tail(spec_.embed_dim) = embedding_.row(instr.id).transpose();
    Activations a;
    a.h1 = (w1_ * x + b1_).unaryExpr([this](double v) { return act(v); });
    a.h2 = (w2_ * a.h1 + b2_).unaryExpr([this](double v) { return act(v); });
    const Eigen::VectorXd y = wh_ * a.h2 + bh_;
    for (int k = 0; k < kActionDim; ++k) a.action[k] = y(k);
    a.action[kGripperChannel] = act(a.action[kGripperChannel]);
    return a;
  }

  PolicySpec spec_;
  int cells_h_ = 0;
  int cells_w_ = 0;
  Eigen::MatrixXd w1_, w2_, wh_, embedding_;
  Eigen::VectorXd b1_, b2_, bh_;
};

inline std::shared_ptr<const PatchPoolPolicy> build_policy(const PolicySpec& spec) {
  return std::make_shared<const PatchPoolPolicy>(spec);
}

inline ActionVector policy_forward(const Policy& policy, const Observation& obs, Instruction instr) {
  return policy.forward(obs, instr);
}

inline Observation policy_input_gradient(const Policy& policy, const Observation& obs, Instruction instr,
                                         const ActionVector& d_action) {
  return policy.input_gradient(obs, instr, d_action);
}

inline double action_l2(const ActionVector& a, const ActionVector& b) {
  double s = 0.0;
  for (int k = 0; k < kActionDim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

}  // namespace advtex
