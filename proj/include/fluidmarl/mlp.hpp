// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

// Fully connected ReLU network with a linear output layer and hand-written
// reverse mode. Parameters live in one flat vector (per layer: weights in
// column-major order, then biases), which keeps optimizers and checkpoints
// trivial.

#ifndef FLUIDMARL_MLP_HPP_
#define FLUIDMARL_MLP_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "fluidmarl/common.hpp"

namespace fluidmarl {

template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using ConstVectorMap = Eigen::Map<const Vector>;

  // Saved layer inputs from a forward pass; inputs[0] is the network input,
  // inputs[l] the post-ReLU activation feeding layer l.
  struct Tape {
    std::vector<Matrix> inputs;
  };

  Mlp() = default;

  // sizes = {input, hidden..., output}
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw InvalidConfig("Mlp needs at least an input and an output size");
    Eigen::Index total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw InvalidConfig("Mlp layer sizes must be positive");
      offsets_.push_back(total);
      total += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
    }
    params_ = Vector::Zero(total);
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  Eigen::Index num_parameters() const { return params_.size(); }

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  ConstMatrixMap weight(int l) const {
    return ConstMatrixMap(params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
  }
  MatrixMap weight(int l) { return MatrixMap(params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]); }
  ConstVectorMap bias(int l) const {
    return ConstVectorMap(params_.data() + offsets_[l] + Eigen::Index(sizes_[l + 1]) * sizes_[l],
                          sizes_[l + 1]);
  }
  Eigen::Map<Vector> bias(int l) {
    return Eigen::Map<Vector>(params_.data() + offsets_[l] + Eigen::Index(sizes_[l + 1]) * sizes_[l],
                              sizes_[l + 1]);
  }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases; the
  // output layer is additionally multiplied by output_scale.
  template <typename Urbg>
  void initialize(Urbg& rng, Scalar output_scale = Scalar(1)) {
    for (int l = 0; l < num_layers(); ++l) {
      const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(sizes_[l]));
      std::uniform_real_distribution<Scalar> dist(-bound, bound);
      const Scalar scale = (l + 1 == num_layers()) ? output_scale : Scalar(1);
      auto w = weight(l);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng) * scale;
      auto b = bias(l);
      for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = dist(rng) * scale;
    }
  }

  // x: input_size x batch. Returns output_size x batch.
  Matrix forward(const Matrix& x) const {
    check_input(x);
    Matrix a = x;
    for (int l = 0; l < num_layers(); ++l) {
      Matrix z = (weight(l) * a).colwise() + bias(l);
      if (l + 1 < num_layers()) z = z.cwiseMax(Scalar(0));
      a = std::move(z);
    }
    return a;
  }

  Matrix forward(const Matrix& x, Tape& tape) const {
    check_input(x);
    tape.inputs.clear();
    tape.inputs.push_back(x);
    Matrix a;
    for (int l = 0; l < num_layers(); ++l) {
      Matrix z = (weight(l) * tape.inputs.back()).colwise() + bias(l);
      if (l + 1 < num_layers()) {
        tape.inputs.push_back(z.cwiseMax(Scalar(0)));
      } else {
        a = std::move(z);
      }
    }
    return a;
  }

  // Accumulates dL/dparams into grad given dL/doutput (output_size x batch).
  // Returns dL/dinput.
  Matrix backward(const Tape& tape, const Matrix& grad_out, Vector& grad) const {
    if (grad.size() != params_.size()) grad = Vector::Zero(params_.size());
    Matrix delta = grad_out;
    for (int l = num_layers() - 1; l >= 0; --l) {
      const Matrix& in = tape.inputs[static_cast<std::size_t>(l)];
      Eigen::Map<Matrix> gw(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
      Eigen::Map<Vector> gb(grad.data() + offsets_[l] + Eigen::Index(sizes_[l + 1]) * sizes_[l], sizes_[l + 1]);
      gw.noalias() += delta * in.transpose();
      gb += delta.rowwise().sum();
      Matrix prev = weight(l).transpose() * delta;
      if (l > 0) prev = prev.cwiseProduct((in.array() > Scalar(0)).template cast<Scalar>().matrix());
      delta = std::move(prev);
    }
    return delta;
  }

 private:
  void check_input(const Matrix& x) const {
    if (x.rows() != input_size())
      throw ShapeMismatch("Mlp: expected input with " + std::to_string(input_size()) + " rows, got " +
                          std::to_string(x.rows()));
  }

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Vector params_;
};

// Adam with bias correction over a flat parameter vector.
template <typename Scalar>
struct Adam {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Scalar lr{1e-3};
  Scalar beta1{0.9};
  Scalar beta2{0.999};
  Scalar eps{1e-8};
  Vector m;
  Vector v;
  long long step = 0;

  Adam() = default;
  Adam(Eigen::Index size, Scalar learning_rate)
      : lr(learning_rate), m(Vector::Zero(size)), v(Vector::Zero(size)) {}

  void update(Eigen::Ref<Vector> params, const Vector& grad) {
    if (grad.size() != params.size()) throw ShapeMismatch("Adam: gradient and parameter sizes differ");
    if (m.size() != params.size()) {
      m = Vector::Zero(params.size());
      v = Vector::Zero(params.size());
    }
    ++step;
    m = beta1 * m + (Scalar(1) - beta1) * grad;
    v = beta2 * v + (Scalar(1) - beta2) * grad.cwiseAbs2();
    const Scalar c1 = Scalar(1) - std::pow(beta1, static_cast<Scalar>(step));
    const Scalar c2 = Scalar(1) - std::pow(beta2, static_cast<Scalar>(step));
    params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

}  // namespace fluidmarl

#endif  // FLUIDMARL_MLP_HPP_
