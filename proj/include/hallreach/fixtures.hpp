#pragma once

// Small hand-built controllers used by the examples, the tests and the
// acceptance suite.

#include <Eigen/Dense>

#include <initializer_list>
#include <vector>

#include "hallreach/controller.hpp"

namespace hallreach::fixtures {

/// Zero weights: always steers straight.
inline MLPController straight(int rays = 21, int hidden = 1) {
  Layer a{Eigen::MatrixXd::Zero(hidden, rays), Eigen::VectorXd::Zero(hidden), Activation::Tanh};
  Layer b{Eigen::MatrixXd::Zero(1, hidden), Eigen::VectorXd::Zero(1), Activation::Tanh};
  return MLPController({a, b});
}

/// Constant steering tanh(bias) * 15 degrees; bias 20 saturates to the left.
inline MLPController constant(double bias, int rays = 21) {
  Layer a{Eigen::MatrixXd::Zero(1, rays), Eigen::VectorXd::Zero(1), Activation::Tanh};
  Layer b{Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Constant(1, bias), Activation::Tanh};
  return MLPController({a, b});
}

/// Wall-centring steering. The hidden neuron sums (left - right) over the
/// mirrored ray pairs (rays - 1 - i, i) for i in `pairs`; the output is
/// tanh(out_gain * tanh(gain * sum)) * 15 degrees.
inline MLPController centring(std::initializer_list<int> pairs, double gain, double out_gain, int rays = 21) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(1, rays);
  for (int i : pairs) {
    w(0, rays - 1 - i) += gain;
    w(0, i) -= gain;
  }
  Layer a{w, Eigen::VectorXd::Zero(1), Activation::Tanh};
  Layer b{Eigen::MatrixXd::Constant(1, 1, out_gain), Eigen::VectorXd::Zero(1), Activation::Tanh};
  return MLPController({a, b});
}

/// The proportional wall-centring controller used by the verification
/// examples: pairs 6..8, gain 0.2, output gain 4.
inline MLPController proportional() { return centring({6, 7, 8}, 0.2, 4.0); }

/// High output gain: safe, but the midline is an unstable point, so coarse
/// subsets straddling it fail to verify.
inline MLPController sensitive() { return centring({6, 7, 8}, 0.2, 10.0); }

}  // namespace hallreach::fixtures
