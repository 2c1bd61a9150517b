#pragma once

// Scalar-generic MLP forward/backward passes. Instantiated with double for
// training and with Dual for forward-over-reverse second derivatives.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "dbsrl/approx.hpp"
#include "dbsrl/dual.hpp"

namespace dbsrl::approx::kernel {

using std::exp;
using std::log;
using std::tanh;
using dbsrl::exp;
using dbsrl::log;
using dbsrl::tanh;

template <class T>
struct Tape {
  std::vector<std::vector<T>> act;  // act[0] is the input, act[l] the output of layer l
};

template <class T>
void forward(const MlpShape& shape, std::span<const T> p, std::span<const double> input,
             Tape<T>& tape) {
  const std::size_t layers = shape.layers.size() - 1;
  tape.act.resize(layers + 1);
  tape.act[0].assign(input.begin(), input.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t nin = shape.layers[l];
    const std::size_t nout = shape.layers[l + 1];
    const auto& x = tape.act[l];
    auto& y = tape.act[l + 1];
    y.assign(nout, T(0.0));
    const std::size_t bias = off + nout * nin;
    const bool squash = l + 1 < layers && shape.hidden == Activation::Tanh;
    for (std::size_t j = 0; j < nout; ++j) {
      T acc = p[bias + j];
      const std::size_t row = off + j * nin;
      for (std::size_t i = 0; i < nin; ++i) acc += p[row + i] * x[i];
      y[j] = squash ? tanh(acc) : acc;
    }
    off += (nin + 1) * nout;
  }
}

/// Accumulates d(output . d_out)/d(params) into `grad`.
template <class T>
void backward(const MlpShape& shape, std::span<const T> p, const Tape<T>& tape,
              std::vector<T> d_out, std::span<T> grad) {
  const std::size_t layers = shape.layers.size() - 1;
  std::vector<std::size_t> offsets(layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = off;
    off += (shape.layers[l] + 1) * shape.layers[l + 1];
  }
  std::vector<T> delta = std::move(d_out);
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t nin = shape.layers[l];
    const std::size_t nout = shape.layers[l + 1];
    const auto& x = tape.act[l];
    if (l + 1 < layers && shape.hidden == Activation::Tanh) {
      const auto& y = tape.act[l + 1];
      for (std::size_t j = 0; j < nout; ++j) delta[j] = delta[j] * (T(1.0) - y[j] * y[j]);
    }
    const std::size_t base = offsets[l];
    const std::size_t bias = base + nout * nin;
    std::vector<T> prev(l > 0 ? nin : 0, T(0.0));
    for (std::size_t j = 0; j < nout; ++j) {
      const T dj = delta[j];
      const std::size_t row = base + j * nin;
      grad[bias + j] += dj;
      for (std::size_t i = 0; i < nin; ++i) {
        grad[row + i] += dj * x[i];
        if (l > 0) prev[i] += p[row + i] * dj;
      }
    }
    delta = std::move(prev);
  }
}

/// Masked softmax probabilities; masked slots are exactly zero.
template <class T>
std::vector<T> masked_softmax(const std::vector<T>& logits, const ActionMask& mask) {
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < logits.size(); ++a) {
    if (mask[a]) shift = std::max(shift, value_of(logits[a]));
  }
  std::vector<T> probs(logits.size(), T(0.0));
  T total(0.0);
  for (std::size_t a = 0; a < logits.size(); ++a) {
    if (!mask[a]) continue;
    probs[a] = exp(logits[a] - T(shift));
    total += probs[a];
  }
  for (auto& q : probs) q = q / total;
  for (std::size_t a = 0; a < logits.size(); ++a) {
    if (!mask[a]) probs[a] = T(0.0);
  }
  return probs;
}

template <class T>
std::vector<T> policy_probs(const MlpShape& shape, std::span<const T> p,
                            std::span<const double> enc, const ActionMask& mask) {
  Tape<T> tape;
  forward(shape, p, enc, tape);
  return masked_softmax(tape.act.back(), mask);
}

/// grad += weight * d log pi(action | enc) / d params.
template <class T>
void accumulate_grad_log_prob(const MlpShape& shape, std::span<const T> p,
                              std::span<const double> enc, const ActionMask& mask, int action,
                              T weight, std::span<T> grad) {
  Tape<T> tape;
  forward(shape, p, enc, tape);
  const auto probs = masked_softmax(tape.act.back(), mask);
  std::vector<T> d_logits(probs.size(), T(0.0));
  for (std::size_t a = 0; a < probs.size(); ++a) {
    if (!mask[a]) continue;
    const T indicator(static_cast<int>(a) == action ? 1.0 : 0.0);
    d_logits[a] = weight * (indicator - probs[a]);
  }
  backward(shape, p, tape, std::move(d_logits), grad);
}

template <class T>
T value(const MlpShape& shape, std::span<const T> p, std::span<const double> enc) {
  Tape<T> tape;
  forward(shape, p, enc, tape);
  return tape.act.back()[0];
}

/// grad += weight * dV(enc) / d params; returns V(enc).
template <class T>
T accumulate_grad_value(const MlpShape& shape, std::span<const T> p,
                        std::span<const double> enc, T weight, std::span<T> grad) {
  Tape<T> tape;
  forward(shape, p, enc, tape);
  backward(shape, p, tape, std::vector<T>{weight}, grad);
  return tape.act.back()[0];
}

}  // namespace dbsrl::approx::kernel
