#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "weft/error.hpp"
#include "weft/rng.hpp"

namespace weft {

// Minimal dense feed-forward pieces. Plain SGD, manual backprop, doubles
// throughout so gradient checks against finite differences stay tight.

struct Affine {
  int in = 0;
  int out = 0;
  std::vector<double> w; // row-major [out][in]
  std::vector<double> b; // [out]

  void init(int in_dim, int out_dim, Rng& rng) {
    in = in_dim;
    out = out_dim;
    w.assign(static_cast<std::size_t>(in) * out, 0.0);
    b.assign(out, 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& x : w) x = rng.uniform(-bound, bound);
    for (auto& x : b) x = rng.uniform(-bound, bound);
  }

  void zero_like(const Affine& other) {
    in = other.in;
    out = other.out;
    w.assign(other.w.size(), 0.0);
    b.assign(other.b.size(), 0.0);
  }

  void forward(const double* x, double* y) const {
    for (int o = 0; o < out; ++o) {
      const double* row = w.data() + static_cast<std::size_t>(o) * in;
      double acc = b[o];
      for (int i = 0; i < in; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }

  // Accumulates parameter gradients for dL/dy and, when dx != nullptr,
  // adds W^T dy into dx.
  void backward(const double* x, const double* dy, Affine& grad,
                double* dx) const {
    for (int o = 0; o < out; ++o) {
      const double g = dy[o];
      grad.b[o] += g;
      double* grow = grad.w.data() + static_cast<std::size_t>(o) * in;
      const double* row = w.data() + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) {
        grow[i] += g * x[i];
        if (dx) dx[i] += row[i] * g;
      }
    }
  }

  void sgd_step(const Affine& grad, double lr) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * grad.w[i];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * grad.b[i];
  }

  std::size_t param_count() const { return w.size() + b.size(); }
};

// Stack of affine layers with tanh between them. `tanh_output` controls
// whether the last layer is also squashed (trunk) or left linear
// (classification heads live elsewhere; actor/critic want raw scalars).
struct Mlp {
  std::vector<Affine> layers;
  bool tanh_output = false;

  void init(int in_dim, const std::vector<int>& widths, bool squash_output,
            Rng& rng) {
    layers.clear();
    tanh_output = squash_output;
    int d = in_dim;
    for (int wth : widths) {
      Affine a;
      a.init(d, wth, rng);
      layers.push_back(std::move(a));
      d = wth;
    }
  }

  void zero_like(const Mlp& other) {
    tanh_output = other.tanh_output;
    layers.resize(other.layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i].zero_like(other.layers[i]);
  }

  int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out; }

  // post[i] holds layer i's output after its activation.
  struct Cache {
    std::vector<std::vector<double>> post;
  };

  const std::vector<double>& forward(const std::vector<double>& x,
                                     Cache& c) const {
    c.post.resize(layers.size());
    const double* cur = x.data();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      c.post[i].assign(layers[i].out, 0.0);
      layers[i].forward(cur, c.post[i].data());
      const bool squash = (i + 1 < layers.size()) || tanh_output;
      if (squash)
        for (auto& v : c.post[i]) v = std::tanh(v);
      cur = c.post[i].data();
    }
    return c.post.back();
  }

  std::vector<double> forward(const std::vector<double>& x) const {
    Cache c;
    return forward(x, c);
  }

  // dL/d(output) -> parameter gradients, using the cached activations.
  void backward(const std::vector<double>& x, const Cache& c,
                std::vector<double> dout, Mlp& grad) const {
    for (std::size_t li = layers.size(); li-- > 0;) {
      const bool squashed = (li + 1 < layers.size()) || tanh_output;
      if (squashed) {
        const auto& a = c.post[li];
        for (std::size_t k = 0; k < dout.size(); ++k)
          dout[k] *= 1.0 - a[k] * a[k];
      }
      const double* input = (li == 0) ? x.data() : c.post[li - 1].data();
      std::vector<double> din;
      double* din_ptr = nullptr;
      if (li > 0) {
        din.assign(layers[li].in, 0.0);
        din_ptr = din.data();
      }
      layers[li].backward(input, dout.data(), grad.layers[li], din_ptr);
      if (li > 0) dout = std::move(din);
    }
  }

  void sgd_step(const Mlp& grad, double lr) {
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i].sgd_step(grad.layers[i], lr);
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
  }
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw numeric_error(std::string("non-finite value in ") + what);
}

inline void check_finite(const Mlp& m, const char* what) {
  for (const auto& l : m.layers) {
    check_finite(l.w, what);
    check_finite(l.b, what);
  }
}

// Flat views used by the finite-difference gradient checks in the tests.
inline std::vector<double*> param_pointers(Mlp& m) {
  std::vector<double*> ptrs;
  for (auto& l : m.layers) {
    for (auto& x : l.w) ptrs.push_back(&x);
    for (auto& x : l.b) ptrs.push_back(&x);
  }
  return ptrs;
}

inline std::vector<double> flatten_params(const Mlp& m) {
  std::vector<double> flat;
  for (const auto& l : m.layers) {
    flat.insert(flat.end(), l.w.begin(), l.w.end());
    flat.insert(flat.end(), l.b.begin(), l.b.end());
  }
  return flat;
}

} // namespace weft
