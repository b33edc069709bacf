#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mapt/rng.hpp"

namespace mapt {

/// Dense tanh network over concatenated one-hot input blocks. Inputs are
/// given as one hot index per block, so the first layer touches only one
/// column per block in both the forward and backward pass.
///
/// Parameter layout, per layer: W (out x in, row-major), then b (out).
struct MlpSpec {
  std::vector<std::int32_t> input_blocks;  // one-hot alphabet size per block
  std::vector<std::int32_t> hidden;        // hidden widths, tanh units
  std::int32_t outputs = 0;                // linear output width

  std::int32_t input_dim() const {
    std::int32_t n = 0;
    for (auto b : input_blocks) n += b;
    return n;
  }

  std::vector<std::int32_t> layer_dims() const {
    std::vector<std::int32_t> dims;
    dims.push_back(input_dim());
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(outputs);
    return dims;
  }

  std::size_t param_count() const {
    const auto dims = layer_dims();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
      n += static_cast<std::size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
    return n;
  }
};

inline void xavier_uniform_init(const MlpSpec& spec, SplitRng& rng, std::span<double> params) {
  const auto dims = spec.layer_dims();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::int32_t in = dims[l], out = dims[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    for (std::int32_t i = 0; i < in * out; ++i) params[off++] = rng.uniform(-limit, limit);
    for (std::int32_t i = 0; i < out; ++i) params[off++] = 0.0;  // biases
  }
}

/// Reusable activation buffers so hot loops do not allocate.
struct MlpWorkspace {
  std::vector<std::vector<double>> act;   // post-activation per layer (incl. output)
  std::vector<std::vector<double>> delta; // backprop buffers
};

/// Forward pass; returns the output span (valid until the next call with the
/// same workspace). hot[i] is the active index within input block i.
inline std::span<const double> mlp_forward(const MlpSpec& spec, std::span<const double> params,
                                           std::span<const std::uint32_t> hot,
                                           MlpWorkspace& ws) {
  const auto dims = spec.layer_dims();
  const std::size_t layers = dims.size() - 1;
  if (ws.act.size() != layers) ws.act.resize(layers);

  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::int32_t in = dims[l], out = dims[l + 1];
    auto& a = ws.act[l];
    a.resize(out);
    const double* w = params.data() + off;
    const double* b = w + static_cast<std::size_t>(in) * out;
    if (l == 0) {
      // sparse input: sum the active column of each block
      for (std::int32_t o = 0; o < out; ++o) a[o] = b[o];
      std::int32_t block_off = 0;
      for (std::size_t f = 0; f < spec.input_blocks.size(); ++f) {
        const std::int32_t col = block_off + static_cast<std::int32_t>(hot[f]);
        for (std::int32_t o = 0; o < out; ++o) a[o] += w[static_cast<std::size_t>(o) * in + col];
        block_off += spec.input_blocks[f];
      }
    } else {
      const auto& prev = ws.act[l - 1];
      for (std::int32_t o = 0; o < out; ++o) {
        double sum = b[o];
        const double* row = w + static_cast<std::size_t>(o) * in;
        for (std::int32_t i = 0; i < in; ++i) sum += row[i] * prev[i];
        a[o] = sum;
      }
    }
    if (l + 1 < layers)
      for (auto& v : a) v = std::tanh(v);
    off += static_cast<std::size_t>(in) * out + out;
  }
  return ws.act.back();
}

/// Accumulates coeff * d(output . dout)/d(params) into grad, reusing the
/// activations left in ws by the matching mlp_forward call.
inline void mlp_backward(const MlpSpec& spec, std::span<const double> params,
                         std::span<const std::uint32_t> hot, std::span<const double> dout,
                         double coeff, MlpWorkspace& ws, std::span<double> grad) {
  const auto dims = spec.layer_dims();
  const std::size_t layers = dims.size() - 1;
  if (ws.delta.size() != layers) ws.delta.resize(layers);

  // parameter offsets per layer
  std::vector<std::size_t> offsets(layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
  }

  {
    auto& d = ws.delta[layers - 1];
    d.assign(dout.begin(), dout.end());
  }
  for (std::size_t l = layers; l-- > 0;) {
    const std::int32_t in = dims[l], out = dims[l + 1];
    const auto& d = ws.delta[l];
    double* gw = grad.data() + offsets[l];
    double* gb = gw + static_cast<std::size_t>(in) * out;
    for (std::int32_t o = 0; o < out; ++o) gb[o] += coeff * d[o];
    if (l == 0) {
      std::int32_t block_off = 0;
      for (std::size_t f = 0; f < spec.input_blocks.size(); ++f) {
        const std::int32_t col = block_off + static_cast<std::int32_t>(hot[f]);
        for (std::int32_t o = 0; o < out; ++o)
          gw[static_cast<std::size_t>(o) * in + col] += coeff * d[o];
        block_off += spec.input_blocks[f];
      }
    } else {
      const auto& prev = ws.act[l - 1];
      const double* w = params.data() + offsets[l];
      auto& dprev = ws.delta[l - 1];
      dprev.assign(in, 0.0);
      for (std::int32_t o = 0; o < out; ++o) {
        const double dv = d[o];
        const double* row = w + static_cast<std::size_t>(o) * in;
        double* gwrow = gw + static_cast<std::size_t>(o) * in;
        for (std::int32_t i = 0; i < in; ++i) {
          gwrow[i] += coeff * dv * prev[i];
          dprev[i] += dv * row[i];
        }
      }
      // tanh backprop through the previous layer's activation
      for (std::int32_t i = 0; i < in; ++i) dprev[i] *= 1.0 - prev[i] * prev[i];
    }
  }
}

}  // namespace mapt
