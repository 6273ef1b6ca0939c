/* Copyright 2026 The tbrisk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "tbrisk/dataset.hpp"
#include "tbrisk/errors.hpp"
#include "tbrisk/matrix.hpp"
#include "tbrisk/rng.hpp"

namespace tbrisk {

// Layer vocabulary: dense, 2-D convolution (stride 1, valid padding), ReLU,
// flatten. Enough to build small MLPs and CNNs without a framework.
enum class LayerKind { kDense, kConv2d, kRelu, kFlatten };

struct LayerSpec {
  LayerKind kind;
  std::size_t units = 0;         // dense: output width
  std::size_t out_channels = 0;  // conv2d
  std::size_t kernel = 0;        // conv2d: square kernel edge

  static LayerSpec dense(std::size_t units) {
    return LayerSpec{LayerKind::kDense, units, 0, 0};
  }
  static LayerSpec conv2d(std::size_t out_channels, std::size_t kernel) {
    return LayerSpec{LayerKind::kConv2d, 0, out_channels, kernel};
  }
  static LayerSpec relu() { return LayerSpec{LayerKind::kRelu, 0, 0, 0}; }
  static LayerSpec flatten() { return LayerSpec{LayerKind::kFlatten, 0, 0, 0}; }
};

inline std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t p = 1;
  for (std::size_t s : shape) p *= s;
  return p;
}

// Architecture plus identity and init seed. Instances of this type describe
// both the pre-production target model and every candidate surrogate.
struct NetworkDescriptor {
  std::string id;
  std::vector<std::size_t> input_shape;  // {features} or {channels, h, w}
  std::size_t class_count = 0;
  std::uint64_t init_seed = 0;
  std::vector<LayerSpec> layers;

  // Walks the shape through every layer; throws ConfigError on any
  // incompatibility. Returned vector holds the output shape of each layer.
  std::vector<std::vector<std::size_t>> layer_output_shapes() const {
    if (id.empty()) throw ConfigError("network descriptor needs a non-empty id");
    if (class_count < 2) throw ConfigError("class count must be >= 2");
    if (layers.empty()) throw ConfigError("network needs at least one layer");
    if (input_shape.size() != 1 && input_shape.size() != 3)
      throw ConfigError("input shape must be rank 1 or rank 3");
    for (std::size_t s : input_shape)
      if (s == 0) throw ConfigError("input shape entries must be positive");

    std::vector<std::vector<std::size_t>> shapes;
    std::vector<std::size_t> cur = input_shape;
    bool has_nonlinear = false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& spec = layers[i];
      switch (spec.kind) {
        case LayerKind::kDense: {
          if (cur.size() != 1)
            throw ConfigError("layer " + std::to_string(i) +
                              ": dense requires a flat input (add flatten)");
          if (spec.units == 0)
            throw ConfigError("layer " + std::to_string(i) + ": dense units must be > 0");
          cur = {spec.units};
          break;
        }
        case LayerKind::kConv2d: {
          if (cur.size() != 3)
            throw ConfigError("layer " + std::to_string(i) +
                              ": conv2d requires a (channels, h, w) input");
          if (spec.out_channels == 0 || spec.kernel == 0)
            throw ConfigError("layer " + std::to_string(i) + ": conv2d needs channels and kernel");
          if (cur[1] < spec.kernel || cur[2] < spec.kernel)
            throw ConfigError("layer " + std::to_string(i) + ": kernel larger than input");
          cur = {spec.out_channels, cur[1] - spec.kernel + 1, cur[2] - spec.kernel + 1};
          break;
        }
        case LayerKind::kRelu:
          has_nonlinear = true;
          break;
        case LayerKind::kFlatten: {
          if (cur.size() != 3)
            throw ConfigError("layer " + std::to_string(i) + ": flatten requires a rank-3 input");
          cur = {shape_size(cur)};
          break;
        }
      }
      shapes.push_back(cur);
    }
    if (!has_nonlinear) throw ConfigError("network needs at least one ReLU layer");
    const LayerSpec& last = layers.back();
    if (last.kind != LayerKind::kDense || last.units != class_count)
      throw ConfigError("final layer must be dense with units == class count");
    return shapes;
  }

  void validate() const { (void)layer_output_shapes(); }
};

// Weight/bias storage for one layer; empty for relu/flatten.
// dense:  w is (units x fan_in) row-major, b has units entries.
// conv2d: w is (oc, ic, k, k) row-major flat, b has oc entries.
struct LayerParams {
  std::vector<double> w;
  std::vector<double> b;
};

struct TrainMeta {
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  std::size_t batch_size = 0;
  std::uint64_t train_seed = 0;
  double subsample_fraction = 1.0;
  double final_train_accuracy = 0.0;
  double final_test_accuracy = 0.0;
  std::vector<double> epoch_losses;  // diagnostic only, not serialized
};

// Immutable after train() returns; safe to share across threads.
struct TrainedModel {
  NetworkDescriptor descriptor;
  std::vector<LayerParams> params;
  TrainMeta meta;
};

// He-uniform initialization, one sequential stream per model seeded from the
// descriptor's init seed. Draw order: layers in order, weights then bias.
inline std::vector<LayerParams> init_params(const NetworkDescriptor& desc) {
  const auto shapes = desc.layer_output_shapes();
  RngStream rng(desc.init_seed);
  std::vector<LayerParams> params(desc.layers.size());
  std::vector<std::size_t> cur = desc.input_shape;
  for (std::size_t i = 0; i < desc.layers.size(); ++i) {
    const LayerSpec& spec = desc.layers[i];
    if (spec.kind == LayerKind::kDense) {
      const std::size_t fan_in = cur[0];
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      params[i].w.resize(spec.units * fan_in);
      for (double& v : params[i].w) v = rng.uniform(-limit, limit);
      params[i].b.assign(spec.units, 0.0);
    } else if (spec.kind == LayerKind::kConv2d) {
      const std::size_t fan_in = cur[0] * spec.kernel * spec.kernel;
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      params[i].w.resize(spec.out_channels * cur[0] * spec.kernel * spec.kernel);
      for (double& v : params[i].w) v = rng.uniform(-limit, limit);
      params[i].b.assign(spec.out_channels, 0.0);
    }
    cur = shapes[i];
  }
  return params;
}

// Per-layer outputs of one forward pass; index-aligned with the descriptor's
// layer list. Kept so backward passes can reuse the cached activations.
struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> outputs;

  const Matrix& logits() const { return outputs.back(); }
};

namespace detail {

inline Matrix dense_forward(const Matrix& x, const LayerParams& p, std::size_t units) {
  const std::size_t fan_in = x.cols();
  Matrix out(x.rows(), units);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t u = 0; u < units; ++u) {
      double s = p.b[u];
      const double* wrow = p.w.data() + u * fan_in;
      for (std::size_t f = 0; f < fan_in; ++f) s += wrow[f] * x.at(r, f);
      out.set(r, u, s);
    }
  }
  return out;
}

inline Matrix conv2d_forward(const Matrix& x, const LayerParams& p,
                             const std::vector<std::size_t>& in_shape,
                             const std::vector<std::size_t>& out_shape,
                             std::size_t kernel) {
  const std::size_t ic = in_shape[0], ih = in_shape[1], iw = in_shape[2];
  const std::size_t oc = out_shape[0], oh = out_shape[1], ow = out_shape[2];
  Matrix out(x.rows(), oc * oh * ow);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* in = x.data().data() + r * x.cols();
    double* o = out.mutable_data().data() + r * out.cols();
    for (std::size_t c = 0; c < oc; ++c) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double s = p.b[c];
          for (std::size_t f = 0; f < ic; ++f) {
            for (std::size_t ky = 0; ky < kernel; ++ky) {
              for (std::size_t kx = 0; kx < kernel; ++kx) {
                const double pix = in[f * ih * iw + (oy + ky) * iw + (ox + kx)];
                const double wgt =
                    p.w[((c * ic + f) * kernel + ky) * kernel + kx];
                s += pix * wgt;
              }
            }
          }
          o[c * oh * ow + oy * ow + ox] = s;
        }
      }
    }
  }
  return out;
}

}  // namespace detail

// Runs the network on a batch (one example per row). Deterministic and
// batch-order independent per row.
inline ForwardTrace forward(const TrainedModel& model, const Matrix& x) {
  const auto shapes = model.descriptor.layer_output_shapes();
  if (x.cols() != shape_size(model.descriptor.input_shape)) {
    throw ShapeError("forward: input has " + std::to_string(x.cols()) +
                     " features, model expects " +
                     std::to_string(shape_size(model.descriptor.input_shape)));
  }
  ForwardTrace trace{x, {}};
  const Matrix* cur = &trace.input;
  std::vector<std::size_t> cur_shape = model.descriptor.input_shape;
  for (std::size_t i = 0; i < model.descriptor.layers.size(); ++i) {
    const LayerSpec& spec = model.descriptor.layers[i];
    switch (spec.kind) {
      case LayerKind::kDense:
        trace.outputs.push_back(detail::dense_forward(*cur, model.params[i], spec.units));
        break;
      case LayerKind::kConv2d:
        trace.outputs.push_back(detail::conv2d_forward(*cur, model.params[i], cur_shape,
                                                       shapes[i], spec.kernel));
        break;
      case LayerKind::kRelu: {
        Matrix out(cur->rows(), cur->cols());
        for (std::size_t k = 0; k < cur->size(); ++k)
          out.mutable_data()[k] = std::max(0.0, cur->data()[k]);
        trace.outputs.push_back(std::move(out));
        break;
      }
      case LayerKind::kFlatten:
        trace.outputs.push_back(*cur);  // layout already row-major (c, h, w)
        break;
    }
    cur = &trace.outputs.back();
    cur_shape = shapes[i];
  }
  return trace;
}

// Indices of capturable layers: every post-ReLU output plus the final logits.
inline std::vector<std::size_t> capturable_layers(const NetworkDescriptor& desc) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < desc.layers.size(); ++i)
    if (desc.layers[i].kind == LayerKind::kRelu) idx.push_back(i);
  idx.push_back(desc.layers.size() - 1);
  return idx;
}

// Mean softmax cross-entropy over a batch plus the logit gradient of that
// mean. Row-max subtraction keeps the exponentials stable.
struct LossResult {
  double loss = 0.0;
  Matrix dlogits;
};

inline LossResult softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  if (labels.size() != logits.rows())
    throw ShapeError("loss: label count does not match batch size");
  const std::size_t n = logits.rows(), c = logits.cols();
  LossResult res{0.0, Matrix(n, c)};
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw ShapeError("loss: label " + std::to_string(y) + " out of range");
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(logits.at(i, j) - mx);
    res.loss += -(logits.at(i, static_cast<std::size_t>(y)) - mx - std::log(denom));
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(logits.at(i, j) - mx) / denom;
      res.dlogits.set(i, j,
                      (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) /
                          static_cast<double>(n));
    }
  }
  res.loss /= static_cast<double>(n);
  return res;
}

struct BackwardResult {
  Matrix input_grad;
  std::vector<LayerParams> param_grads;
};

// Reverse pass from a logit gradient down to the input. Uses the cached
// activations in the trace; ReLU derivative at exactly 0 is 0.
inline BackwardResult backward(const TrainedModel& model, const ForwardTrace& trace,
                               const Matrix& dlogits) {
  const auto shapes = model.descriptor.layer_output_shapes();
  const std::size_t n_layers = model.descriptor.layers.size();
  std::vector<LayerParams> grads(n_layers);
  Matrix grad = dlogits;

  for (std::size_t li = n_layers; li-- > 0;) {
    const LayerSpec& spec = model.descriptor.layers[li];
    const Matrix& in = (li == 0) ? trace.input : trace.outputs[li - 1];
    switch (spec.kind) {
      case LayerKind::kDense: {
        const std::size_t fan_in = in.cols(), units = spec.units;
        grads[li].w.assign(units * fan_in, 0.0);
        grads[li].b.assign(units, 0.0);
        Matrix din(in.rows(), fan_in);
        for (std::size_t r = 0; r < in.rows(); ++r) {
          for (std::size_t u = 0; u < units; ++u) {
            const double g = grad.at(r, u);
            if (g == 0.0) continue;
            grads[li].b[u] += g;
            double* wg = grads[li].w.data() + u * fan_in;
            const double* wrow = model.params[li].w.data() + u * fan_in;
            for (std::size_t f = 0; f < fan_in; ++f) {
              wg[f] += g * in.at(r, f);
              din.mutable_data()[r * fan_in + f] += g * wrow[f];
            }
          }
        }
        grad = std::move(din);
        break;
      }
      case LayerKind::kConv2d: {
        const std::vector<std::size_t>& in_shape =
            (li == 0) ? model.descriptor.input_shape : shapes[li - 1];
        const std::vector<std::size_t>& out_shape = shapes[li];
        const std::size_t ic = in_shape[0], ih = in_shape[1], iw = in_shape[2];
        const std::size_t oc = out_shape[0], oh = out_shape[1], ow = out_shape[2];
        const std::size_t k = spec.kernel;
        grads[li].w.assign(model.params[li].w.size(), 0.0);
        grads[li].b.assign(oc, 0.0);
        Matrix din(in.rows(), ic * ih * iw);
        for (std::size_t r = 0; r < in.rows(); ++r) {
          const double* inp = in.data().data() + r * in.cols();
          const double* go = grad.data().data() + r * grad.cols();
          double* gi = din.mutable_data().data() + r * din.cols();
          for (std::size_t c = 0; c < oc; ++c) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const double g = go[c * oh * ow + oy * ow + ox];
                if (g == 0.0) continue;
                grads[li].b[c] += g;
                for (std::size_t f = 0; f < ic; ++f) {
                  for (std::size_t ky = 0; ky < k; ++ky) {
                    for (std::size_t kx = 0; kx < k; ++kx) {
                      const std::size_t in_idx = f * ih * iw + (oy + ky) * iw + (ox + kx);
                      const std::size_t w_idx = ((c * ic + f) * k + ky) * k + kx;
                      grads[li].w[w_idx] += g * inp[in_idx];
                      gi[in_idx] += g * model.params[li].w[w_idx];
                    }
                  }
                }
              }
            }
          }
        }
        grad = std::move(din);
        break;
      }
      case LayerKind::kRelu: {
        Matrix din(in.rows(), in.cols());
        for (std::size_t k2 = 0; k2 < in.size(); ++k2)
          din.mutable_data()[k2] = in.data()[k2] > 0.0 ? grad.data()[k2] : 0.0;
        grad = std::move(din);
        break;
      }
      case LayerKind::kFlatten:
        break;  // identity on the flat storage
    }
  }
  return BackwardResult{std::move(grad), std::move(grads)};
}

// Gradient of the mean cross-entropy loss with respect to the input batch.
inline Matrix input_gradient(const TrainedModel& model, const Matrix& x,
                             const std::vector<int>& labels) {
  const ForwardTrace trace = forward(model, x);
  const LossResult loss = softmax_cross_entropy(trace.logits(), labels);
  return backward(model, trace, loss.dlogits).input_grad;
}

inline double batch_loss(const TrainedModel& model, const Matrix& x,
                         const std::vector<int>& labels) {
  const ForwardTrace trace = forward(model, x);
  return softmax_cross_entropy(trace.logits(), labels).loss;
}

// Argmax predictions; ties break to the lowest class index.
inline std::vector<int> predict(const TrainedModel& model, const Matrix& x) {
  const ForwardTrace trace = forward(model, x);
  const Matrix& logits = trace.logits();
  std::vector<int> out(x.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

inline double accuracy(const TrainedModel& model, const Matrix& x,
                       const std::vector<int>& labels) {
  const std::vector<int> preds = predict(model, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

struct Hyperparams {
  std::size_t epochs = 30;
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double subsample_fraction = 1.0;  // seeded subset of the train split
};

// Minibatch SGD on softmax cross-entropy. Fully deterministic for fixed
// descriptor, dataset and seeds: one RngStream drives subsampling and every
// epoch's shuffle, training runs single-threaded.
inline TrainedModel train(const NetworkDescriptor& desc, const Dataset& data,
                          const Hyperparams& hp) {
  desc.validate();
  if (shape_size(desc.input_shape) != data.dim())
    throw ShapeError("train: dataset dim does not match descriptor input shape");
  if (desc.class_count != data.classes)
    throw ConfigError("train: descriptor classes != dataset classes");
  if (hp.batch_size == 0) throw ConfigError("train: batch size must be positive");
  if (hp.subsample_fraction <= 0.0 || hp.subsample_fraction > 1.0)
    throw ConfigError("train: subsample fraction must be in (0, 1]");

  TrainedModel model{desc, init_params(desc), {}};
  model.meta.epochs = hp.epochs;
  model.meta.learning_rate = hp.learning_rate;
  model.meta.batch_size = hp.batch_size;
  model.meta.train_seed = hp.seed;
  model.meta.subsample_fraction = hp.subsample_fraction;

  RngStream rng(hp.seed);
  std::vector<std::size_t> train_idx = data.indices_of(Split::kTrain);
  if (hp.subsample_fraction < 1.0) {
    rng.shuffle(train_idx);
    const std::size_t keep = std::max<std::size_t>(
        2, static_cast<std::size_t>(
               std::ceil(hp.subsample_fraction * static_cast<double>(train_idx.size()))));
    train_idx.resize(std::min(keep, train_idx.size()));
    std::vector<bool> seen(data.classes, false);
    for (std::size_t i : train_idx) seen[static_cast<std::size_t>(data.labels[i])] = true;
    std::size_t distinct = 0;
    for (bool s : seen) distinct += s ? 1 : 0;
    if (distinct < 2)
      throw ConfigError("train: subsample left fewer than 2 classes");
  }

  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    rng.shuffle(train_idx);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += hp.batch_size) {
      const std::size_t end = std::min(start + hp.batch_size, train_idx.size());
      std::vector<std::size_t> batch_idx(train_idx.begin() + start, train_idx.begin() + end);
      const Matrix bx = data.rows_at(batch_idx);
      const std::vector<int> by = data.labels_at(batch_idx);

      const ForwardTrace trace = forward(model, bx);
      const LossResult loss = softmax_cross_entropy(trace.logits(), by);
      if (!std::isfinite(loss.loss)) {
        throw TrainingError("training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch));
      }
      const BackwardResult back = backward(model, trace, loss.dlogits);
      bool finite = true;
      for (std::size_t li = 0; li < model.params.size(); ++li) {
        for (std::size_t k = 0; k < model.params[li].w.size(); ++k) {
          model.params[li].w[k] -= hp.learning_rate * back.param_grads[li].w[k];
          finite = finite && std::isfinite(model.params[li].w[k]);
        }
        for (std::size_t k = 0; k < model.params[li].b.size(); ++k) {
          model.params[li].b[k] -= hp.learning_rate * back.param_grads[li].b[k];
          finite = finite && std::isfinite(model.params[li].b[k]);
        }
      }
      if (!finite) {
        throw TrainingError("training diverged (non-finite parameters) at epoch " +
                            std::to_string(epoch));
      }
      epoch_loss += loss.loss * static_cast<double>(by.size());
      seen += by.size();
    }
    model.meta.epoch_losses.push_back(epoch_loss / static_cast<double>(seen));
  }

  const auto full_train_idx = data.indices_of(Split::kTrain);
  const auto test_idx = data.indices_of(Split::kTest);
  model.meta.final_train_accuracy =
      accuracy(model, data.rows_at(full_train_idx), data.labels_at(full_train_idx));
  model.meta.final_test_accuracy =
      accuracy(model, data.rows_at(test_idx), data.labels_at(test_idx));
  return model;
}

}  // namespace tbrisk
