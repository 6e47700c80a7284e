#include "badvfl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "badvfl/common.hpp"

namespace badvfl {

namespace {

double act_apply(Activation a, double z) {
  switch (a) {
    case Activation::Identity: return z;
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
  }
  throw InternalError("unknown activation");
}

double act_deriv(Activation a, double z) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      double t = std::tanh(z);
      return 1.0 - t * t;
    }
  }
  throw InternalError("unknown activation");
}

}  // namespace

int Mlp::input_width() const {
  if (layers.empty()) throw InternalError("empty mlp");
  return layers.front().in_width();
}

int Mlp::output_width() const {
  if (layers.empty()) throw InternalError("empty mlp");
  return layers.back().out_width();
}

Mlp Mlp::make(const std::vector<int>& widths, const std::vector<Activation>& acts, Rng& rng) {
  if (widths.size() < 2) throw ConfigError("mlp needs at least input and output widths");
  if (acts.size() != widths.size() - 1)
    throw ConfigError("mlp needs one activation per layer: got " + std::to_string(acts.size()) +
                      " for " + std::to_string(widths.size() - 1) + " layers");
  for (int w : widths) {
    if (w < 1) throw ConfigError("mlp layer width must be >= 1");
  }
  Mlp m;
  m.layers.resize(widths.size() - 1);
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    DenseLayer& L = m.layers[i];
    int fan_in = widths[i];
    int fan_out = widths[i + 1];
    L.weights = Matrix(fan_out, fan_in);
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : L.weights.data) w = rng.uniform(-bound, bound);
    L.bias.assign(static_cast<size_t>(fan_out), 0.0);
    L.act = acts[i];
  }
  return m;
}

Matrix forward(const Mlp& mlp, const Matrix& input, ForwardCache* cache) {
  if (mlp.layers.empty()) throw InternalError("forward through empty mlp");
  if (cache) {
    cache->inputs.clear();
    cache->preacts.clear();
    cache->batch = input.rows;
  }
  Matrix x = input;
  for (size_t li = 0; li < mlp.layers.size(); ++li) {
    const DenseLayer& L = mlp.layers[li];
    if (x.cols != L.in_width())
      throw ConfigError("layer " + std::to_string(li) + " expects input width " +
                        std::to_string(L.in_width()) + ", got " + std::to_string(x.cols));
    Matrix z = matmul_nt(x, L.weights);
    for (int i = 0; i < z.rows; ++i) {
      double* zr = z.data.data() + static_cast<size_t>(i) * z.cols;
      for (int j = 0; j < z.cols; ++j) zr[j] += L.bias[static_cast<size_t>(j)];
    }
    Matrix a(z.rows, z.cols);
    for (size_t k = 0; k < z.data.size(); ++k) a.data[k] = act_apply(L.act, z.data[k]);
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->preacts.push_back(std::move(z));
    }
    x = std::move(a);
  }
  return x;
}

MlpGrads backward(const Mlp& mlp, const ForwardCache& cache, const Matrix& grad_output,
                  Matrix* grad_input) {
  size_t L = mlp.layers.size();
  if (cache.inputs.size() != L || cache.preacts.size() != L)
    throw InternalError("forward cache does not match model depth");
  if (grad_output.rows != cache.batch || grad_output.cols != mlp.output_width())
    throw InternalError("grad_output shape does not match cached forward");

  MlpGrads g;
  g.layers.resize(L);
  Matrix d = grad_output;
  for (size_t ii = L; ii-- > 0;) {
    const DenseLayer& layer = mlp.layers[ii];
    const Matrix& z = cache.preacts[ii];
    Matrix dz(d.rows, d.cols);
    for (size_t k = 0; k < d.data.size(); ++k)
      dz.data[k] = d.data[k] * act_deriv(layer.act, z.data[k]);
    g.layers[ii].weights = matmul_tn(dz, cache.inputs[ii]);
    g.layers[ii].bias.assign(static_cast<size_t>(dz.cols), 0.0);
    for (int i = 0; i < dz.rows; ++i) {
      const double* dr = dz.data.data() + static_cast<size_t>(i) * dz.cols;
      for (int j = 0; j < dz.cols; ++j) g.layers[ii].bias[static_cast<size_t>(j)] += dr[j];
    }
    d = matmul(dz, layer.weights);
  }
  if (grad_input) *grad_input = std::move(d);
  return g;
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows, logits.cols);
  for (int i = 0; i < logits.rows; ++i) {
    const double* o = logits.data.data() + static_cast<size_t>(i) * logits.cols;
    double* pr = p.data.data() + static_cast<size_t>(i) * p.cols;
    double m = o[0];
    for (int j = 1; j < logits.cols; ++j) m = std::max(m, o[j]);
    double sum = 0.0;
    for (int j = 0; j < logits.cols; ++j) sum += std::exp(o[j] - m);
    double log_z = m + std::log(sum);
    for (int j = 0; j < logits.cols; ++j) pr[j] = std::exp(o[j] - log_z);
  }
  return p;
}

CeResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<int>(labels.size()) != logits.rows)
    throw InputError("labels size " + std::to_string(labels.size()) + " != batch " +
                     std::to_string(logits.rows));
  if (logits.rows == 0) throw InputError("empty batch");
  int classes = logits.cols;
  CeResult res;
  res.grad_logits = Matrix(logits.rows, classes);
  double total = 0.0;
  double inv_b = 1.0 / logits.rows;
  for (int i = 0; i < logits.rows; ++i) {
    int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= classes)
      throw InputError("label " + std::to_string(y) + " out of range [0," +
                       std::to_string(classes) + ") at row " + std::to_string(i));
    const double* o = logits.data.data() + static_cast<size_t>(i) * classes;
    double* gr = res.grad_logits.data.data() + static_cast<size_t>(i) * classes;
    double m = o[0];
    for (int j = 1; j < classes; ++j) m = std::max(m, o[j]);
    double sum = 0.0;
    for (int j = 0; j < classes; ++j) sum += std::exp(o[j] - m);
    double log_z = m + std::log(sum);
    total += log_z - o[y];
    for (int j = 0; j < classes; ++j) {
      double p = std::exp(o[j] - log_z);
      gr[j] = (p - (j == y ? 1.0 : 0.0)) * inv_b;
    }
  }
  res.loss = total * inv_b;
  return res;
}

void Optimizer::bind(const Mlp& model) {
  m_.clear();
  v_.clear();
  t_ = 0;
  lr_ = spec_.lr;
  if (spec_.kind == OptKind::Adam) {
    m_.resize(model.layers.size());
    v_.resize(model.layers.size());
    for (size_t i = 0; i < model.layers.size(); ++i) {
      const DenseLayer& L = model.layers[i];
      m_[i].weights = Matrix(L.weights.rows, L.weights.cols);
      m_[i].bias.assign(L.bias.size(), 0.0);
      v_[i].weights = Matrix(L.weights.rows, L.weights.cols);
      v_[i].bias.assign(L.bias.size(), 0.0);
    }
  }
  bound_ = true;
}

void Optimizer::start_epoch(int epoch) {
  if (spec_.lr_decay_every > 0) {
    lr_ = spec_.lr * std::pow(spec_.lr_decay, static_cast<double>(epoch / spec_.lr_decay_every));
  }
}

void Optimizer::step(Mlp& model, const MlpGrads& grads) {
  if (!bound_) throw InternalError("optimizer used before bind()");
  if (grads.layers.size() != model.layers.size())
    throw InternalError("grad/model layer count mismatch");
  if (spec_.kind == OptKind::Sgd) {
    for (size_t i = 0; i < model.layers.size(); ++i) {
      DenseLayer& L = model.layers[i];
      const LayerGrads& g = grads.layers[i];
      for (size_t k = 0; k < L.weights.data.size(); ++k) L.weights.data[k] -= lr_ * g.weights.data[k];
      for (size_t k = 0; k < L.bias.size(); ++k) L.bias[k] -= lr_ * g.bias[k];
    }
    return;
  }
  // Adam with bias correction
  ++t_;
  double b1t = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
  double b2t = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < model.layers.size(); ++i) {
    DenseLayer& L = model.layers[i];
    const LayerGrads& g = grads.layers[i];
    for (size_t k = 0; k < L.weights.data.size(); ++k) {
      double gv = g.weights.data[k];
      double& mv = m_[i].weights.data[k];
      double& vv = v_[i].weights.data[k];
      mv = spec_.beta1 * mv + (1.0 - spec_.beta1) * gv;
      vv = spec_.beta2 * vv + (1.0 - spec_.beta2) * gv * gv;
      L.weights.data[k] -= lr_ * (mv / b1t) / (std::sqrt(vv / b2t) + spec_.eps);
    }
    for (size_t k = 0; k < L.bias.size(); ++k) {
      double gv = g.bias[k];
      double& mv = m_[i].bias[k];
      double& vv = v_[i].bias[k];
      mv = spec_.beta1 * mv + (1.0 - spec_.beta1) * gv;
      vv = spec_.beta2 * vv + (1.0 - spec_.beta2) * gv * gv;
      L.bias[k] -= lr_ * (mv / b1t) / (std::sqrt(vv / b2t) + spec_.eps);
    }
  }
}

}  // namespace badvfl
