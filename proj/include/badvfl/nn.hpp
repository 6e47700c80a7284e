#pragma once

#include <span>
#include <vector>

#include "badvfl/matrix.hpp"
#include "badvfl/rng.hpp"

namespace badvfl {

enum class Activation { Identity, ReLU, Tanh };

struct DenseLayer {
  Matrix weights;            // out x in
  std::vector<double> bias;  // out
  Activation act = Activation::Identity;

  int in_width() const { return weights.cols; }
  int out_width() const { return weights.rows; }
};

// Plain fully connected stack with exact analytic gradients.
struct Mlp {
  std::vector<DenseLayer> layers;

  int input_width() const;
  int output_width() const;

  // widths = {in, h1, ..., out}; acts.size() == widths.size() - 1.
  // Weights are Glorot-uniform (+-sqrt(6/(fan_in+fan_out))) drawn from
  // `rng` in layer order, row-major; biases start at zero.
  static Mlp make(const std::vector<int>& widths, const std::vector<Activation>& acts, Rng& rng);
};

struct ForwardCache {
  std::vector<Matrix> inputs;   // input seen by each layer
  std::vector<Matrix> preacts;  // pre-activation of each layer
  int batch = 0;
};

Matrix forward(const Mlp& mlp, const Matrix& input, ForwardCache* cache = nullptr);

struct LayerGrads {
  Matrix weights;
  std::vector<double> bias;
};
struct MlpGrads {
  std::vector<LayerGrads> layers;
};

// grad_output is d(loss)/d(output), shaped like forward()'s result for the
// cached batch. Returns parameter grads; writes d(loss)/d(input) into
// grad_input when given.
MlpGrads backward(const Mlp& mlp, const ForwardCache& cache, const Matrix& grad_output,
                  Matrix* grad_input = nullptr);

struct CeResult {
  double loss = 0.0;
  Matrix grad_logits;  // (softmax - onehot) / batch
};

// Mean cross-entropy over the batch, log-sum-exp stabilized.
CeResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);
Matrix softmax(const Matrix& logits);

enum class OptKind { Sgd, Adam };

struct OptimizerSpec {
  OptKind kind = OptKind::Sgd;
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr_decay = 1.0;   // lr multiplier applied ...
  int lr_decay_every = 0;  // ... every this many epochs (0 = constant lr)
};

class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimizerSpec spec) : spec_(spec), lr_(spec.lr) {}

  void bind(const Mlp& model);  // allocates moment buffers for Adam
  void start_epoch(int epoch);  // applies the stepwise lr schedule
  void step(Mlp& model, const MlpGrads& grads);

  double current_lr() const { return lr_; }
  const OptimizerSpec& spec() const { return spec_; }

 private:
  OptimizerSpec spec_;
  double lr_ = 0.05;
  long t_ = 0;
  bool bound_ = false;
  std::vector<LayerGrads> m_, v_;
};

}  // namespace badvfl
