#pragma once

// Feed-forward network machinery shared by the apex predictor, the actor and
// the critic. Batches are stored column-wise: one sample per column.

#include <Eigen/Core>
#include <Eigen/QR>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pingpong::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Activation { Tanh, Elu };

inline std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "elu"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "elu") return Activation::Elu;
  throw std::invalid_argument("unknown activation: " + s);
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct MlpParams {
  std::vector<int> layer_sizes;
  Activation activation = Activation::Elu;
  std::vector<Matrix<Scalar>> weights;  // weights[l] is (out x in)
  std::vector<Vector<Scalar>> biases;

  int n_layers() const { return static_cast<int>(weights.size()); }
  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }

  void validate() const {
    if (layer_sizes.size() < 2) throw ShapeError("mlp: need at least input and output sizes");
    const std::size_t n = layer_sizes.size() - 1;
    if (weights.size() != n || biases.size() != n) throw ShapeError("mlp: layer count mismatch");
    for (std::size_t l = 0; l < n; ++l) {
      if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l] ||
          biases[l].size() != layer_sizes[l + 1]) {
        throw ShapeError("mlp: parameter shape mismatch at layer " + std::to_string(l));
      }
    }
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  template <typename Other>
  MlpParams<Other> cast() const {
    MlpParams<Other> out;
    out.layer_sizes = layer_sizes;
    out.activation = activation;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.weights.push_back(weights[l].template cast<Other>());
      out.biases.push_back(biases[l].template cast<Other>());
    }
    return out;
  }
};

template <typename Scalar>
MlpParams<Scalar> zeros_like(const MlpParams<Scalar>& p) {
  MlpParams<Scalar> z;
  z.layer_sizes = p.layer_sizes;
  z.activation = p.activation;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    z.weights.push_back(Matrix<Scalar>::Zero(p.weights[l].rows(), p.weights[l].cols()));
    z.biases.push_back(Vector<Scalar>::Zero(p.biases[l].size()));
  }
  return z;
}

template <typename Scalar>
MlpParams<Scalar> make_zero_mlp(const std::vector<int>& layer_sizes, Activation activation) {
  MlpParams<Scalar> p;
  p.layer_sizes = layer_sizes;
  p.activation = activation;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    p.weights.push_back(Matrix<Scalar>::Zero(layer_sizes[l + 1], layer_sizes[l]));
    p.biases.push_back(Vector<Scalar>::Zero(layer_sizes[l + 1]));
  }
  p.validate();
  return p;
}

// Orthogonal initialisation scaled by `hidden_gain` on hidden layers and
// `output_gain` on the last layer; biases start at zero.
template <typename Scalar>
MlpParams<Scalar> make_mlp(const std::vector<int>& layer_sizes, Activation activation, std::mt19937_64& rng,
                           Scalar hidden_gain = Scalar(1), Scalar output_gain = Scalar(1)) {
  MlpParams<Scalar> p = make_zero_mlp<Scalar>(layer_sizes, activation);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < p.n_layers(); ++l) {
    const Eigen::Index rows = p.weights[l].rows();
    const Eigen::Index cols = p.weights[l].cols();
    const Eigen::Index big = std::max(rows, cols);
    const Eigen::Index small = std::min(rows, cols);
    Eigen::MatrixXd a(big, small);
    for (Eigen::Index j = 0; j < small; ++j) {
      for (Eigen::Index i = 0; i < big; ++i) a(i, j) = normal(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
    const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(small, small);
    for (Eigen::Index j = 0; j < small; ++j) {
      if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    const Scalar gain = (l + 1 == p.n_layers()) ? output_gain : hidden_gain;
    Eigen::MatrixXd w = rows >= cols ? q : Eigen::MatrixXd(q.transpose());
    p.weights[l] = (gain * w.cast<Scalar>()).eval();
  }
  return p;
}

template <typename Scalar>
struct MlpCache {
  std::vector<Matrix<Scalar>> inputs;  // input to each layer
  std::vector<Matrix<Scalar>> pre;     // pre-activation of each layer
};

namespace detail {

template <typename Derived>
void activate_inplace(Eigen::MatrixBase<Derived>& z, Activation a) {
  using Scalar = typename Derived::Scalar;
  if (a == Activation::Tanh) {
    z = z.array().tanh().matrix();
  } else {
    z = z.unaryExpr([](Scalar x) { return x > Scalar(0) ? x : std::expm1(x); });
  }
}

template <typename Scalar>
Matrix<Scalar> activation_derivative(const Matrix<Scalar>& pre, Activation a) {
  if (a == Activation::Tanh) {
    return (Scalar(1) - pre.array().tanh().square()).matrix();
  }
  return pre.unaryExpr([](Scalar x) { return x > Scalar(0) ? Scalar(1) : std::exp(x); });
}

}  // namespace detail

// Batched forward pass; X is (input_size x batch). Fills `cache` for
// backpropagation when given.
template <typename Scalar>
Matrix<Scalar> forward(const MlpParams<Scalar>& params, const Matrix<Scalar>& x, MlpCache<Scalar>* cache = nullptr) {
  if (x.rows() != params.input_size()) {
    throw ShapeError("forward: expected input of size " + std::to_string(params.input_size()) + ", got " +
                     std::to_string(x.rows()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix<Scalar> h = x;
  for (int l = 0; l < params.n_layers(); ++l) {
    Matrix<Scalar> z(params.weights[l].rows(), h.cols());
    z.noalias() = params.weights[l] * h;
    z.colwise() += params.biases[l];
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(z);
    }
    if (l + 1 < params.n_layers()) detail::activate_inplace(z, params.activation);
    h = std::move(z);
  }
  return h;
}

template <typename Scalar>
Vector<Scalar> forward(const MlpParams<Scalar>& params, const Vector<Scalar>& x) {
  return forward(params, Matrix<Scalar>(x)).col(0);
}

// Reverse-mode gradients of a loss whose gradient with respect to the
// outputs is `dl_dy` (output_size x batch), summed over the batch. The input
// gradient is written to `dl_dx` when given.
template <typename Scalar>
MlpParams<Scalar> backward(const MlpParams<Scalar>& params, const MlpCache<Scalar>& cache,
                           const Matrix<Scalar>& dl_dy, Matrix<Scalar>* dl_dx = nullptr) {
  const int n = params.n_layers();
  if (static_cast<int>(cache.inputs.size()) != n || static_cast<int>(cache.pre.size()) != n) {
    throw ShapeError("backward: cache does not match the network");
  }
  if (dl_dy.rows() != params.output_size() || dl_dy.cols() != cache.pre.back().cols()) {
    throw ShapeError("backward: output gradient shape does not match the cached batch");
  }
  MlpParams<Scalar> grads = zeros_like(params);
  Matrix<Scalar> delta = dl_dy;
  for (int l = n - 1; l >= 0; --l) {
    if (l + 1 < n) delta.array() *= detail::activation_derivative(cache.pre[l], params.activation).array();
    grads.weights[l].noalias() = delta * cache.inputs[l].transpose();
    grads.biases[l] = delta.rowwise().sum();
    if (l > 0 || dl_dx) {
      Matrix<Scalar> next(params.weights[l].cols(), delta.cols());
      next.noalias() = params.weights[l].transpose() * delta;
      delta = std::move(next);
    }
  }
  if (dl_dx) *dl_dx = std::move(delta);
  return grads;
}

template <typename Scalar>
Scalar squared_norm(const MlpParams<Scalar>& g) {
  Scalar s(0);
  for (int l = 0; l < g.n_layers(); ++l) s += g.weights[l].squaredNorm() + g.biases[l].squaredNorm();
  return s;
}

template <typename Scalar>
void scale_inplace(MlpParams<Scalar>& g, Scalar factor) {
  for (int l = 0; l < g.n_layers(); ++l) {
    g.weights[l] *= factor;
    g.biases[l] *= factor;
  }
}

template <typename Scalar>
void add_inplace(MlpParams<Scalar>& acc, const MlpParams<Scalar>& g) {
  for (int l = 0; l < acc.n_layers(); ++l) {
    acc.weights[l] += g.weights[l];
    acc.biases[l] += g.biases[l];
  }
}

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected adaptive-moment update of one parameter block.
template <typename Scalar, typename P, typename G, typename M>
void adam_block(Eigen::MatrixBase<P>& param, const Eigen::MatrixBase<G>& grad, Eigen::MatrixBase<M>& m,
                Eigen::MatrixBase<M>& v, long step, const AdamConfig& cfg) {
  const Scalar b1 = static_cast<Scalar>(cfg.beta1);
  const Scalar b2 = static_cast<Scalar>(cfg.beta2);
  m = b1 * m + (Scalar(1) - b1) * grad;
  v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
  const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta1, static_cast<double>(step)));
  const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta2, static_cast<double>(step)));
  const Scalar lr = static_cast<Scalar>(cfg.learning_rate);
  const Scalar eps = static_cast<Scalar>(cfg.epsilon);
  param -= (lr * (m / c1).array() / ((v / c2).array().sqrt() + eps)).matrix();
}

template <typename Scalar>
struct OptState {
  long step_count = 0;
  AdamConfig config;
  MlpParams<Scalar> first_moment;
  MlpParams<Scalar> second_moment;
};

template <typename Scalar>
OptState<Scalar> make_opt_state(const MlpParams<Scalar>& params, AdamConfig config = {}) {
  return {0, config, zeros_like(params), zeros_like(params)};
}

template <typename Scalar>
void opt_step(MlpParams<Scalar>& params, const MlpParams<Scalar>& grads, OptState<Scalar>& opt) {
  if (grads.layer_sizes != params.layer_sizes || opt.first_moment.layer_sizes != params.layer_sizes) {
    throw ShapeError("opt_step: gradient/optimizer shapes do not match the parameters");
  }
  if (!grads.all_finite()) throw NonFiniteError("opt_step: non-finite gradient");
  ++opt.step_count;
  for (int l = 0; l < params.n_layers(); ++l) {
    adam_block<Scalar>(params.weights[l], grads.weights[l], opt.first_moment.weights[l], opt.second_moment.weights[l],
                       opt.step_count, opt.config);
    adam_block<Scalar>(params.biases[l], grads.biases[l], opt.first_moment.biases[l], opt.second_moment.biases[l],
                       opt.step_count, opt.config);
  }
  if (!params.all_finite()) throw NonFiniteError("opt_step: parameters became non-finite");
}

// Structured weight file: header fields followed by flat row-major arrays.
template <typename Scalar>
nlohmann::json to_json(const MlpParams<Scalar>& p) {
  nlohmann::json j;
  j["layer_sizes"] = p.layer_sizes;
  j["activation"] = to_string(p.activation);
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  for (int l = 0; l < p.n_layers(); ++l) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(p.weights[l].size()));
    for (Eigen::Index r = 0; r < p.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < p.weights[l].cols(); ++c) w.push_back(static_cast<double>(p.weights[l](r, c)));
    }
    std::vector<double> b(p.biases[l].data(), p.biases[l].data() + p.biases[l].size());
    j["weights"].push_back(w);
    j["biases"].push_back(b);
  }
  return j;
}

template <typename Scalar>
MlpParams<Scalar> mlp_from_json(const nlohmann::json& j) {
  MlpParams<Scalar> p = make_zero_mlp<Scalar>(j.at("layer_sizes").get<std::vector<int>>(),
                                              activation_from_string(j.at("activation").get<std::string>()));
  const auto& ws = j.at("weights");
  const auto& bs = j.at("biases");
  if (static_cast<int>(ws.size()) != p.n_layers() || static_cast<int>(bs.size()) != p.n_layers()) {
    throw ShapeError("weight file: layer count does not match layer_sizes");
  }
  for (int l = 0; l < p.n_layers(); ++l) {
    const auto w = ws[static_cast<std::size_t>(l)].get<std::vector<double>>();
    const auto b = bs[static_cast<std::size_t>(l)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != p.weights[l].size() ||
        static_cast<Eigen::Index>(b.size()) != p.biases[l].size()) {
      throw ShapeError("weight file: array size mismatch at layer " + std::to_string(l));
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < p.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < p.weights[l].cols(); ++c) p.weights[l](r, c) = static_cast<Scalar>(w[k++]);
    }
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) p.biases[l](i) = static_cast<Scalar>(b[static_cast<std::size_t>(i)]);
  }
  return p;
}

template <typename Scalar>
void save_weights(const std::filesystem::path& path, const MlpParams<Scalar>& p) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << to_json(p).dump() << '\n';
}

template <typename Scalar>
MlpParams<Scalar> load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return mlp_from_json<Scalar>(nlohmann::json::parse(in));
}

}  // namespace pingpong::nn
