#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "pingpong/mlp.hpp"

using namespace pingpong::nn;
using Mat = Matrix<double>;
using Vec = Vector<double>;

namespace {

double loss_of(const MlpParams<double>& p, const Mat& x, const Mat& target) {
  return 0.5 * (forward(p, x) - target).squaredNorm();
}

// Central-difference check of every listed parameter against backward().
void check_gradients(MlpParams<double> p, const Mat& x, const Mat& target, int stride) {
  MlpCache<double> cache;
  const Mat y = forward(p, x, &cache);
  Mat dl_dx;
  const auto g = backward(p, cache, Mat(y - target), &dl_dx);
  const double h = 1e-6;
  const auto agree = [](double a, double n) { return std::abs(a - n) <= 1e-5 * std::max({std::abs(a), std::abs(n), 1e-3}); };
  for (int l = 0; l < p.n_layers(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); i += stride) {
      double& w = p.weights[l].data()[i];
      const double keep = w;
      w = keep + h;
      const double up = loss_of(p, x, target);
      w = keep - h;
      const double down = loss_of(p, x, target);
      w = keep;
      CHECK(agree(g.weights[l].data()[i], (up - down) / (2 * h)));
    }
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) {
      double& b = p.biases[l](i);
      const double keep = b;
      b = keep + h;
      const double up = loss_of(p, x, target);
      b = keep - h;
      const double down = loss_of(p, x, target);
      b = keep;
      CHECK(agree(g.biases[l](i), (up - down) / (2 * h)));
    }
  }
  for (Eigen::Index i = 0; i < x.size(); i += stride) {
    Mat xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    CHECK(agree(dl_dx.data()[i], (loss_of(p, xp, target) - loss_of(p, xm, target)) / (2 * h)));
  }
}

}  // namespace

TEST_CASE("a zero network outputs zeros") {
  const auto p = make_zero_mlp<double>({3, 8, 2}, Activation::Elu);
  CHECK(forward(p, Vec(Vec::Ones(3))).isZero(0.0));
}

TEST_CASE("a single identity layer is the identity") {
  auto p = make_zero_mlp<double>({4, 4}, Activation::Tanh);
  p.weights[0].setIdentity();
  const Vec x = (Vec(4) << 0.5, -1.0, 2.0, 3.0).finished();
  CHECK(forward(p, x) == x);
}

TEST_CASE("forward matches a hand-rolled 2-4-1 network") {
  for (Activation act : {Activation::Tanh, Activation::Elu}) {
    std::mt19937_64 rng(17);
    auto p = make_mlp<double>({2, 4, 1}, act, rng);
    p.biases[0] << 0.1, -0.2, 0.3, -0.4;
    p.biases[1] << 0.05;
    const Vec x = (Vec(2) << 0.7, -1.3).finished();
    double out = p.biases[1](0);
    for (int j = 0; j < 4; ++j) {
      const double z = p.weights[0](j, 0) * x(0) + p.weights[0](j, 1) * x(1) + p.biases[0](j);
      const double a = act == Activation::Tanh ? std::tanh(z) : (z > 0 ? z : std::expm1(z));
      out += p.weights[1](0, j) * a;
    }
    CHECK(std::abs(forward(p, x)(0) - out) < 1e-12);
  }
}

TEST_CASE("batched forward matches per-sample calls") {
  std::mt19937_64 rng(5);
  const auto p = make_mlp<double>({6, 16, 3}, Activation::Elu, rng);
  const Mat x = Mat::Random(6, 9);
  const Mat y = forward(p, x);
  for (int c = 0; c < 9; ++c) CHECK((y.col(c) - forward(p, Vec(x.col(c)))).norm() < 1e-14);
}

TEST_CASE("orthogonal initialisation") {
  std::mt19937_64 rng(9);
  const auto p = make_mlp<double>({5, 12, 12, 3}, Activation::Tanh, rng, std::sqrt(2.0), 0.01);
  const Mat wtw = p.weights[0].transpose() * p.weights[0];
  CHECK((wtw - 2.0 * Mat::Identity(5, 5)).norm() < 1e-10);
  const Mat sq = p.weights[1] * p.weights[1].transpose();
  CHECK((sq - 2.0 * Mat::Identity(12, 12)).norm() < 1e-10);
  const Mat out = p.weights[2] * p.weights[2].transpose();
  CHECK((out - 1e-4 * Mat::Identity(3, 3)).norm() < 1e-12);
  for (const auto& b : p.biases) CHECK(b.isZero(0.0));
}

TEST_CASE("backward matches finite differences") {
  std::mt19937_64 rng(21);
  for (Activation act : {Activation::Tanh, Activation::Elu}) {
    auto p = make_mlp<double>({3, 7, 5, 2}, act, rng, 1.3, 0.8);
    for (auto& b : p.biases) b.setRandom();
    const Mat x = Mat::Random(3, 4);
    const Mat target = Mat::Random(2, 4);
    check_gradients(p, x, target, 1);
  }
}

TEST_CASE("backward on a production-sized network, sampled entries") {
  std::mt19937_64 rng(4);
  auto p = make_mlp<double>({155, 256, 256, 128, 8}, Activation::Elu, rng, std::sqrt(2.0), 0.5);
  const Mat x = Mat::Random(155, 3);
  const Mat target = Mat::Random(8, 3);
  check_gradients(p, x, target, 997);
}

TEST_CASE("a linear network has the closed-form gradient") {
  auto p = make_zero_mlp<double>({3, 2}, Activation::Tanh);
  p.weights[0] << 1, 2, 3, 4, 5, 6;
  p.biases[0] << 0.5, -0.5;
  const Mat x = (Mat(3, 2) << 1, 0, -1, 2, 0.5, 1).finished();
  const Mat target = Mat::Zero(2, 2);
  MlpCache<double> cache;
  const Mat y = forward(p, x, &cache);
  const Mat r = y - target;
  const auto g = backward(p, cache, r);
  CHECK((g.weights[0] - r * x.transpose()).norm() < 1e-12);
  CHECK((g.biases[0] - r.rowwise().sum()).norm() < 1e-12);
}

TEST_CASE("shape errors") {
  const auto p = make_zero_mlp<double>({3, 4, 2}, Activation::Elu);
  CHECK_THROWS_AS(forward(p, Vec(Vec::Zero(4))), ShapeError);
  MlpCache<double> cache;
  forward(p, Mat(Mat::Zero(3, 2)), &cache);
  CHECK_THROWS_AS(backward(p, cache, Mat(Mat::Zero(2, 3))), ShapeError);
}

TEST_CASE("adam leaves parameters alone under a zero gradient") {
  std::mt19937_64 rng(1);
  auto p = make_mlp<double>({2, 3, 1}, Activation::Tanh, rng);
  const auto before = p;
  auto opt = make_opt_state(p);
  for (int i = 0; i < 10; ++i) opt_step(p, zeros_like(p), opt);
  for (int l = 0; l < p.n_layers(); ++l) CHECK(p.weights[l] == before.weights[l]);
}

TEST_CASE("adam takes learning-rate sized steps under a constant gradient") {
  auto p = make_zero_mlp<double>({1, 1}, Activation::Tanh);
  auto g = zeros_like(p);
  g.weights[0](0, 0) = 3.0;
  g.biases[0](0) = -0.2;
  auto opt = make_opt_state(p);
  for (int i = 1; i <= 5; ++i) {
    opt_step(p, g, opt);
    CHECK(p.weights[0](0, 0) == doctest::Approx(-3e-4 * i).epsilon(1e-6));
    CHECK(p.biases[0](0) == doctest::Approx(3e-4 * i).epsilon(1e-6));
  }
}

TEST_CASE("adam descends a quadratic bowl") {
  auto p = make_zero_mlp<double>({2, 1}, Activation::Tanh);
  p.weights[0] << 1.0, -2.0;
  auto opt = make_opt_state(p, AdamConfig{1e-2});
  double prev = squared_norm(p);
  for (int i = 0; i < 100; ++i) {
    auto g = p;  // gradient of 0.5 |theta|^2
    opt_step(p, g, opt);
    const double now = squared_norm(p);
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("adam rejects non-finite gradients") {
  auto p = make_zero_mlp<double>({1, 1}, Activation::Tanh);
  auto g = zeros_like(p);
  g.weights[0](0, 0) = std::nan("");
  auto opt = make_opt_state(p);
  CHECK_THROWS_AS(opt_step(p, g, opt), NonFiniteError);
}

TEST_CASE("weights round-trip through the weight file bit for bit") {
  std::mt19937_64 rng(12);
  auto p = make_mlp<double>({4, 9, 3}, Activation::Elu, rng, std::sqrt(2.0), 0.01);
  for (auto& b : p.biases) b.setRandom();
  const auto path = std::filesystem::temp_directory_path() / "pingpong_mlp_roundtrip.json";
  save_weights(path, p);
  const auto q = load_weights<double>(path);
  std::filesystem::remove(path);
  CHECK(q.layer_sizes == p.layer_sizes);
  CHECK(q.activation == p.activation);
  for (int l = 0; l < p.n_layers(); ++l) {
    CHECK(q.weights[l] == p.weights[l]);
    CHECK(q.biases[l] == p.biases[l]);
  }
  const Vec x = Vec::Random(4);
  CHECK(forward(q, x) == forward(p, x));
}

TEST_CASE("single precision instantiation") {
  std::mt19937_64 rng(2);
  const auto p = make_mlp<float>({3, 5, 2}, Activation::Tanh, rng);
  const auto pd = p.cast<double>();
  const Vector<float> x = Vector<float>::Ones(3);
  CHECK((forward(p, x).cast<double>() - forward(pd, Vec(x.cast<double>()))).norm() < 1e-5);
}
