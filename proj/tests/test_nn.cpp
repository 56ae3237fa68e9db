#include "bcqlab/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "nn_test_util.hpp"

using namespace bcqlab;
using testutil::expect_gradient_matches;
using testutil::require_away_from_kinks;

namespace {

double mse_loss(const Eigen::MatrixXd& y, const Eigen::MatrixXd& target) {
  return 0.5 * (y - target).squaredNorm();
}

}  // namespace

TEST(Mlp, SingleLinearLayerMatchesHandComputation) {
  Rng rng(1);
  Mlp net(MlpSpec{{2, 2}, Head::linear, 1.0}, rng);
  Eigen::MatrixXd x(2, 3);
  x << 1, 0, 2, 0, 1, -1;
  const Eigen::MatrixXd y = net.forward(x);
  for (int c = 0; c < 3; ++c) {
    const Eigen::VectorXd expect = net.weight(0) * x.col(c) + net.bias(0);
    EXPECT_NEAR((y.col(c) - expect).norm(), 0.0, 1e-15);
  }
}

TEST(Mlp, InitStaysWithinFanInBoundsAndIsSeedDeterministic) {
  Rng a(7), b(7), c(8);
  Mlp n1(MlpSpec{{4, 16, 2}, Head::linear, 1.0}, a);
  Mlp n2(MlpSpec{{4, 16, 2}, Head::linear, 1.0}, b);
  Mlp n3(MlpSpec{{4, 16, 2}, Head::linear, 1.0}, c);
  EXPECT_EQ(0, std::memcmp(n1.params().data(), n2.params().data(),
                           sizeof(double) * n1.n_params()));
  EXPECT_NE(n1.params(), n3.params());
  EXPECT_LE(n1.weight(0).array().abs().maxCoeff(), 1.0 / std::sqrt(4.0));
  EXPECT_LE(n1.weight(1).array().abs().maxCoeff(), 1.0 / std::sqrt(16.0));
}

TEST(Mlp, ParameterGradientsMatchFiniteDifferences) {
  Rng rng(3);
  Mlp net(MlpSpec{{3, 5, 4, 2}, Head::linear, 1.0}, rng);
  Eigen::MatrixXd x(3, 4), target(2, 4);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * rng.uniform() - 1.0;
  for (int i = 0; i < target.size(); ++i) target.data()[i] = 2.0 * rng.uniform() - 1.0;

  MlpCache cache;
  const Eigen::MatrixXd y = net.forward(x, &cache);
  require_away_from_kinks(cache);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.n_params());
  net.backward(cache, y - target, grad);

  expect_gradient_matches(net.params(), grad,
                          [&] { return mse_loss(net.forward(x), target); });
}

TEST(Mlp, InputGradientsMatchFiniteDifferences) {
  Rng rng(5);
  Mlp net(MlpSpec{{3, 6, 2}, Head::linear, 1.0}, rng);
  Eigen::MatrixXd x(3, 2), target(2, 2);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * rng.uniform() - 1.0;
  for (int i = 0; i < target.size(); ++i) target.data()[i] = 2.0 * rng.uniform() - 1.0;

  MlpCache cache;
  const Eigen::MatrixXd y = net.forward(x, &cache);
  require_away_from_kinks(cache);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.n_params());
  const Eigen::MatrixXd dx = net.backward(cache, y - target, grad);

  Eigen::Map<Eigen::VectorXd> flat_x(x.data(), x.size());
  Eigen::VectorXd flat_dx = Eigen::Map<const Eigen::VectorXd>(dx.data(), dx.size());
  Eigen::VectorXd xv = flat_x;
  expect_gradient_matches(
      xv, flat_dx,
      [&] {
        Eigen::MatrixXd xt = Eigen::Map<const Eigen::MatrixXd>(xv.data(), 3, 2);
        return mse_loss(net.forward(xt), target);
      });
}

TEST(Mlp, ScaledTanhHeadGradientsMatchFiniteDifferences) {
  Rng rng(11);
  Mlp net(MlpSpec{{2, 5, 3}, Head::scaled_tanh, 0.25}, rng);
  Eigen::MatrixXd x(2, 3), target(3, 3);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * rng.uniform() - 1.0;
  for (int i = 0; i < target.size(); ++i) target.data()[i] = 0.5 * rng.uniform();

  MlpCache cache;
  const Eigen::MatrixXd y = net.forward(x, &cache);
  require_away_from_kinks(cache);
  EXPECT_LE(y.array().abs().maxCoeff(), 0.25);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.n_params());
  net.backward(cache, y - target, grad);

  expect_gradient_matches(net.params(), grad,
                          [&] { return mse_loss(net.forward(x), target); });
}

TEST(Mlp, BackwardAccumulatesIntoExistingGradient) {
  Rng rng(13);
  Mlp net(MlpSpec{{2, 3, 1}, Head::linear, 1.0}, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(2, 1, 0.4);
  MlpCache cache;
  const Eigen::MatrixXd y = net.forward(x, &cache);
  Eigen::VectorXd once = Eigen::VectorXd::Zero(net.n_params());
  net.backward(cache, y, once);
  Eigen::VectorXd twice = Eigen::VectorXd::Zero(net.n_params());
  net.backward(cache, y, twice);
  net.backward(cache, y, twice);
  EXPECT_NEAR((twice - 2.0 * once).norm(), 0.0, 1e-14);
}

TEST(Adam, FirstStepMatchesHandComputation) {
  AdamState state(2, 0.1);
  Eigen::VectorXd params(2), grad(2);
  params << 1.0, -2.0;
  grad << 0.5, -1.5;
  adam_step(state, params, grad);
  // After one step the bias-corrected moments equal the raw gradient, so the
  // update is lr * g / (|g| + eps).
  EXPECT_NEAR(params(0), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_NEAR(params(1), -2.0 + 0.1 * 1.5 / (1.5 + 1e-8), 1e-12);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, MinimizesAQuadratic) {
  AdamState state(1, 0.05);
  Eigen::VectorXd x(1);
  x << 3.0;
  for (int i = 0; i < 2000; ++i) {
    Eigen::VectorXd g(1);
    g << 2.0 * x(0);
    adam_step(state, x, g);
  }
  EXPECT_NEAR(x(0), 0.0, 1e-3);
}

TEST(Polyak, BlendsTowardTheOnlineParameters) {
  Eigen::VectorXd target(2), online(2);
  target << 0.0, 10.0;
  online << 1.0, 0.0;
  polyak_update(target, online, 0.25);
  EXPECT_NEAR(target(0), 0.25, 1e-15);
  EXPECT_NEAR(target(1), 7.5, 1e-15);
  polyak_update(target, online, 1.0);
  EXPECT_EQ(target, online);
}

TEST(TwoStreamCritic, ParameterAndActionGradientsMatchFiniteDifferences) {
  Rng rng(17);
  TwoStreamCritic critic(3, 2, 6, 5, rng);
  Eigen::MatrixXd s(3, 4), a(2, 4);
  for (int i = 0; i < s.size(); ++i) s.data()[i] = 2.0 * rng.uniform() - 1.0;
  for (int i = 0; i < a.size(); ++i) a.data()[i] = 2.0 * rng.uniform() - 1.0;

  TwoStreamCritic::Cache cache;
  const Eigen::MatrixXd q = critic.forward(s, a, &cache);
  ASSERT_EQ(q.rows(), 1);
  ASSERT_EQ(q.cols(), 4);
  ASSERT_GT(cache.z1.array().abs().minCoeff(), 1e-3);
  ASSERT_GT(cache.z2.array().abs().minCoeff(), 1e-3);

  // Loss: 0.5 sum q^2, so dq = q.
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(critic.n_params());
  Eigen::MatrixXd d_action;
  critic.backward(cache, q, grad, &d_action);

  expect_gradient_matches(critic.params(), grad,
                          [&] { return 0.5 * critic.forward(s, a).squaredNorm(); });

  Eigen::VectorXd flat_a = Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
  Eigen::VectorXd flat_da = Eigen::Map<const Eigen::VectorXd>(d_action.data(), d_action.size());
  expect_gradient_matches(
      flat_a, flat_da,
      [&] {
        Eigen::MatrixXd at = Eigen::Map<const Eigen::MatrixXd>(flat_a.data(), 2, 4);
        return 0.5 * critic.forward(s, at).squaredNorm();
      });
}

TEST(TwoStreamCritic, RejectsShapeMismatches) {
  Rng rng(19);
  TwoStreamCritic critic(3, 2, 4, 4, rng);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(3, 2);
  Eigen::MatrixXd bad_a = Eigen::MatrixXd::Zero(1, 2);
  EXPECT_THROW(critic.forward(s, bad_a), std::invalid_argument);
  Eigen::MatrixXd misaligned = Eigen::MatrixXd::Zero(2, 3);
  EXPECT_THROW(critic.forward(s, misaligned), std::invalid_argument);
}
