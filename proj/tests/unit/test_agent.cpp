#include "wave/agent/agent.hpp"
#include "wave/agent/lambda_schedule.hpp"
#include "wave/agent/replay_buffer.hpp"
#include "wave/agent/trainer.hpp"

#include "gradcheck.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

using namespace wave;
using namespace wave::agent;

namespace {

envs::EnvSpec box_spec(std::size_t obs, std::vector<double> low, std::vector<double> high) {
  envs::EnvSpec s;
  s.name = "box";
  s.observation_dim = obs;
  s.action_dim = low.size();
  s.action_low = std::move(low);
  s.action_high = std::move(high);
  s.max_episode_steps = 10;
  return s;
}

nn::ParameterSet random_params(const nn::MlpSpec& spec, std::mt19937_64& rng, double scale) {
  auto p = nn::init_parameters(spec, rng);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& [name, t] : p) {
    for (auto& v : t.data()) v = u(rng);
  }
  return p;
}

// Single-layer networks: Q(s, a) = w . [s, a] + b and pi(s) = mid + half * tanh(w s + b).
Networks linear_networks(const envs::EnvSpec& spec, std::mt19937_64& rng) {
  Networks n;
  n.actor_spec = nn::actor_spec(spec.observation_dim, spec.action_low, spec.action_high, {});
  n.critic_spec = nn::critic_spec(spec.observation_dim, spec.action_dim, {});
  n.actor_spec.use_layer_norm = false;
  n.critic_spec.use_layer_norm = false;
  n.actor = random_params(n.actor_spec, rng, 1.0);
  n.critic1 = random_params(n.critic_spec, rng, 1.0);
  n.critic2 = random_params(n.critic_spec, rng, 1.0);
  n.actor_target = random_params(n.actor_spec, rng, 1.0);
  n.critic1_target = random_params(n.critic_spec, rng, 1.0);
  n.critic2_target = random_params(n.critic_spec, rng, 1.0);
  return n;
}

Batch random_batch(Eigen::Index n, const envs::EnvSpec& spec, std::mt19937_64& rng, double done_rate = 0.3) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution d(done_rate);
  const auto obs = static_cast<Eigen::Index>(spec.observation_dim);
  const auto act = static_cast<Eigen::Index>(spec.action_dim);
  Batch b;
  b.states = Matrix::NullaryExpr(n, obs, [&] { return u(rng); });
  b.actions = Matrix::NullaryExpr(n, act, [&] { return u(rng); });
  b.rewards = Vector::NullaryExpr(n, [&] { return 3.0 * u(rng); });
  b.next_states = Matrix::NullaryExpr(n, obs, [&] { return u(rng); });
  b.dones = Vector::NullaryExpr(n, [&] { return d(rng) ? 1.0 : 0.0; });
  return b;
}

double linear_q(const nn::ParameterSet& p, const Eigen::RowVectorXd& s, const Eigen::RowVectorXd& a) {
  const auto& w = p.at("output.weight");
  double q = p.at("output.bias")[0];
  for (Eigen::Index j = 0; j < s.size(); ++j) q += w[static_cast<std::size_t>(j)] * s[j];
  for (Eigen::Index j = 0; j < a.size(); ++j) q += w[static_cast<std::size_t>(s.size() + j)] * a[j];
  return q;
}

Td3Config small_td3() {
  Td3Config c;
  c.hidden_dims = {16, 16};
  c.batch_size = 32;
  c.warmup_steps = 100;
  c.buffer_capacity = 5000;
  return c;
}

Vector grad_vector(const nn::ParameterSet& g) { return g.flatten(); }

TrainOptions episodes(std::size_t n, std::uint64_t seed) {
  TrainOptions o;
  o.episodes = n;
  o.seed = seed;
  return o;
}

}  // namespace

TEST_CASE("replay buffer stores, overwrites and samples deterministically") {
  ReplayBuffer buf(3, 2, 1, 7);
  CHECK(buf.size() == 0);
  for (int i = 0; i < 5; ++i) {
    buf.add({Vector::Constant(2, i), Vector::Constant(1, -i), double(i), Vector::Constant(2, i + 1), i % 2 == 0});
    CHECK(buf.size() == std::min<std::size_t>(i + 1, 3));
  }
  // Slots 0 and 1 were overwritten by transitions 3 and 4.
  CHECK(buf.at(0).reward == 3.0);
  CHECK(buf.at(1).reward == 4.0);
  CHECK(buf.at(2).reward == 2.0);
  CHECK(buf.at(2).done);
  CHECK(buf.at(2).next_state[1] == 3.0);

  ReplayBuffer a(100, 1, 1, 42), b(100, 1, 1, 42);
  for (int i = 0; i < 50; ++i) {
    a.add({Vector::Constant(1, i), Vector::Zero(1), 0.0, Vector::Zero(1), false});
    b.add({Vector::Constant(1, i), Vector::Zero(1), 0.0, Vector::Zero(1), false});
  }
  CHECK(a.sample_indices(64) == b.sample_indices(64));
  const Batch batch = a.sample(8);
  CHECK(batch.size() == 8);

  std::map<std::size_t, int> counts;
  for (auto i : a.sample_indices(50000)) counts[i]++;
  CHECK(counts.size() == 50);
  for (const auto& [i, c] : counts) CHECK(std::abs(c - 1000) < 200);

  CHECK_THROWS_AS(a.add({Vector::Zero(2), Vector::Zero(1), 0.0, Vector::Zero(1), false}), std::invalid_argument);
  CHECK_THROWS_AS(a.add({Vector::Zero(1), Vector::Zero(1), std::nan(""), Vector::Zero(1), false}), NumericError);
  ReplayBuffer empty(4, 1, 1, 0);
  CHECK_THROWS(empty.sample(1));
}

TEST_CASE("moving average reward") {
  const std::vector<double> constant(30, -7.5);
  CHECK(moving_average_reward(constant, 20) == -7.5);
  CHECK(moving_average_reward(std::vector<double>{0.0, 10.0}, 2) == 5.0);
  CHECK(moving_average_reward(std::vector<double>{4.0}, 20) == 4.0);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(-500.0, 200.0);
  std::vector<double> h(100);
  for (auto& v : h) v = n(rng);
  long double oracle = 0.0L;
  for (std::size_t i = 80; i < 100; ++i) oracle += h[i];
  oracle /= 20.0L;
  CHECK(std::abs(moving_average_reward(h, 20) - static_cast<double>(oracle)) <= 1e-12);
  CHECK_THROWS(moving_average_reward(std::vector<double>{}, 20));
}

TEST_CASE("lambda schedule cases equation") {
  LambdaScheduleConfig cfg;
  cfg.r_threshold = -800.0;
  CHECK(lambda_for(cfg, cfg.r_threshold - 1.0) == 2.0);
  CHECK(lambda_for(cfg, cfg.r_threshold) == 2.0);
  CHECK(std::abs(lambda_for(cfg, std::nextafter(cfg.r_threshold, 0.0)) - 2.0) <= 1e-12);

  const long double expected = 0.3L + 1.7L * std::exp(-2.0L);
  CHECK(std::abs(lambda_for(cfg, cfg.r_threshold + 40.0) - static_cast<double>(expected)) <= 1e-15);
  CHECK(std::abs(lambda_for(cfg, cfg.r_threshold + 1e4) - 0.3) <= 1e-6);

  double prev = 3.0;
  for (int i = 0; i < 1000; ++i) {
    const double l = lambda_for(cfg, cfg.r_threshold - 200.0 + i);
    CHECK(l <= prev);
    CHECK(l >= cfg.lambda_min);
    CHECK(l <= cfg.lambda_max);
    prev = l;
  }

  LambdaSchedule s(cfg);
  CHECK(s.lambda() == 2.0);
  s.record(-1000.0);
  CHECK(s.lambda() == 2.0);
  s.record(-600.0);  // mean -800 sits on the threshold
  CHECK(s.lambda() == 2.0);
  s.record(-480.0);
  CHECK(s.moving_average() == doctest::Approx(-2080.0 / 3.0));
  CHECK(s.lambda() < 2.0);

  LambdaScheduleConfig bad = cfg;
  bad.lambda_min = 3.0;
  CHECK_THROWS_AS(LambdaSchedule{bad}, std::invalid_argument);
  bad = cfg;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("td3 targets match a direct evaluation") {
  std::mt19937_64 rng(11);
  const auto spec = box_spec(3, {-2.0}, {2.0});
  const Networks nets = linear_networks(spec, rng);
  Td3Config cfg;
  const Batch b = random_batch(40, spec, rng);
  std::normal_distribution<double> normal(0.0, 0.4);
  const Matrix noise = Matrix::NullaryExpr(40, 1, [&] { return normal(rng); });

  const Vector y = td3_targets(nets, spec, cfg, b, noise);
  for (Eigen::Index i = 0; i < 40; ++i) {
    const auto& wa = nets.actor_target.at("output.weight");
    double pre = nets.actor_target.at("output.bias")[0];
    for (int j = 0; j < 3; ++j) pre += wa[j] * b.next_states(i, j);
    const double clip = 0.5 * 2.0;
    const double eps = std::clamp(noise(i, 0), -clip, clip);
    const double a = std::clamp(2.0 * std::tanh(pre) + eps, -2.0, 2.0);
    const Eigen::RowVectorXd av = Eigen::RowVectorXd::Constant(1, a);
    const double q1 = linear_q(nets.critic1_target, b.next_states.row(i), av);
    const double q2 = linear_q(nets.critic2_target, b.next_states.row(i), av);
    const double expected = b.rewards[i] + 0.99 * (1.0 - b.dones[i]) * std::min(q1, q2);
    CHECK(std::abs(y[i] - expected) <= 1e-12);
  }

  cfg.gamma = 0.0;
  CHECK(td3_targets(nets, spec, cfg, b, noise) == b.rewards);
  Batch terminal = b;
  terminal.dones.setOnes();
  CHECK(td3_targets(nets, spec, Td3Config{}, terminal, noise) == b.rewards);
  CHECK_THROWS_AS(td3_targets(nets, spec, cfg, b, Matrix::Zero(39, 1)), std::invalid_argument);
}

TEST_CASE("td loss is the summed mean square of both critics") {
  std::mt19937_64 rng(12);
  const auto spec = box_spec(3, {-2.0}, {2.0});
  Networks nets = linear_networks(spec, rng);
  nets.critic2 = nets.critic1;
  const Batch b = random_batch(25, spec, rng);
  const Vector q = critic_values(nets.critic_spec, nets.critic1, b.states, b.actions);
  const ot::SinkhornOptions sk;

  CHECK(critic_loss(nets, b, q, 0.0, nullptr, sk).td_loss <= 1e-28);
  const double c = 0.37;
  CHECK(std::abs(critic_loss(nets, b, (q.array() - c).matrix(), 0.0, nullptr, sk).td_loss - 2.0 * c * c) <= 1e-12);

  Networks other = linear_networks(spec, rng);
  const Vector y = Vector::NullaryExpr(25, [&] { return std::normal_distribution<double>(0, 2)(rng); });
  long double oracle = 0.0L;
  for (Eigen::Index i = 0; i < 25; ++i) {
    const long double d1 = linear_q(other.critic1, b.states.row(i), b.actions.row(i)) - y[i];
    const long double d2 = linear_q(other.critic2, b.states.row(i), b.actions.row(i)) - y[i];
    oracle += d1 * d1 + d2 * d2;
  }
  oracle /= 25.0L;
  CHECK(std::abs(critic_loss(other, b, y, 0.0, nullptr, sk).td_loss - static_cast<double>(oracle)) <= 1e-12);
}

TEST_CASE("regularized critic loss gradient matches finite differences") {
  const auto spec = box_spec(1, {-1.0}, {1.0});
  ot::SinkhornOptions sk;
  sk.epsilon = 0.05;
  sk.max_iter = 20000;
  sk.tol = 1e-13;
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    Networks nets;
    nets.critic_spec = nn::critic_spec(1, 1, {2});
    nets.critic_spec.use_layer_norm = false;
    nets.critic1 = random_params(nets.critic_spec, rng, 1.0);
    nets.critic2 = random_params(nets.critic_spec, rng, 1.0);
    REQUIRE(nets.critic1.element_count() == 9);
    const Batch b = random_batch(6, spec, rng);
    const Vector y = Vector::NullaryExpr(6, [&] { return std::normal_distribution<double>(0, 1)(rng); });
    const Batch probe = random_batch(4, spec, rng);
    QSnapshot snap{probe.states, probe.actions,
                   Vector::NullaryExpr(4, [&] { return std::normal_distribution<double>(0, 0.5)(rng); })};
    const double lambda = 1.3;

    const CriticLoss loss = critic_loss(nets, b, y, lambda, &snap, sk);
    REQUIRE(loss.sinkhorn.has_value());
    if (!loss.sinkhorn->converged) continue;
    Vector analytic(18);
    analytic << grad_vector(loss.grad1), grad_vector(loss.grad2);
    Vector x0(18);
    x0 << nets.critic1.flatten(), nets.critic2.flatten();
    auto f = [&](const Eigen::VectorXd& x) {
      Networks n = nets;
      n.critic1.unflatten(x.head(9));
      n.critic2.unflatten(x.tail(9));
      const CriticLoss l = critic_loss(n, b, y, lambda, &snap, sk);
      return l.td_loss + l.w_term;
    };
    const auto r = testing::check_gradient(f, x0, analytic, 1e-6, 1e-3, 1e-7);
    CHECK_MESSAGE(r.passed, "trial " << trial << " rel " << r.max_rel_error);
    ++checked;
  }
  CHECK(checked >= 90);
}

TEST_CASE("wave term composes the sinkhorn gradient with the critic jacobian") {
  const auto spec = box_spec(2, {-1.0}, {1.0});
  std::mt19937_64 rng(77);
  Networks nets;
  nets.critic_spec = nn::critic_spec(2, 1, {5});
  nets.critic_spec.use_layer_norm = false;
  nets.critic1 = random_params(nets.critic_spec, rng, 1.0);
  nets.critic2 = random_params(nets.critic_spec, rng, 1.0);
  const Batch b = random_batch(8, spec, rng);
  const Vector y = Vector::Random(8);
  const Batch probe = random_batch(4, spec, rng);
  QSnapshot snap{probe.states, probe.actions, Vector::Random(4)};
  ot::SinkhornOptions sk;
  sk.epsilon = 0.05;
  sk.max_iter = 20000;
  sk.tol = 1e-13;
  const double lambda = 0.7;

  const CriticLoss with = critic_loss(nets, b, y, lambda, &snap, sk);
  const CriticLoss without = critic_loss(nets, b, y, 0.0, &snap, sk);
  REQUIRE(with.sinkhorn->converged);
  CHECK(!without.sinkhorn.has_value());
  CHECK(without.grad2 == with.grad2);

  const Vector q = critic_values(nets.critic_spec, nets.critic1, probe.states, probe.actions);
  const ot::EmpiricalDistribution<double> ys(snap.values);
  auto w_of = [&](const Eigen::VectorXd& qv) {
    return ot::sinkhorn_distance(ot::EmpiricalDistribution<double>(qv), ys, sk).distance;
  };
  CHECK(std::abs(with.w_term - lambda * w_of(q)) <= 1e-12);

  Vector dw(4);
  for (Eigen::Index i = 0; i < 4; ++i) dw[i] = testing::central_difference(w_of, q, i, 1e-6);
  const Vector theta = nets.critic1.flatten();
  Matrix jac(4, theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    auto qk = [&](double h) {
      nn::ParameterSet p = nets.critic1;
      Vector t = theta;
      t[k] += h;
      p.unflatten(t);
      return critic_values(nets.critic_spec, p, probe.states, probe.actions);
    };
    jac.col(k) = (qk(1e-6) - qk(-1e-6)) / 2e-6;
  }
  const Vector expected = lambda * jac.transpose() * dw;
  const Vector actual = with.grad1.flatten() - without.grad1.flatten();
  for (Eigen::Index k = 0; k < expected.size(); ++k) {
    const double err = std::abs(actual[k] - expected[k]);
    CHECK((err <= 1e-7 || err <= 1e-3 * std::abs(expected[k])));
  }
}

TEST_CASE("regularizer is stationary when the snapshot equals the current values") {
  const auto spec = box_spec(1, {-1.0}, {1.0});
  Networks nets;
  nets.critic_spec = nn::critic_spec(1, 1, {});
  nets.critic_spec.use_layer_norm = false;
  nets.critic1.add("output.weight", nn::Tensor({1, 2}, {3.0, 2.0}));
  nets.critic1.add("output.bias", nn::Tensor({1}, {0.5}));
  nets.critic2 = nets.critic1;
  Batch probe;
  probe.states = Matrix{{-1.0}, {0.0}, {1.0}, {2.0}};
  probe.actions = Matrix{{0.0}, {0.5}, {-0.5}, {1.0}};
  std::mt19937_64 rng(5);
  const Batch b = random_batch(8, spec, rng);
  const Vector y = Vector::Random(8);
  QSnapshot snap{probe.states, probe.actions, critic_values(nets.critic_spec, nets.critic1, probe.states, probe.actions)};
  ot::SinkhornOptions sk;
  sk.max_iter = 2000;
  const CriticLoss with = critic_loss(nets, b, y, 2.0, &snap, sk);
  const CriticLoss without = critic_loss(nets, b, y, 0.0, &snap, sk);
  REQUIRE(with.sinkhorn->converged);
  CHECK((with.grad1.flatten() - without.grad1.flatten()).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("actor objective") {
  const auto spec = box_spec(2, {-1.0, 0.0}, {1.0, 4.0});
  SUBCASE("gradient matches finite differences") {
    int passed = 0;
    for (int trial = 0; trial < 100; ++trial) {
      std::mt19937_64 rng(500 + trial);
      Networks nets;
      nets.actor_spec = nn::actor_spec(2, spec.action_low, spec.action_high, {3});
      nets.critic_spec = nn::critic_spec(2, 2, {4});
      nets.critic_spec.use_layer_norm = false;
      nets.actor = random_params(nets.actor_spec, rng, 1.0);
      nets.critic1 = random_params(nets.critic_spec, rng, 1.0);
      const Matrix states = Matrix::Random(5, 2);
      const auto [value, grads] = actor_loss(nets, states);
      const Vector x0 = nets.actor.flatten();
      auto f = [&](const Eigen::VectorXd& x) {
        Networks n = nets;
        n.actor.unflatten(x);
        return actor_loss(n, states).first;
      };
      CHECK(std::abs(value - f(x0)) <= 1e-15);
      const auto r = testing::check_gradient(f, x0, grads.flatten(), 1e-6, 1e-3, 1e-7);
      if (r.passed) ++passed;
    }
    CHECK(passed == 100);
  }
  SUBCASE("constant critic gives a zero actor gradient") {
    std::mt19937_64 rng(9);
    Networks nets;
    nets.actor_spec = nn::actor_spec(2, spec.action_low, spec.action_high, {3});
    nets.critic_spec = nn::critic_spec(2, 2, {});
    nets.critic_spec.use_layer_norm = false;
    nets.actor = random_params(nets.actor_spec, rng, 1.0);
    nets.critic1.add("output.weight", nn::Tensor({1, 4}));
    nets.critic1.add("output.bias", nn::Tensor({1}, {4.0}));
    const auto [value, grads] = actor_loss(nets, Matrix::Random(6, 2));
    CHECK(value == -4.0);
    CHECK(grads.squared_norm() == 0.0);
  }
}

TEST_CASE("actor moves toward the maximizer of a concave critic") {
  // Q(s, a) = -(relu(a - a*) + relu(a* - a)) = -|a - a*|, built from two hidden units.
  const auto spec = box_spec(1, {-2.0}, {2.0});
  Td3Config td3;
  td3.hidden_dims = {};
  td3.use_layer_norm = false;
  td3.actor_lr = 1e-2;
  WaveConfig wave;
  wave.regularize = false;
  Agent agent(spec, td3, wave, 4);
  const double a_star = 0.8;
  auto& nets = agent.networks();
  nets.critic_spec = nn::critic_spec(1, 1, {2});
  nets.critic_spec.use_layer_norm = false;
  nets.critic1 = nn::ParameterSet{};
  nets.critic1.add("hidden0.weight", nn::Tensor({2, 2}, {0.0, 1.0, 0.0, -1.0}));
  nets.critic1.add("hidden0.bias", nn::Tensor({2}, {-a_star, a_star}));
  nets.critic1.add("output.weight", nn::Tensor({1, 2}, {-1.0, -1.0}));
  nets.critic1.add("output.bias", nn::Tensor({1}));
  nets.critic2 = nets.critic1;
  nets.critic1_target = nets.critic1;
  nets.critic2_target = nets.critic2;
  nets.actor.at("output.weight")[0] = 0.0;
  nets.actor.at("output.bias")[0] = -0.5;

  const Matrix states = Matrix::Zero(4, 1);
  const Vector s = Vector::Zero(1);
  double dist = std::abs(agent.select_action(s, 0.0)[0] - a_star);
  int steps = 0;
  while (dist > 0.05 && steps < 2000) {
    agent.actor_update(states);
    const double next = std::abs(agent.select_action(s, 0.0)[0] - a_star);
    CHECK(next < dist);
    dist = next;
    ++steps;
  }
  CHECK(dist <= 0.05);
}

TEST_CASE("action selection") {
  const auto spec = box_spec(3, {-2.0}, {2.0});
  Td3Config td3 = small_td3();
  Agent agent(spec, td3, WaveConfig{}, 21);
  const Vector s = Vector::Random(3);
  const Matrix direct = nn::forward(agent.networks().actor_spec, agent.networks().actor, Matrix(s.transpose()));
  CHECK(agent.select_action(s, 0.0)[0] == direct(0, 0));

  for (int i = 0; i < 10000; ++i) {
    const double a = agent.random_action()[0];
    CHECK((a >= -2.0 && a <= 2.0));
    const double b = agent.select_action(s, 5.0)[0];
    CHECK((b >= -2.0 && b <= 2.0));
  }

  Agent x(spec, td3, WaveConfig{}, 99), y(spec, td3, WaveConfig{}, 99);
  for (int i = 0; i < 50; ++i) {
    const Vector si = Vector::Random(3);
    CHECK(x.select_action(si, 0.1) == y.select_action(si, 0.1));
    CHECK(x.random_action() == y.random_action());
  }
  CHECK_THROWS(agent.select_action(s, -1.0));
}

TEST_CASE("soft target updates shrink the lag by exactly 1 - tau") {
  std::mt19937_64 rng(8);
  const auto spec = box_spec(3, {-2.0}, {2.0});
  auto cs = nn::critic_spec(3, 1, {8});
  nn::ParameterSet online = nn::init_parameters(cs, rng);
  nn::ParameterSet target = random_params(cs, rng, 1.0);
  double lag = (target.flatten() - online.flatten()).norm();
  for (int i = 0; i < 20; ++i) {
    nn::soft_update_in_place(target, online, 0.005);
    const double next = (target.flatten() - online.flatten()).norm();
    CHECK(std::abs(next / lag - 0.995) <= 1e-12);
    lag = next;
  }
}

TEST_CASE("critic updates: ablation identity, metrics, no gradient leaks") {
  std::mt19937_64 rng(31);
  const auto env = envs::make_environment("pendulum");
  const auto& spec = env->spec();
  Td3Config td3 = small_td3();
  WaveConfig on;
  WaveConfig off;
  off.regularize = false;
  Agent a(spec, td3, on, 5), b(spec, td3, off, 5);
  REQUIRE(a.networks().critic1 == b.networks().critic1);

  for (int k = 0; k < 5; ++k) {
    const Batch batch = random_batch(32, spec, rng);
    const Batch probe = random_batch(8, spec, rng);
    const auto targets_before = a.networks().critic1_target;
    const auto ma = a.critic_update(batch, 0.0, &probe);
    const auto mb = b.critic_update(batch, 0.0, nullptr);
    CHECK(a.networks().critic1 == b.networks().critic1);
    CHECK(a.networks().critic2 == b.networks().critic2);
    CHECK(ma.td_loss == mb.td_loss);
    CHECK(ma.grad_norm == mb.grad_norm);
    CHECK(ma.w_term == 0.0);
    CHECK(a.networks().critic1_target == targets_before);
    CHECK(a.snapshot().has_value());
  }
  CHECK(!b.snapshot().has_value());

  const Batch batch = random_batch(32, spec, rng);
  const Batch probe = random_batch(8, spec, rng);
  const auto m = a.critic_update(batch, 2.0, &probe);
  CHECK(m.sinkhorn_evaluated);
  CHECK(m.lambda == 2.0);
  CHECK(m.w_term != 0.0);
  CHECK(m.update_norm > 0.0);
  CHECK(std::isfinite(m.grad_norm));
  CHECK(a.critic_updates() == 6);

  const Vector y = Vector::Random(32);
  const auto loss = critic_loss(a.networks(), batch, y, 1.0, &*a.snapshot(), on.sinkhorn);
  CHECK(loss.grad1.same_layout(a.networks().critic1));
  CHECK(loss.grad2.same_layout(a.networks().critic2));
}

TEST_CASE("episode csv schema") {
  EpisodeLog log;
  log.episode = 3;
  log.env_steps = 600;
  log.episode_return = -1234.5;
  log.lambda = 2.0;
  const std::string row = episode_csv_row(log);
  CHECK(std::string(kEpisodeCsvHeader) ==
        "episode,env_steps,return,moving_avg_return,lambda,mean_td_loss,mean_w_term,mean_critic_grad_norm,"
        "mean_actor_loss,wall_ms");
  CHECK(std::count(row.begin(), row.end(), ',') == 9);
  CHECK(row.starts_with("3,600,-1234.5,0,2,"));
}

TEST_CASE("training loop") {
  const auto env = envs::make_environment("pendulum");
  Td3Config td3 = small_td3();
  WaveConfig wave;
  wave.schedule.r_threshold = -1000.0;
  wave.probe_size = 16;

  SUBCASE("zero episodes leave the agent untouched") {
    Trainer t(*env, td3, wave, 1);
    const Agent fresh(env->spec(), td3, wave, 1);
    CHECK(t.run(episodes(0, 1)).empty());
    CHECK(t.agent().networks().actor == fresh.networks().actor);
    CHECK(t.agent().networks().critic1 == fresh.networks().critic1);
  }

  SUBCASE("lambda pinned at zero reproduces the TD3 baseline bit for bit") {
    WaveConfig zero = wave;
    zero.schedule.lambda_max = 0.0;
    zero.schedule.lambda_min = 0.0;
    WaveConfig off = wave;
    off.regularize = false;
    Trainer a(*env, td3, zero, 17), b(*env, td3, off, 17);
    const auto la = a.run(episodes(3, 17));
    const auto lb = b.run(episodes(3, 17));
    REQUIRE(la.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(episode_csv_row(la[i]) == episode_csv_row(lb[i]));
    CHECK(a.agent().networks().actor == b.agent().networks().actor);
    CHECK(a.agent().networks().critic1 == b.agent().networks().critic1);
    CHECK(a.agent().networks().critic2_target == b.agent().networks().critic2_target);
    CHECK(a.stats().critic_updates == 3 * 200 - td3.warmup_steps + 1);
  }

  SUBCASE("same seed, same log; lambda logged per episode") {
    auto run = [&] {
      Trainer t(*env, td3, wave, 23);
      std::size_t updates = 0;
      TrainOptions o = episodes(2, 23);
      o.on_update = [&](const UpdateEvent& e) {
        ++updates;
        CHECK(e.critic->lambda == t.current_lambda());
      };
      auto logs = t.run(o);
      CHECK(updates == t.stats().critic_updates);
      return logs;
    };
    const auto x = run();
    const auto y = run();
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(episode_csv_row(x[i]) == episode_csv_row(y[i]));
    CHECK(x[0].lambda == 2.0);
    CHECK(x[0].env_steps == 200);
    CHECK(x[1].env_steps == 400);
    CHECK(x[0].wall_ms == 0.0);
    CHECK(x[1].moving_avg_return == doctest::Approx((x[0].episode_return + x[1].episode_return) / 2));
  }

  SUBCASE("should_stop ends training early") {
    Trainer t(*env, td3, wave, 2);
    TrainOptions o = episodes(5, 2);
    o.should_stop = [](const EpisodeLog& l) { return l.episode == 2; };
    const auto logs = t.run(o);
    CHECK(logs.size() == 2);
  }
}

TEST_CASE("automatic reward threshold") {
  const auto env = envs::make_environment("pendulum");
  const double base = envs::random_policy_baseline(*env, 100, 20240101);
  CHECK(auto_reward_threshold(*env) == doctest::Approx(base + 0.25 * (-400.0 - base)));
  CHECK(optimistic_return_bound("acrobot") == -350.0);
  CHECK(optimistic_return_bound("nav2d") == -150.0);
  CHECK_THROWS(optimistic_return_bound("cartpole"));
}

TEST_CASE("derived seeds are distinct per stream") {
  std::vector<std::uint64_t> s;
  for (std::uint64_t k = 0; k < 8; ++k) s.push_back(derive_seed(1, k));
  std::sort(s.begin(), s.end());
  CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
  CHECK(derive_seed(1, 3) == derive_seed(1, 3));
  CHECK(derive_seed(1, 3) != derive_seed(2, 3));
}
