#include <doctest.h>

#include <cmath>
#include <numeric>

#include "shaped_transfer/agents.hpp"
#include "shaped_transfer/errors.hpp"
#include "shaped_transfer/replay.hpp"
#include "support.hpp"

using namespace shaped_transfer;
using support::random_net;
using support::random_vector;

namespace {

Transition make_transition(double reward, bool terminal = false) {
  Transition t;
  t.observation = Vector::Constant(1, reward);
  t.action = 0;
  t.reward = reward;
  t.next_observation = Vector::Constant(1, reward);
  t.terminal = terminal;
  return t;
}

DenseNet constant_net(int in, double value) {
  return DenseNet({DenseLayer{Matrix::Zero(1, in), Vector::Constant(1, value), Activation::identity}});
}

BoxSpace unit_box(double lo = -2, double hi = 2) { return {Vector::Constant(1, lo), Vector::Constant(1, hi)}; }

std::vector<const Transition*> pointers(const std::vector<Transition>& ts) {
  std::vector<const Transition*> out;
  for (const auto& t : ts) out.push_back(&t);
  return out;
}

std::vector<Transition> random_box_batch(Rng& rng, int n, int obs_dim, bool absorbing_some) {
  std::vector<Transition> out;
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.observation = random_vector(obs_dim, rng);
    t.action = Vector(random_vector(1, rng, -2, 2));
    t.reward = rng.uniform(-1, 1);
    t.next_observation = random_vector(obs_dim, rng);
    t.terminal = absorbing_some && i % 3 == 0;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TEST_SUITE("replay") {

TEST_CASE("push grows the buffer") {
  ReplayBuffer buf(10, 0);
  buf.push(make_transition(1));
  CHECK(buf.size() == 1);
}

TEST_CASE("FIFO eviction keeps the newest items in order") {
  ReplayBuffer buf(2, 0);
  for (int i = 1; i <= 3; ++i) buf.push(make_transition(i));
  REQUIRE(buf.size() == 2);
  CHECK(buf.at(0).reward == 2);
  CHECK(buf.at(1).reward == 3);
  for (int i = 4; i <= 7; ++i) buf.push(make_transition(i));
  CHECK(buf.at(0).reward == 6);
  CHECK(buf.at(1).reward == 7);
}

TEST_CASE("sampling is uniform over the contents (chi-square)") {
  const std::size_t cap = 100;
  ReplayBuffer buf(cap, 123);
  for (int i = 0; i < 100000; ++i) buf.push(make_transition(i));
  std::vector<double> counts(cap, 0.0);
  const std::size_t draws = 100000;
  for (const Transition* t : buf.sample(draws)) {
    const int r = static_cast<int>(t->reward);
    REQUIRE(r >= 100000 - static_cast<int>(cap));
    counts[static_cast<std::size_t>(r - (100000 - static_cast<int>(cap)))] += 1;
  }
  const double expected = static_cast<double>(draws) / cap;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 99 degrees of freedom; 0.999 quantile is about 148.2.
  CHECK(chi2 < 148.2);
}

TEST_CASE("sampling from an empty buffer is a contract error") {
  ReplayBuffer buf(4, 0);
  CHECK_THROWS_AS(buf.sample(1), error);
}

}

TEST_SUITE("dqn") {

TEST_CASE("greedy argmax over the allowed set") {
  const DenseNet net({DenseLayer{Matrix::Zero(3, 1), (Vector(3) << 1.0, 5.0, 2.0).finished(), Activation::identity}});
  DqnAgent agent(net, Hyperparameters::defaults(Algorithm::dqn), 0);
  agent.set_epsilon(0.0);
  const Vector s = Vector::Zero(1);
  const std::vector<int> all{0, 1, 2}, no_torque_removed{0, 2};
  CHECK(agent.act(s, all, true) == 1);
  CHECK(agent.act(s, no_torque_removed, true) == 2);
}

TEST_CASE("ties go to the lowest index") {
  const DenseNet net({DenseLayer{Matrix::Zero(3, 1), (Vector(3) << 4.0, 4.0, 4.0).finished(), Activation::identity}});
  DqnAgent agent(net, {}, 0);
  const std::vector<int> allowed{2, 1};
  CHECK(agent.greedy(Vector::Zero(1), allowed) == 1);
}

TEST_CASE("epsilon 1 explores uniformly over the allowed set") {
  Rng rng(1);
  DqnAgent agent(random_net({2, 8, 3}, Activation::rectifier, rng), {}, 77);
  agent.set_epsilon(1.0);
  const std::vector<int> allowed{0, 2};
  const int n = 10000;
  int zeros = 0;
  for (int i = 0; i < n; ++i) {
    const int a = agent.act(random_vector(2, rng), allowed, true);
    REQUIRE((a == 0 || a == 2));
    zeros += a == 0;
  }
  const double sigma = std::sqrt(n * 0.25);
  CHECK(std::abs(zeros - n / 2.0) <= 3 * sigma);
}

TEST_CASE("act never leaves the allowed set") {
  Rng rng(2);
  DqnAgent agent(random_net({2, 8, 3}, Activation::rectifier, rng), {}, 5);
  agent.set_epsilon(0.3);
  const std::vector<int> allowed{0, 2};
  for (int i = 0; i < 100000; ++i) {
    const int a = agent.act(random_vector(2, rng, -5, 5), allowed, true);
    if (a != 0 && a != 2) FAIL("action outside the allowed set");
  }
}

TEST_CASE("empty allowed set is an invalid-restriction error") {
  Rng rng(3);
  DqnAgent agent(random_net({2, 4, 3}, Activation::rectifier, rng), {}, 0);
  try {
    agent.act(Vector::Zero(2), std::vector<int>{}, false);
    FAIL("expected an error");
  } catch (const error& e) {
    CHECK(e.code() == errc::invalid_restriction);
  }
}

TEST_CASE("absorbing transitions bootstrap to the reward") {
  Rng rng(4);
  DqnAgent agent(random_net({1, 4, 3}, Activation::rectifier, rng), {}, 0);
  std::vector<Transition> ts;
  for (int i = 0; i < 5; ++i) ts.push_back(make_transition(i * 1.5 - 2, true));
  const Vector y = agent.targets(pointers(ts));
  for (int i = 0; i < 5; ++i) CHECK(y(i) == ts[static_cast<std::size_t>(i)].reward);
}

TEST_CASE("target matches r + gamma max Q by hand") {
  // Q(s) = (0.5 s + 0.1, -0.25 s + 0.3)
  Matrix w(2, 1);
  w << 0.5, -0.25;
  const DenseNet net({DenseLayer{w, (Vector(2) << 0.1, 0.3).finished(), Activation::identity}});
  Hyperparameters hp;
  hp.gamma = 0.99;
  DqnAgent agent(net, hp, 0);
  Transition t = make_transition(-1.0);
  t.next_observation = Vector::Constant(1, 2.0);  // Q(s') = (1.1, -0.2)
  const Transition* p = &t;
  CHECK(std::abs(agent.targets(Batch(&p, 1))(0) - (-1.0 + 0.99 * 1.1)) <= 1e-12);
  t.next_observation = Vector::Constant(1, -2.0);  // Q(s') = (-0.9, 0.8)
  CHECK(std::abs(agent.targets(Batch(&p, 1))(0) - (-1.0 + 0.99 * 0.8)) <= 1e-12);
  t.truncated = t.terminal = true;  // truncation still bootstraps
  CHECK(std::abs(agent.targets(Batch(&p, 1))(0) - (-1.0 + 0.99 * 0.8)) <= 1e-12);
  agent.set_bootstrap_actions({0});
  CHECK(std::abs(agent.targets(Batch(&p, 1))(0) - (-1.0 + 0.99 * -0.9)) <= 1e-12);
}

TEST_CASE("identical agents and batches give identical updates") {
  Rng rng(6);
  const DenseNet net = random_net({1, 8, 8, 2}, Activation::rectifier, rng);
  DqnAgent a(net, {}, 9), b(net, {}, 9);
  std::vector<Transition> ts;
  for (int i = 0; i < 16; ++i) {
    auto t = make_transition(rng.uniform(-1, 1));
    t.action = static_cast<int>(rng.index(2));
    ts.push_back(t);
  }
  for (int k = 0; k < 10; ++k) CHECK(a.update(pointers(ts)) == b.update(pointers(ts)));
  for (std::size_t k = 0; k < 3; ++k) CHECK(a.online().layers()[k].weight == b.online().layers()[k].weight);
}

TEST_CASE("target network hard-syncs every N updates") {
  Rng rng(7);
  Hyperparameters hp;
  hp.target_sync_interval = 3;
  DqnAgent agent(random_net({1, 4, 2}, Activation::rectifier, rng), hp, 0);
  std::vector<Transition> ts{make_transition(1.0), make_transition(-1.0)};
  ts[1].action = 1;
  const Matrix initial = agent.target().layers()[0].weight;
  agent.update(pointers(ts));
  agent.update(pointers(ts));
  CHECK(agent.target().layers()[0].weight == initial);
  CHECK(agent.online().layers()[0].weight != initial);
  agent.update(pointers(ts));
  CHECK(agent.target().layers()[0].weight == agent.online().layers()[0].weight);
}

TEST_CASE("update reduces the TD loss on a fixed batch") {
  Rng rng(8);
  DqnAgent agent(random_net({1, 16, 16, 2}, Activation::rectifier, rng), {}, 0);
  std::vector<Transition> ts;
  for (int i = 0; i < 32; ++i) {
    auto t = make_transition(rng.uniform(-1, 1), true);
    t.action = i % 2;
    ts.push_back(t);
  }
  const double first = agent.update(pointers(ts));
  double last = first;
  for (int k = 0; k < 300; ++k) last = agent.update(pointers(ts));
  CHECK(last < 0.5 * first);
}

}

TEST_SUITE("actor-critic") {

TEST_CASE("gamma 0 targets equal rewards") {
  Rng rng(10);
  Hyperparameters hp = Hyperparameters::defaults(Algorithm::ddpg);
  hp.gamma = 0.0;
  ActorCriticAgent agent(Algorithm::ddpg, 3, unit_box(), hp, 1);
  const auto ts = random_box_batch(rng, 10, 3, false);
  const Vector y = agent.targets(pointers(ts));
  for (int i = 0; i < 10; ++i) CHECK(y(i) == ts[static_cast<std::size_t>(i)].reward);
}

TEST_CASE("DDPG critic with a frozen actor converges to the least-squares fit") {
  // Linear critic q = w_s s + w_a a + b on absorbing transitions with
  // quadratic-in-action rewards: the fixed point is ordinary least squares.
  Rng rng(11);
  std::vector<Transition> ts;
  for (int i = 0; i < 40; ++i) {
    Transition t;
    t.observation = random_vector(1, rng);
    const double a = rng.uniform(-2, 2);
    t.action = Vector(Vector::Constant(1, a));
    t.reward = 0.3 * t.observation(0) - 0.5 * a * a + 0.2 * a + 0.1;
    t.next_observation = random_vector(1, rng);
    t.terminal = true;
    ts.push_back(std::move(t));
  }
  // Normal equations for [s, a, 1].
  double XtX[3][3] = {}, Xty[3] = {};
  for (const auto& t : ts) {
    const double row[3] = {t.observation(0), std::get<Vector>(t.action)(0), 1.0};
    for (int i = 0; i < 3; ++i) {
      Xty[i] += row[i] * t.reward;
      for (int j = 0; j < 3; ++j) XtX[i][j] += row[i] * row[j];
    }
  }
  // Gaussian elimination.
  double A[3][4];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) A[i][j] = XtX[i][j];
    A[i][3] = Xty[i];
  }
  for (int c = 0; c < 3; ++c)
    for (int r = c + 1; r < 3; ++r) {
      const double f = A[r][c] / A[c][c];
      for (int k = c; k < 4; ++k) A[r][k] -= f * A[c][k];
    }
  double beta[3];
  for (int i = 2; i >= 0; --i) {
    double s = A[i][3];
    for (int k = i + 1; k < 3; ++k) s -= A[i][k] * beta[k];
    beta[i] = s / A[i][i];
  }

  Hyperparameters hp = Hyperparameters::defaults(Algorithm::ddpg);
  hp.actor_learning_rate = 0.0;
  hp.q_learning_rate = 1e-2;
  const DenseNet actor({DenseLayer{Matrix::Constant(1, 1, 0.3), Vector::Zero(1), Activation::identity}});
  const DenseNet critic({DenseLayer{Matrix::Zero(1, 2), Vector::Zero(1), Activation::identity}});
  ActorCriticAgent agent(Algorithm::ddpg, unit_box(), actor, {critic}, hp, 0);
  for (int k = 0; k < 1000; ++k) agent.update(pointers(ts));
  const auto& L = agent.critic(0).layers()[0];
  CHECK(std::abs(L.weight(0, 0) - beta[0]) <= 1e-3);
  CHECK(std::abs(L.weight(0, 1) - beta[1]) <= 1e-3);
  CHECK(std::abs(L.bias(0) - beta[2]) <= 1e-3);
  CHECK(agent.actor().layers()[0].weight(0, 0) == 0.3);
}

TEST_CASE("tau 1 makes targets equal the online nets after one update") {
  Rng rng(12);
  Hyperparameters hp = Hyperparameters::defaults(Algorithm::ddpg);
  hp.tau = 1.0;
  ActorCriticAgent agent(Algorithm::ddpg, 3, unit_box(), hp, 2);
  const auto ts = random_box_batch(rng, 20, 3, true);
  agent.update(pointers(ts));
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(agent.actor_target().layers()[k].weight == agent.actor().layers()[k].weight);
    CHECK(agent.critic_target(0).layers()[k].weight == agent.critic(0).layers()[k].weight);
  }
}

TEST_CASE("TD3 with zero target noise and identical twins equals the DDPG target") {
  Rng rng(13);
  const DenseNet actor = random_net({3, 8, 1}, Activation::rectifier, rng);
  const DenseNet critic = random_net({4, 8, 1}, Activation::rectifier, rng);
  Hyperparameters hp = Hyperparameters::defaults(Algorithm::td3);
  hp.target_noise = 0.0;
  ActorCriticAgent td3(Algorithm::td3, unit_box(), actor, {critic, critic}, hp, 0);
  ActorCriticAgent ddpg(Algorithm::ddpg, unit_box(), actor, {critic}, hp, 0);
  const auto ts = random_box_batch(rng, 30, 3, true);
  CHECK(td3.targets(pointers(ts)) == ddpg.targets(pointers(ts)));
}

TEST_CASE("TD3 bootstraps with the smaller twin") {
  Rng rng(14);
  const DenseNet actor = random_net({3, 8, 1}, Activation::rectifier, rng);
  Hyperparameters hp = Hyperparameters::defaults(Algorithm::td3);
  hp.gamma = 0.9;
  ActorCriticAgent agent(Algorithm::td3, unit_box(), actor, {constant_net(4, 2.0), constant_net(4, 5.0)}, hp, 0);
  const auto ts = random_box_batch(rng, 10, 3, false);
  const Vector y = agent.targets(pointers(ts));
  for (int i = 0; i < 10; ++i) CHECK(y(i) == doctest::Approx(ts[static_cast<std::size_t>(i)].reward + 0.9 * 2.0).epsilon(1e-15));
}

TEST_CASE("TD3 bootstrap never exceeds either target critic") {
  Rng rng(15);
  Hyperparameters hp = Hyperparameters::defaults(Algorithm::td3);
  hp.target_noise = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    ActorCriticAgent agent(Algorithm::td3, 3, unit_box(), hp, static_cast<std::uint64_t>(trial));
    const auto ts = random_box_batch(rng, 16, 3, false);
    const Vector y = agent.targets(pointers(ts));
    for (std::size_t j = 0; j < ts.size(); ++j) {
      const Vector a = agent.box().clip(
          (agent.box().high + agent.box().low) / 2 +
          Vector(((agent.box().high - agent.box().low) / 2).array() *
                 agent.actor_target().forward(ts[j].next_observation).col(0).array().tanh()));
      Vector in(4);
      in << ts[j].next_observation, a;
      const double bootstrap = (y(static_cast<Eigen::Index>(j)) - ts[j].reward) / hp.gamma;
      for (std::size_t c = 0; c < 2; ++c) CHECK(bootstrap <= agent.critic_target(c).forward(in)(0, 0) + 1e-12);
    }
  }
}

TEST_CASE("TD3 delays actor and target updates") {
  Rng rng(16);
  Hyperparameters hp = Hyperparameters::defaults(Algorithm::td3);
  ActorCriticAgent agent(Algorithm::td3, 3, unit_box(), hp, 3);
  const auto ts = random_box_batch(rng, 20, 3, true);
  for (long idx = 0; idx < 6; ++idx) {
    const Matrix actor_before = agent.actor().layers()[0].weight;
    const Matrix target_before = agent.critic_target(1).layers()[0].weight;
    const auto losses = agent.update(pointers(ts), idx);
    if (idx % 2 == 1) {
      CHECK(agent.actor().layers()[0].weight == actor_before);
      CHECK(agent.critic_target(1).layers()[0].weight == target_before);
      CHECK_FALSE(losses.actor.has_value());
    } else {
      CHECK(agent.actor().layers()[0].weight != actor_before);
      CHECK(losses.actor.has_value());
    }
  }
}

TEST_CASE("actions respect the box") {
  Rng rng(17);
  ActorCriticAgent agent(Algorithm::td3, 3, unit_box(0, 2), Hyperparameters::defaults(Algorithm::td3), 4);
  for (int i = 0; i < 1000; ++i) {
    const Vector o = random_vector(3, rng, -10, 10);
    CHECK(agent.box().contains(agent.act(o, true)));
    CHECK(agent.box().contains(agent.deterministic_action(o)));
    CHECK(agent.box().contains(agent.random_action()));
  }
}

TEST_CASE("TD3 requires two critics") {
  Rng rng(18);
  const DenseNet actor = random_net({3, 8, 1}, Activation::rectifier, rng);
  const DenseNet critic = random_net({4, 8, 1}, Activation::rectifier, rng);
  CHECK_THROWS_AS(ActorCriticAgent(Algorithm::td3, unit_box(), actor, {critic}, {}, 0), error);
}

}

TEST_SUITE("checkpoints") {

TEST_CASE("checkpoint round trip preserves the networks exactly") {
  Rng rng(19);
  const auto dir = support::temp_dir("checkpoints");
  TrainedAgent dqn{"acrobot", DqnAgent(6, 3, Hyperparameters::defaults(Algorithm::dqn), 1)};
  save_checkpoint(dqn, (dir / "dqn.json").string());
  const TrainedAgent back = load_checkpoint((dir / "dqn.json").string());
  CHECK(back.env_id == "acrobot");
  CHECK(back.algorithm() == Algorithm::dqn);
  const Vector o = random_vector(6, rng);
  CHECK(back.dqn().q_values(o) == dqn.dqn().q_values(o));

  TrainedAgent td3{"pendulum", ActorCriticAgent(Algorithm::td3, 3, unit_box(), Hyperparameters::defaults(Algorithm::td3), 2)};
  save_checkpoint(td3, (dir / "td3.json").string());
  const TrainedAgent back2 = load_checkpoint((dir / "td3.json").string());
  CHECK(back2.algorithm() == Algorithm::td3);
  const Vector p = random_vector(3, rng);
  CHECK(back2.actor_critic().deterministic_action(p) == td3.actor_critic().deterministic_action(p));
  CHECK(back2.actor_critic().q_value(p, Vector::Constant(1, 0.5), 1) ==
        td3.actor_critic().q_value(p, Vector::Constant(1, 0.5), 1));
}

TEST_CASE("loading a missing checkpoint is an I/O error") {
  try {
    load_checkpoint("/nonexistent/model.json");
    FAIL("expected an error");
  } catch (const error& e) {
    CHECK(e.code() == errc::io);
  }
}

TEST_CASE("hyperparameter overrides reject unknown keys") {
  Hyperparameters hp;
  CHECK_THROWS_AS(hp.apply({{"learning_rate", 0.1}}), error);
  hp.apply({{"gamma", 0.9}, {"batch_size", 32}});
  CHECK(hp.gamma == 0.9);
  CHECK(hp.batch_size == 32);
}

}
