#include "doctest.h"
#include "support.hpp"
#include "tb/train.hpp"

using namespace tb;
using namespace tb::train;

TEST_CASE("scalar Nesterov step on J = theta^2 / 2") {
  const double theta = 1.0, v = 0.5, lr = 0.1, mu = 0.9;
  const double lookahead = theta - lr * mu * v;
  CHECK(lookahead == doctest::Approx(0.955));
  const ScalarNag next = nag_step(theta, v, lookahead, lr, mu);
  CHECK(next.velocity == doctest::Approx(1.405));
  CHECK(next.param == doctest::Approx(0.8595));

  const ScalarNag sgd = nag_step(2.0, 7.0, 0.3, 0.5, 0.0);
  CHECK(sgd.param == 2.0 - 0.5 * 0.3);
  const ScalarNag still = nag_step(2.0, 0.0, 0.0, 0.5, 0.9);
  CHECK(still.param == 2.0);
}

TEST_CASE("tensor Nesterov step matches the scalar form elementwise") {
  Tensor p({3}, {1.0, -2.0, 0.25});
  std::vector<Tensor> v{Tensor({3}, {0.5, 0.0, -1.0})};
  const std::vector<Tensor> g{Tensor({3}, {0.3, -0.7, 2.0})};
  const Tensor p0 = p, v0 = v[0];
  Tensor* params[] = {&p};
  nag_step(params, v, g, 0.1, 0.9);
  for (std::size_t i = 0; i < 3; ++i) {
    const ScalarNag s = nag_step(p0[i], v0[i], g[0][i], 0.1, 0.9);
    CHECK(p[i] == s.param);
    CHECK(v[0][i] == s.velocity);
  }

  Tensor q({3}, {1.0, 2.0, 3.0});
  std::vector<Tensor> vz{Tensor({3})};
  Tensor* qp[] = {&q};
  nag_step(qp, vz, g, 0.2, 0.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(q[i] == static_cast<double>(i + 1) - 0.2 * g[0][i]);

  std::vector<Tensor> wrong{Tensor({2})};
  CHECK_THROWS(nag_step(qp, wrong, g, 0.2, 0.0));
  std::vector<Tensor> none;
  CHECK_THROWS_AS(nag_step(qp, none, g, 0.2, 0.0), ContractError);
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.validate();
  for (auto edit : {+[](TrainConfig& t) { t.epochs = -1; }, +[](TrainConfig& t) { t.batch_size = 0; },
                    +[](TrainConfig& t) { t.learning_rate = 0.0; },
                    +[](TrainConfig& t) { t.momentum = 1.0; }}) {
    TrainConfig bad;
    edit(bad);
    CHECK_THROWS_AS(bad.validate(), ContractError);
  }
  TrainConfig custom;
  custom.epochs = 9;
  custom.learning_rate = 0.01;
  custom.seed = 4;
  TrainConfig back;
  back.apply_kv(custom.to_kv());
  CHECK(back.to_kv() == custom.to_kv());
}

TEST_CASE("zero epochs leave parameters unchanged") {
  const auto ds = data::synth_blobs(1, 40, 4, 8);
  const auto net = diffnet::build_architecture("cnn_a", ds.image_shape(), 4, 3);
  TrainConfig c;
  c.epochs = 0;
  CHECK(train::train(net, ds, c).net == net);
}

TEST_CASE("training is deterministic and reduces loss") {
  const auto ds = data::synth_blobs(2, 200, 4, 8);
  const auto net = diffnet::build_architecture("cnn_b", ds.image_shape(), 4, 3);
  TrainConfig c;
  c.epochs = 3;
  c.seed = 11;
  const auto a = train::train(net, ds, c), b = train::train(net, ds, c);
  CHECK(a.net == b.net);
  CHECK(a.final_loss < a.initial_loss);
  const auto [loss, acc] = evaluate(a.net, ds);
  CHECK(loss == doctest::Approx(a.final_loss).epsilon(1e-12));
  CHECK(acc == doctest::Approx(a.train_accuracy));
  c.seed = 12;
  CHECK_FALSE(train::train(net, ds, c).net == a.net);
}

TEST_CASE("a single repeated sample is memorised") {
  const auto base = data::synth_blobs(5, 4, 4, 8);
  const std::vector<std::size_t> idx(8, 2);
  const auto ds = base.subset(idx);
  TrainConfig c;
  c.epochs = 50;
  c.batch_size = 4;
  const auto r = train::train(diffnet::build_architecture("mlp", ds.image_shape(), 4, 1), ds, c);
  CHECK(r.train_accuracy == 1.0);
}

TEST_CASE("empty dataset is rejected") {
  const auto net = diffnet::build_architecture("linear", {1, 8, 8}, 2, 1);
  const auto ds = data::synth_blobs(1, 4, 2, 8);
  const std::vector<std::size_t> none;
  CHECK_THROWS(train::train(net, ds.subset(none), TrainConfig{}));
}

TEST_CASE("adversarial training at zero budget equals plain training") {
  const auto ds = data::synth_blobs(3, 120, 3, 8);
  const auto net = diffnet::build_architecture("cnn_a", ds.image_shape(), 3, 5);
  TrainConfig c;
  c.epochs = 2;
  c.seed = 6;
  attacks::AttackConfig a;
  a.epsilon = 0.0;
  CHECK(adversarial_train(net, ds, c, a).net == train::train(net, ds, c).net);

  a.epsilon = 8.0 / 255.0;
  const auto adv = adversarial_train(net, ds, c, a);
  CHECK(adv.net == adversarial_train(net, ds, c, a).net);
  CHECK_FALSE(adv.net == train::train(net, ds, c).net);
}

TEST_CASE("inner PGD settings") {
  const auto c = inner_pgd_config(0.08);
  CHECK(c.steps == 7);
  CHECK(c.alpha() == doctest::Approx(0.02));
  CHECK(c.epsilon == 0.08);
}
