#include <doctest.h>

#include <cmath>

#include "core/checkpoint.hpp"
#include "core/gradcheck.hpp"
#include "core/tensor.hpp"

using namespace ap;
using namespace ap::ops;

TEST_CASE("elementwise add") {
  Tensor a = Tensor::from({1, 2});
  Tensor b = Tensor::from({3, 4});
  Tensor c = add(a, b);
  CHECK(c.at(0) == 4.0);
  CHECK(c.at(1) == 6.0);
}

TEST_CASE("matmul identity leaves operand unchanged") {
  Tensor id = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i) id.at(static_cast<size_t>(i * 3 + i)) = 1.0;
  Rng rng(7);
  Tensor x = Tensor::uniform_init({3, 5}, 2.0, rng, false);
  Tensor y = matmul(id, x);
  for (size_t i = 0; i < x.size(); ++i) CHECK(y.at(i) == doctest::Approx(x.at(i)).epsilon(1e-15));
}

TEST_CASE("softmax of equal logits is uniform and sums to one") {
  Tensor x = Tensor::from({0, 0, 0});
  Tensor p = softmax(x);
  for (size_t i = 0; i < 3; ++i) CHECK(p.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-14));

  Rng rng(3);
  for (int round = 0; round < 50; ++round) {
    Tensor logits = Tensor::uniform_init({5}, 10.0, rng, false);
    Tensor sm = softmax(logits);
    double total = 0;
    for (size_t i = 0; i < sm.size(); ++i) {
      CHECK(sm.at(i) > 0.0);
      CHECK(sm.at(i) < 1.0);
      total += sm.at(i);
    }
    CHECK(std::fabs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("backward of sum(x*x) is 2x") {
  Tensor x = Tensor::from({1, 2, 3}, true);
  Tape tape;
  Tensor loss = sum(mul(x, x));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  CHECK(x.grad()[2] == doctest::Approx(6.0));
}

TEST_CASE("sigmoid gradient at zero is a quarter") {
  Tensor x = Tensor::scalar(0.0, true);
  Tape tape;
  Tensor y = sigmoid(x);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("backward requires scalar output") {
  Tensor x = Tensor::from({1, 2}, true);
  Tape tape;
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), Error);
}

TEST_CASE("shape mismatch raises dimension error") {
  Tensor a = Tensor::from({1, 2, 3});
  Tensor b = Tensor::from({1, 2});
  CHECK_THROWS_AS(add(a, b), Error);
}

TEST_CASE("division by zero carries the offending index") {
  Tensor a = Tensor::from({1, 1});
  Tensor b = Tensor::from({2, 0});
  try {
    div(a, b);
    FAIL("expected domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
    CHECK(std::string(e.what()).find("index 1") != std::string::npos);
  }
}

TEST_CASE("clamp gradient: identity strictly inside, zero outside, pass-through at bounds") {
  Tensor x = Tensor::from({-2.0, -1.0, 0.3, 1.0, 1.7}, true);
  Tape tape;
  Tensor y = sum(clamp(x, -1.0, 1.0));
  tape.backward(y);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 1.0);
  CHECK(x.grad()[3] == 1.0);
  CHECK(x.grad()[4] == 0.0);
}

TEST_CASE("backward is deterministic bit for bit") {
  Rng rng(11);
  Tensor w = Tensor::uniform_init({4, 4}, 1.0, rng);
  Tensor x = Tensor::uniform_init({4, 2}, 1.0, rng);
  auto run = [&]() {
    w.zero_grad();
    x.zero_grad();
    Tape tape;
    Tensor loss = sum(tanh(matmul(w, x)));
    tape.backward(loss);
    return std::make_pair(w.grad(), x.grad());
  };
  auto [gw1, gx1] = run();
  auto [gw2, gx2] = run();
  CHECK(gw1 == gw2);
  CHECK(gx1 == gx2);
}

TEST_CASE("no recording without an active tape") {
  Tensor x = Tensor::from({1, 2}, true);
  Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("grad_check on linear and smooth functions") {
  Tensor x = Tensor::from({0.5, -0.3});
  double err_linear = grad_check([](std::vector<Tensor>& p) { return sum(p[0]); }, {x}, 1e-5);
  CHECK(err_linear <= 1e-10);
  double err_tanh =
      grad_check([](std::vector<Tensor>& p) { return sum(ops::tanh(p[0])); }, {x}, 1e-5);
  CHECK(err_tanh <= 1e-6);
}

TEST_CASE("all primitives pass the finite-difference suite") {
  auto cases = primitive_gradcheck_cases(20240817, 1e-4);
  CHECK(cases.size() >= 20);
  for (const auto& c : cases) {
    INFO(c.name, " max rel err ", c.max_rel_err);
    CHECK(c.passed);
  }
}

TEST_CASE("huber matches its closed form") {
  Tensor d = Tensor::from({0.0, 0.5, 2.0, -2.0});
  Tensor h = ops::huber(d, 1.0);
  CHECK(h.at(0) == doctest::Approx(0.0));
  CHECK(h.at(1) == doctest::Approx(0.125));
  CHECK(h.at(2) == doctest::Approx(1.5));
  CHECK(h.at(3) == doctest::Approx(1.5));
}

TEST_CASE("checkpoint round trip preserves names, shapes, values") {
  Checkpoint ck;
  ck.config_json = "{\"encoder\":\"tiny_conv\"}";
  Rng rng(5);
  ck.entries.emplace_back("phi.w", Tensor::uniform_init({3, 4}, 1.0, rng, false));
  ck.entries.emplace_back("gamma.b", Tensor::uniform_init({7}, 1.0, rng, false));
  std::string path = "/tmp/ap_test_ck.bin";
  save_checkpoint(ck, path);
  Checkpoint re = load_checkpoint(path);
  CHECK(re.version == ck.version);
  CHECK(re.config_json == ck.config_json);
  CHECK(re.config_hash() == ck.config_hash());
  REQUIRE(re.entries.size() == 2);
  CHECK(re.entries[0].first == "phi.w");
  CHECK(re.entries[1].first == "gamma.b");
  CHECK(re.entries[0].second.shape() == Shape{3, 4});
  CHECK(re.entries[0].second.values() == ck.entries[0].second.values());
  CHECK(re.find("gamma.b") != nullptr);
  CHECK(re.find("missing") == nullptr);
}

TEST_CASE("sqrt and log raise domain errors with the offending index") {
  Tensor neg = Tensor::from({1.0, -0.5});
  try {
    ops::sqrt(neg);
    FAIL("expected domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
    CHECK(std::string(e.what()).find("index 1") != std::string::npos);
  }
  Tensor zero = Tensor::from({0.0, 2.0});
  CHECK_THROWS_AS(ops::log(zero), Error);
}
