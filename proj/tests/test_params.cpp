#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gacl/common.hpp"
#include "gacl/params.hpp"

using namespace gacl;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("parameter init is deterministic and name-keyed") {
  ParameterStore a(42), b(42), c(43);
  Tensor w1 = a.create("w", {4, 8}, ParamKind::Weight);
  // creation order must not matter: create extra params first in b
  b.create("other", {3}, ParamKind::Bias);
  Tensor w2 = b.create("w", {4, 8}, ParamKind::Weight);
  Tensor w3 = c.create("w", {4, 8}, ParamKind::Weight);
  for (int64_t i = 0; i < w1.numel(); ++i) {
    CHECK(w1.values()[i] == w2.values()[i]);
  }
  bool any_diff = false;
  for (int64_t i = 0; i < w1.numel(); ++i) any_diff = any_diff || w1.values()[i] != w3.values()[i];
  CHECK(any_diff);  // different seed, different draw

  // weight bound 1/sqrt(fan_in)
  for (double v : w1.values()) CHECK(std::fabs(v) <= 1.0 / std::sqrt(8.0));
}

TEST_CASE("init families") {
  ParameterStore ps(7);
  Tensor b = ps.create("b", {5}, ParamKind::Bias);
  for (double v : b.values()) CHECK(v == 0.0);
  Tensor s = ps.create("slope", {}, ParamKind::Activation);
  CHECK(s.item() == 0.25);
  Tensor e = ps.create("emb", {100, 4}, ParamKind::Embedding);
  double mu = 0;
  for (double v : e.values()) mu += v;
  mu /= static_cast<double>(e.numel());
  CHECK(std::fabs(mu) < 0.02);  // normal(0, 0.1) sample mean

  CHECK(ps.total_parameters() == 5 + 1 + 400);
  CHECK(ps.names().size() == 3);
  CHECK_THROWS_AS(ps.create("b", {5}, ParamKind::Bias), ValidationError);
  CHECK_THROWS_AS(ps.get("nope"), ValidationError);
}

TEST_CASE("adamw hand oracle: first step") {
  ParameterStore ps(1);
  Tensor p = ps.create("p", {}, ParamKind::Bias);
  p.mutable_values()[0] = 1.0;
  AdamW opt(ps, {.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.0});
  double g = 1.0;
  p.accumulate_grad(std::span<const double>(&g, 1));
  opt.step();
  // mhat = 1, vhat = 1 -> p = 1 - 0.1 * 1/(1 + 1e-8)
  CHECK(p.values()[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK_FALSE(p.has_grad());  // grads consumed
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adamw decoupled decay with zero grad") {
  ParameterStore ps(1);
  Tensor p = ps.create("p", {2}, ParamKind::Weight);
  p.mutable_values()[0] = 1.0;
  p.mutable_values()[1] = -2.0;
  AdamW opt(ps, {.lr = 1.0, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.1});
  std::vector<double> g = {0.0, 0.0};
  p.accumulate_grad(g);
  opt.step();
  CHECK(p.values()[0] == doctest::Approx(0.9));
  CHECK(p.values()[1] == doctest::Approx(-1.8));
}

TEST_CASE("decay skips biases and activation slopes unless opted in") {
  ParameterStore ps(1);
  Tensor b = ps.create("b", {2}, ParamKind::Bias);
  Tensor s = ps.create("s", {}, ParamKind::Activation);
  b.mutable_values()[0] = 1.0;
  b.mutable_values()[1] = -2.0;
  AdamW opt(ps, {.lr = 1.0, .weight_decay = 0.1});
  std::vector<double> g2 = {0.0, 0.0};
  double g1 = 0.0;
  b.accumulate_grad(g2);
  s.accumulate_grad(std::span<const double>(&g1, 1));
  opt.step();
  CHECK(b.values()[0] == doctest::Approx(1.0));
  CHECK(b.values()[1] == doctest::Approx(-2.0));
  CHECK(s.values()[0] == doctest::Approx(0.25));

  ParameterStore ps2(1);
  Tensor b2 = ps2.create("b", {1}, ParamKind::Bias);
  b2.mutable_values()[0] = 1.0;
  AdamW opt2(ps2, {.lr = 1.0, .weight_decay = 0.1, .decay_bias = true});
  double z = 0.0;
  b2.accumulate_grad(std::span<const double>(&z, 1));
  opt2.step();
  CHECK(b2.values()[0] == doctest::Approx(0.9));
}

TEST_CASE("parameter kind is recorded") {
  ParameterStore ps(1);
  ps.create("w", {2, 2}, ParamKind::Weight);
  ps.create("b", {2}, ParamKind::Bias);
  CHECK(ps.kind("w") == ParamKind::Weight);
  CHECK(ps.kind("b") == ParamKind::Bias);
  CHECK_THROWS_AS(ps.kind("nope"), ValidationError);
}

TEST_CASE("adamw requires grads") {
  ParameterStore ps(1);
  ps.create("p", {2}, ParamKind::Weight);
  AdamW opt(ps, {});
  CHECK_THROWS_AS(opt.step(), ValidationError);
}

TEST_CASE("checkpoint round trip and failure modes") {
  const std::string path = temp_path("gacl_test_ckpt.bin");
  ParameterStore ps(11);
  ps.create("a", {2, 3}, ParamKind::Weight);
  ps.create("b", {4}, ParamKind::Embedding);
  save_checkpoint(ps, path);

  ParameterStore loaded(99);  // different seed; values must come from the file
  loaded.create("a", {2, 3}, ParamKind::Weight);
  loaded.create("b", {4}, ParamKind::Embedding);
  load_checkpoint(loaded, path);
  Tensor la = loaded.get("a"), pa = ps.get("a"), lb = loaded.get("b"), pb = ps.get("b");
  for (int64_t i = 0; i < 6; ++i) CHECK(la.values()[i] == pa.values()[i]);
  for (int64_t i = 0; i < 4; ++i) CHECK(lb.values()[i] == pb.values()[i]);

  // byte-identical rewrite
  const std::string bytes1 = file_bytes(path);
  save_checkpoint(ps, path);
  CHECK(file_bytes(path) == bytes1);

  ParameterStore wrong_shape(11);
  wrong_shape.create("a", {3, 2}, ParamKind::Weight);
  wrong_shape.create("b", {4}, ParamKind::Embedding);
  CHECK_THROWS_AS(load_checkpoint(wrong_shape, path), ValidationError);

  ParameterStore wrong_set(11);
  wrong_set.create("a", {2, 3}, ParamKind::Weight);
  CHECK_THROWS_AS(load_checkpoint(wrong_set, path), ValidationError);

  CHECK_THROWS_AS(load_checkpoint(ps, temp_path("gacl_missing_ckpt.bin")), IoError);

  std::filesystem::remove(path);
}

TEST_CASE("training-style updates are bit-identical across runs") {
  auto run = [] {
    ParameterStore ps(5);
    Tensor w = ps.create("w", {3, 3}, ParamKind::Weight);
    AdamW opt(ps, {.lr = 1e-2, .weight_decay = 1e-2});
    for (int step = 0; step < 25; ++step) {
      Tensor x = Tensor::constant({3}, {1.0, 2.0, 3.0});
      Tensor y = matmul(w, x);
      backward(sum(mul(y, y)));
      opt.step();
    }
    Tensor w2 = ps.get("w");
    return std::vector<double>(w2.values().begin(), w2.values().end());
  };
  auto a = run();
  auto b = run();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
