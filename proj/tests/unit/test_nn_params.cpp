#include <cmath>
#include <filesystem>

#include "assr/errors.hpp"
#include "assr/nn/ops.hpp"
#include "assr/nn/params.hpp"
#include "doctest.h"

using namespace assr;
using namespace assr::nn;

TEST_CASE("parameter creation and groups") {
  ParamStore store(1);
  store.set_trainable(ParamGroup::kFidelity, true);
  const Var a = store.create("a", ParamGroup::kFidelity, {2, 3}, Init::kNormal);
  const Var b = store.create("b", ParamGroup::kAttention, {4}, Init::kOnes);
  const Var c = store.create("c", ParamGroup::kAttention, {3, 3, 1, 1}, Init::kIdentity);
  CHECK(a.requires_grad());
  CHECK_FALSE(b.requires_grad());
  CHECK(b.value() == Tensor({4}, 1.0));
  CHECK(c.value() == Tensor({3, 3, 1, 1}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  CHECK(store.parameter_count() == 6 + 4 + 9);
  CHECK(store.trainable_params().size() == 1);
  CHECK(store.group_params(ParamGroup::kAttention).size() == 2);
  CHECK_THROWS_AS(store.create("a", ParamGroup::kFidelity, {1}, Init::kZeros), InvalidArgument);
  CHECK_THROWS_AS(store.get("nope"), InvalidArgument);

  store.set_trainable(ParamGroup::kAttention, true);
  CHECK(b.requires_grad());
  store.freeze_all();
  CHECK_FALSE(a.requires_grad());
}

TEST_CASE("same seed gives the same weights") {
  ParamStore s1(9), s2(9), s3(10);
  CHECK(s1.create("w", ParamGroup::kBackboneCore, {5, 5}, Init::kNormal).value() ==
        s2.create("w", ParamGroup::kBackboneCore, {5, 5}, Init::kNormal).value());
  CHECK_FALSE(s1.create("v", ParamGroup::kBackboneCore, {5}, Init::kNormal).value() ==
              s3.create("v", ParamGroup::kBackboneCore, {5}, Init::kNormal).value());
}

TEST_CASE("adam matches the hand formula") {
  ParamStore store(2);
  store.set_trainable(ParamGroup::kFidelity, true);
  Var w = store.create("w", ParamGroup::kFidelity, {2}, Init::kZeros);
  w.mutable_value() = Tensor({2}, {1.0, -2.0});
  Adam opt(store.trainable_params(), 0.1);
  double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {1.0, -2.0};
  for (int step = 1; step <= 3; ++step) {
    // loss = sum(w^2) -> grad 2w
    backward(sum(mul(w, w)));
    for (int i = 0; i < 2; ++i) {
      const double g = 2 * ref[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, step)), vh = v[i] / (1 - std::pow(0.999, step));
      ref[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    opt.step();
    CHECK(w.grad().empty());
    CHECK(w.value()[0] == doctest::Approx(ref[0]).epsilon(1e-14));
    CHECK(w.value()[1] == doctest::Approx(ref[1]).epsilon(1e-14));
  }

  Adam frozen(store.trainable_params(), 0.0);
  const Tensor before = w.value();
  backward(sum(mul(w, w)));
  frozen.step();
  CHECK(w.value() == before);
}

TEST_CASE("checkpoint round trip") {
  const auto path = std::filesystem::temp_directory_path() / "assr-test-ckpt.bin";
  ParamStore a(3), b(4);
  for (auto* s : {&a, &b}) {
    s->create("x.w", ParamGroup::kBackboneCore, {3, 2}, Init::kNormal);
    s->create("x.b", ParamGroup::kAttention, {5}, Init::kNormal);
  }
  a.save(path);
  const auto names = b.load(path);
  CHECK(names.size() == 2);
  CHECK(a.get("x.w").value() == b.get("x.w").value());
  CHECK(a.get("x.b").value() == b.get("x.b").value());
  CHECK(a.serialize() == b.serialize());
  CHECK(a.group_hash(ParamGroup::kAttention) == b.group_hash(ParamGroup::kAttention));

  ParamStore wrong(5);
  wrong.create("x.w", ParamGroup::kBackboneCore, {2, 3}, Init::kNormal);
  CHECK_THROWS_AS(wrong.load(path), FormatError);

  auto bytes = a.serialize();
  bytes[0] = 'X';
  CHECK_THROWS_AS(b.deserialize(bytes), FormatError);
  bytes = a.serialize();
  bytes[4] = 2;
  CHECK_THROWS_AS(b.deserialize(bytes), FormatError);
  bytes = a.serialize();
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(n));
    CHECK_THROWS_AS(b.deserialize(cut), FormatError);
  }
  bytes.push_back(0);
  CHECK_THROWS_AS(b.deserialize(bytes), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("copy_prefix and group hash") {
  ParamStore s(6);
  s.create("src.a", ParamGroup::kBackboneCore, {3}, Init::kNormal);
  s.create("src.b", ParamGroup::kBackboneCore, {2}, Init::kNormal);
  s.create("dst.a", ParamGroup::kFidelity, {3}, Init::kZeros);
  s.create("dst.b", ParamGroup::kFidelity, {4}, Init::kZeros);  // shape differs, skipped
  s.create("dst.c", ParamGroup::kFidelity, {1}, Init::kZeros);  // no source
  const auto h = s.group_hash(ParamGroup::kFidelity);
  CHECK(s.copy_prefix("src.", "dst.") == 1);
  CHECK(s.get("dst.a").value() == s.get("src.a").value());
  CHECK(s.group_hash(ParamGroup::kFidelity) != h);
}
