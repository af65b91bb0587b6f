#include <cstring>
#include <random>

#include "assr/errors.hpp"
#include "assr/pipeline.hpp"
#include "assr/rescaler.hpp"
#include "assr/synthetic.hpp"
#include "doctest.h"

using namespace assr;
using namespace assr::pipeline;

namespace {

const ToyDctCodec kToy;

std::vector<std::uint8_t> le32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 24)};
}

std::vector<std::uint8_t> lef(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  return le32(u);
}

CompressedContainer minimal() {
  CompressedContainer c;
  c.crd_enabled = true;
  c.orig_w = 640;
  c.orig_h = 480;
  c.s = 1.5f;
  c.native_qp = 24.0f;
  c.chi_qp = 0.125f;
  c.bitstream = {0xAB, 0xCD};
  return c;
}

EncodingParams params(double s, bool crd, double qp = 24.0) {
  EncodingParams p;
  p.quality = {qp, 1.0};
  p.s = s;
  p.crd_enabled = crd;
  p.caption_enabled = false;
  return p;
}

}  // namespace

TEST_CASE("minimal container wire bytes") {
  std::vector<std::uint8_t> expect = {'A', 'E', 'I', 'C', 1, 0x01, 0, 0};
  for (auto part : {le32(640), le32(480), lef(1.5f), lef(24.0f), lef(0.125f), le32(0), le32(2)})
    expect.insert(expect.end(), part.begin(), part.end());
  expect.push_back(0xAB);
  expect.push_back(0xCD);

  const auto bytes = serialize(minimal());
  CHECK(bytes == expect);
  CHECK(bytes.size() == kContainerOverhead + 2);
  CHECK(deserialize(bytes) == minimal());

  auto with_caption = minimal();
  with_caption.caption_present = true;
  with_caption.caption_bytes = semantics::lz_compress("a red boat");
  with_caption.codec = CodecId::kExternalLearned;
  const auto b2 = serialize(with_caption);
  CHECK(b2[5] == 0x03);
  CHECK(b2[6] == 2);
  CHECK(b2.size() == kContainerOverhead + 2 + with_caption.caption_bytes.size());
  const auto back = deserialize(b2);
  CHECK(back == with_caption);
  CHECK(semantics::lz_decompress(back.caption_bytes) == "a red boat");
}

TEST_CASE("serialize rejects inconsistent containers") {
  auto c = minimal();
  c.caption_present = true;
  CHECK_THROWS_AS(serialize(c), InvalidArgument);
  c = minimal();
  c.version = 2;
  CHECK_THROWS_AS(serialize(c), InvalidArgument);
}

TEST_CASE("malformed containers") {
  const auto good = serialize(minimal());
  auto offset_of = [](std::vector<std::uint8_t> b) -> long {
    try {
      deserialize(b);
    } catch (const FormatError& e) {
      return static_cast<long>(e.offset());
    }
    return -1;
  };
  auto patched = [&](std::size_t i, std::uint8_t v) {
    auto b = good;
    b[i] = v;
    return b;
  };
  CHECK(offset_of(patched(0, 'X')) == 0);
  CHECK(offset_of(patched(3, 'D')) == 0);
  CHECK(offset_of(patched(4, 2)) == 4);
  CHECK(offset_of(patched(5, 0x04)) == 5);
  CHECK(offset_of(patched(6, 7)) == 6);
  CHECK(offset_of(patched(7, 1)) == 7);
  CHECK(offset_of(patched(5, 0x03)) == 28);  // caption flag without caption bytes

  auto zero_w = good;
  std::fill(zero_w.begin() + 8, zero_w.begin() + 12, 0);
  CHECK(offset_of(zero_w) == 8);
  auto small_s = good;
  const auto half = lef(0.5f);
  std::copy(half.begin(), half.end(), small_s.begin() + 16);
  CHECK(offset_of(small_s) == 16);

  auto overflow = good;
  const auto huge = le32(0xFFFFFFF0u);
  std::copy(huge.begin(), huge.end(), overflow.begin() + 28);
  CHECK_THROWS_AS(deserialize(overflow), FormatError);
  try {
    deserialize(overflow);
  } catch (const TruncatedError&) {
    FAIL("overflow reported as truncation");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("overflow") != std::string::npos);
  }

  auto trailing = good;
  trailing.push_back(0);
  CHECK(offset_of(trailing) == static_cast<long>(good.size()));
  CHECK_THROWS_AS(deserialize(std::vector<std::uint8_t>{}), TruncatedError);
}

TEST_CASE("every truncation fails cleanly") {
  auto c = minimal();
  c.caption_present = true;
  c.caption_bytes = semantics::lz_compress("tiny caption");
  c.bitstream = kToy.encode(synthetic::textured_scene(16, 16, 1), {18, 1}).bytes;
  const auto bytes = serialize(c);
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
    INFO("prefix " << n);
    CHECK_THROWS_AS(deserialize(cut), TruncatedError);
  }
}

TEST_CASE("random corruption never escapes as anything but FormatError") {
  const auto bytes = serialize(minimal());
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> pos(0, bytes.size() - 1);
  std::uniform_int_distribution<int> val(0, 255);
  int rejected = 0;
  for (int i = 0; i < 3000; ++i) {
    auto b = bytes;
    for (int k = 0; k < 1 + i % 4; ++k) b[pos(rng)] = static_cast<std::uint8_t>(val(rng));
    if (i % 3 == 0) b.resize(pos(rng));
    try {
      const auto c = deserialize(b);
      CHECK(serialize(c) == b);
    } catch (const FormatError&) {
      ++rejected;
    }
  }
  CHECK(rejected > 0);
}

TEST_CASE("compress at s = 1 wraps the bare anchor stream") {
  const CodecRegistry codecs;
  const Pipeline pipe(codecs);
  for (std::uint64_t seed : {1, 2, 3}) {
    const ImageBuffer img = synthetic::textured_scene(40, 56, seed);
    const auto c = pipe.compress(img, params(1.0, false, 18.0));
    CHECK(c.bitstream == kToy.encode(img, {18.0, 1.0}).bytes);
    CHECK_FALSE(c.caption_present);
    CHECK(c.orig_w == 56);
    CHECK(c.orig_h == 40);
    const ImageBuffer out = pipe.decompress(deserialize(serialize(c)), 20, 0);
    CHECK(out == kToy.decode(kToy.encode(img, {18.0, 1.0})));
  }
}

TEST_CASE("dimension laws") {
  const CodecRegistry codecs;
  const Pipeline pipe(codecs);
  const ImageBuffer img = synthetic::smooth_scene(512, 512, 4);
  const auto c2 = pipe.compress(img, params(2.0, false));
  CHECK(ToyDctCodec::peek_dims(c2.bitstream) == std::pair<int, int>{256, 256});
  CHECK(c2.orig_w == 512);

  const auto c15 = pipe.compress(img, params(1.5, false));
  CHECK(pipe.decode_anchor(c15).height() == 341);
  const ImageBuffer out = pipe.decompress(c15, 1, 0);
  CHECK(out.height() == 512);
  CHECK(out.width() == 512);
  CHECK(out == rescaler::upsample(pipe.decode_anchor(c15), 512, 512));

  const auto r = rate_report(c2);
  CHECK(r.anchor_bpp == measure_bpp(c2.bitstream.size(), 512, 512));
  CHECK(r.total_bpp - r.anchor_bpp == doctest::Approx(36.0 * 8 / 262144).epsilon(1e-12));
  CHECK(r.container_bytes == serialize(c2).size());
  CHECK(r.total_bpp == serialize(c2).size() * 8.0 / 262144);
}

TEST_CASE("quality normalization and scale storage") {
  const CodecRegistry codecs;
  const Pipeline pipe(codecs);
  const ImageBuffer img = synthetic::textured_scene(24, 24, 5);
  auto p = params(1.2, false, 30.0);
  p.quality.chi_qp = 0.0;
  const auto c = pipe.compress(img, p);
  CHECK(c.chi_qp == static_cast<float>(pipe.chi_qp(CodecId::kToyDct, 30.0)));
  CHECK(c.chi_qp > 0.0f);
  CHECK(c.s == 1.2f);
  CHECK(stored_scale(1.2) == static_cast<double>(1.2f));
  CHECK(c.bitstream == kToy.encode(rescaler::downsample(img, stored_scale(1.2)), {30.0, 1.0}).bytes);

  CHECK_THROWS_AS(pipe.compress(img, params(0.8, false)), InvalidArgument);
  auto learned = params(1.0, false);
  learned.codec = CodecId::kExternalLearned;
  CHECK_THROWS_AS(pipe.compress(img, learned), InvalidArgument);
}

TEST_CASE("decode side errors") {
  const CodecRegistry codecs;
  const Pipeline pipe(codecs);
  auto c = pipe.compress(synthetic::textured_scene(16, 16, 6), params(1.0, true));
  CHECK_THROWS_AS(pipe.decompress(c, 4, 0), InvalidArgument);  // no model
  c.codec = CodecId::kExternalTraditional;
  CHECK_THROWS_AS(pipe.decompress(c, 4, 0), FormatError);
}

TEST_CASE("captions travel in the container") {
  const CodecRegistry codecs;
  const semantics::FixedCaptionProvider cap("two cats on a sofa");
  const Pipeline pipe(codecs, nullptr, &cap);
  const ImageBuffer img = synthetic::textured_scene(16, 16, 7);
  auto p = params(1.0, false);
  p.caption_enabled = true;
  const auto c = pipe.compress(img, p);
  CHECK(c.caption_present);
  CHECK(semantics::lz_decompress(c.caption_bytes) == "two cats on a sofa");
  const auto r = rate_report(c);
  CHECK(r.caption_bytes == c.caption_bytes.size());
  CHECK(r.total_bpp > r.anchor_bpp);
  p.caption_enabled = false;
  CHECK_FALSE(pipe.compress(img, p).caption_present);
}

TEST_CASE("restoration path") {
  const CodecRegistry codecs;
  const gen::DiffusionModel model;
  const semantics::FixedCaptionProvider cap("a hill");
  const Pipeline pipe(codecs, &model, &cap);
  auto p = params(1.5, true);
  p.caption_enabled = true;
  const auto c = deserialize(serialize(pipe.compress(synthetic::smooth_scene(40, 48, 8), p)));
  const ImageBuffer a = pipe.decompress(c, 3, 42);
  CHECK(a.height() == 40);
  CHECK(a.width() == 48);
  CHECK(a == pipe.decompress(c, 3, 42));
  CHECK_FALSE(a == pipe.decompress(c, 3, 43));
  CHECK_THROWS_AS(pipe.decompress(c, 0, 42), InvalidArgument);
}

TEST_CASE("anchor rate falls with s on a 16-image corpus") {
  const CodecRegistry codecs;
  const Pipeline pipe(codecs);
  const auto corpus = synthetic::textured_corpus(16, 64, 64, 12);
  double prev = 1e30;
  for (double s : {1.0, 1.2, 1.5, 2.0}) {
    double sum = 0.0;
    for (const auto& img : corpus) {
      const auto r = rate_report(pipe.compress(img, params(s, false)));
      CHECK(r.total_bpp >= r.anchor_bpp);
      sum += r.anchor_bpp;
    }
    CHECK(sum / 16 < prev);
    prev = sum / 16;
  }
}
