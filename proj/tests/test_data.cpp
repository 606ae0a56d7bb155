#include <algorithm>
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "tb/data.hpp"
#include "tb/train.hpp"

using namespace tb;
using namespace tb::data;

namespace {

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> cat(std::initializer_list<std::vector<std::uint8_t>> parts) {
  std::vector<std::uint8_t> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace

TEST_CASE("dataset constructor enforces invariants") {
  CHECK_THROWS_AS(Dataset(Tensor({2, 1, 2, 2}, 0.5), {0}, 2), ContractError);
  CHECK_THROWS_AS(Dataset(Tensor({1, 1, 2, 2}, 0.5), {2}, 2), ContractError);
  CHECK_THROWS_AS(Dataset(Tensor({1, 1, 2, 2}, 1.5), {0}, 2), ContractError);
  CHECK_THROWS_AS(Dataset(Tensor({1, 1, 2, 2}, 0.5), {0}, 0), ContractError);
  const Dataset ok(Tensor({3, 1, 2, 2}, 0.5), {0, 1, 0}, 2);
  CHECK(ok.head(2).size() == 2);
  CHECK(ok.head(10).size() == 3);
}

TEST_CASE("hand-built IDX files decode") {
  tbtest::TempDir dir("idx");
  write_bytes(dir / "img", cat({be32(kIdxImagesMagic), be32(2), be32(1), be32(2), {0, 255, 51, 128}}));
  write_bytes(dir / "lbl", cat({be32(kIdxLabelsMagic), be32(2), {3, 1}}));
  const Dataset ds = load_idx(dir / "img", dir / "lbl");
  CHECK(ds.images().shape() == Shape{2, 1, 1, 2});
  CHECK(ds.images()[0] == 0.0);
  CHECK(ds.images()[1] == 1.0);
  CHECK(ds.images()[2] == doctest::Approx(0.2));
  CHECK(ds.labels() == std::vector<int>{3, 1});
  CHECK(ds.class_count() == 4);
  CHECK(load_idx(dir / "img", dir / "lbl", 10).class_count() == 10);
}

TEST_CASE("IDX errors are distinct") {
  tbtest::TempDir dir("idxerr");
  write_bytes(dir / "img", cat({be32(kIdxImagesMagic), be32(2), be32(1), be32(2), {0, 255, 51, 128}}));
  write_bytes(dir / "lbl", cat({be32(kIdxLabelsMagic), be32(2), {3, 1}}));
  write_bytes(dir / "lbl3", cat({be32(kIdxLabelsMagic), be32(3), {3, 1, 0}}));
  write_bytes(dir / "badmagic", cat({be32(kIdxImagesMagic), be32(2), {3, 1}}));
  write_bytes(dir / "short", cat({be32(kIdxImagesMagic), be32(2), be32(1), be32(2), {0, 255}}));
  write_bytes(dir / "tiny", {0, 0});

  CHECK_THROWS_AS(read_idx_labels(dir / "badmagic"), IdxMagicError);
  CHECK_THROWS_AS(read_idx_images(dir / "lbl"), IdxMagicError);
  CHECK_THROWS_AS(read_idx_images(dir / "short"), IdxTruncatedError);
  CHECK_THROWS_AS(read_idx_images(dir / "tiny"), IdxTruncatedError);
  CHECK_THROWS_AS(load_idx(dir / "img", dir / "lbl3"), IdxCountMismatchError);
  CHECK_THROWS_AS(read_idx_images(dir / "missing"), IdxError);
}

TEST_CASE("IDX round trip is within one quantization step") {
  tbtest::TempDir dir("idxrt");
  const Dataset ds = synth_blobs(3, 40, 4, 8);
  save_idx(ds, dir / "i", dir / "l");
  const Dataset back = load_idx(dir / "i", dir / "l", 4);
  CHECK(back.labels() == ds.labels());
  CHECK(max_abs_diff(back.images(), ds.images()) <= 0.5 / 255.0 + 1e-12);
  CHECK(quantize_pixel(1.7) == 255);
  CHECK(quantize_pixel(-0.2) == 0);
  CHECK(quantize_pixel(0.5) == 128);
}

TEST_CASE("f64 sidecar is exact") {
  tbtest::TempDir dir("f64");
  const Tensor t = tbtest::random_images({3, 1, 4, 5}, 11);
  write_f64_tensor(dir / "t", t);
  CHECK(bitwise_equal(read_f64_tensor(dir / "t"), t));
  write_bytes(dir / "bad", {'X', 'B', 'F', '6', '4', '1'});
  CHECK_THROWS_AS(read_f64_tensor(dir / "bad"), IdxMagicError);
}

TEST_CASE("synth_blobs is deterministic and round-robin") {
  const Dataset a = synth_blobs(7, 60, 3, 12), b = synth_blobs(7, 60, 3, 12);
  CHECK(bitwise_equal(a.images(), b.images()));
  CHECK(a.labels() == b.labels());
  CHECK_FALSE(bitwise_equal(a.images(), synth_blobs(8, 60, 3, 12).images()));

  const Dataset two = synth_blobs(1, 100, 2, 8);
  CHECK(std::count(two.labels().begin(), two.labels().end(), 0) == 50);
  for (std::size_t i = 0; i < two.size(); ++i) CHECK(two.labels()[i] == static_cast<int>(i % 2));
  CHECK(two.image_shape() == diffnet::FeatureShape{1, 8, 8});

  CHECK_THROWS_AS(synth_blobs(1, 3, 4, 8), ContractError);
  CHECK_THROWS_AS(synth_blobs(1, 10, 2, 7), ContractError);
  SynthParams bad;
  bad.contrast_min = 0.0;
  CHECK_THROWS_AS(synth_blobs(1, 10, 2, 8, bad), ContractError);
}

TEST_CASE("a two-layer net learns the synthetic corpus") {
  const Dataset ds = synth_blobs(1, 2000, 4, 16);
  const auto net = diffnet::build_architecture("mlp", ds.image_shape(), 4, 1);
  train::TrainConfig cfg;
  cfg.seed = 1;
  const auto result = train::train(net, ds, cfg);
  INFO("train accuracy " << result.train_accuracy);
  CHECK(result.train_accuracy >= 0.90);
}

TEST_CASE("split partitions the input") {
  const Dataset ds = synth_blobs(2, 100, 5, 8);
  const auto [tr, te] = split(ds, 0.5, 9);
  CHECK(tr.size() == 50);
  CHECK(te.size() == 50);
  const auto [tr2, te2] = split(ds, 0.5, 9);
  CHECK(bitwise_equal(tr.images(), tr2.images()));
  CHECK(tr.labels() == tr2.labels());

  // Every sample is distinct, so matching rows identify the source index.
  std::vector<std::vector<double>> all, parts;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto r = ds.images().row(i);
    all.emplace_back(r.begin(), r.end());
    all.back().push_back(ds.labels()[i]);
  }
  for (const Dataset* d : {&tr, &te})
    for (std::size_t i = 0; i < d->size(); ++i) {
      auto r = d->images().row(i);
      parts.emplace_back(r.begin(), r.end());
      parts.back().push_back(d->labels()[i]);
    }
  std::sort(all.begin(), all.end());
  std::sort(parts.begin(), parts.end());
  CHECK(all == parts);

  CHECK_THROWS_AS(split(ds, 0.0, 1), ContractError);
  CHECK_THROWS_AS(split(ds, 1.0, 1), ContractError);
  CHECK_THROWS_AS(split(ds, 0.001, 1), ContractError);
}
