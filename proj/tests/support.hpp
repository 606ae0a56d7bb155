#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "tb/attacks.hpp"
#include "tb/data.hpp"
#include "tb/diffnet.hpp"
#include "tb/rng.hpp"

namespace tbtest {

using tb::Shape;
using tb::Tensor;

/// J(x) = sum over the batch of w . x_n, so every sample's gradient is w.
class LinearOracle final : public tb::attacks::GradientOracle {
 public:
  explicit LinearOracle(std::vector<double> w) : w_(std::move(w)) {}

  tb::attacks::LossGrad evaluate(const Tensor& batch, std::span<const int>) const override {
    ++calls;
    tb::attacks::LossGrad lg{0.0, Tensor(batch.shape())};
    const std::size_t per = batch.size() / batch.dim(0);
    for (std::size_t n = 0; n < batch.dim(0); ++n)
      for (std::size_t i = 0; i < per; ++i) {
        lg.loss += w_[i % w_.size()] * batch[n * per + i];
        lg.grad[n * per + i] = w_[i % w_.size()];
      }
    return lg;
  }

  mutable std::atomic<int> calls{0};

 private:
  std::vector<double> w_;
};

/// Wraps another oracle and counts evaluate() calls.
class CountingOracle final : public tb::attacks::GradientOracle {
 public:
  explicit CountingOracle(const tb::attacks::GradientOracle& inner) : inner_(inner) {}
  tb::attacks::LossGrad evaluate(const Tensor& batch, std::span<const int> labels) const override {
    ++calls;
    return inner_.evaluate(batch, labels);
  }
  mutable std::atomic<int> calls{0};

 private:
  const tb::attacks::GradientOracle& inner_;
};

inline Tensor image(std::vector<double> v, std::size_t n = 1) {
  const std::size_t per = v.size() / n;
  return Tensor({n, 1, 1, per}, std::move(v));
}

inline Tensor random_images(Shape shape, std::uint64_t seed) {
  tb::Rng rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.raw()) v = rng.uniform();
  return t;
}

inline std::vector<int> random_labels(std::size_t n, int classes, std::uint64_t seed) {
  tb::Rng rng(seed);
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.integer(0, classes - 1));
  return y;
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tbench-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace tbtest
