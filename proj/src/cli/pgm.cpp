#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tb/cli.hpp"
#include "tb/data.hpp"
#include "tb/rng.hpp"

namespace tb::cli {

void write_pgm(const std::filesystem::path& path, const Pgm& image) {
  if (image.pixels.size() != image.width * image.height)
    throw ContractError("pgm: pixel count does not match width x height");
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "P2\n" << image.width << ' ' << image.height << '\n' << image.maxval << '\n';
  for (std::size_t r = 0; r < image.height; ++r) {
    for (std::size_t c = 0; c < image.width; ++c) {
      if (c) os << ' ';
      os << image.pixels[r * image.width + c];
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Pgm read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  // Drop comments before tokenising.
  std::stringstream clean;
  std::string line;
  while (std::getline(is, line)) clean << line.substr(0, line.find('#')) << '\n';

  std::string magic;
  Pgm img;
  long long w = 0, h = 0, maxval = 0;
  if (!(clean >> magic) || magic != "P2") throw std::runtime_error(path.string() + ": not a plain PGM (P2)");
  if (!(clean >> w >> h >> maxval) || w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw std::runtime_error(path.string() + ": bad PGM header");
  img.width = static_cast<std::size_t>(w);
  img.height = static_cast<std::size_t>(h);
  img.maxval = static_cast<int>(maxval);
  img.pixels.resize(img.width * img.height);
  for (auto& p : img.pixels) {
    long long v = 0;
    if (!(clean >> v)) throw std::runtime_error(path.string() + ": truncated PGM data");
    if (v < 0 || v > maxval) throw std::runtime_error(path.string() + ": PGM value out of range");
    p = static_cast<int>(v);
  }
  return img;
}

Pgm image_grid(const Tensor& benign, const Tensor& adversarial,
               const std::vector<std::size_t>& indices) {
  require_same_shape(benign, adversarial, "image grid");
  if (benign.rank() != 4 || benign.dim(1) != 1)
    throw ContractError("image grid needs single-channel N x 1 x H x W batches");
  if (indices.empty()) throw ContractError("image grid needs at least one index");
  const std::size_t h = benign.dim(2), w = benign.dim(3), gap = 1;
  Pgm img;
  img.width = indices.size() * w + (indices.size() + 1) * gap;
  img.height = 2 * h + 3 * gap;
  img.pixels.assign(img.width * img.height, 255);
  const Tensor* rows[2] = {&benign, &adversarial};
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t t = 0; t < indices.size(); ++t) {
      const auto tile = rows[r]->row(indices[t]);
      const std::size_t top = gap + r * (h + gap), left = gap + t * (w + gap);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          img.pixels[(top + y) * img.width + left + x] = data::quantize_pixel(tile[y * w + x]);
    }
  return img;
}

std::vector<std::size_t> pick_indices(std::size_t size, std::size_t n, std::uint64_t seed) {
  if (n > size) throw ContractError("cannot pick " + std::to_string(n) + " of " + std::to_string(size) + " images");
  std::vector<std::size_t> all(size);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(all.begin(), all.end(), rng.engine());
  all.resize(n);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace tb::cli
