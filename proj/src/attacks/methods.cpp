#include <cmath>
#include <thread>

#include "tb/attacks.hpp"

namespace tb::attacks {

namespace {

// x_adv <- project(x_adv + alpha * sign(direction), x, eps)
Tensor sign_step(const Tensor& x_adv, const Tensor& direction, const Tensor& x, double alpha,
                 double eps) {
  require_same_shape(x_adv, direction, "sign step");
  Tensor moved(x_adv.shape());
  const Tensor s = sign(direction);
  for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = x_adv[i] + alpha * s[i];
  return project(moved, x, eps);
}

// g <- mu * g + normalize_l1(grad)
void accumulate(Tensor& g, const Tensor& grad, double mu) {
  const Tensor n = normalize_l1(grad);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = mu * g[i] + n[i];
}

void check_inputs(const Tensor& x, std::span<const int> labels) {
  if (x.rank() != 4 || x.dim(0) != labels.size())
    throw ContractError("attack input must be N x C x H x W with N labels");
}

LossGrad checked_eval(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels) {
  LossGrad lg = oracle.evaluate(x, labels);
  require_same_shape(lg.grad, x, "oracle gradient");
  return lg;
}

}  // namespace

Tensor sim_grad(const GradientOracle& oracle, const Tensor& x_nes, std::span<const int> labels,
                int m, const InputTransform& transform) {
  if (m < 1) throw ContractError("sim_grad: m must be >= 1");
  Tensor sum(x_nes.shape());
  for (int i = 0; i < m; ++i) {
    const Tensor scaled = scale_copy(x_nes, i);
    Tensor grad;
    if (transform) {
      TransformedInput t = transform(scaled);
      grad = t.pullback(checked_eval(oracle, t.value, labels).grad);
    } else {
      grad = checked_eval(oracle, scaled, labels).grad;
    }
    // d/dx of x / 2^i contributes the same 2^-i factor.
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += std::ldexp(grad[j], -i);
  }
  for (double& v : sum.raw()) v /= static_cast<double>(m);
  return sum;
}

Tensor fgsm(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels,
            double eps) {
  if (!(eps >= 0.0)) throw ContractError("fgsm: epsilon must be >= 0");
  check_inputs(x, labels);
  const Tensor s = sign(checked_eval(oracle, x, labels).grad);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i] + eps * s[i], 0.0, 1.0);
  return out;
}

Tensor i_fgsm(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels,
              const AttackConfig& cfg) {
  cfg.validate();
  check_inputs(x, labels);
  Tensor x_adv = x;
  for (int t = 0; t < cfg.steps; ++t) {
    const Tensor grad = checked_eval(oracle, x_adv, labels).grad;
    x_adv = sign_step(x_adv, grad, x, cfg.alpha(), cfg.epsilon);
  }
  return x_adv;
}

Tensor pgd(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels,
           const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  check_inputs(x, labels);
  Tensor start(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    start[i] = cfg.epsilon > 0.0 ? x[i] + rng.uniform(-cfg.epsilon, cfg.epsilon) : x[i];
  Tensor x_adv = project(start, x, cfg.epsilon);
  for (int t = 0; t < cfg.steps; ++t) {
    const Tensor grad = checked_eval(oracle, x_adv, labels).grad;
    x_adv = sign_step(x_adv, grad, x, cfg.alpha(), cfg.epsilon);
  }
  return x_adv;
}

Tensor mi_fgsm(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels,
               const AttackConfig& cfg) {
  cfg.validate();
  check_inputs(x, labels);
  Tensor x_adv = x;
  Tensor g(x.shape());
  for (int t = 0; t < cfg.steps; ++t) {
    accumulate(g, checked_eval(oracle, x_adv, labels).grad, cfg.decay);
    x_adv = sign_step(x_adv, g, x, cfg.alpha(), cfg.epsilon);
  }
  return x_adv;
}

Tensor ni_fgsm(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels,
               const AttackConfig& cfg) {
  cfg.validate();
  check_inputs(x, labels);
  Tensor x_adv = x;
  Tensor g(x.shape());
  for (int t = 0; t < cfg.steps; ++t) {
    const Tensor x_nes = nes_point(x_adv, g, cfg.alpha(), cfg.decay);
    accumulate(g, checked_eval(oracle, x_nes, labels).grad, cfg.decay);
    x_adv = sign_step(x_adv, g, x, cfg.alpha(), cfg.epsilon);
  }
  return x_adv;
}

Tensor si_ni_fgsm(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels,
                  const AttackConfig& cfg) {
  cfg.validate();
  check_inputs(x, labels);
  Tensor x_adv = x;
  Tensor g(x.shape());
  for (int t = 0; t < cfg.steps; ++t) {
    const Tensor x_nes = nes_point(x_adv, g, cfg.alpha(), cfg.decay);
    const Tensor avg = sim_grad(oracle, x_nes, labels, cfg.scale_copies);
    accumulate(g, avg, cfg.decay);
    x_adv = sign_step(x_adv, g, x, cfg.alpha(), cfg.epsilon);
  }
  return x_adv;
}

Tensor si_ni_ti_dim(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels,
                    const AttackConfig& cfg, Rng& rng, bool use_dim, bool use_tim) {
  cfg.validate();
  check_inputs(x, labels);
  const double p = use_dim ? cfg.dim_probability : 0.0;
  const Kernel kernel = use_tim ? gaussian_kernel(cfg.kernel_size, cfg.sigma()) : Kernel{1, {1.0}};
  InputTransform diversity;
  if (p > 0.0) {
    diversity = [&rng, p, ratio = cfg.dim_min_ratio](const Tensor& in) {
      auto plan = std::make_shared<ResizePad>(ResizePad::draw(in.shape(), p, ratio, rng));
      return TransformedInput{plan->apply(in),
                              [plan](const Tensor& grad) { return plan->pullback(grad); }};
    };
  }
  Tensor x_adv = x;
  Tensor g(x.shape());
  for (int t = 0; t < cfg.steps; ++t) {
    const Tensor x_nes = nes_point(x_adv, g, cfg.alpha(), cfg.decay);
    Tensor avg = sim_grad(oracle, x_nes, labels, cfg.scale_copies, diversity);
    if (kernel.size > 1) avg = ti_smooth(avg, kernel);
    accumulate(g, avg, cfg.decay);
    x_adv = sign_step(x_adv, g, x, cfg.alpha(), cfg.epsilon);
  }
  return x_adv;
}

Tensor run_attack(AttackId id, const GradientOracle& oracle, const Tensor& x,
                  std::span<const int> labels, const AttackConfig& cfg) {
  Rng rng(cfg.seed);
  switch (id) {
    case AttackId::Fgsm: return fgsm(oracle, x, labels, cfg.epsilon);
    case AttackId::IFgsm: return i_fgsm(oracle, x, labels, cfg);
    case AttackId::Pgd: return pgd(oracle, x, labels, cfg, rng);
    case AttackId::MiFgsm: return mi_fgsm(oracle, x, labels, cfg);
    case AttackId::NiFgsm: return ni_fgsm(oracle, x, labels, cfg);
    case AttackId::SiNiFgsm: return si_ni_fgsm(oracle, x, labels, cfg);
    case AttackId::SiNiDim: return si_ni_ti_dim(oracle, x, labels, cfg, rng, true, false);
    case AttackId::SiNiTim: return si_ni_ti_dim(oracle, x, labels, cfg, rng, false, true);
    case AttackId::SiNiTiDim: return si_ni_ti_dim(oracle, x, labels, cfg, rng, true, true);
    case AttackId::TiDim: {
      AttackConfig single = cfg;
      single.scale_copies = 1;
      return si_ni_ti_dim(oracle, x, labels, single, rng, true, true);
    }
  }
  throw ContractError("unhandled attack id");
}

Tensor craft(AttackId id, const GradientOracle& oracle, const Tensor& x,
             std::span<const int> labels, const AttackConfig& cfg, unsigned threads,
             std::size_t chunk) {
  cfg.validate();
  check_inputs(x, labels);
  if (chunk == 0) throw ContractError("craft: chunk size must be positive");
  const std::size_t n = x.dim(0);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  std::vector<Tensor> parts(chunks);
  auto work = [&](std::size_t c) {
    const std::size_t b = c * chunk, e = std::min(n, b + chunk);
    AttackConfig local = cfg;
    local.seed = derive_seed(cfg.seed, {c});
    parts[c] = run_attack(id, oracle, x.rows(b, e), labels.subspan(b, e - b), local);
  };
  threads = std::max(1u, threads);
  if (threads == 1 || chunks == 1) {
    for (std::size_t c = 0; c < chunks; ++c) work(c);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t c = t; c < chunks; c += threads) work(c);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return concat_rows(parts);
}

}  // namespace tb::attacks
