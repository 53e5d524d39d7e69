#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "covlm/layers.hpp"
#include "covlm/model.hpp"
#include "covlm/nn.hpp"

// Finite-difference verification harness. Every check runs in double
// precision, perturbs inputs/parameters in place with central differences,
// and compares against the analytic backward pass.

namespace covlm::checks {

struct CheckResult {
  std::string name;
  double max_rel_err;
};

/// Central-difference comparison over a set of value regions. `analytic`
/// must be laid out to match `regions`. Returns max relative error. The
/// denominator floor sits above central-difference cancellation noise
/// (absolute diffs ~5e-10 here), because some directions have a structurally zero gradient
/// (e.g. a key-projection bias: softmax is invariant to shifting every
/// score in a row) and would otherwise compare pure noise against roundoff.
inline double fd_compare(const std::vector<std::span<double>>& regions,
                         const std::function<double()>& f,
                         const std::vector<std::vector<double>>& analytic,
                         double eps = 1e-5, double floor = 3e-4) {
  double worst = 0;
  for (size_t r = 0; r < regions.size(); ++r) {
    for (size_t i = 0; i < regions[r].size(); ++i) {
      const double orig = regions[r][i];
      regions[r][i] = orig + eps;
      const double fp = f();
      regions[r][i] = orig - eps;
      const double fm = f();
      regions[r][i] = orig;
      const double num = (fp - fm) / (2 * eps);
      const double ana = analytic[r][i];
      const double denom = std::max({floor, std::abs(num), std::abs(ana)});
      worst = std::max(worst, std::abs(num - ana) / denom);
    }
  }
  return worst;
}

namespace detail {

inline Tensor<double> random_tensor(std::vector<int> shape,
                                    std::mt19937_64& rng, double sd = 1.0) {
  Tensor<double> t(std::move(shape));
  init_normal(t, rng, sd);
  return t;
}

// Weighted-sum scalarization of an output tensor with fixed coefficients.
inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

inline double check_linear(uint64_t seed) {
  std::mt19937_64 rng(seed);
  Linear<double> lin("l", 4, 3);
  lin.init(rng);
  Tensor<double> x = detail::random_tensor({2, 4}, rng);
  Tensor<double> c = detail::random_tensor({2, 3}, rng);
  lin.weight.grad.zero();
  lin.bias.grad.zero();
  Tensor<double> y = lin.forward(x);
  Tensor<double> dx = lin.backward(c);
  auto f = [&] { return detail::dot(lin.forward(x), c); };
  return fd_compare(
      {std::span<double>(x.data), std::span<double>(lin.weight.value.data),
       std::span<double>(lin.bias.value.data)},
      f, {dx.data, lin.weight.grad.data, lin.bias.grad.data});
}

inline double check_conv2d(uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int Ci = 2, H = 5, Co = 3, k = 3, s = 2, p = 1;
  const int Ho = (H + 2 * p - k) / s + 1;
  Tensor<double> x = detail::random_tensor({Ci, H, H}, rng);
  Tensor<double> w = detail::random_tensor({Co, Ci, k, k}, rng);
  Tensor<double> b = detail::random_tensor({Co}, rng);
  Tensor<double> c = detail::random_tensor({Co, Ho, Ho}, rng);
  Tensor<double> dx({Ci, H, H}), dw({Co, Ci, k, k}), db({Co});
  kern::conv2d_backward(x.ptr(), w.ptr(), c.ptr(), dx.ptr(), dw.ptr(),
                        db.ptr(), Ci, H, H, Co, k, s, p);
  auto f = [&] {
    Tensor<double> y({Co, Ho, Ho});
    kern::conv2d(x.ptr(), w.ptr(), b.ptr(), y.ptr(), Ci, H, H, Co, k, s, p);
    return detail::dot(y, c);
  };
  return fd_compare({std::span<double>(x.data), std::span<double>(w.data),
                     std::span<double>(b.data)},
                    f, {dx.data, dw.data, db.data});
}

inline double check_layernorm(uint64_t seed) {
  std::mt19937_64 rng(seed);
  LayerNorm<double> ln("ln", 6);
  Tensor<double> x = detail::random_tensor({3, 6}, rng);
  Tensor<double> c = detail::random_tensor({3, 6}, rng);
  ln.gamma.grad.zero();
  ln.beta.grad.zero();
  ln.forward(x);
  Tensor<double> dx = ln.backward(c);
  auto f = [&] { return detail::dot(ln.forward(x), c); };
  return fd_compare(
      {std::span<double>(x.data), std::span<double>(ln.gamma.value.data),
       std::span<double>(ln.beta.value.data)},
      f, {dx.data, ln.gamma.grad.data, ln.beta.grad.data});
}

inline double check_decoder_block(uint64_t seed) {
  std::mt19937_64 rng(seed);
  TransformerBlock<double> block("b", 8, 2, true);
  block.init(rng);
  Tensor<double> x = detail::random_tensor({5, 8}, rng);
  Tensor<double> c = detail::random_tensor({5, 8}, rng);
  ParamRefs<double> ps;
  block.params(ps);
  for (auto* p : ps) p->grad.zero();
  block.forward(x);
  Tensor<double> dx = block.backward(c);
  std::vector<std::span<double>> regions{std::span<double>(x.data)};
  std::vector<std::vector<double>> analytic{dx.data};
  for (auto* p : ps) {
    regions.emplace_back(p->value.data);
    analytic.push_back(p->grad.data);
  }
  auto f = [&] { return detail::dot(block.forward(x), c); };
  return fd_compare(regions, f, analytic);
}

inline double check_cross_entropy(uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<double> logits = detail::random_tensor({4, 7}, rng);
  std::vector<int> targets = {1, 3, 0, 6};
  std::vector<uint8_t> mask = {1, 0, 1, 1};
  Tensor<double> d = cross_entropy_backward(logits, targets, mask);
  auto f = [&] { return cross_entropy(logits, targets, mask); };
  return fd_compare({std::span<double>(logits.data)}, f, {d.data});
}

inline double check_projector(uint64_t seed) {
  std::mt19937_64 rng(seed);
  ConvProjector<double> proj("p", 4, 6, 5, 3, 2, 1, 7);
  proj.init(rng);
  Tensor<double> grid = detail::random_tensor({16, 6}, rng);
  Tensor<double> c = detail::random_tensor({proj.g_out * proj.g_out, 7}, rng);
  ParamRefs<double> ps;
  proj.params(ps);
  for (auto* p : ps) p->grad.zero();
  proj.forward(grid);
  Tensor<double> dg = proj.backward(c);
  std::vector<std::span<double>> regions{std::span<double>(grid.data)};
  std::vector<std::vector<double>> analytic{dg.data};
  for (auto* p : ps) {
    regions.emplace_back(p->value.data);
    analytic.push_back(p->grad.data);
  }
  auto f = [&] { return detail::dot(proj.forward(grid), c); };
  return fd_compare(regions, f, analytic);
}

inline double check_resampler(uint64_t seed) {
  std::mt19937_64 rng(seed);
  Resampler<double> rs("r", 3, 8, 6, 2);
  rs.init(rng);
  Tensor<double> grid = detail::random_tensor({9, 6}, rng);
  Tensor<double> c = detail::random_tensor({3, 8}, rng);
  ParamRefs<double> ps;
  rs.params(ps);
  for (auto* p : ps) p->grad.zero();
  rs.forward(grid);
  Tensor<double> dg = rs.backward(c);
  std::vector<std::span<double>> regions{std::span<double>(grid.data)};
  std::vector<std::vector<double>> analytic{dg.data};
  for (auto* p : ps) {
    regions.emplace_back(p->value.data);
    analytic.push_back(p->grad.data);
  }
  auto f = [&] { return detail::dot(rs.forward(grid), c); };
  return fd_compare(regions, f, analytic);
}

inline double check_region_encoder(uint64_t seed) {
  std::mt19937_64 rng(seed);
  RegionEncoder<double> enc("re", 8, 4, 8, 1, 2);
  enc.init(rng);
  Tensor<double> img = detail::random_tensor({8, 8, 3}, rng, 0.5);
  Tensor<double> c = detail::random_tensor({1, 8}, rng);
  ParamRefs<double> ps;
  enc.params(ps);
  for (auto* p : ps) p->grad.zero();
  enc.forward(img);
  enc.backward(c);
  std::vector<std::span<double>> regions;
  std::vector<std::vector<double>> analytic;
  for (auto* p : ps) {
    regions.emplace_back(p->value.data);
    analytic.push_back(p->grad.data);
  }
  auto f = [&] { return detail::dot(enc.forward(img), c); };
  return fd_compare(regions, f, analytic);
}

inline ModelConfig toy_config() {
  ModelConfig c;
  c.image_size = 8;
  c.patch = 4;
  c.pretrained_grid = 2;
  c.enc_dim = 8;
  c.enc_depth = 1;
  c.enc_heads = 2;
  c.proj_channels = 6;
  c.region_size = 8;
  c.region_patch = 4;
  c.region_dim = 8;
  c.region_depth = 1;
  c.region_heads = 2;
  c.dim = 8;
  c.dec_depth = 1;
  c.dec_heads = 2;
  c.vocab = 24;
  c.max_seq = 32;
  c.context_limit = 32;
  return c;
}

/// Composed encoder + projector gradient w.r.t. input pixels.
inline double check_encoder_composed(uint64_t seed) {
  std::mt19937_64 rng(seed);
  VisualEncoder<double> enc("ve", 8, 4, 8, 1, 2);
  enc.init(rng, 2);
  ConvProjector<double> proj("dp", 2, 8, 6, 3, 2, 1, 8);
  proj.init(rng);
  Tensor<double> img = detail::random_tensor({8, 8, 3}, rng, 0.5);
  Tensor<double> c = detail::random_tensor({proj.g_out * proj.g_out, 8}, rng);
  proj.forward(enc.forward(img));
  Tensor<double> dimg = enc.backward(proj.backward(c));
  auto f = [&] { return detail::dot(proj.forward(enc.forward(img)), c); };
  return fd_compare({std::span<double>(img.data)}, f, {dimg.data});
}

/// Full pixels-to-loss path through encoder, projector, co-referring
/// assembly and the decoder LM.
inline double check_full_stack(uint64_t seed, bool with_region = true) {
  std::mt19937_64 rng(seed);
  ModelConfig cfg = toy_config();
  cfg.init_seed = seed;
  Model<double> model(cfg);
  model.init();
  Model<double>::StepInput in;
  in.image = detail::random_tensor({8, 8, 3}, rng, 0.5);
  in.ins_ids = {7, 8, 9};
  if (with_region) {
    in.ins_ids.push_back(Vocab::kPlaceholder);
    in.region_image = detail::random_tensor({8, 8, 3}, rng, 0.5);
  }
  in.answer_ids = {10, 11, 12};
  model.zero_grads();
  Tensor<double> dimg;
  model.train_step(in, &dimg);
  auto f = [&] {
    Tensor<double> vtok = model.visual_tokens(in.image);
    Tensor<double> rtok;
    if (in.region_image) rtok = model.encode_region(*in.region_image);
    auto seq = model.assemble_prompt(vtok, in.ins_ids,
                                     in.region_image ? &rtok : nullptr,
                                     &in.answer_ids);
    auto logits = model.forward_logits(seq);
    return (double)cross_entropy(logits, seq.targets, seq.loss_mask);
  };
  return fd_compare({std::span<double>(in.image.data)}, f, {dimg.data});
}

inline std::vector<CheckResult> run_all(uint64_t seed) {
  return {
      {"linear", check_linear(seed)},
      {"conv2d", check_conv2d(seed)},
      {"layernorm", check_layernorm(seed)},
      {"decoder_block", check_decoder_block(seed)},
      {"cross_entropy", check_cross_entropy(seed)},
      {"downsample_projector", check_projector(seed)},
      {"resampler", check_resampler(seed)},
      {"region_encoder", check_region_encoder(seed)},
      {"encoder_composed", check_encoder_composed(seed)},
      {"full_stack", check_full_stack(seed)},
  };
}

}  // namespace covlm::checks
