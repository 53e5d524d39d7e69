#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <random>

#include "covlm/checkpoint.hpp"
#include "covlm/gradchecks.hpp"
#include "covlm/model.hpp"

using namespace covlm;

namespace {

ModelConfig toy_cfg(int vocab = 32) {
  ModelConfig c = checks::toy_config();
  c.vocab = vocab;
  return c;
}

Tensor<float> random_image(int size, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  Tensor<float> t({size, size, 3});
  for (auto& v : t.data) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("model config validation and JSON round trip") {
  ModelConfig c = toy_cfg();
  c.validate();
  ModelConfig back = ModelConfig::from_json(c.to_json());
  CHECK(back.image_size == c.image_size);
  CHECK(back.patch == c.patch);
  CHECK(back.dim == c.dim);
  CHECK(back.vocab == c.vocab);
  CHECK(back.projector_type == c.projector_type);

  ModelConfig bad = c;
  bad.image_size = 10;  // not divisible by patch
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.vocab = 0;
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.dim = 9;  // not divisible by heads
  CHECK_THROWS(bad.validate());
}

TEST_CASE("adapt_pos_embed identity and corners") {
  std::mt19937_64 rng(1);
  Tensor<float> pre({4, 4, 8});
  init_normal(pre, rng, 1.0);

  Tensor<float> same = Model<float>::adapt_pos_embed(pre, 4);
  CHECK(same.data == pre.data);

  Tensor<float> up = Model<float>::adapt_pos_embed(pre, 8);
  REQUIRE(up.shape == std::vector<int>{8, 8, 8});
  auto src = [&](int y, int x, int d) { return pre[(y * 4 + x) * 8 + d]; };
  auto dst = [&](int y, int x, int d) { return up[(y * 8 + x) * 8 + d]; };
  for (int d = 0; d < 8; ++d) {
    CHECK(dst(0, 0, d) == src(0, 0, d));
    CHECK(dst(0, 7, d) == src(0, 3, d));
    CHECK(dst(7, 0, d) == src(3, 0, d));
    CHECK(dst(7, 7, d) == src(3, 3, d));
  }
}

TEST_CASE("adapt_pos_embed interior matches scalar bilinear oracle") {
  std::mt19937_64 rng(2);
  Tensor<float> pre({4, 4, 1});
  init_normal(pre, rng, 1.0);
  Tensor<float> up = Model<float>::adapt_pos_embed(pre, 8);
  auto src = [&](int y, int x) { return (double)pre[y * 4 + x]; };
  for (int oy = 0; oy < 8; ++oy)
    for (int ox = 0; ox < 8; ++ox) {
      const double sy = oy * 3.0 / 7.0, sx = ox * 3.0 / 7.0;
      const int y0 = (int)sy, x0 = (int)sx;
      const int y1 = std::min(y0 + 1, 3), x1 = std::min(x0 + 1, 3);
      const double fy = sy - y0, fx = sx - x0;
      const double top = src(y0, x0) + (src(y0, x1) - src(y0, x0)) * fx;
      const double bot = src(y1, x0) + (src(y1, x1) - src(y1, x0)) * fx;
      const double want = top + (bot - top) * fy;
      CHECK((double)up[oy * 8 + ox] == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("encode_image shape contract and determinism") {
  ModelConfig cfg = toy_cfg();
  Model<float> m(cfg);
  m.init();
  Tensor<float> img = random_image(cfg.image_size, 7);
  Tensor<float> a = m.encode_image(img);
  Tensor<float> b = m.encode_image(img);
  REQUIRE(a.shape == std::vector<int>{cfg.enc_grid() * cfg.enc_grid(), cfg.enc_dim});
  CHECK(a.data == b.data);  // bit-identical

  Tensor<float> ta = m.visual_tokens(img);
  REQUIRE(ta.shape == std::vector<int>{cfg.num_visual_tokens(), cfg.dim});
  CHECK(m.visual_tokens(img).data == ta.data);
}

TEST_CASE("downsample projector is affine (no hidden nonlinearity)") {
  std::mt19937_64 rng(11);
  ConvProjector<float> proj("p", 8, 16, 12, 3, 2, 1, 10);
  proj.init(rng);
  Tensor<float> z1({64, 16}), z2({64, 16}), zsum({64, 16}), zero({64, 16});
  init_normal(z1, rng, 1.0);
  init_normal(z2, rng, 1.0);
  for (size_t i = 0; i < zsum.size(); ++i) zsum[i] = z1[i] + z2[i];
  Tensor<float> f1 = proj.forward(z1);
  Tensor<float> f2 = proj.forward(z2);
  Tensor<float> fs = proj.forward(zsum);
  Tensor<float> f0 = proj.forward(zero);
  for (size_t i = 0; i < fs.size(); ++i)
    CHECK(std::abs(fs[i] - f1[i] - f2[i] + f0[i]) < 1e-5);
}

TEST_CASE("resampler token count is independent of grid size") {
  std::mt19937_64 rng(13);
  Resampler<float> rs("r", 6, 16, 12, 2);
  rs.init(rng);
  for (int side : {8, 16, 32}) {
    Tensor<float> grid({side * side, 12});
    init_normal(grid, rng, 1.0);
    Tensor<float> out = rs.forward(grid);
    CHECK(out.shape == std::vector<int>{6, 16});
  }
}

TEST_CASE("resampler is invariant to grid permutation") {
  std::mt19937_64 rng(17);
  Resampler<float> rs("r", 4, 16, 12, 2);
  rs.init(rng);
  Tensor<float> grid({9, 12});
  init_normal(grid, rng, 1.0);
  Tensor<float> out = rs.forward(grid);

  std::vector<int> perm = {4, 7, 1, 0, 8, 2, 6, 3, 5};
  Tensor<float> shuffled({9, 12});
  for (int i = 0; i < 9; ++i)
    for (int d = 0; d < 12; ++d) shuffled.at2(i, d) = grid.at2(perm[i], d);
  Tensor<float> out2 = rs.forward(shuffled);
  for (size_t i = 0; i < out.size(); ++i)
    CHECK(out2[i] == doctest::Approx(out[i]).epsilon(1e-4));
}

TEST_CASE("resampler has more parameters than the conv projector") {
  // matched dims: same input feature width and output token width
  const int d_in = 64, d_word = 64;
  ConvProjector<float> proj("p", 8, d_in, 64, 3, 2, 1, d_word);
  Resampler<float> rs("r", 16, d_word, d_in, 2);
  ParamRefs<float> pp, rp;
  proj.params(pp);
  rs.params(rp);
  size_t np = 0, nr = 0;
  for (auto* p : pp) np += p->size();
  for (auto* p : rp) nr += p->size();
  CHECK(nr > np);
}

TEST_CASE("encode_region determinism and sensitivity") {
  ModelConfig cfg = toy_cfg();
  Model<float> m(cfg);
  m.init();
  Tensor<float> crop = random_image(cfg.region_size, 23);
  Tensor<float> a = m.encode_region(crop);
  REQUIRE(a.shape == std::vector<int>{1, cfg.dim});
  CHECK(m.encode_region(crop).data == a.data);
  // shifting content changes the token
  Tensor<float> crop2 = crop;
  crop2[0] += 0.25f;
  bool same = m.encode_region(crop2).data == a.data;
  CHECK_FALSE(same);
}

TEST_CASE("assemble_prompt layout, substitution and arity") {
  ModelConfig cfg = toy_cfg();
  Model<float> m(cfg);
  m.init();
  Tensor<float> img = random_image(cfg.image_size, 31);
  Tensor<float> vtok = m.visual_tokens(img);
  const int nv = cfg.num_visual_tokens();

  SUBCASE("no placeholder") {
    std::vector<int> ins = {7, 8, 9};
    auto seq = m.assemble_prompt(vtok, ins, nullptr, nullptr);
    CHECK(seq.embeddings.shape[0] == 1 + nv + 3);
    CHECK(seq.prefix_len == 1 + nv + 3);
    CHECK(seq.placeholder_positions.empty());
    int n_img = 0;
    for (Segment s : seq.segments) n_img += s == Segment::Image;
    CHECK(n_img == nv);
    for (uint8_t mask : seq.loss_mask) CHECK(mask == 0);
  }

  SUBCASE("placeholder substitution is surgical") {
    Tensor<float> crop = random_image(cfg.region_size, 37);
    Tensor<float> rtok = m.encode_region(crop);
    std::vector<int> ins = {7, Vocab::kPlaceholder, 9};
    auto with = m.assemble_prompt(vtok, ins, &rtok, nullptr);
    auto without = m.assemble_prompt(vtok, {7, 8, 9}, nullptr, nullptr);
    REQUIRE(with.embeddings.shape == without.embeddings.shape);
    REQUIRE(with.placeholder_positions.size() == 1);
    const int pos = with.placeholder_positions[0];
    CHECK(with.segments[pos] == Segment::Region);
    const int D = cfg.dim;
    // substituted row equals H_q exactly
    for (int d = 0; d < D; ++d) CHECK(with.embeddings.at2(pos, d) == rtok.at2(0, d));
    // every other row is bitwise identical to the placeholder-free assembly,
    // except the row where token 8 vs placeholder differ by construction
    for (int i = 0; i < with.embeddings.shape[0]; ++i) {
      if (i == pos) continue;
      for (int d = 0; d < D; ++d)
        CHECK(with.embeddings.at2(i, d) == without.embeddings.at2(i, d));
    }
    // exactly one region segment
    int n_region = 0;
    for (Segment s : with.segments) n_region += s == Segment::Region;
    CHECK(n_region == 1);
  }

  SUBCASE("arity mismatches throw") {
    Tensor<float> crop = random_image(cfg.region_size, 41);
    Tensor<float> rtok = m.encode_region(crop);
    CHECK_THROWS(m.assemble_prompt(vtok, {7, Vocab::kPlaceholder, 9}, nullptr,
                                   nullptr));  // placeholder without token
    CHECK_THROWS(m.assemble_prompt(vtok, {7, 8, 9}, &rtok,
                                   nullptr));  // token without placeholder
    CHECK_THROWS(m.assemble_prompt(
        vtok, {Vocab::kPlaceholder, Vocab::kPlaceholder}, &rtok, nullptr));
  }

  SUBCASE("answer region carries next-token targets") {
    std::vector<int> ins = {7, 8};
    std::vector<int> ans = {10, 11, 12};
    auto seq = m.assemble_prompt(vtok, ins, nullptr, &ans);
    const int n = seq.embeddings.shape[0];
    CHECK(n == 1 + nv + 2 + 3);
    CHECK(seq.prefix_len == 1 + nv + 2);
    // positions predicting answer tokens are masked in; the final answer
    // position targets EOS
    int masked_in = 0;
    for (int i = 0; i < n; ++i) masked_in += seq.loss_mask[i];
    CHECK(masked_in == 4);  // 3 answer tokens + EOS
    CHECK(seq.targets[seq.prefix_len - 1] == 10);
    CHECK(seq.targets[seq.prefix_len] == 11);
    CHECK(seq.targets[n - 1] == Vocab::kEos);
  }
}

TEST_CASE("decoder causality: answer embeddings cannot affect prompt logits") {
  ModelConfig cfg = toy_cfg();
  Model<float> m(cfg);
  m.init();
  Tensor<float> img = random_image(cfg.image_size, 43);
  Tensor<float> vtok = m.visual_tokens(img);
  std::vector<int> ins = {7, 8, 9};
  std::vector<int> ans = {10, 11};
  auto seq = m.assemble_prompt(vtok, ins, nullptr, &ans);
  Tensor<float> logits = m.forward_logits(seq);

  auto seq2 = seq;
  for (int i = seq.prefix_len; i < seq.embeddings.shape[0]; ++i)
    for (int d = 0; d < cfg.dim; ++d) seq2.embeddings.at2(i, d) += 1.5f;
  Tensor<float> logits2 = m.forward_logits(seq2);
  for (int i = 0; i < seq.prefix_len; ++i)
    for (int v = 0; v < cfg.vocab; ++v)
      CHECK(logits2.at2(i, v) == logits.at2(i, v));  // bitwise
}

TEST_CASE("forward_logits enforces the context limit") {
  ModelConfig cfg = toy_cfg();
  Model<float> m(cfg);
  m.init();
  Tensor<float> img = random_image(cfg.image_size, 47);
  Tensor<float> vtok = m.visual_tokens(img);
  std::vector<int> ins(cfg.context_limit, 7);  // overflows with BOS + image
  auto seq = m.assemble_prompt(vtok, ins, nullptr, nullptr);
  CHECK_THROWS_AS(m.forward_logits(seq), std::length_error);
}

TEST_CASE("lm loss on uniform logits is ln V, masked positions ignored") {
  ModelConfig cfg = toy_cfg();
  Model<float> m(cfg);
  m.init();
  Tensor<float> logits({3, cfg.vocab});
  EmbeddedSequence<float> seq;
  seq.targets = {5, 6, 7};
  seq.loss_mask = {0, 1, 1};
  CHECK(m.loss(logits, seq) == doctest::Approx(std::log((float)cfg.vocab)));
  // changing a masked-out row leaves the loss untouched
  for (int v = 0; v < cfg.vocab; ++v) logits.at2(0, v) = 1000.f * (v % 3);
  CHECK(m.loss(logits, seq) == doctest::Approx(std::log((float)cfg.vocab)));
}

TEST_CASE("generation is deterministic and respects a rigged head") {
  ModelConfig cfg = toy_cfg();
  Model<float> m(cfg);
  m.init();
  Tensor<float> img = random_image(cfg.image_size, 53);
  Tensor<float> vtok = m.visual_tokens(img);
  auto prefix = m.assemble_prompt(vtok, {7, 8}, nullptr, nullptr);

  GenerationOutput a = m.generate(prefix, 6);
  GenerationOutput b = m.generate(prefix, 6);
  CHECK(a.ids == b.ids);
  CHECK(a.probs == b.probs);
  for (double p : a.probs) {
    CHECK(p > 0.0);
    CHECK(p <= 1.0);
  }

  // rig the output head so one non-EOS token always dominates
  const int winner = 9;
  for (auto* p : m.params())
    if (p->name == "lm_head.out.bias") {
      p->value.zero();
      p->value[winner] = 50.f;
    }
  GenerationOutput g = m.generate(prefix, 5);
  REQUIRE(g.ids.size() == 5);
  for (int id : g.ids) CHECK(id == winner);
  CHECK(g.finish == FinishReason::MaxLength);
  for (double p : g.probs) CHECK(p > 0.99);

  // rig EOS instead: generation stops immediately
  for (auto* p : m.params())
    if (p->name == "lm_head.out.bias") {
      p->value.zero();
      p->value[Vocab::kEos] = 50.f;
    }
  GenerationOutput e = m.generate(prefix, 5);
  CHECK(e.ids.empty());
  CHECK(e.finish == FinishReason::Eos);
}

TEST_CASE("token_confidence") {
  CHECK(token_confidence({1.0, 1.0, 1.0}) == doctest::Approx(1.0));
  CHECK(token_confidence({0.5}) == doctest::Approx(0.5));
  CHECK(token_confidence({0.9, 0.4, 0.6}) == doctest::Approx(0.6));
  CHECK_THROWS(token_confidence({}));
  CHECK_THROWS(token_confidence({0.5, 0.0}));
  CHECK_THROWS(token_confidence({0.5, 1.5}));
  // monotone span property
  std::vector<double> span = {0.8, 0.7};
  const double c0 = token_confidence(span);
  span.push_back(c0 * 0.5);
  CHECK(token_confidence(span) < c0);
}

TEST_CASE("checkpoint round trip preserves values and trainable flags") {
  ModelConfig cfg = toy_cfg();
  Model<float> a(cfg);
  a.init();
  auto pa = a.params();
  pa[3]->trainable = false;
  const std::string path = "test_model_tmp.ckpt";
  save_checkpoint(path, pa);

  Model<float> b(cfg);
  b.init();
  // perturb before loading
  auto pb = b.params();
  for (auto* p : pb)
    for (auto& v : p->value.data) v += 0.5f;
  load_checkpoint(path, pb);
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pb[i]->value.data == pa[i]->value.data);
    CHECK(pb[i]->trainable == pa[i]->trainable);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint load rejects a mismatched architecture") {
  ModelConfig cfg = toy_cfg();
  Model<float> a(cfg);
  a.init();
  const std::string path = "test_model_tmp2.ckpt";
  auto pa = a.params();
  save_checkpoint(path, pa);
  ModelConfig other = cfg;
  other.dim = 16;
  other.enc_dim = 16;
  other.region_dim = 16;
  other.proj_channels = 8;
  Model<float> b(other);
  b.init();
  auto pb = b.params();
  CHECK_THROWS(load_checkpoint(path, pb));
  std::remove(path.c_str());
}

TEST_CASE("partition checksums isolate parameter changes") {
  ModelConfig cfg = toy_cfg();
  Model<float> m(cfg);
  m.init();
  auto params = m.params();
  auto before = all_partition_checksums(params);
  REQUIRE(before.size() == 7);

  for (auto* p : params)
    if (p->name.rfind("downsample_projector", 0) == 0) {
      p->value[0] += 1.f;
      break;
    }
  auto after = all_partition_checksums(params);
  for (const auto& [name, sum] : after) {
    if (name == "downsample_projector")
      CHECK(sum != before.at(name));
    else
      CHECK(sum == before.at(name));
  }
}

TEST_CASE("every parameter maps to a known partition") {
  ModelConfig cfg = toy_cfg();
  cfg.projector_type = "resampler";
  Model<float> m(cfg);
  m.init();
  for (auto* p : m.params()) {
    std::string part = Model<float>::partition_of(p->name);
    CHECK_FALSE(part.empty());
  }
}

TEST_CASE("resampler-projected model runs the full step") {
  ModelConfig cfg = toy_cfg();
  cfg.projector_type = "resampler";
  cfg.resampler_queries = 4;
  Model<float> m(cfg);
  m.init();
  Model<float>::StepInput in;
  in.image = random_image(cfg.image_size, 61);
  in.ins_ids = {7, 8};
  in.answer_ids = {9, 10};
  m.zero_grads();
  float loss = m.train_step(in);
  CHECK(std::isfinite(loss));
  CHECK(loss > 0.f);
}
