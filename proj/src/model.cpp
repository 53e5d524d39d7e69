#include "covlm/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "json.hpp"

namespace covlm {

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["image_size"] = image_size;
  j["patch"] = patch;
  j["pretrained_grid"] = pretrained_grid;
  j["enc_dim"] = enc_dim;
  j["enc_depth"] = enc_depth;
  j["enc_heads"] = enc_heads;
  j["proj_kernel"] = proj_kernel;
  j["proj_stride"] = proj_stride;
  j["proj_pad"] = proj_pad;
  j["proj_channels"] = proj_channels;
  j["projector_type"] = projector_type;
  j["resampler_queries"] = resampler_queries;
  j["resampler_depth"] = resampler_depth;
  j["region_size"] = region_size;
  j["region_patch"] = region_patch;
  j["region_dim"] = region_dim;
  j["region_heads"] = region_heads;
  j["region_depth"] = region_depth;
  j["dim"] = dim;
  j["dec_depth"] = dec_depth;
  j["dec_heads"] = dec_heads;
  j["vocab"] = vocab;
  j["max_seq"] = max_seq;
  j["context_limit"] = context_limit;
  j["init_seed"] = init_seed;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ModelConfig c;
  auto get = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
  };
  get("image_size", c.image_size);
  get("patch", c.patch);
  get("pretrained_grid", c.pretrained_grid);
  get("enc_dim", c.enc_dim);
  get("enc_depth", c.enc_depth);
  get("enc_heads", c.enc_heads);
  get("proj_kernel", c.proj_kernel);
  get("proj_stride", c.proj_stride);
  get("proj_pad", c.proj_pad);
  get("proj_channels", c.proj_channels);
  get("projector_type", c.projector_type);
  get("resampler_queries", c.resampler_queries);
  get("resampler_depth", c.resampler_depth);
  get("region_size", c.region_size);
  get("region_patch", c.region_patch);
  get("region_dim", c.region_dim);
  get("region_heads", c.region_heads);
  get("region_depth", c.region_depth);
  get("dim", c.dim);
  get("dec_depth", c.dec_depth);
  get("dec_heads", c.dec_heads);
  get("vocab", c.vocab);
  get("max_seq", c.max_seq);
  get("context_limit", c.context_limit);
  get("init_seed", c.init_seed);
  return c;
}

void ModelConfig::validate() const {
  if (image_size % patch != 0)
    throw std::invalid_argument("config: image_size not divisible by patch");
  if (region_size % region_patch != 0)
    throw std::invalid_argument("config: region_size not divisible by patch");
  if (pretrained_grid < 2 || enc_grid() < 2)
    throw std::invalid_argument("config: degenerate position grid");
  if (vocab <= 0) throw std::invalid_argument("config: vocab unset");
  if (dim % dec_heads != 0 || enc_dim % enc_heads != 0 ||
      region_dim % region_heads != 0)
    throw std::invalid_argument("config: width not divisible by head count");
  if (projector_type != "conv" && projector_type != "resampler")
    throw std::invalid_argument("config: unknown projector_type");
  if (context_limit > max_seq)
    throw std::invalid_argument("config: context_limit exceeds max_seq");
}

double token_confidence(const std::vector<double>& span_probs) {
  if (span_probs.empty())
    throw std::invalid_argument("token_confidence: empty span");
  double log_sum = 0;
  for (double p : span_probs) {
    if (!(p > 0.0) || p > 1.0)
      throw std::invalid_argument("token_confidence: probability outside (0,1]");
    log_sum += std::log(p);
  }
  return std::exp(log_sum / static_cast<double>(span_probs.size()));
}

// ---------------------------------------------------------------------------
// VisualEncoder

template <class T>
void VisualEncoder<T>::init(std::mt19937_64& rng, int pretrained_grid) {
  patch_embed.init(rng);
  // Mirrors position-embedding adaptation: random "pretrained" grid at the
  // low resolution, bilinearly interpolated up to the working grid once.
  Tensor<T> pre({pretrained_grid, pretrained_grid, dim});
  init_normal(pre, rng, 0.02);
  Tensor<T> adapted = Model<T>::adapt_pos_embed(pre, grid);
  pos_embed.value.data = adapted.data;
  for (auto& b : blocks) b.init(rng);
}

template <class T>
Tensor<T> VisualEncoder<T>::patchify(const Tensor<T>& img) const {
  const int H = img.shape[0], W = img.shape[1];
  if (H != grid * patch || W != grid * patch)
    throw std::invalid_argument("encoder: unexpected image size");
  Tensor<T> rows({grid * grid, patch * patch * 3});
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      T* dst = rows.ptr() + static_cast<size_t>(gy * grid + gx) * rows.shape[1];
      int k = 0;
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          for (int c = 0; c < 3; ++c)
            dst[k++] = img.at3(gy * patch + py, gx * patch + px, c);
    }
  return rows;
}

template <class T>
Tensor<T> VisualEncoder<T>::forward(const Tensor<T>& img) {
  Tensor<T> x = patch_embed.forward(patchify(img));
  for (int i = 0; i < grid * grid; ++i)
    for (int d = 0; d < dim; ++d) x.at2(i, d) += pos_embed.value.at2(i, d);
  for (auto& b : blocks) x = b.forward(x);
  return ln_f.forward(x);
}

template <class T>
Tensor<T> VisualEncoder<T>::backward(const Tensor<T>& dgrid) {
  Tensor<T> d = ln_f.backward(dgrid);
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) d = it->backward(d);
  for (int i = 0; i < grid * grid; ++i)
    for (int j = 0; j < dim; ++j) pos_embed.grad.at2(i, j) += d.at2(i, j);
  Tensor<T> drows = patch_embed.backward(d);
  Tensor<T> dimg({grid * patch, grid * patch, 3});
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      const T* src = drows.ptr() + static_cast<size_t>(gy * grid + gx) * drows.shape[1];
      int k = 0;
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          for (int c = 0; c < 3; ++c)
            dimg.at3(gy * patch + py, gx * patch + px, c) += src[k++];
    }
  return dimg;
}

// ---------------------------------------------------------------------------
// ConvProjector

template <class T>
Tensor<T> ConvProjector<T>::forward(const Tensor<T>& grid) {
  if (grid.shape[0] != g_in * g_in || grid.shape[1] != in_dim)
    throw std::invalid_argument("projector: grid shape mismatch");
  // [g², D] rows -> [D, g, g] channel-major for the conv kernel.
  x_chw_cache = Tensor<T>({in_dim, g_in, g_in});
  for (int i = 0; i < g_in * g_in; ++i)
    for (int d = 0; d < in_dim; ++d)
      x_chw_cache.at3(d, i / g_in, i % g_in) = grid.at2(i, d);
  Tensor<T> y({channels, g_out, g_out});
  kern::conv2d(x_chw_cache.ptr(), conv_w.value.ptr(), conv_b.value.ptr(),
               y.ptr(), in_dim, g_in, g_in, channels, kernel, stride, pad);
  Tensor<T> rows({g_out * g_out, channels});
  for (int i = 0; i < g_out * g_out; ++i)
    for (int c = 0; c < channels; ++c)
      rows.at2(i, c) = y.at3(c, i / g_out, i % g_out);
  return proj.forward(rows);
}

template <class T>
Tensor<T> ConvProjector<T>::backward(const Tensor<T>& dtok) {
  Tensor<T> drows = proj.backward(dtok);
  Tensor<T> dy({channels, g_out, g_out});
  for (int i = 0; i < g_out * g_out; ++i)
    for (int c = 0; c < channels; ++c)
      dy.at3(c, i / g_out, i % g_out) = drows.at2(i, c);
  Tensor<T> dx({in_dim, g_in, g_in});
  kern::conv2d_backward(x_chw_cache.ptr(), conv_w.value.ptr(), dy.ptr(),
                        dx.ptr(), conv_w.grad.ptr(), conv_b.grad.ptr(), in_dim,
                        g_in, g_in, channels, kernel, stride, pad);
  Tensor<T> dgrid({g_in * g_in, in_dim});
  for (int i = 0; i < g_in * g_in; ++i)
    for (int d = 0; d < in_dim; ++d)
      dgrid.at2(i, d) = dx.at3(d, i / g_in, i % g_in);
  return dgrid;
}

// ---------------------------------------------------------------------------
// Resampler

template <class T>
Tensor<T> ResamplerLayer<T>::forward(const Tensor<T>& x, const Tensor<T>& kv) {
  const int nq = x.shape[0], n = kv.shape[0];
  const T scale = T(1) / std::sqrt(T(dim));
  Tensor<T> qn = ln_q.forward(x);
  Tensor<T> kvn = ln_kv.forward(kv);
  q_cache = wq.forward(qn);
  k_cache = wk.forward(kvn);
  v_cache = wv.forward(kvn);
  att_cache = Tensor<T>({nq, n});
  for (int i = 0; i < nq; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < n; ++j) {
      T s = 0;
      for (int t = 0; t < dim; ++t) s += q_cache.at2(i, t) * k_cache.at2(j, t);
      att_cache.at2(i, j) = s * scale;
      mx = std::max(mx, att_cache.at2(i, j));
    }
    T denom = 0;
    for (int j = 0; j < n; ++j) {
      att_cache.at2(i, j) = std::exp(att_cache.at2(i, j) - mx);
      denom += att_cache.at2(i, j);
    }
    for (int j = 0; j < n; ++j) att_cache.at2(i, j) /= denom;
  }
  Tensor<T> ctx({nq, dim});
  kern::matmul(att_cache.ptr(), v_cache.ptr(), ctx.ptr(), nq, n, dim);
  Tensor<T> h = x;
  Tensor<T> o = wo.forward(ctx);
  for (size_t i = 0; i < h.size(); ++i) h[i] += o[i];
  Tensor<T> m = mlp.forward(ln_m.forward(h));
  Tensor<T> out = h;
  for (size_t i = 0; i < out.size(); ++i) out[i] += m[i];
  return out;
}

template <class T>
Tensor<T> ResamplerLayer<T>::backward(const Tensor<T>& dy, Tensor<T>& dkv) {
  const int nq = att_cache.shape[0], n = att_cache.shape[1];
  const T scale = T(1) / std::sqrt(T(dim));
  Tensor<T> dh = dy;
  Tensor<T> dm = ln_m.backward(mlp.backward(dy));
  for (size_t i = 0; i < dh.size(); ++i) dh[i] += dm[i];
  Tensor<T> dctx = wo.backward(dh);
  Tensor<T> datt({nq, n});
  kern::matmul_nt(dctx.ptr(), v_cache.ptr(), datt.ptr(), nq, dim, n);
  Tensor<T> dv({n, dim});
  kern::matmul_tn(att_cache.ptr(), dctx.ptr(), dv.ptr(), n, nq, dim);
  // softmax rows backward
  Tensor<T> ds({nq, n});
  for (int i = 0; i < nq; ++i) {
    T dot = 0;
    for (int j = 0; j < n; ++j) dot += datt.at2(i, j) * att_cache.at2(i, j);
    for (int j = 0; j < n; ++j)
      ds.at2(i, j) = att_cache.at2(i, j) * (datt.at2(i, j) - dot) * scale;
  }
  Tensor<T> dq({nq, dim}), dk({n, dim});
  kern::matmul(ds.ptr(), k_cache.ptr(), dq.ptr(), nq, n, dim);
  kern::matmul_tn(ds.ptr(), q_cache.ptr(), dk.ptr(), n, nq, dim);
  Tensor<T> dkvn = wk.backward(dk);
  Tensor<T> dkvn2 = wv.backward(dv);
  for (size_t i = 0; i < dkvn.size(); ++i) dkvn[i] += dkvn2[i];
  Tensor<T> dkv_local = ln_kv.backward(dkvn);
  for (size_t i = 0; i < dkv.size(); ++i) dkv[i] += dkv_local[i];
  Tensor<T> dx = dh;
  Tensor<T> dxq = ln_q.backward(wq.backward(dq));
  for (size_t i = 0; i < dx.size(); ++i) dx[i] += dxq[i];
  return dx;
}

template <class T>
Tensor<T> Resampler<T>::forward(const Tensor<T>& grid) {
  Tensor<T> x = queries.value;
  for (auto& l : layers) x = l.forward(x, grid);
  return x;
}

template <class T>
Tensor<T> Resampler<T>::backward(const Tensor<T>& dtok) {
  const int n = layers.front().att_cache.shape[1];
  const int kv_dim = layers.front().ln_kv.gamma.value.shape[0];
  Tensor<T> dkv({n, kv_dim});
  Tensor<T> dx = dtok;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it)
    dx = it->backward(dx, dkv);
  for (size_t i = 0; i < queries.grad.size(); ++i) queries.grad[i] += dx[i];
  return dkv;
}

// ---------------------------------------------------------------------------
// RegionEncoder

template <class T>
void RegionEncoder<T>::init(std::mt19937_64& rng) {
  init_normal(cls.value, rng, 0.02);
  init_normal(pos_embed.value, rng, 0.02);
  patch_embed.init(rng);
  for (auto& b : blocks) b.init(rng);
}

template <class T>
Tensor<T> RegionEncoder<T>::forward(const Tensor<T>& region) {
  if (region.shape[0] != grid * patch || region.shape[1] != grid * patch)
    throw std::invalid_argument("region encoder: wrong input size");
  Tensor<T> rows({grid * grid, patch * patch * 3});
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      T* dst = rows.ptr() + static_cast<size_t>(gy * grid + gx) * rows.shape[1];
      int k = 0;
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          for (int c = 0; c < 3; ++c)
            dst[k++] = region.at3(gy * patch + py, gx * patch + px, c);
    }
  Tensor<T> pe = patch_embed.forward(rows);
  Tensor<T> x({1 + grid * grid, dim});
  for (int d = 0; d < dim; ++d) x.at2(0, d) = cls.value.at2(0, d);
  for (int i = 0; i < grid * grid; ++i)
    for (int d = 0; d < dim; ++d) x.at2(1 + i, d) = pe.at2(i, d);
  for (int i = 0; i < 1 + grid * grid; ++i)
    for (int d = 0; d < dim; ++d) x.at2(i, d) += pos_embed.value.at2(i, d);
  for (auto& b : blocks) x = b.forward(x);
  Tensor<T> y = ln_f.forward(x);
  Tensor<T> out({1, dim});
  for (int d = 0; d < dim; ++d) out.at2(0, d) = y.at2(0, d);  // CLS only
  return out;
}

template <class T>
void RegionEncoder<T>::backward(const Tensor<T>& dcls) {
  Tensor<T> dy({1 + grid * grid, dim});
  for (int d = 0; d < dim; ++d) dy.at2(0, d) = dcls.at2(0, d);
  Tensor<T> d = ln_f.backward(dy);
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) d = it->backward(d);
  for (int i = 0; i < 1 + grid * grid; ++i)
    for (int j = 0; j < dim; ++j) pos_embed.grad.at2(i, j) += d.at2(i, j);
  for (int j = 0; j < dim; ++j) cls.grad.at2(0, j) += d.at2(0, j);
  Tensor<T> dpe({grid * grid, dim});
  for (int i = 0; i < grid * grid; ++i)
    for (int j = 0; j < dim; ++j) dpe.at2(i, j) = d.at2(1 + i, j);
  patch_embed.backward(dpe);  // pixel gradient not propagated further
}

// ---------------------------------------------------------------------------
// Decoder

template <class T>
Tensor<T> Decoder<T>::forward(const Tensor<T>& emb) {
  const int n = emb.shape[0];
  if (n > pos_embed.value.shape[0])
    throw std::invalid_argument("decoder: sequence exceeds max length");
  Tensor<T> x = emb;
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d) x.at2(i, d) += pos_embed.value.at2(i, d);
  for (auto& b : blocks) x = b.forward(x);
  return ln_f.forward(x);
}

template <class T>
Tensor<T> Decoder<T>::backward(const Tensor<T>& dh) {
  Tensor<T> d = ln_f.backward(dh);
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) d = it->backward(d);
  const int n = d.shape[0];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) pos_embed.grad.at2(i, j) += d.at2(i, j);
  return d;
}

// ---------------------------------------------------------------------------
// Model

template <class T>
Model<T>::Model(const ModelConfig& c)
    : cfg(c),
      vis("visual_encoder", c.image_size, c.patch, c.enc_dim, c.enc_depth,
          c.enc_heads),
      conv_proj("downsample_projector", c.enc_grid(), c.enc_dim,
                c.proj_channels, c.proj_kernel, c.proj_stride, c.proj_pad,
                c.dim),
      resampler("downsample_projector.resampler", c.resampler_queries, c.dim,
                c.enc_dim, c.resampler_depth),
      region("region_encoder", c.region_size, c.region_patch, c.region_dim,
             c.region_depth, c.region_heads),
      region_proj("region_projector.proj", c.region_dim, c.dim),
      word_emb("word_embeddings.table", {c.vocab, c.dim}),
      dec("decoder", c.dim, c.dec_depth, c.dec_heads, c.max_seq),
      lm_head("lm_head.out", c.dim, c.vocab) {
  cfg.validate();
}

template <class T>
void Model<T>::init() {
  std::mt19937_64 rng(cfg.init_seed);
  vis.init(rng, cfg.pretrained_grid);
  conv_proj.init(rng);
  resampler.init(rng);
  region.init(rng);
  region_proj.init(rng);
  init_normal(word_emb.value, rng, 0.02);
  dec.init(rng);
  lm_head.init(rng);
}

template <class T>
ParamRefs<T> Model<T>::params() {
  ParamRefs<T> out;
  vis.params(out);
  if (cfg.projector_type == "resampler")
    resampler.params(out);
  else
    conv_proj.params(out);
  region.params(out);
  region_proj.params(out);
  out.push_back(&word_emb);
  dec.params(out);
  lm_head.params(out);
  return out;
}

template <class T>
void Model<T>::zero_grads() {
  for (auto* p : params()) p->grad.zero();
}

template <class T>
void Model<T>::zero_frozen_grads() {
  for (auto* p : params())
    if (!p->trainable) p->grad.zero();
}

template <class T>
std::string Model<T>::partition_of(const std::string& param_name) {
  const auto pos = param_name.find('.');
  return pos == std::string::npos ? param_name : param_name.substr(0, pos);
}

template <class T>
Tensor<T> Model<T>::adapt_pos_embed(const Tensor<T>& pre, int target_g) {
  const int g0 = pre.shape[0];
  const int D = pre.shape[2];
  if (g0 < 2 || target_g < 2)
    throw std::invalid_argument("adapt_pos_embed: degenerate grid");
  Tensor<T> out({target_g, target_g, D});
  kern::bilinear_resize(pre.ptr(), out.ptr(), g0, target_g, D);
  return out;
}

template <class T>
Tensor<T> Model<T>::visual_tokens(const Tensor<T>& img) {
  Tensor<T> grid = vis.forward(img);
  return cfg.projector_type == "resampler" ? resampler.forward(grid)
                                           : conv_proj.forward(grid);
}

template <class T>
Tensor<T> Model<T>::encode_region(const Tensor<T>& region_img) {
  return region_proj.forward(region.forward(region_img));
}

template <class T>
EmbeddedSequence<T> Model<T>::assemble_prompt(
    const Tensor<T>& vtok, const std::vector<int>& ins_ids,
    const Tensor<T>* region_token, const std::vector<int>* answer_ids) const {
  const int nv = vtok.shape[0];
  const int n_ins = static_cast<int>(ins_ids.size());
  const int n_ans = answer_ids ? static_cast<int>(answer_ids->size()) : 0;
  const int N = 1 + nv + n_ins + n_ans;

  int placeholders = 0;
  for (int id : ins_ids)
    if (id == Vocab::kPlaceholder) ++placeholders;
  const int provided = region_token ? 1 : 0;
  if (placeholders != provided)
    throw std::invalid_argument(
        "assemble_prompt: referring arity mismatch (placeholders=" +
        std::to_string(placeholders) + ", prompt tokens=" +
        std::to_string(provided) + ")");

  EmbeddedSequence<T> seq;
  seq.embeddings = Tensor<T>({N, cfg.dim});
  seq.segments.assign(N, Segment::Instruction);
  seq.token_ids.assign(N, -1);
  seq.targets.assign(N, -1);
  seq.loss_mask.assign(N, 0);
  seq.prefix_len = 1 + nv + n_ins;

  auto put_word = [&](int row, int id, Segment seg) {
    for (int d = 0; d < cfg.dim; ++d)
      seq.embeddings.at2(row, d) = word_emb.value.at2(id, d);
    seq.token_ids[row] = id;
    seq.segments[row] = seg;
  };

  put_word(0, Vocab::kBos, Segment::Instruction);
  for (int i = 0; i < nv; ++i) {
    for (int d = 0; d < cfg.dim; ++d)
      seq.embeddings.at2(1 + i, d) = vtok.at2(i, d);
    seq.segments[1 + i] = Segment::Image;
  }
  for (int i = 0; i < n_ins; ++i) {
    const int row = 1 + nv + i;
    if (ins_ids[i] == Vocab::kPlaceholder) {
      for (int d = 0; d < cfg.dim; ++d)
        seq.embeddings.at2(row, d) = region_token->at2(0, d);
      seq.segments[row] = Segment::Region;
      seq.token_ids[row] = Vocab::kPlaceholder;
      seq.placeholder_positions.push_back(row);
    } else {
      put_word(row, ins_ids[i], Segment::Instruction);
    }
  }
  for (int i = 0; i < n_ans; ++i)
    put_word(seq.prefix_len + i, (*answer_ids)[i], Segment::Answer);

  // Next-token targets over the answer region; the last answer position
  // targets EOS.
  for (int t = 0; t + 1 < N; ++t) {
    if (seq.segments[t + 1] == Segment::Answer) {
      seq.targets[t] = seq.token_ids[t + 1];
      seq.loss_mask[t] = 1;
    }
  }
  if (n_ans > 0) {
    seq.targets[N - 1] = Vocab::kEos;
    seq.loss_mask[N - 1] = 1;
  }
  return seq;
}

template <class T>
Tensor<T> Model<T>::forward_logits(const EmbeddedSequence<T>& seq) {
  const int N = seq.embeddings.shape[0];
  if (N > cfg.context_limit)
    throw std::length_error("forward: sequence exceeds context limit");
  Tensor<T> h = dec.forward(seq.embeddings);
  return lm_head.forward(h);
}

template <class T>
T Model<T>::loss(const Tensor<T>& logits, const EmbeddedSequence<T>& seq) const {
  return cross_entropy(logits, seq.targets, seq.loss_mask);
}

template <class T>
T Model<T>::train_step(const StepInput& in, Tensor<T>* dimage) {
  if (in.answer_ids.empty())
    throw std::invalid_argument("train_step: empty answer region");
  Tensor<T> vtok = visual_tokens(in.image);
  Tensor<T> rtok;
  used_region_ = in.region_image.has_value();
  if (used_region_) rtok = encode_region(*in.region_image);
  EmbeddedSequence<T> seq = assemble_prompt(
      vtok, in.ins_ids, used_region_ ? &rtok : nullptr, &in.answer_ids);
  Tensor<T> logits = forward_logits(seq);
  const T L = cross_entropy(logits, seq.targets, seq.loss_mask);

  Tensor<T> dlogits = cross_entropy_backward(logits, seq.targets, seq.loss_mask);
  Tensor<T> dh = lm_head.backward(dlogits);
  Tensor<T> demb = dec.backward(dh);

  const int nv = vtok.shape[0];
  Tensor<T> dvtok({nv, cfg.dim});
  Tensor<T> drtok({1, cfg.dim});
  const int N = demb.shape[0];
  for (int t = 0; t < N; ++t) {
    if (seq.segments[t] == Segment::Image) {
      for (int d = 0; d < cfg.dim; ++d)
        dvtok.at2(t - 1, d) += demb.at2(t, d);
    } else if (seq.segments[t] == Segment::Region) {
      for (int d = 0; d < cfg.dim; ++d) drtok.at2(0, d) += demb.at2(t, d);
    } else {
      const int id = seq.token_ids[t];
      for (int d = 0; d < cfg.dim; ++d)
        word_emb.grad.at2(id, d) += demb.at2(t, d);
    }
  }

  Tensor<T> dgrid = cfg.projector_type == "resampler"
                        ? resampler.backward(dvtok)
                        : conv_proj.backward(dvtok);
  Tensor<T> dimg = vis.backward(dgrid);
  if (dimage) *dimage = std::move(dimg);
  if (used_region_) region.backward(region_proj.backward(drtok));
  return L;
}

template <class T>
GenerationOutput Model<T>::generate(const EmbeddedSequence<T>& prefix,
                                    int max_new) {
  const int n0 = prefix.embeddings.shape[0];
  if (n0 + max_new > cfg.context_limit)
    throw std::length_error("generate: prefix + max_new exceeds context limit");

  std::vector<KvCache<T>> caches(dec.blocks.size());
  Tensor<T> h({1, cfg.dim});
  for (int t = 0; t < n0; ++t) {
    Tensor<T> x({1, cfg.dim});
    for (int d = 0; d < cfg.dim; ++d)
      x.at2(0, d) = prefix.embeddings.at2(t, d) + dec.pos_embed.value.at2(t, d);
    for (size_t b = 0; b < dec.blocks.size(); ++b)
      x = dec.blocks[b].forward_step(x, caches[b]);
    h = x;
  }

  GenerationOutput out;
  int pos = n0;
  for (int step = 0; step < max_new; ++step) {
    Tensor<T> logits = lm_head.forward(dec.ln_f.forward(h));
    Tensor<T> p = softmax_rows(logits);
    int best = 0;
    for (int j = 1; j < cfg.vocab; ++j)
      if (p.at2(0, j) > p.at2(0, best)) best = j;
    if (best == Vocab::kEos) {
      out.finish = FinishReason::Eos;
      return out;
    }
    out.ids.push_back(best);
    out.probs.push_back(static_cast<double>(p.at2(0, best)));
    if (pos >= cfg.context_limit) break;
    Tensor<T> x({1, cfg.dim});
    for (int d = 0; d < cfg.dim; ++d)
      x.at2(0, d) = word_emb.value.at2(best, d) + dec.pos_embed.value.at2(pos, d);
    for (size_t b = 0; b < dec.blocks.size(); ++b)
      x = dec.blocks[b].forward_step(x, caches[b]);
    h = x;
    ++pos;
  }
  out.finish = FinishReason::MaxLength;
  return out;
}

template struct VisualEncoder<float>;
template struct VisualEncoder<double>;
template struct ConvProjector<float>;
template struct ConvProjector<double>;
template struct ResamplerLayer<float>;
template struct ResamplerLayer<double>;
template struct Resampler<float>;
template struct Resampler<double>;
template struct RegionEncoder<float>;
template struct RegionEncoder<double>;
template struct Decoder<float>;
template struct Decoder<double>;
template struct Model<float>;
template struct Model<double>;

}  // namespace covlm
