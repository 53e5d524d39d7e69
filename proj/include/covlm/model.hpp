#pragma once

#include <optional>
#include <string>
#include <vector>

#include "covlm/layers.hpp"
#include "covlm/nn.hpp"
#include "covlm/textcodec.hpp"

namespace covlm {

struct ModelConfig {
  // High-resolution visual encoder.
  int image_size = 64;
  int patch = 8;
  int pretrained_grid = 4;  // patches per side at "pretraining" resolution
  int enc_dim = 64;
  int enc_depth = 2;
  int enc_heads = 4;
  // Down-sampling projector (kernel 3, stride 2, padding 1 defaults).
  int proj_kernel = 3;
  int proj_stride = 2;
  int proj_pad = 1;
  int proj_channels = 64;
  std::string projector_type = "conv";  // "conv" | "resampler"
  int resampler_queries = 16;
  int resampler_depth = 2;
  // Region (visual prompt) encoder.
  int region_size = 24;
  int region_patch = 8;
  int region_dim = 48;
  int region_depth = 2;
  int region_heads = 4;
  // Decoder LM.
  int dim = 64;  // word embedding width D_word
  int dec_depth = 3;
  int dec_heads = 4;
  int vocab = 0;
  int max_seq = 512;
  int context_limit = 512;
  uint64_t init_seed = 1234;

  int enc_grid() const { return image_size / patch; }
  int proj_grid() const {
    return (enc_grid() + 2 * proj_pad - proj_kernel) / proj_stride + 1;
  }
  int num_visual_tokens() const {
    return projector_type == "resampler" ? resampler_queries
                                         : proj_grid() * proj_grid();
  }
  int region_grid() const { return region_size / region_patch; }

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  void validate() const;
};

enum class Segment : uint8_t { Image, Instruction, Region, Answer };

/// Fused multimodal input to the LM, plus next-token targets for training.
template <class T>
struct EmbeddedSequence {
  Tensor<T> embeddings;  // [N, D_word]
  std::vector<Segment> segments;
  std::vector<int> token_ids;        // -1 at non-vocab (image/region) positions
  std::vector<int> targets;          // -1 where no loss
  std::vector<uint8_t> loss_mask;
  std::vector<int> placeholder_positions;  // rows substituted by H_q
  int prefix_len = 0;  // rows before the answer region
};

enum class FinishReason { Eos, MaxLength };

struct GenerationOutput {
  std::vector<int> ids;          // emitted answer tokens, EOS excluded
  std::vector<double> probs;     // conditional probability of each emitted token
  FinishReason finish = FinishReason::MaxLength;
};

/// Geometric mean of the conditional probabilities over one object's span.
double token_confidence(const std::vector<double>& span_probs);

/// ViT over a square image; returns the per-patch feature grid (no CLS).
template <class T>
struct VisualEncoder {
  int patch = 0, grid = 0, dim = 0;
  Linear<T> patch_embed;
  Parameter<T> pos_embed;  // [grid*grid, dim]
  std::vector<TransformerBlock<T>> blocks;
  LayerNorm<T> ln_f;

  VisualEncoder() = default;
  VisualEncoder(const std::string& name, int image_size, int patch_px, int d,
                int depth, int heads)
      : patch(patch_px), grid(image_size / patch_px), dim(d),
        patch_embed(name + ".patch_embed", patch_px * patch_px * 3, d),
        pos_embed(name + ".pos_embed", {grid * grid, d}),
        ln_f(name + ".ln_f", d) {
    if (image_size % patch_px != 0)
      throw std::invalid_argument("encoder: resolution not divisible by patch");
    for (int i = 0; i < depth; ++i)
      blocks.emplace_back(name + ".blocks." + std::to_string(i), d, heads, false);
  }

  void init(std::mt19937_64& rng, int pretrained_grid);
  void params(ParamRefs<T>& out) {
    out.push_back(&pos_embed);
    patch_embed.params(out);
    for (auto& b : blocks) b.params(out);
    ln_f.params(out);
  }

  Tensor<T> patchify(const Tensor<T>& img_hw3) const;
  Tensor<T> forward(const Tensor<T>& img_hw3);   // -> [grid², dim]
  Tensor<T> backward(const Tensor<T>& dgrid);    // -> [H, W, 3]
};

/// Eq.-style down-sampling projector: strided conv then affine projection,
/// with no intervening nonlinearity (the whole map is affine in the grid).
template <class T>
struct ConvProjector {
  int in_dim = 0, channels = 0, kernel = 3, stride = 2, pad = 1;
  int g_in = 0, g_out = 0;
  Parameter<T> conv_w, conv_b;
  Linear<T> proj;
  Tensor<T> x_chw_cache;

  ConvProjector() = default;
  ConvProjector(const std::string& name, int grid, int d_in, int ch, int k,
                int s, int p, int d_word)
      : in_dim(d_in), channels(ch), kernel(k), stride(s), pad(p), g_in(grid),
        g_out((grid + 2 * p - k) / s + 1),
        conv_w(name + ".conv.weight", {ch, d_in, k, k}),
        conv_b(name + ".conv.bias", {ch}),
        proj(name + ".proj", ch, d_word) {}

  void init(std::mt19937_64& rng) {
    init_normal(conv_w.value, rng, 1.0 / std::sqrt((double)(in_dim * kernel * kernel)));
    conv_b.value.zero();
    proj.init(rng);
  }
  void params(ParamRefs<T>& out) {
    out.push_back(&conv_w);
    out.push_back(&conv_b);
    proj.params(out);
  }

  Tensor<T> forward(const Tensor<T>& grid);   // [g_in², D] -> [g_out², D_word]
  Tensor<T> backward(const Tensor<T>& dtok);  // -> [g_in², D]
};

/// Perceiver-style resampler ablation baseline: learnable queries
/// cross-attend over the flattened grid; token count is independent of the
/// grid size.
template <class T>
struct ResamplerLayer {
  int dim = 0;
  LayerNorm<T> ln_q, ln_kv, ln_m;
  Linear<T> wq, wk, wv, wo;
  Mlp<T> mlp;
  Tensor<T> q_cache, k_cache, v_cache, att_cache;

  ResamplerLayer() = default;
  ResamplerLayer(const std::string& name, int d, int kv_dim)
      : dim(d), ln_q(name + ".ln_q", d), ln_kv(name + ".ln_kv", kv_dim),
        ln_m(name + ".ln_m", d), wq(name + ".wq", d, d),
        wk(name + ".wk", kv_dim, d), wv(name + ".wv", kv_dim, d),
        wo(name + ".wo", d, d), mlp(name + ".mlp", d) {}

  void init(std::mt19937_64& rng) {
    wq.init(rng);
    wk.init(rng);
    wv.init(rng);
    wo.init(rng);
    mlp.init(rng);
  }
  void params(ParamRefs<T>& out) {
    ln_q.params(out);
    ln_kv.params(out);
    wq.params(out);
    wk.params(out);
    wv.params(out);
    wo.params(out);
    ln_m.params(out);
    mlp.params(out);
  }

  // x: [q, dim] query stream, kv: [n, kv_dim] grid features.
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& kv);
  // Returns dx; accumulates dkv into the provided tensor.
  Tensor<T> backward(const Tensor<T>& dy, Tensor<T>& dkv);
};

template <class T>
struct Resampler {
  Parameter<T> queries;  // [q, D_word]
  std::vector<ResamplerLayer<T>> layers;

  Resampler() = default;
  Resampler(const std::string& name, int n_queries, int d_word, int kv_dim,
            int depth)
      : queries(name + ".queries", {n_queries, d_word}) {
    for (int i = 0; i < depth; ++i)
      layers.emplace_back(name + ".layers." + std::to_string(i), d_word, kv_dim);
  }

  void init(std::mt19937_64& rng) {
    init_normal(queries.value, rng, 0.02);
    for (auto& l : layers) l.init(rng);
  }
  void params(ParamRefs<T>& out) {
    out.push_back(&queries);
    for (auto& l : layers) l.params(out);
  }

  Tensor<T> forward(const Tensor<T>& grid);
  Tensor<T> backward(const Tensor<T>& dtok);  // -> d grid
};

/// Region encoder: ViT with a learnable CLS position; only the CLS feature
/// survives ("we discard other tokens").
template <class T>
struct RegionEncoder {
  int patch = 0, grid = 0, dim = 0;
  Parameter<T> cls;       // [1, dim]
  Parameter<T> pos_embed;  // [1 + grid², dim]
  Linear<T> patch_embed;
  std::vector<TransformerBlock<T>> blocks;
  LayerNorm<T> ln_f;

  RegionEncoder() = default;
  RegionEncoder(const std::string& name, int region_size, int patch_px, int d,
                int depth, int heads)
      : patch(patch_px), grid(region_size / patch_px), dim(d),
        cls(name + ".cls", {1, d}),
        pos_embed(name + ".pos_embed", {1 + grid * grid, d}),
        patch_embed(name + ".patch_embed", patch_px * patch_px * 3, d),
        ln_f(name + ".ln_f", d) {
    if (region_size % patch_px != 0)
      throw std::invalid_argument("region encoder: size not divisible by patch");
    for (int i = 0; i < depth; ++i)
      blocks.emplace_back(name + ".blocks." + std::to_string(i), d, heads, false);
  }

  void init(std::mt19937_64& rng);
  void params(ParamRefs<T>& out) {
    out.push_back(&cls);
    out.push_back(&pos_embed);
    patch_embed.params(out);
    for (auto& b : blocks) b.params(out);
    ln_f.params(out);
  }

  Tensor<T> forward(const Tensor<T>& region_hw3);  // -> [1, dim] CLS feature
  void backward(const Tensor<T>& dcls);            // region pixels get no grad sink
};

/// Decoder-only LM over embedded sequences.
template <class T>
struct Decoder {
  int dim = 0;
  Parameter<T> pos_embed;  // [max_seq, dim]
  std::vector<TransformerBlock<T>> blocks;
  LayerNorm<T> ln_f;

  Decoder() = default;
  Decoder(const std::string& name, int d, int depth, int heads, int max_seq)
      : dim(d), pos_embed(name + ".pos_embed", {max_seq, d}),
        ln_f(name + ".ln_f", d) {
    for (int i = 0; i < depth; ++i)
      blocks.emplace_back(name + ".blocks." + std::to_string(i), d, heads, true);
  }

  void init(std::mt19937_64& rng) {
    init_normal(pos_embed.value, rng, 0.02);
    for (auto& b : blocks) b.init(rng);
  }
  void params(ParamRefs<T>& out) {
    out.push_back(&pos_embed);
    for (auto& b : blocks) b.params(out);
    ln_f.params(out);
  }

  Tensor<T> forward(const Tensor<T>& emb);   // -> final hidden states [N, dim]
  Tensor<T> backward(const Tensor<T>& dh);   // -> d embeddings
};

/// The full co-referring vision-language model.
template <class T>
struct Model {
  ModelConfig cfg;
  VisualEncoder<T> vis;
  ConvProjector<T> conv_proj;
  Resampler<T> resampler;
  RegionEncoder<T> region;
  Linear<T> region_proj;    // CLS feature -> word space
  Parameter<T> word_emb;    // [V, D_word]
  Decoder<T> dec;
  Linear<T> lm_head;

  explicit Model(const ModelConfig& c);

  void init();  // deterministic from cfg.init_seed
  ParamRefs<T> params();
  void zero_grads();
  void zero_frozen_grads();

  static std::string partition_of(const std::string& param_name);

  /// Adapts a pretraining-resolution positional grid to the working grid by
  /// align-corners bilinear interpolation.
  static Tensor<T> adapt_pos_embed(const Tensor<T>& pretrained_ggd, int target_g);

  Tensor<T> encode_image(const Tensor<T>& img_hw3) { return vis.forward(img_hw3); }
  Tensor<T> visual_tokens(const Tensor<T>& img_hw3);
  Tensor<T> encode_region(const Tensor<T>& region_hw3);  // -> [1, D_word]

  /// Layout: [BOS][image tokens][instruction with placeholders substituted]
  /// and, when answer ids are given, the teacher-forced answer region with
  /// next-token targets (final answer position targets EOS).
  EmbeddedSequence<T> assemble_prompt(const Tensor<T>& visual_toks,
                                      const std::vector<int>& ins_ids,
                                      const Tensor<T>* region_token,
                                      const std::vector<int>* answer_ids) const;

  Tensor<T> forward_logits(const EmbeddedSequence<T>& seq);  // [N, V]
  T loss(const Tensor<T>& logits, const EmbeddedSequence<T>& seq) const;

  struct StepInput {
    Tensor<T> image;                       // [H, W, 3] in [-1, 1]
    std::vector<int> ins_ids;
    std::optional<Tensor<T>> region_image; // [r, r, 3]
    std::vector<int> answer_ids;
  };

  /// Forward + answer-masked loss + full backward through every branch.
  /// When dimage is given, receives the loss gradient w.r.t. input pixels.
  T train_step(const StepInput& in, Tensor<T>* dimage = nullptr);

  GenerationOutput generate(const EmbeddedSequence<T>& prefix, int max_new);

 private:
  Tensor<T> region_input_cache_;
  bool used_region_ = false;
};

using ModelF = Model<float>;
using ModelD = Model<double>;

}  // namespace covlm
