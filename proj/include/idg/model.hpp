// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "idg/datagen.hpp"
#include "idg/dem.hpp"
#include "idg/image.hpp"
#include "idg/set_loss.hpp"
#include "idg/tape.hpp"

namespace idg {

struct BackboneConfig {
  std::size_t stage_count = 4;
  std::vector<std::size_t> channels = {8, 16, 32, 64};
  std::set<std::size_t> dem_stages = {0, 1, 2, 3};
};

struct TextEncoderConfig {
  std::size_t dim = 64;
  std::size_t depth = 2;
  std::size_t max_len = 16;
};

struct DecoderConfig {
  std::size_t query_count = 8;
  std::size_t model_dim = 64;
  std::size_t encoder_depth = 2;
  std::size_t decoder_depth = 2;
  std::size_t ffn_mult = 4;
};

struct ModelConfig {
  std::size_t canvas = 64;
  BackboneConfig backbone;
  TextEncoderConfig text;
  DecoderConfig decoder;
  double alpha = 0.75;
  double beta = 0.75;
  bool scale_attention = true;
};

// Whitespace/lowercase vocabulary over the closed query-template corpus.
struct Vocabulary {
  std::map<std::string, int> token_to_id;  // id 0 is <unk>
  int id_of(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? 0 : it->second;
  }
  std::size_t size() const { return token_to_id.size() + 1; }
};

Vocabulary build_vocabulary();
std::vector<std::string> tokenize(const std::string& text);
std::vector<int> encode_tokens(const Vocabulary& v, const std::string& text);

template <typename T>
using ParamStore = std::map<std::string, Tensor<T>>;

template <typename T>
ParamStore<T> init_params(const ModelConfig& cfg, const Vocabulary& vocab,
                          std::uint64_t seed);

// Checkpoint container: magic "IDGCKPT1", u32 tensor count, then per tensor a
// length-prefixed name, u32 rank, u64 dims, f32 payload. Little-endian.
void save_checkpoint(const std::string& path, const ParamStore<float>& params);
ParamStore<float> load_checkpoint(const std::string& path);

// Binds a parameter store onto a tape, inserting each tensor lazily.
template <typename T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, const ParamStore<T>& store, bool needs_grad)
      : tape_(tape), store_(store), needs_grad_(needs_grad) {}

  Var operator()(const std::string& name) {
    auto it = vars_.find(name);
    if (it != vars_.end()) return it->second;
    auto sit = store_.find(name);
    if (sit == store_.end())
      throw std::invalid_argument("unknown parameter '" + name + "'");
    Var v = tape_.input(sit->second, needs_grad_);
    vars_.emplace(name, v);
    return v;
  }

  // Gradients for every parameter touched during the forward pass.
  std::map<std::string, const Tensor<T>*> touched_grads() {
    std::map<std::string, const Tensor<T>*> out;
    for (auto& [name, var] : vars_)
      if (tape_.needs_grad(var)) out.emplace(name, &tape_.grad(var));
    return out;
  }

 private:
  Tape<T>& tape_;
  const ParamStore<T>& store_;
  bool needs_grad_;
  std::map<std::string, Var> vars_;
};

template <typename T>
struct ModelOutput {
  Var boxes;   // K x 4, cxcywh in [0,1]
  Var logits;  // K x 2, {difference, no-object}
  // Outputs of the earlier decoder layers through the shared heads, for
  // auxiliary (deep-supervision) losses during training.
  std::vector<Var> aux_boxes, aux_logits;
  Var feat1, feat2;
  // Final-stage DEM maps when DEM runs there (for diagnostics).
  std::vector<DemTrace<T>> traces;
};

template <typename T>
Tensor<T> image_to_tensor(const Image& img);

template <typename T>
std::pair<Var, Var> dvb_forward(Tape<T>& t, BoundParams<T>& p, Var img1,
                                Var img2, const ModelConfig& cfg,
                                std::vector<DemTrace<T>>* traces = nullptr);

template <typename T>
Var encode_text_on_tape(Tape<T>& t, BoundParams<T>& p,
                        const std::vector<int>& token_ids,
                        const ModelConfig& cfg);

template <typename T>
Var fuse(Tape<T>& t, BoundParams<T>& p, Var feat1, Var feat2, Var text,
         const ModelConfig& cfg);

template <typename T>
ModelOutput<T> decode(Tape<T>& t, BoundParams<T>& p, Var fused,
                      const ModelConfig& cfg);

template <typename T>
ModelOutput<T> model_forward(Tape<T>& t, BoundParams<T>& p, const Image& img1,
                             const Image& img2,
                             const std::vector<int>& token_ids,
                             const ModelConfig& cfg);

// Inference: the argmax-p_diff slot's box, converted to corners and clamped.
BoxXYXY predict(const ParamStore<float>& params, const ModelConfig& cfg,
                const Vocabulary& vocab, const Image& img1, const Image& img2,
                const std::string& query_text, double* p_diff_out = nullptr);

// ---- template implementations ----

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  // CHW layout.
  std::size_t n = img.width * img.height;
  Tensor<T> t({3, n});
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const float* px = img.at(x, y);
      for (std::size_t c = 0; c < 3; ++c)
        t.data[c * n + y * img.width + x] = T(px[c]);
    }
  return t;
}

// Fixed 2-D sinusoidal positions for a g x g token grid, d channels.
template <typename T>
Tensor<T> sinusoid_2d(std::size_t g, std::size_t d) {
  Tensor<T> out({g * g, d});
  std::size_t half = d / 2;
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx) {
      std::size_t row = gy * g + gx;
      for (std::size_t i = 0; i < half; ++i) {
        double freq = std::pow(10000.0, -2.0 * double(i / 2) / double(half));
        double vx = double(gx) * freq;
        out.at(row, i) = T(i % 2 == 0 ? std::sin(vx) : std::cos(vx));
      }
      for (std::size_t i = half; i < d; ++i) {
        std::size_t j = i - half;
        double freq = std::pow(10000.0, -2.0 * double(j / 2) / double(half));
        double vy = double(gy) * freq;
        out.at(row, i) = T(j % 2 == 0 ? std::sin(vy) : std::cos(vy));
      }
    }
  return out;
}

namespace model_detail {

template <typename T>
Var attention(Tape<T>& t, BoundParams<T>& p, Var xq, Var xkv,
              const std::string& prefix) {
  std::size_t d = t.val(xq).shape[1];
  Var q = t.matmul(xq, p(prefix + ".wq"));
  Var k = t.matmul(xkv, p(prefix + ".wk"));
  Var v = t.matmul(xkv, p(prefix + ".wv"));
  Var a = t.scale(t.matmul(q, k, false, true), T(1) / std::sqrt(T(d)));
  return t.matmul(t.matmul(t.softmax_rows(a), v), p(prefix + ".wo"));
}

template <typename T>
Var ffn(Tape<T>& t, BoundParams<T>& p, Var x, const std::string& prefix) {
  Var h = t.relu(t.add_rowvec(t.matmul(x, p(prefix + ".w1")), p(prefix + ".b1")));
  return t.add_rowvec(t.matmul(h, p(prefix + ".w2")), p(prefix + ".b2"));
}

template <typename T>
Var ln(Tape<T>& t, BoundParams<T>& p, Var x, const std::string& prefix) {
  return t.layer_norm(x, p(prefix + ".g"), p(prefix + ".b"));
}

// x / sqrt(mean(x^2) + eps) with the mean over the whole map, composed from
// tape primitives (rsqrt = exp(-log/2); scalar broadcast via [N x 1]*[1 x 1]).
template <typename T>
Var global_rms(Tape<T>& t, Var x) {
  const auto& v = t.val(x);
  std::size_t n = v.shape[0], d = v.shape[1];
  Var ms = t.add(t.mean(t.mul(x, x)), t.scalar(T(1e-6)));
  Var inv = t.exp(t.scale(t.log(ms), T(-0.5)));
  return t.reshape(t.matmul(t.reshape(x, {n * d, 1}), inv), {n, d});
}

// Pre-LN self-attention encoder layer.
template <typename T>
Var encoder_layer(Tape<T>& t, BoundParams<T>& p, Var x,
                  const std::string& prefix) {
  Var xn = ln(t, p, x, prefix + ".ln1");
  x = t.add(x, attention(t, p, xn, xn, prefix + ".attn"));
  x = t.add(x, ffn(t, p, ln(t, p, x, prefix + ".ln2"), prefix + ".ffn"));
  return x;
}

}  // namespace model_detail

template <typename T>
std::pair<Var, Var> dvb_forward(Tape<T>& t, BoundParams<T>& p, Var img1,
                                Var img2, const ModelConfig& cfg,
                                std::vector<DemTrace<T>>* traces) {
  const auto& bb = cfg.backbone;
  std::size_t h = cfg.canvas;
  std::size_t cin = 3;
  Var x1 = img1, x2 = img2;  // CHW-flattened
  Var tok1, tok2;
  for (std::size_t s = 0; s < bb.stage_count; ++s) {
    std::string pre = "bb.s" + std::to_string(s);
    tok1 = t.relu(t.conv3x3s2(x1, p(pre + ".w"), p(pre + ".b"), cin, h, h));
    tok2 = t.relu(t.conv3x3s2(x2, p(pre + ".w"), p(pre + ".b"), cin, h, h));
    h /= 2;
    cin = bb.channels[s];
    // Map-wide RMS normalization: bounds the scale each stage (the DEM
    // aggregation otherwise compounds and overflows f32) while preserving
    // *relative* token magnitudes. A per-token norm here would equalize all
    // tokens, erasing the changed-token saliency DEM exists to create, and
    // would amplify sensor noise on near-uniform background tokens.
    tok1 = model_detail::global_rms(t, tok1);
    tok2 = model_detail::global_rms(t, tok2);
    if (bb.dem_stages.count(s)) {
      std::string dp = "dem.s" + std::to_string(s);
      DemVars dv = dem_forward_on_tape(t, tok1, tok2, p(dp + ".wq"),
                                       p(dp + ".wk"), p(dp + ".wv"),
                                       T(cfg.alpha), T(cfg.beta),
                                       cfg.scale_attention);
      tok1 = dv.f1;
      tok2 = dv.f2;
      if (traces)
        traces->push_back(DemTrace<T>{t.val(dv.a1), t.val(dv.a2), t.val(dv.ad),
                                      t.val(dv.ac)});
    }
    if (s + 1 < bb.stage_count) {
      x1 = t.tokens_to_chw(tok1);
      x2 = t.tokens_to_chw(tok2);
    }
  }
  return {tok1, tok2};
}

template <typename T>
Var encode_text_on_tape(Tape<T>& t, BoundParams<T>& p,
                        const std::vector<int>& token_ids,
                        const ModelConfig& cfg) {
  if (token_ids.empty())
    throw std::invalid_argument("encode_text: empty query");
  std::size_t len = std::min(token_ids.size(), cfg.text.max_len);
  Var embed = p("txt.embed");
  std::vector<Var> rows;
  for (std::size_t i = 0; i < len; ++i) {
    std::size_t id = std::size_t(token_ids[i]);
    rows.push_back(t.slice_rows(embed, id, id + 1));
  }
  Var x = t.concat_rows(rows);
  x = t.add(x, t.slice_rows(p("txt.pos"), 0, len));
  for (std::size_t l = 0; l < cfg.text.depth; ++l)
    x = model_detail::encoder_layer(t, p, x, "txt.l" + std::to_string(l));
  return x;
}

template <typename T>
Var fuse(Tape<T>& t, BoundParams<T>& p, Var feat1, Var feat2, Var text,
         const ModelConfig& cfg) {
  std::size_t n = t.val(feat1).shape[0];
  std::size_t g = std::size_t(std::lround(std::sqrt(double(n))));
  std::size_t d = cfg.decoder.model_dim;
  Var pos = t.constant(sinusoid_2d<T>(g, d));
  Var src = p("neck.src");  // 3 x d: image-1, image-2, text
  auto project_vis = [&](Var f, std::size_t which) {
    Var v = t.add_rowvec(t.matmul(f, p("neck.vis_proj")), p("neck.vis_b"));
    v = t.add(v, pos);
    return t.add_rowvec(v, t.slice_rows(src, which, which + 1));
  };
  Var v1 = project_vis(feat1, 0);
  Var v2 = project_vis(feat2, 1);
  Var tx = t.add_rowvec(t.matmul(text, p("neck.txt_proj")), p("neck.txt_b"));
  tx = t.add_rowvec(tx, t.slice_rows(src, 2, 3));
  return t.concat_rows({v1, v2, tx});
}

template <typename T>
ModelOutput<T> decode(Tape<T>& t, BoundParams<T>& p, Var fused,
                      const ModelConfig& cfg) {
  Var mem = fused;
  for (std::size_t l = 0; l < cfg.decoder.encoder_depth; ++l)
    mem = model_detail::encoder_layer(t, p, mem, "enc.l" + std::to_string(l));
  mem = model_detail::ln(t, p, mem, "enc.ln");

  auto heads = [&](Var slots) {
    Var hn = model_detail::ln(t, p, slots, "dec.ln");
    Var hidden = t.relu(
        t.add_rowvec(t.matmul(hn, p("head.box.w1")), p("head.box.b1")));
    Var boxes = t.sigmoid(
        t.add_rowvec(t.matmul(hidden, p("head.box.w2")), p("head.box.b2")));
    Var logits = t.add_rowvec(t.matmul(hn, p("head.cls.w")), p("head.cls.b"));
    return std::pair<Var, Var>{boxes, logits};
  };

  ModelOutput<T> out;
  Var q = p("dec.query");
  for (std::size_t l = 0; l < cfg.decoder.decoder_depth; ++l) {
    std::string pre = "dec.l" + std::to_string(l);
    Var qn = model_detail::ln(t, p, q, pre + ".ln1");
    q = t.add(q, model_detail::attention(t, p, qn, qn, pre + ".self"));
    q = t.add(q, model_detail::attention(t, p,
                                         model_detail::ln(t, p, q, pre + ".ln2"),
                                         mem, pre + ".cross"));
    q = t.add(q, model_detail::ffn(t, p,
                                   model_detail::ln(t, p, q, pre + ".ln3"),
                                   pre + ".ffn"));
    // Deep supervision: every layer's slots pass through the shared norm and
    // heads; intermediate outputs feed auxiliary losses.
    if (l + 1 < cfg.decoder.decoder_depth) {
      auto [b, lg] = heads(q);
      out.aux_boxes.push_back(b);
      out.aux_logits.push_back(lg);
    }
  }
  auto [boxes, logits] = heads(q);
  out.boxes = boxes;
  out.logits = logits;
  return out;
}

template <typename T>
ModelOutput<T> model_forward(Tape<T>& t, BoundParams<T>& p, const Image& img1,
                             const Image& img2,
                             const std::vector<int>& token_ids,
                             const ModelConfig& cfg) {
  Var i1 = t.constant(image_to_tensor<T>(img1));
  Var i2 = t.constant(image_to_tensor<T>(img2));
  std::vector<DemTrace<T>> traces;
  auto [f1, f2] = dvb_forward(t, p, i1, i2, cfg, &traces);
  Var text = encode_text_on_tape(t, p, token_ids, cfg);
  Var fused = fuse(t, p, f1, f2, text, cfg);
  ModelOutput<T> out = decode(t, p, fused, cfg);
  out.feat1 = f1;
  out.feat2 = f2;
  out.traces = std::move(traces);
  return out;
}

template <typename T>
ParamStore<T> init_params(const ModelConfig& cfg, const Vocabulary& vocab,
                          std::uint64_t seed) {
  Rng rng(seed);
  ParamStore<T> ps;
  auto mat = [&](const std::string& name, std::size_t r, std::size_t c) {
    ps[name] = Tensor<T>::randn({r, c}, rng, 1.0 / std::sqrt(double(c)));
  };
  auto zeros = [&](const std::string& name, std::size_t r, std::size_t c) {
    ps[name] = Tensor<T>::zeros({r, c});
  };
  auto ones = [&](const std::string& name, std::size_t c) {
    ps[name] = Tensor<T>::full({1, c}, T(1));
  };
  auto layer = [&](const std::string& pre, std::size_t d, std::size_t f) {
    mat(pre + ".attn.wq", d, d);
    mat(pre + ".attn.wk", d, d);
    mat(pre + ".attn.wv", d, d);
    mat(pre + ".attn.wo", d, d);
    ones(pre + ".ln1.g", d);
    zeros(pre + ".ln1.b", 1, d);
    ones(pre + ".ln2.g", d);
    zeros(pre + ".ln2.b", 1, d);
    mat(pre + ".ffn.w1", d, f);
    zeros(pre + ".ffn.b1", 1, f);
    mat(pre + ".ffn.w2", f, d);
    zeros(pre + ".ffn.b2", 1, d);
  };

  const auto& bb = cfg.backbone;
  std::size_t cin = 3;
  for (std::size_t s = 0; s < bb.stage_count; ++s) {
    std::size_t cout = bb.channels[s];
    // Delta-style conv init: the center tap carries full variance, the
    // neighbor taps start near zero. A spatially flat random init smears
    // every feature over the growing receptive field, so by the 4x4 stage
    // the DEM's changed-token saliency is indistinguishable from background;
    // center-dominant kernels keep features local until training decides
    // how to mix neighborhoods.
    {
      Tensor<T> w({cout, cin * 9});
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t i = 0; i < cin * 9; ++i) {
          bool center = (i % 9) == 4;
          double sd = center ? 1.0 / std::sqrt(double(cin))
                             : 0.05 / std::sqrt(double(cin));
          w.at(o, i) = T(rng.normal() * sd);
        }
      ps["bb.s" + std::to_string(s) + ".w"] = std::move(w);
    }
    zeros("bb.s" + std::to_string(s) + ".b", 1, cout);
    if (bb.dem_stages.count(s)) {
      std::string dp = "dem.s" + std::to_string(s);
      mat(dp + ".wq", cout, cout);
      mat(dp + ".wk", cout, cout);
      mat(dp + ".wv", cout, cout);
    }
    cin = cout;
  }

  std::size_t d = cfg.decoder.model_dim;
  std::size_t f = d * cfg.decoder.ffn_mult;
  mat("txt.embed", vocab.size(), d);
  mat("txt.pos", cfg.text.max_len, d);
  for (std::size_t l = 0; l < cfg.text.depth; ++l)
    layer("txt.l" + std::to_string(l), d, f);

  mat("neck.vis_proj", bb.channels.back(), d);
  zeros("neck.vis_b", 1, d);
  mat("neck.txt_proj", d, d);
  zeros("neck.txt_b", 1, d);
  mat("neck.src", 3, d);

  for (std::size_t l = 0; l < cfg.decoder.encoder_depth; ++l)
    layer("enc.l" + std::to_string(l), d, f);
  ones("enc.ln.g", d);
  zeros("enc.ln.b", 1, d);

  // Unit-scale slot embeddings: queries must start well separated or every
  // slot computes nearly the same function and bipartite matching cannot
  // break the symmetry.
  ps["dec.query"] = Tensor<T>::randn({cfg.decoder.query_count, d}, rng, 1.0);
  for (std::size_t l = 0; l < cfg.decoder.decoder_depth; ++l) {
    std::string pre = "dec.l" + std::to_string(l);
    for (const char* blk : {".self", ".cross"}) {
      mat(pre + blk + ".wq", d, d);
      mat(pre + blk + ".wk", d, d);
      mat(pre + blk + ".wv", d, d);
      mat(pre + blk + ".wo", d, d);
    }
    for (const char* lnn : {".ln1", ".ln2", ".ln3"}) {
      ones(pre + lnn + ".g", d);
      zeros(pre + lnn + ".b", 1, d);
    }
    mat(pre + ".ffn.w1", d, f);
    zeros(pre + ".ffn.b1", 1, f);
    mat(pre + ".ffn.w2", f, d);
    zeros(pre + ".ffn.b2", 1, d);
  }
  ones("dec.ln.g", d);
  zeros("dec.ln.b", 1, d);

  mat("head.box.w1", d, d);
  zeros("head.box.b1", 1, d);
  // Wide output init so the K slots start with well-separated boxes (a rough
  // anchor tiling). If every slot begins at the same centered box, hungarian
  // matching is decided by noise, churns between slots every step, and no
  // slot ever specializes — classification stalls at the uniform optimum.
  ps["head.box.w2"] = Tensor<T>::randn({d, 4}, rng, 4.0 / std::sqrt(double(d)));
  zeros("head.box.b2", 1, 4);
  mat("head.cls.w", d, 2);
  zeros("head.cls.b", 1, 2);
  return ps;
}

}  // namespace idg
