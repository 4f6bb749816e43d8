#include "model/model.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace seqnav {

using nlohmann::json;

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (d_h < 1) fail("d_h must be positive");
  if (n_heads < 1 || d_h % n_heads != 0) fail("d_h must be divisible by n_heads");
  if (num_layers < 1) fail("num_layers must be >= 1");
  if (vocab_size < 3) fail("vocab_size must cover the special tokens");
  if (object_feature_dim < 1) fail("object_feature_dim must be positive");
  if (max_tokens < 3) fail("max_tokens must be >= 3");
  if (room_taxonomy_size < 1) fail("room_taxonomy_size must be positive");
  if (direction_classes != 4) fail("direction_classes must be 4");
}

std::string model_config_to_json(const ModelConfig& cfg) {
  json j{{"d_h", cfg.d_h},
         {"num_layers", cfg.num_layers},
         {"n_heads", cfg.n_heads},
         {"vocab_size", cfg.vocab_size},
         {"object_feature_dim", cfg.object_feature_dim},
         {"max_tokens", cfg.max_tokens},
         {"room_taxonomy_size", cfg.room_taxonomy_size},
         {"direction_classes", cfg.direction_classes},
         {"temporal_context", cfg.temporal_context}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& s) {
  const json j = json::parse(s);
  ModelConfig cfg;
  cfg.d_h = j.at("d_h").get<int>();
  cfg.num_layers = j.at("num_layers").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.object_feature_dim = j.at("object_feature_dim").get<int>();
  cfg.max_tokens = j.at("max_tokens").get<int>();
  cfg.room_taxonomy_size = j.at("room_taxonomy_size").get<int>();
  cfg.direction_classes = j.at("direction_classes").get<int>();
  cfg.temporal_context = j.at("temporal_context").get<bool>();
  cfg.validate();
  return cfg;
}

Tensor OristModel::reg(const std::string& name, Shape shape, RngStream& rng, float stddev) {
  for (const auto& [n, t] : params_) {
    if (n == name) throw std::runtime_error("model: parameter '" + name + "' registered twice");
  }
  Tensor t = Tensor::param(std::move(shape), rng, stddev);
  params_.emplace_back(name, t);
  return t;
}

Tensor OristModel::reg_const(const std::string& name, Shape shape, float fill) {
  for (const auto& [n, t] : params_) {
    if (n == name) throw std::runtime_error("model: parameter '" + name + "' registered twice");
  }
  const size_t count = static_cast<size_t>(numel(shape));
  Tensor t = Tensor::from(std::move(shape), std::vector<float>(count, fill), true);
  params_.emplace_back(name, t);
  return t;
}

OristModel::OristModel(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  RngStream rng(seed);
  const int d = cfg_.d_h;
  const float std_init = 0.02f;

  word_emb_ = reg("embed.word", {cfg_.vocab_size, d}, rng, std_init);
  pos_emb_ = reg("embed.position", {cfg_.max_tokens, d}, rng, std_init);
  type_emb_ = reg("embed.type", {2, d}, rng, std_init);
  obj_feat_w_ = reg("embed.object_feature.w", {cfg_.object_feature_dim, d}, rng, std_init);
  obj_feat_b_ = reg_const("embed.object_feature.b", {d}, 0.0f);
  obj_pos_w_ = reg("embed.object_position.w", {7, d}, rng, std_init);
  obj_pos_b_ = reg_const("embed.object_position.b", {d}, 0.0f);
  ori_w_ = reg("embed.orientation.w", {4, d}, rng, std_init);
  ori_b_ = reg_const("embed.orientation.b", {d}, 0.0f);

  layers_.resize(cfg_.num_layers);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer& L = layers_[l];
    L.wq = reg(p + "attn.wq", {d, d}, rng, std_init);
    L.bq = reg_const(p + "attn.bq", {d}, 0.0f);
    L.wk = reg(p + "attn.wk", {d, d}, rng, std_init);
    L.bk = reg_const(p + "attn.bk", {d}, 0.0f);
    L.wv = reg(p + "attn.wv", {d, d}, rng, std_init);
    L.bv = reg_const(p + "attn.bv", {d}, 0.0f);
    L.wo = reg(p + "attn.wo", {d, d}, rng, std_init);
    L.bo = reg_const(p + "attn.bo", {d}, 0.0f);
    L.ln1_g = reg_const(p + "ln1.gamma", {d}, 1.0f);
    L.ln1_b = reg_const(p + "ln1.beta", {d}, 0.0f);
    L.ffn_w1 = reg(p + "ffn.w1", {d, 4 * d}, rng, std_init);
    L.ffn_b1 = reg_const(p + "ffn.b1", {4 * d}, 0.0f);
    L.ffn_w2 = reg(p + "ffn.w2", {4 * d, d}, rng, std_init);
    L.ffn_b2 = reg_const(p + "ffn.b2", {d}, 0.0f);
    L.ln2_g = reg_const(p + "ln2.gamma", {d}, 1.0f);
    L.ln2_b = reg_const(p + "ln2.beta", {d}, 0.0f);
  }

  enc_w_ = reg("encoder.we", {d, d}, rng, std_init);
  enc_b_ = reg_const("encoder.be", {d}, 0.0f);
  lstm_wx_ = reg("lstm.wx", {d, 4 * d}, rng, std_init);
  lstm_bx_ = reg_const("lstm.bx", {4 * d}, 0.0f);
  lstm_wh_ = reg("lstm.wh", {d, 4 * d}, rng, std_init);
  lstm_bh_ = reg_const("lstm.bh", {4 * d}, 0.0f);

  auto mlp = [&](const std::string& name, int din, int dout) {
    Mlp m;
    m.w1 = reg(name + ".w1", {din, d}, rng, std_init);
    m.b1 = reg_const(name + ".b1", {d}, 0.0f);
    m.w2 = reg(name + ".w2", {d, dout}, rng, std_init);
    m.b2 = reg_const(name + ".b2", {dout}, 0.0f);
    return m;
  };
  dir_head_ = mlp("head.direction", d, cfg_.direction_classes);
  room_next_head_ = mlp("head.room_next", d, cfg_.room_taxonomy_size);
  room_goal_head_ = mlp("head.room_goal", d, cfg_.room_taxonomy_size);
  action_head_ = mlp("head.action", 2 * d, 1);  // [E_t,i ; h_t]
  progress_head_ = mlp("head.progress", d, 1);
  value_w_ = reg("head.value.w", {d, 1}, rng, std_init);
  value_b_ = reg_const("head.value.b", {1}, 0.0f);
}

StepState OristModel::initial_state() const {
  return {Tensor::zeros({cfg_.d_h}), Tensor::zeros({cfg_.d_h}), 0};
}

std::vector<Tensor> OristModel::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [n, t] : params_) out.push_back(t);
  return out;
}

Tensor OristModel::parameter(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw std::invalid_argument("model: unknown parameter '" + name + "'");
}

void OristModel::set_parameter(const std::string& name, const std::vector<float>& values) {
  Tensor t = parameter(name);
  if (static_cast<int64_t>(values.size()) != t.size()) {
    throw std::invalid_argument("model: parameter '" + name + "' expects " +
                                std::to_string(t.size()) + " values, got " +
                                std::to_string(values.size()));
  }
  std::copy(values.begin(), values.end(), t.values_mut().begin());
}

EmbeddedCandidates OristModel::embed_inputs(std::span<const int> instruction,
                                            const House& house, const Observation& obs) const {
  const int d = cfg_.d_h;
  const int L = static_cast<int>(instruction.size());
  for (int id : instruction) {
    if (id < 0 || id >= cfg_.vocab_size) {
      throw std::invalid_argument("embed_inputs: unknown token id " + std::to_string(id));
    }
  }
  const int g = static_cast<int>(obs.candidates.size());
  if (g == 0) throw std::invalid_argument("embed_inputs: observation has no candidates");
  int max_objects = 0;
  for (const auto& c : obs.candidates) {
    max_objects = std::max(max_objects, static_cast<int>(c.object_indices.size()));
  }
  const int seq_len = (L + 2) + max_objects + 1;
  if (seq_len > cfg_.max_tokens) {
    throw std::invalid_argument(
        "embed_inputs: sequence of " + std::to_string(seq_len) + " tokens (" +
        std::to_string(L) + " words + " + std::to_string(max_objects) +
        " objects + specials) exceeds max_tokens " + std::to_string(cfg_.max_tokens));
  }

  // Word rows are shared by every candidate: token + position + type(0).
  std::vector<int> tok;
  tok.reserve(L + 2);
  tok.push_back(Vocab::kCls);
  tok.insert(tok.end(), instruction.begin(), instruction.end());
  tok.push_back(Vocab::kSep);
  std::vector<int> pos(L + 2);
  for (int i = 0; i < L + 2; ++i) pos[i] = i;
  Tensor words = add(add(embedding(word_emb_, tok), embedding(pos_emb_, pos)),
                     tile_rows(select_row(type_emb_, 0), L + 2));

  EmbeddedCandidates out;
  out.seq_len = seq_len;
  out.instruction_len = L;
  for (const auto& cand : obs.candidates) {
    const int n_obj = static_cast<int>(cand.object_indices.size());
    out.object_counts.push_back(n_obj);
    std::vector<Tensor> parts{words};
    if (n_obj > 0) {
      std::vector<float> feats(static_cast<size_t>(n_obj) * cfg_.object_feature_dim);
      std::vector<float> boxes(static_cast<size_t>(n_obj) * 7);
      for (int i = 0; i < n_obj; ++i) {
        const ObjectPlacement& o = house.objects[cand.object_indices[i]];
        if (static_cast<int>(o.feature.size()) != cfg_.object_feature_dim) {
          throw std::invalid_argument("embed_inputs: object feature dim " +
                                      std::to_string(o.feature.size()) + " != model " +
                                      std::to_string(cfg_.object_feature_dim));
        }
        std::copy(o.feature.begin(), o.feature.end(),
                  feats.begin() + static_cast<size_t>(i) * cfg_.object_feature_dim);
        std::copy(o.box.begin(), o.box.end(), boxes.begin() + static_cast<size_t>(i) * 7);
      }
      Tensor feat_t = Tensor::from({n_obj, cfg_.object_feature_dim}, std::move(feats));
      Tensor box_t = Tensor::from({n_obj, 7}, std::move(boxes));
      Tensor obj_rows = add(add(linear(feat_t, obj_feat_w_, obj_feat_b_),
                                linear(box_t, obj_pos_w_, obj_pos_b_)),
                            tile_rows(select_row(type_emb_, 1), n_obj));
      parts.push_back(obj_rows);
    }
    Tensor ori = Tensor::from({4}, {cand.orientation[0], cand.orientation[1],
                                    cand.orientation[2], cand.orientation[3]});
    parts.push_back(linear(ori, ori_w_, ori_b_));
    const int pad = seq_len - (L + 2) - n_obj - 1;
    if (pad > 0) parts.push_back(Tensor::zeros({pad, d}));
    out.sequences.push_back(concat_rows(parts));

    std::vector<float> mask(seq_len, 0.0f);
    for (int i = seq_len - pad; i < seq_len; ++i) mask[i] = kMaskBlocked;
    out.masks.push_back(Tensor::from({seq_len}, std::move(mask)));
  }
  return out;
}

Tensor OristModel::transformer_layer(int layer, const Tensor& x, const Tensor& mask,
                                     int candidate, AttentionSink* sink) const {
  const Layer& L = layers_.at(layer);
  const int d = cfg_.d_h;
  const int dk = d / cfg_.n_heads;
  const float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(dk));

  Tensor q = linear(x, L.wq, L.bq);
  Tensor k = linear(x, L.wk, L.bk);
  Tensor v = linear(x, L.wv, L.bv);
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(cfg_.n_heads);
  for (int h = 0; h < cfg_.n_heads; ++h) {
    Tensor qh = slice_cols(q, h * dk, (h + 1) * dk);
    Tensor kh = slice_cols(k, h * dk, (h + 1) * dk);
    Tensor vh = slice_cols(v, h * dk, (h + 1) * dk);
    Tensor probs = masked_softmax(scale(matmul_nt(qh, kh), inv_sqrt_dk), mask);
    if (sink != nullptr) {
      sink->on_attention(candidate, layer, h, probs.values().data(), x.rows());
    }
    head_outputs.push_back(matmul(probs, vh));
  }
  Tensor attn = linear(concat_cols(head_outputs), L.wo, L.bo);
  Tensor x1 = layer_norm(add(x, attn), L.ln1_g, L.ln1_b);
  Tensor ffn = linear(relu(linear(x1, L.ffn_w1, L.ffn_b1)), L.ffn_w2, L.ffn_b2);
  return layer_norm(add(x1, ffn), L.ln2_g, L.ln2_b);
}

std::pair<Tensor, Tensor> OristModel::lstm_cell(const Tensor& x, const Tensor& h,
                                                const Tensor& c) const {
  const int d = cfg_.d_h;
  Tensor gates = add(linear(x, lstm_wx_, lstm_bx_), linear(h, lstm_wh_, lstm_bh_));
  Tensor gi = sigmoid(slice_cols(gates, 0, d));
  Tensor gf = sigmoid(slice_cols(gates, d, 2 * d));
  Tensor gg = tanh(slice_cols(gates, 2 * d, 3 * d));
  Tensor go = sigmoid(slice_cols(gates, 3 * d, 4 * d));
  Tensor c_new = add(mul(gf, c), mul(gi, gg));
  Tensor h_new = mul(go, tanh(c_new));
  return {h_new, c_new};
}

EncodedStep OristModel::encode_step(std::span<const int> instruction, const House& house,
                                    const Observation& obs, const StepState& state,
                                    AttentionSink* sink) const {
  EmbeddedCandidates emb = embed_inputs(instruction, house, obs);
  const int g = static_cast<int>(emb.sequences.size());
  std::vector<Tensor> cls_rows;
  cls_rows.reserve(g);
  for (int i = 0; i < g; ++i) {
    Tensor hseq = emb.sequences[i];
    for (int l = 0; l < cfg_.num_layers; ++l) {
      hseq = transformer_layer(l, hseq, emb.masks[i], i, sink);
    }
    cls_rows.push_back(select_row(hseq, 0));
  }
  Tensor e = tanh(linear(concat_rows(cls_rows), enc_w_, enc_b_));
  Tensor pooled = mean_over_rows(e);
  auto [h_new, c_new] = lstm_cell(pooled, state.h, state.c);

  EncodedStep out;
  out.candidate_repr = e;
  out.pooled = pooled;
  out.next_state = {h_new, c_new, state.step + 1};
  out.num_candidates = g;
  out.seq_len = emb.seq_len;
  out.instruction_len = emb.instruction_len;
  return out;
}

HeadOutputs OristModel::heads(const EncodedStep& enc) const {
  auto mlp2 = [](const Mlp& m, const Tensor& x) {
    return linear(relu(linear(x, m.w1, m.b1)), m.w2, m.b2);
  };
  HeadOutputs out;
  out.direction_logits = mlp2(dir_head_, enc.candidate_repr);
  out.room_next_logits = mlp2(room_next_head_, enc.pooled);
  out.room_goal_logits = mlp2(room_goal_head_, enc.pooled);
  Tensor action_in =
      concat_cols(std::vector<Tensor>{enc.candidate_repr, tile_rows(enc.next_state.h, enc.num_candidates)});
  out.action_logits = flatten(mlp2(action_head_, action_in));
  out.progress = sigmoid(mlp2(progress_head_, enc.pooled));
  out.value = linear(enc.pooled, value_w_, value_b_);
  return out;
}

std::pair<Tensor, Tensor> OristModel::conditioning_probe(std::span<const int> instruction,
                                                         const House& house,
                                                         const Observation& obs,
                                                         const StepState& a,
                                                         const StepState& b) const {
  HeadOutputs ha = heads(encode_step(instruction, house, obs, a));
  HeadOutputs hb = heads(encode_step(instruction, house, obs, b));
  return {ha.action_logits, hb.action_logits};
}

}  // namespace seqnav
