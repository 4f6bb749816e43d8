#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"
#include "world/world.hpp"

namespace seqnav {

struct ModelConfig {
  int d_h = 64;
  int num_layers = 2;  // transformer layers (U)
  int n_heads = 4;
  int vocab_size = 0;
  int object_feature_dim = 64;
  int max_tokens = 48;  // C_max
  int room_taxonomy_size = 8;
  int direction_classes = 4;
  // When false the rollout resets (h, c) to zeros before every step, which
  // removes the step-to-step connection while keeping the parameter count.
  bool temporal_context = true;

  void validate() const;
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& s);

// LSTM temporal context carried between navigation steps; starts at zeros.
struct StepState {
  Tensor h;
  Tensor c;
  int step = 0;
};

struct EmbeddedCandidates {
  std::vector<Tensor> sequences;  // per candidate [C_t x d_h]
  std::vector<Tensor> masks;      // per candidate [C_t], additive key mask
  int seq_len = 0;                // C_t
  int instruction_len = 0;        // L, word tokens between [CLS] and [SEP]
  std::vector<int> object_counts;
};

struct EncodedStep {
  Tensor candidate_repr;  // E_t, [G x d_h], tanh range
  Tensor pooled;          // I_t, [d_h]
  StepState next_state;
  int num_candidates = 0;
  int seq_len = 0;
  int instruction_len = 0;
};

struct HeadOutputs {
  Tensor direction_logits;  // [G x 4]
  Tensor room_next_logits;  // [rooms]
  Tensor room_goal_logits;  // [rooms]
  Tensor action_logits;     // [G], raw
  Tensor progress;          // [1], sigmoid output
  Tensor value;             // [1], estimated reward Z_t
};

// Receives attention probability matrices during a forward pass.
class AttentionSink {
 public:
  virtual ~AttentionSink() = default;
  virtual void on_attention(int candidate, int layer, int head,
                            const float* probs, int seq_len) = 0;
};

// Object-level sequential encoder with room/direction/progress heads.
// Candidates are encoded as independent [CLS] instruction [SEP] objects [ORI]
// sequences; the per-candidate [CLS] outputs feed the heads and, pooled, the
// LSTM that carries context to the next step.
class OristModel {
 public:
  OristModel(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  StepState initial_state() const;

  EmbeddedCandidates embed_inputs(std::span<const int> instruction, const House& house,
                                  const Observation& obs) const;

  Tensor transformer_layer(int layer, const Tensor& x, const Tensor& mask,
                           int candidate = 0, AttentionSink* sink = nullptr) const;

  EncodedStep encode_step(std::span<const int> instruction, const House& house,
                          const Observation& obs, const StepState& state,
                          AttentionSink* sink = nullptr) const;

  HeadOutputs heads(const EncodedStep& enc) const;

  // Runs the same observation under two different temporal contexts and
  // returns both action logit vectors.
  std::pair<Tensor, Tensor> conditioning_probe(std::span<const int> instruction,
                                               const House& house, const Observation& obs,
                                               const StepState& a, const StepState& b) const;

  // Registration order is fixed; names are unique.
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  Tensor parameter(const std::string& name) const;
  void set_parameter(const std::string& name, const std::vector<float>& values);

 private:
  Tensor reg(const std::string& name, Shape shape, RngStream& rng, float stddev);
  Tensor reg_const(const std::string& name, Shape shape, float fill);
  std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c) const;

  ModelConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;

  Tensor word_emb_, pos_emb_, type_emb_;
  Tensor obj_feat_w_, obj_feat_b_, obj_pos_w_, obj_pos_b_, ori_w_, ori_b_;
  struct Layer {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_g, ln1_b;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor ln2_g, ln2_b;
  };
  std::vector<Layer> layers_;
  Tensor enc_w_, enc_b_;  // E_t projection
  Tensor lstm_wx_, lstm_bx_, lstm_wh_, lstm_bh_;
  struct Mlp {
    Tensor w1, b1, w2, b2;
  };
  Mlp dir_head_, room_next_head_, room_goal_head_, action_head_, progress_head_;
  Tensor value_w_, value_b_;
};

}  // namespace seqnav
