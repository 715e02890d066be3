#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sft/matrix.hpp"
#include "sft/rng.hpp"

namespace sft {

struct ModelConfig {
    int vocab_size = 64;
    int seq_len = 16;
    int d_model = 32;   // hidden width
    int ffn_dim = 128;  // FFN inner width, default 4*d_model
    int n_blocks = 4;
    int n_heads = 2;
    int n_classes = 2;

    void validate() const;
    uint64_t hash() const;  // FNV-1a over the fields, for the wire handshake
};

enum class LayerKind {
    embedding,
    attention,
    layer_norm,
    linear_up,
    gelu,
    linear_down,
    residual_add,
    classifier,
    ffn1,  // H->R, weight only (left SVD factor)
    ffn2,  // diagonal scaling by the R singular values
    ffn3,  // R->d, weight plus the original down-projection bias
};

const char* layer_kind_name(LayerKind k);

struct Param {
    std::string name;  // short name within the layer, e.g. "w"
    Matrix value;
    Matrix grad;  // same shape, zero-initialized
};

struct Layer {
    LayerKind kind;
    std::string name;         // unique within a stack, e.g. "blk2.down"
    std::string skip_source;  // residual_add only: layer whose *input* is re-added
    std::vector<Param> params;

    // forward caches consumed by backward
    std::vector<Matrix> attn_probs;  // one SxS softmax per (batch, head)
    Matrix attn_q, attn_k, attn_v;   // post-projection activations
    Matrix attn_concat;              // pre-output-projection
    Matrix norm_xhat;
    std::vector<float> norm_inv_std;  // one per row
    Matrix pooled;                    // classifier mean-pool

    Param& param(const std::string& pname);
    const Param& param(const std::string& pname) const;
};

// Ordered layer list with explicit forward/backward. Activations entering
// each layer are cached by forward and consumed by backward; an epoch counter
// enforces the pairing.
class LayerStack {
  public:
    ModelConfig cfg;
    std::vector<Layer> layers;

    // Returns the final activation. Input is either a BxS matrix of token ids
    // (stack starting with an embedding) or a (B*S)-row activation matrix.
    Matrix forward(const Matrix& x);

    // Fills every parameter grad and returns the gradient w.r.t. the stack
    // input. Requires a forward in the same epoch.
    Matrix backward(const Matrix& d_out);

    // Residual tap crossing the partition boundary (KeptWithTransfer): the
    // peer's activation is installed before forward, its gradient is
    // accumulated by backward and read back afterwards.
    void set_aux_input(Matrix a) { aux_input_ = std::move(a); }
    const Matrix& aux_grad() const { return aux_grad_; }

    // Adds g to the gradient arriving at `layer_name`'s input during the next
    // backward (the edge-side half of a transferred residual connection).
    void inject_grad(const std::string& layer_name, Matrix g);

    int find_layer(const std::string& name) const;         // -1 if absent
    int require_layer(const std::string& name) const;      // throws if absent
    const Matrix& activation_input(const std::string& layer_name) const;
    const Matrix& output() const;

    uint64_t forward_epoch() const { return forward_epoch_; }

    // Called by optimizer_step: verifies a fresh backward exists since the
    // previous step and marks it consumed.
    void consume_step_epoch();

    // Flat parameter walk in layer order (used by optimizers / checkpoints);
    // full names are "<layer>.<param>".
    std::vector<std::pair<std::string, Param*>> named_params();
    std::vector<std::pair<std::string, const Param*>> named_params() const;

    LayerStack slice(int begin, int end) const;  // layers[begin, end), same cfg

  private:
    std::vector<Matrix> acts_;  // acts_[i] = input of layer i; acts_[n] = output
    std::map<std::string, Matrix> pending_inject_;
    Matrix aux_input_;
    Matrix aux_grad_;
    uint64_t forward_epoch_ = 0;
    uint64_t backward_epoch_ = 0;
    uint64_t stepped_epoch_ = 0;
};

// Post-norm transformer: per block Attention -> Add&Norm -> FFN -> Add&Norm,
// then mean-pool classifier. Parameters are seeded from `rng`.
LayerStack build_model(const ModelConfig& cfg, Rng& rng);

struct CrossEntropyResult {
    float loss;
    Matrix d_logits;
};

// Mean negative log-softmax over the batch, stabilized by row-max
// subtraction. d_logits = (softmax - onehot) / B.
CrossEntropyResult cross_entropy(const Matrix& logits, const std::vector<int>& labels);

float batch_accuracy(const Matrix& logits, const std::vector<int>& labels);

struct OptimConfig {
    enum class Algo { sgd, adam };
    Algo algo = Algo::adam;
    float lr = 3e-4f;
    float momentum = 0.0f;  // sgd
    float beta1 = 0.9f;     // adam
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Per-parameter moment buffers keyed by full parameter name; step_count
// increments by exactly one per step.
class OptimState {
  public:
    explicit OptimState(OptimConfig cfg) : cfg_(cfg) {}

    const OptimConfig& config() const { return cfg_; }
    uint64_t step_count() const { return step_count_; }

    friend void optimizer_step(LayerStack& stack, OptimState& opt);

  private:
    OptimConfig cfg_;
    uint64_t step_count_ = 0;
    std::map<std::string, Matrix> m_;  // sgd momentum / adam first moment
    std::map<std::string, Matrix> v_;  // adam second moment
};

// Applies one SGD/Adam update to every parameter, then zeroes the grads.
// Requires a completed backward since the previous step.
void optimizer_step(LayerStack& stack, OptimState& opt);

}  // namespace sft
