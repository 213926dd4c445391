#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "distforge/common.hpp"
#include "distforge/corpus.hpp"
#include "distforge/losses.hpp"

namespace distforge {

// Decoder-only transformer: RMSNorm pre-norm, rotary positions on q/k,
// grouped-query causal attention, SwiGLU mlp, untied embedding/unembedding,
// no biases anywhere.
struct ModelConfig {
    int hidden_dim = 64;
    int num_layers = 2;
    int mlp_dim = 256;
    int query_heads = 4;
    int kv_heads = 2;
    int head_dim = 16;
    int vocab_size = kByteVocab;
    int context_len = 256;
    double rope_base = 500000.0;
    double norm_eps = 1e-5;

    void validate() const;  // errors: config
    int64_t param_count() const;
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

std::string model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const std::string& text);  // errors: format

template <class S>
struct NamedTensor {
    std::string name;
    std::vector<int64_t> shape;
    bool decay = true;  // weight decay applies (norm gains opt out)
    AlignedVec<S> data;

    int64_t size() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }
};

// All weights of one model in a fixed, named order (embedding, per-layer
// blocks, final norm, unembedding). The same container shape doubles as
// gradient and optimizer-moment storage.
template <class S>
struct ParamSet {
    ModelConfig config;
    std::vector<NamedTensor<S>> tensors;

    static constexpr int kPerLayer = 9;

    NamedTensor<S>& embedding() { return tensors[0]; }
    NamedTensor<S>& attn_gain(int l) { return tensors[1 + l * kPerLayer + 0]; }
    NamedTensor<S>& wq(int l) { return tensors[1 + l * kPerLayer + 1]; }
    NamedTensor<S>& wk(int l) { return tensors[1 + l * kPerLayer + 2]; }
    NamedTensor<S>& wv(int l) { return tensors[1 + l * kPerLayer + 3]; }
    NamedTensor<S>& wo(int l) { return tensors[1 + l * kPerLayer + 4]; }
    NamedTensor<S>& mlp_gain(int l) { return tensors[1 + l * kPerLayer + 5]; }
    NamedTensor<S>& w_gate(int l) { return tensors[1 + l * kPerLayer + 6]; }
    NamedTensor<S>& w_up(int l) { return tensors[1 + l * kPerLayer + 7]; }
    NamedTensor<S>& w_down(int l) { return tensors[1 + l * kPerLayer + 8]; }
    NamedTensor<S>& final_gain() { return tensors[tensors.size() - 2]; }
    NamedTensor<S>& unembed() { return tensors[tensors.size() - 1]; }

    const NamedTensor<S>& embedding() const { return tensors[0]; }
    const NamedTensor<S>& attn_gain(int l) const { return tensors[1 + l * kPerLayer + 0]; }
    const NamedTensor<S>& wq(int l) const { return tensors[1 + l * kPerLayer + 1]; }
    const NamedTensor<S>& wk(int l) const { return tensors[1 + l * kPerLayer + 2]; }
    const NamedTensor<S>& wv(int l) const { return tensors[1 + l * kPerLayer + 3]; }
    const NamedTensor<S>& wo(int l) const { return tensors[1 + l * kPerLayer + 4]; }
    const NamedTensor<S>& mlp_gain(int l) const { return tensors[1 + l * kPerLayer + 5]; }
    const NamedTensor<S>& w_gate(int l) const { return tensors[1 + l * kPerLayer + 6]; }
    const NamedTensor<S>& w_up(int l) const { return tensors[1 + l * kPerLayer + 7]; }
    const NamedTensor<S>& w_down(int l) const { return tensors[1 + l * kPerLayer + 8]; }
    const NamedTensor<S>& final_gain() const { return tensors[tensors.size() - 2]; }
    const NamedTensor<S>& unembed() const { return tensors[tensors.size() - 1]; }

    int64_t num_params() const {
        int64_t n = 0;
        for (const auto& t : tensors) n += t.size();
        return n;
    }

    template <class T>
    ParamSet<T> cast() const {
        ParamSet<T> out;
        out.config = config;
        out.tensors.reserve(tensors.size());
        for (const auto& t : tensors) {
            NamedTensor<T> nt{t.name, t.shape, t.decay, {}};
            nt.data.resize(t.data.size());
            for (size_t i = 0; i < t.data.size(); ++i) nt.data[i] = T(t.data[i]);
            out.tensors.push_back(std::move(nt));
        }
        return out;
    }
};

// Allocates the tensor layout for a config with zeroed data (grads, moments).
template <class S>
ParamSet<S> zeros_like_config(const ModelConfig& config);

template <class S>
ParamSet<S> zeros_like(const ParamSet<S>& params);

// Gaussian init, std 0.02, with the residual output projections (attention
// out and mlp down) scaled down by 1/sqrt(2 * num_layers); norm gains start
// at 1. Deterministic in (config, seed) across platforms.
template <class S>
ParamSet<S> init_params(const ModelConfig& config, uint64_t seed);

// Saved activations from one forward pass, consumed by the backward pass.
template <class S>
struct LayerCache {
    AlignedVec<S> a_in;    // [N, d] residual stream entering the layer
    AlignedVec<S> inv1;    // [N] 1/rms for the attention norm
    AlignedVec<S> xn1;     // [N, d]
    AlignedVec<S> q;       // [N, Hq*hd] after rotation
    AlignedVec<S> k;       // [N, Hk*hd] after rotation
    AlignedVec<S> v;       // [N, Hk*hd]
    AlignedVec<S> probs;   // [B*Hq*T, T] causal attention weights
    AlignedVec<S> ctx;     // [N, Hq*hd]
    AlignedVec<S> m_in;    // [N, d] residual stream entering the mlp
    AlignedVec<S> inv2;    // [N]
    AlignedVec<S> xn2;     // [N, d]
    AlignedVec<S> ag;      // [N, M] gate pre-activation
    AlignedVec<S> au;      // [N, M] up projection
    AlignedVec<S> hh;      // [N, M] silu(ag) * au
};

template <class S>
struct ForwardCache {
    int B = 0;
    int T = 0;
    AlignedVec<S> x0;      // [N, d] gathered embeddings
    std::vector<LayerCache<S>> layers;
    AlignedVec<S> x_last;  // [N, d] residual stream before the final norm
    AlignedVec<S> inv_f;   // [N]
    AlignedVec<S> xf;      // [N, d]
};

// Causal logits for tokens [B, T] (row-major), written to logits [B*T, V].
// Pass a cache to keep activations for backward; pass nullptr for
// inference-only calls.
// errors: data (token id out of vocab, T > context_len), config (B or T < 1)
template <class S>
void forward_logits(const ParamSet<S>& params, const TokenId* tokens, int B, int T,
                    AlignedVec<S>& logits, ForwardCache<S>* cache);

// Reverse-mode pass from d(loss)/d(logits). Overwrites `grads` (layout must
// match `params`; use zeros_like).
template <class S>
void backward_from_dlogits(const ParamSet<S>& params, const TokenId* tokens,
                           const ForwardCache<S>& cache, const S* dlogits, ParamSet<S>& grads);

// Reusable buffers for training steps.
template <class S>
struct ModelWorkspace {
    ForwardCache<S> cache;
    AlignedVec<S> logits;
    AlignedVec<S> dlogits;
};

// Forward + mixed objective + backward in one call. The teacher signal (if
// any) is plain data: no gradient ever flows to it. Returns the loss
// breakdown; grads are overwritten.
// errors: see forward_logits / mixed_loss_and_dlogits; numerics (non-finite
// loss) is reported by callers that can attach run context
template <class S>
LossBreakdown loss_and_grads(const ParamSet<S>& params, const Batch& batch, double alpha,
                             double tau, const TeacherSignal<S>* teacher, ParamSet<S>& grads,
                             ModelWorkspace<S>& ws);

}  // namespace distforge
