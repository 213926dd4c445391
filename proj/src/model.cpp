#include "distforge/model.hpp"

#include <Eigen/Core>

#include <cmath>

#include <json.hpp>

namespace distforge {

namespace {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MatMap = Eigen::Map<Mat<S>>;
template <class S>
using CMatMap = Eigen::Map<const Mat<S>>;
template <class S>
using RowArrMap = Eigen::Map<Eigen::Array<S, 1, Eigen::Dynamic>>;
template <class S>
using CRowArrMap = Eigen::Map<const Eigen::Array<S, 1, Eigen::Dynamic>>;

template <class S>
MatMap<S> map2(NamedTensor<S>& t) {
    return MatMap<S>(t.data.data(), t.shape[0], t.shape[1]);
}
template <class S>
CMatMap<S> map2(const NamedTensor<S>& t) {
    return CMatMap<S>(t.data.data(), t.shape[0], t.shape[1]);
}

// rotary tables: cos/sin of pos * base^(-2j/head_dim) for j < head_dim/2
template <class S>
void fill_rope_tables(int T, int head_dim, double base, std::vector<S>& cos_t,
                      std::vector<S>& sin_t) {
    const int hd2 = head_dim / 2;
    cos_t.resize(size_t(T) * hd2);
    sin_t.resize(size_t(T) * hd2);
    for (int j = 0; j < hd2; ++j) {
        const double freq = std::pow(base, -2.0 * double(j) / double(head_dim));
        for (int p = 0; p < T; ++p) {
            const double a = double(p) * freq;
            cos_t[size_t(p) * hd2 + j] = S(std::cos(a));
            sin_t[size_t(p) * hd2 + j] = S(std::sin(a));
        }
    }
}

// in-place rotation of the (2j, 2j+1) planes of each head; dir=+1 forward,
// dir=-1 transposed (gradient) rotation
template <class S>
void apply_rope(MatMap<S> x, int T, int heads, int head_dim, const std::vector<S>& cos_t,
                const std::vector<S>& sin_t, int dir) {
    const int hd2 = head_dim / 2;
    const int64_t rows = x.rows();
    for (int64_t r = 0; r < rows; ++r) {
        const int pos = int(r % T);
        const S* ct = cos_t.data() + size_t(pos) * hd2;
        const S* st = sin_t.data() + size_t(pos) * hd2;
        S* row = x.data() + r * x.cols();
        for (int h = 0; h < heads; ++h) {
            S* hp = row + h * head_dim;
            for (int j = 0; j < hd2; ++j) {
                const S c = ct[j];
                const S s = dir > 0 ? st[j] : S(-st[j]);
                const S a = hp[2 * j];
                const S b = hp[2 * j + 1];
                hp[2 * j] = a * c - b * s;
                hp[2 * j + 1] = a * s + b * c;
            }
        }
    }
}

// y = (x / rms(x)) * gain, rowwise; writes 1/rms per row into inv
template <class S>
void rms_norm_rows(CMatMap<S> x, const NamedTensor<S>& gain, double eps, MatMap<S> y, S* inv) {
    const int64_t n = x.rows();
    const int64_t d = x.cols();
    CRowArrMap<S> g(gain.data.data(), d);
    for (int64_t r = 0; r < n; ++r) {
        const double ms = double(x.row(r).squaredNorm()) / double(d);
        const S iv = S(1.0 / std::sqrt(ms + eps));
        inv[r] = iv;
        y.row(r).array() = x.row(r).array() * iv * g;
    }
}

// accumulates d(loss)/d(x) into dx_accum and d(loss)/d(gain) into dgain
template <class S>
void rms_norm_backward_rows(CMatMap<S> x, const S* inv, const NamedTensor<S>& gain,
                            CMatMap<S> dy, MatMap<S> dx_accum, NamedTensor<S>& dgain) {
    const int64_t n = x.rows();
    const int64_t d = x.cols();
    CRowArrMap<S> g(gain.data.data(), d);
    RowArrMap<S> dg(dgain.data.data(), d);
    Eigen::Array<S, 1, Eigen::Dynamic> u(d);
    for (int64_t r = 0; r < n; ++r) {
        const S iv = inv[r];
        u = dy.row(r).array() * g;
        const S ux = (u * x.row(r).array()).sum();
        dx_accum.row(r).array() +=
            u * iv - x.row(r).array() * (iv * iv * iv * ux / S(double(d)));
        dg += dy.row(r).array() * x.row(r).array() * iv;
    }
}

template <class S>
void resize_cache(ForwardCache<S>& c, const ModelConfig& m, int B, int T) {
    const size_t N = size_t(B) * T;
    const size_t d = size_t(m.hidden_dim);
    const size_t qd = size_t(m.query_heads) * m.head_dim;
    const size_t kd = size_t(m.kv_heads) * m.head_dim;
    const size_t M = size_t(m.mlp_dim);
    c.B = B;
    c.T = T;
    c.x0.resize(N * d);
    c.layers.resize(m.num_layers);
    for (auto& L : c.layers) {
        L.a_in.resize(N * d);
        L.inv1.resize(N);
        L.xn1.resize(N * d);
        L.q.resize(N * qd);
        L.k.resize(N * kd);
        L.v.resize(N * kd);
        L.probs.resize(size_t(B) * m.query_heads * T * T);
        L.ctx.resize(N * qd);
        L.m_in.resize(N * d);
        L.inv2.resize(N);
        L.xn2.resize(N * d);
        L.ag.resize(N * M);
        L.au.resize(N * M);
        L.hh.resize(N * M);
    }
    c.x_last.resize(N * d);
    c.inv_f.resize(N);
    c.xf.resize(N * d);
}

}  // namespace

void ModelConfig::validate() const {
    if (hidden_dim < 1) fail("config", "hidden_dim must be >= 1");
    if (num_layers < 1) fail("config", "num_layers must be >= 1");
    if (mlp_dim < 1) fail("config", "mlp_dim must be >= 1");
    if (query_heads < 1 || kv_heads < 1) fail("config", "head counts must be >= 1");
    if (query_heads % kv_heads != 0) fail("config", "query_heads must be divisible by kv_heads");
    if (head_dim < 2 || head_dim % 2 != 0) fail("config", "head_dim must be even and >= 2");
    if (vocab_size < 2) fail("config", "vocab_size must be >= 2");
    if (context_len < 1) fail("config", "context_len must be >= 1");
    if (!(rope_base > 0.0)) fail("config", "rope_base must be > 0");
    if (!(norm_eps > 0.0)) fail("config", "norm_eps must be > 0");
}

int64_t ModelConfig::param_count() const {
    const int64_t d = hidden_dim, qd = int64_t(query_heads) * head_dim,
                  kd = int64_t(kv_heads) * head_dim, M = mlp_dim, V = vocab_size;
    int64_t per_layer = d + d * qd + 2 * d * kd + qd * d + d + 2 * d * M + M * d;
    return V * d + num_layers * per_layer + d + d * V;
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.hidden_dim == b.hidden_dim && a.num_layers == b.num_layers && a.mlp_dim == b.mlp_dim &&
           a.query_heads == b.query_heads && a.kv_heads == b.kv_heads && a.head_dim == b.head_dim &&
           a.vocab_size == b.vocab_size && a.context_len == b.context_len &&
           a.rope_base == b.rope_base && a.norm_eps == b.norm_eps;
}

std::string model_config_to_json(const ModelConfig& c) {
    nlohmann::json j{{"hidden_dim", c.hidden_dim},   {"num_layers", c.num_layers},
                     {"mlp_dim", c.mlp_dim},         {"query_heads", c.query_heads},
                     {"kv_heads", c.kv_heads},       {"head_dim", c.head_dim},
                     {"vocab_size", c.vocab_size},   {"context_len", c.context_len},
                     {"rope_base", c.rope_base},     {"norm_eps", c.norm_eps}};
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail("format", "model config is not a JSON object");
    ModelConfig c;  // absent fields keep their defaults
    try {
        c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
        c.num_layers = j.value("num_layers", c.num_layers);
        c.mlp_dim = j.value("mlp_dim", c.mlp_dim);
        c.query_heads = j.value("query_heads", c.query_heads);
        c.kv_heads = j.value("kv_heads", c.kv_heads);
        c.head_dim = j.value("head_dim", c.head_dim);
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.context_len = j.value("context_len", c.context_len);
        c.rope_base = j.value("rope_base", c.rope_base);
        c.norm_eps = j.value("norm_eps", c.norm_eps);
    } catch (const nlohmann::json::exception& e) {
        fail("format", std::string("model config field: ") + e.what());
    }
    c.validate();
    return c;
}

template <class S>
ParamSet<S> zeros_like_config(const ModelConfig& config) {
    config.validate();
    const int64_t d = config.hidden_dim;
    const int64_t qd = int64_t(config.query_heads) * config.head_dim;
    const int64_t kd = int64_t(config.kv_heads) * config.head_dim;
    const int64_t M = config.mlp_dim;
    const int64_t V = config.vocab_size;

    ParamSet<S> p;
    p.config = config;
    auto add = [&p](const std::string& name, std::vector<int64_t> shape, bool decay) {
        NamedTensor<S> t{name, std::move(shape), decay, {}};
        t.data.assign(size_t(t.size()), S(0));
        p.tensors.push_back(std::move(t));
    };
    add("embedding", {V, d}, true);
    for (int l = 0; l < config.num_layers; ++l) {
        const std::string pre = "layers." + std::to_string(l) + ".";
        add(pre + "attn_norm.gain", {d}, false);
        add(pre + "attn.wq", {d, qd}, true);
        add(pre + "attn.wk", {d, kd}, true);
        add(pre + "attn.wv", {d, kd}, true);
        add(pre + "attn.wo", {qd, d}, true);
        add(pre + "mlp_norm.gain", {d}, false);
        add(pre + "mlp.w_gate", {d, M}, true);
        add(pre + "mlp.w_up", {d, M}, true);
        add(pre + "mlp.w_down", {M, d}, true);
    }
    add("final_norm.gain", {d}, false);
    add("unembed", {d, V}, true);
    return p;
}

template <class S>
ParamSet<S> zeros_like(const ParamSet<S>& params) {
    ParamSet<S> out;
    out.config = params.config;
    out.tensors.reserve(params.tensors.size());
    for (const auto& t : params.tensors) {
        NamedTensor<S> nt{t.name, t.shape, t.decay, {}};
        nt.data.assign(t.data.size(), S(0));
        out.tensors.push_back(std::move(nt));
    }
    return out;
}

template <class S>
ParamSet<S> init_params(const ModelConfig& config, uint64_t seed) {
    ParamSet<S> p = zeros_like_config<S>(config);
    const double base_std = 0.02;
    const double resid_std = base_std / std::sqrt(2.0 * double(config.num_layers));
    for (size_t i = 0; i < p.tensors.size(); ++i) {
        NamedTensor<S>& t = p.tensors[i];
        if (!t.decay) {  // norm gains start at identity
            std::fill(t.data.begin(), t.data.end(), S(1));
            continue;
        }
        const bool resid_proj = t.name.find(".attn.wo") != std::string::npos ||
                                t.name.find(".mlp.w_down") != std::string::npos;
        const double std_dev = resid_proj ? resid_std : base_std;
        Rng rng(mix_key(seed, uint64_t(i)));
        for (S& v : t.data) v = S(rng.next_normal() * std_dev);
    }
    return p;
}

template <class S>
void forward_logits(const ParamSet<S>& params, const TokenId* tokens, int B, int T,
                    AlignedVec<S>& logits, ForwardCache<S>* cache) {
    const ModelConfig& m = params.config;
    if (B < 1 || T < 1) fail("config", "batch and context must be >= 1");
    if (T > m.context_len)
        fail("data", "sequence length " + std::to_string(T) + " exceeds context_len " +
                         std::to_string(m.context_len));

    ForwardCache<S> local;
    ForwardCache<S>& c = cache ? *cache : local;
    resize_cache(c, m, B, T);

    const int64_t N = int64_t(B) * T;
    const int d = m.hidden_dim;
    const int Hq = m.query_heads, Hk = m.kv_heads, hd = m.head_dim;
    const int G = Hq / Hk;
    const int qd = Hq * hd, kd = Hk * hd;
    const int M = m.mlp_dim, V = m.vocab_size;
    const S att_scale = S(1.0 / std::sqrt(double(hd)));

    // gather embeddings
    CMatMap<S> emb = map2(params.embedding());
    MatMap<S> x0(c.x0.data(), N, d);
    for (int64_t r = 0; r < N; ++r) {
        const TokenId id = tokens[r];
        if (id < 0 || id >= V) fail("data", "token id " + std::to_string(id) + " outside vocabulary");
        x0.row(r) = emb.row(id);
    }

    std::vector<S> cos_t, sin_t;
    fill_rope_tables<S>(T, hd, m.rope_base, cos_t, sin_t);

    Mat<S> x = x0;  // residual stream
    Mat<S> scores(T, T);

    for (int l = 0; l < m.num_layers; ++l) {
        LayerCache<S>& L = c.layers[l];
        std::copy(x.data(), x.data() + N * d, L.a_in.data());
        CMatMap<S> a_in(L.a_in.data(), N, d);

        MatMap<S> xn1(L.xn1.data(), N, d);
        rms_norm_rows<S>(a_in, params.attn_gain(l), m.norm_eps, xn1, L.inv1.data());

        MatMap<S> q(L.q.data(), N, qd);
        MatMap<S> k(L.k.data(), N, kd);
        MatMap<S> v(L.v.data(), N, kd);
        q.noalias() = xn1 * map2(params.wq(l));
        k.noalias() = xn1 * map2(params.wk(l));
        v.noalias() = xn1 * map2(params.wv(l));
        apply_rope<S>(q, T, Hq, hd, cos_t, sin_t, +1);
        apply_rope<S>(k, T, Hk, hd, cos_t, sin_t, +1);

        MatMap<S> probs(L.probs.data(), int64_t(B) * Hq * T, T);
        MatMap<S> ctx(L.ctx.data(), N, qd);
        for (int b = 0; b < B; ++b) {
            for (int h = 0; h < Hq; ++h) {
                const int g = h / G;
                auto qb = q.block(int64_t(b) * T, h * hd, T, hd);
                auto kb = k.block(int64_t(b) * T, g * hd, T, hd);
                auto vb = v.block(int64_t(b) * T, g * hd, T, hd);
                scores.noalias() = qb * kb.transpose();
                auto pb = probs.middleRows((int64_t(b) * Hq + h) * T, T);
                for (int i = 0; i < T; ++i) {
                    auto srow = scores.row(i).head(i + 1).array();
                    srow *= att_scale;
                    const S mx = srow.maxCoeff();
                    auto prow = pb.row(i);
                    prow.head(i + 1).array() = (srow - mx).exp();
                    const S sum = prow.head(i + 1).sum();
                    prow.head(i + 1) /= sum;
                    if (i + 1 < T) prow.tail(T - i - 1).setZero();
                }
                ctx.block(int64_t(b) * T, h * hd, T, hd).noalias() = pb * vb;
            }
        }

        x.noalias() = a_in + ctx * map2(params.wo(l));

        std::copy(x.data(), x.data() + N * d, L.m_in.data());
        CMatMap<S> m_in(L.m_in.data(), N, d);
        MatMap<S> xn2(L.xn2.data(), N, d);
        rms_norm_rows<S>(m_in, params.mlp_gain(l), m.norm_eps, xn2, L.inv2.data());

        MatMap<S> ag(L.ag.data(), N, M);
        MatMap<S> au(L.au.data(), N, M);
        MatMap<S> hh(L.hh.data(), N, M);
        ag.noalias() = xn2 * map2(params.w_gate(l));
        au.noalias() = xn2 * map2(params.w_up(l));
        // silu(a) * u, computed as a * sigmoid(a) * u
        hh.array() = ag.array() * (S(1) / (S(1) + (-ag.array()).exp())) * au.array();

        x.noalias() = m_in + hh * map2(params.w_down(l));
    }

    std::copy(x.data(), x.data() + N * d, c.x_last.data());
    CMatMap<S> x_last(c.x_last.data(), N, d);
    MatMap<S> xf(c.xf.data(), N, d);
    rms_norm_rows<S>(x_last, params.final_gain(), m.norm_eps, xf, c.inv_f.data());

    logits.resize(size_t(N) * V);
    MatMap<S> lg(logits.data(), N, V);
    lg.noalias() = xf * map2(params.unembed());
}

template <class S>
void backward_from_dlogits(const ParamSet<S>& params, const TokenId* tokens,
                           const ForwardCache<S>& c, const S* dlogits, ParamSet<S>& grads) {
    const ModelConfig& m = params.config;
    const int B = c.B, T = c.T;
    if (B < 1 || T < 1) fail("state", "backward called before forward");
    const int64_t N = int64_t(B) * T;
    const int d = m.hidden_dim;
    const int Hq = m.query_heads, Hk = m.kv_heads, hd = m.head_dim;
    const int G = Hq / Hk;
    const int qd = Hq * hd, kd = Hk * hd;
    const int M = m.mlp_dim, V = m.vocab_size;
    const S att_scale = S(1.0 / std::sqrt(double(hd)));

    for (auto& t : grads.tensors) std::fill(t.data.begin(), t.data.end(), S(0));

    std::vector<S> cos_t, sin_t;
    fill_rope_tables<S>(T, hd, m.rope_base, cos_t, sin_t);

    CMatMap<S> dlg(dlogits, N, V);
    CMatMap<S> xf(c.xf.data(), N, d);
    CMatMap<S> x_last(c.x_last.data(), N, d);

    // unembedding and final norm
    map2(grads.unembed()).noalias() = xf.transpose() * dlg;
    Mat<S> dxf(N, d);
    dxf.noalias() = dlg * map2(params.unembed()).transpose();

    Mat<S> dx = Mat<S>::Zero(N, d);  // running gradient on the residual stream
    rms_norm_backward_rows<S>(x_last, c.inv_f.data(), params.final_gain(),
                              CMatMap<S>(dxf.data(), N, d), MatMap<S>(dx.data(), N, d),
                              grads.final_gain());

    Mat<S> dxn(N, d), dctx(N, qd), dq(N, qd), dk(N, kd), dv(N, kd);
    Mat<S> dhh(N, M), dag(N, M), dau(N, M);
    Mat<S> dp(T, T), ds(T, T);

    for (int l = m.num_layers - 1; l >= 0; --l) {
        const LayerCache<S>& L = c.layers[l];
        CMatMap<S> a_in(L.a_in.data(), N, d);
        CMatMap<S> xn1(L.xn1.data(), N, d);
        CMatMap<S> q(L.q.data(), N, qd);
        CMatMap<S> k(L.k.data(), N, kd);
        CMatMap<S> v(L.v.data(), N, kd);
        CMatMap<S> probs(L.probs.data(), int64_t(B) * Hq * T, T);
        CMatMap<S> ctx(L.ctx.data(), N, qd);
        CMatMap<S> m_in(L.m_in.data(), N, d);
        CMatMap<S> xn2(L.xn2.data(), N, d);
        CMatMap<S> ag(L.ag.data(), N, M);
        CMatMap<S> au(L.au.data(), N, M);
        CMatMap<S> hh(L.hh.data(), N, M);

        // ---- mlp block: x_out = m_in + hh * w_down; dx holds d(x_out)
        map2(grads.w_down(l)).noalias() += hh.transpose() * dx;
        dhh.noalias() = dx * map2(params.w_down(l)).transpose();

        // hh = silu(ag) * au; silu'(a) = sig(a) * (1 + a * (1 - sig(a)))
        dag.array() = (S(1) / (S(1) + (-ag.array()).exp()));  // sig(a), reused
        dau.array() = dhh.array() * ag.array() * dag.array(); // dL/dau = dhh * silu(ag)
        dag.array() = dhh.array() * au.array() *
                      (dag.array() * (S(1) + ag.array() * (S(1) - dag.array())));

        map2(grads.w_gate(l)).noalias() += xn2.transpose() * dag;
        map2(grads.w_up(l)).noalias() += xn2.transpose() * dau;
        dxn.noalias() = dag * map2(params.w_gate(l)).transpose();
        dxn.noalias() += dau * map2(params.w_up(l)).transpose();

        // residual passthrough keeps dx; the norm path adds its term
        rms_norm_backward_rows<S>(m_in, L.inv2.data(), params.mlp_gain(l),
                                  CMatMap<S>(dxn.data(), N, d), MatMap<S>(dx.data(), N, d),
                                  grads.mlp_gain(l));

        // ---- attention block: m_in = a_in + ctx * wo; dx holds d(m_in)
        map2(grads.wo(l)).noalias() += ctx.transpose() * dx;
        dctx.noalias() = dx * map2(params.wo(l)).transpose();

        dq.setZero();
        dk.setZero();
        dv.setZero();
        for (int b = 0; b < B; ++b) {
            for (int h = 0; h < Hq; ++h) {
                const int g = h / G;
                auto qb = q.block(int64_t(b) * T, h * hd, T, hd);
                auto kb = k.block(int64_t(b) * T, g * hd, T, hd);
                auto vb = v.block(int64_t(b) * T, g * hd, T, hd);
                auto pb = probs.middleRows((int64_t(b) * Hq + h) * T, T);
                auto dctxb = dctx.block(int64_t(b) * T, h * hd, T, hd);

                dp.noalias() = dctxb * vb.transpose();
                dv.block(int64_t(b) * T, g * hd, T, hd).noalias() += pb.transpose() * dctxb;

                // softmax backward per causal row (zero probs kill masked cols)
                for (int i = 0; i < T; ++i) {
                    auto prow = pb.row(i).head(i + 1).array();
                    auto dprow = dp.row(i).head(i + 1).array();
                    const S dot = (prow * dprow).sum();
                    ds.row(i).head(i + 1).array() = prow * (dprow - dot) * att_scale;
                    if (i + 1 < T) ds.row(i).tail(T - i - 1).setZero();
                }

                dq.block(int64_t(b) * T, h * hd, T, hd).noalias() = ds * kb;
                dk.block(int64_t(b) * T, g * hd, T, hd).noalias() += ds.transpose() * qb;
            }
        }

        // transpose rotation maps gradients back through rope
        apply_rope<S>(MatMap<S>(dq.data(), N, qd), T, Hq, hd, cos_t, sin_t, -1);
        apply_rope<S>(MatMap<S>(dk.data(), N, kd), T, Hk, hd, cos_t, sin_t, -1);

        map2(grads.wq(l)).noalias() += xn1.transpose() * dq;
        map2(grads.wk(l)).noalias() += xn1.transpose() * dk;
        map2(grads.wv(l)).noalias() += xn1.transpose() * dv;
        dxn.noalias() = dq * map2(params.wq(l)).transpose();
        dxn.noalias() += dk * map2(params.wk(l)).transpose();
        dxn.noalias() += dv * map2(params.wv(l)).transpose();

        rms_norm_backward_rows<S>(a_in, L.inv1.data(), params.attn_gain(l),
                                  CMatMap<S>(dxn.data(), N, d), MatMap<S>(dx.data(), N, d),
                                  grads.attn_gain(l));
    }

    // scatter into embedding rows (sequential: deterministic accumulation)
    MatMap<S> demb = map2(grads.embedding());
    for (int64_t r = 0; r < N; ++r) demb.row(tokens[r]) += dx.row(r);
}

template <class S>
LossBreakdown loss_and_grads(const ParamSet<S>& params, const Batch& batch, double alpha,
                             double tau, const TeacherSignal<S>* teacher, ParamSet<S>& grads,
                             ModelWorkspace<S>& ws) {
    const int64_t rows = int64_t(batch.batch_size) * batch.context_len;
    forward_logits(params, batch.inputs.data(), batch.batch_size, batch.context_len, ws.logits,
                   &ws.cache);
    ws.dlogits.resize(size_t(rows) * params.config.vocab_size);
    LossBreakdown lb =
        mixed_loss_and_dlogits<S>(ws.logits.data(), batch.targets.data(), rows,
                                  params.config.vocab_size, alpha, tau, teacher, ws.dlogits.data());
    backward_from_dlogits(params, batch.inputs.data(), ws.cache, ws.dlogits.data(), grads);
    return lb;
}

#define DF_INSTANTIATE(S)                                                                       \
    template ParamSet<S> zeros_like_config<S>(const ModelConfig&);                             \
    template ParamSet<S> zeros_like<S>(const ParamSet<S>&);                                    \
    template ParamSet<S> init_params<S>(const ModelConfig&, uint64_t);                         \
    template void forward_logits<S>(const ParamSet<S>&, const TokenId*, int, int,              \
                                    AlignedVec<S>&, ForwardCache<S>*);                        \
    template void backward_from_dlogits<S>(const ParamSet<S>&, const TokenId*,                 \
                                           const ForwardCache<S>&, const S*, ParamSet<S>&);    \
    template LossBreakdown loss_and_grads<S>(const ParamSet<S>&, const Batch&, double, double, \
                                             const TeacherSignal<S>*, ParamSet<S>&,            \
                                             ModelWorkspace<S>&);

DF_INSTANTIATE(float)
DF_INSTANTIATE(double)
#undef DF_INSTANTIATE

}  // namespace distforge
