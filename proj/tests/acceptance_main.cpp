// Acceptance harness for the distillation lab. Every criterion checks an
// end-to-end contract against an independent oracle: central finite
// differences for gradients, scalar-loop recomputations for statistics,
// frozen reference tables for the improvement arithmetic, and byte-level
// comparisons for the determinism and bookkeeping claims. The harness
// prints exactly one [PASS]/[FAIL]/[SKIP] line per criterion and exits
// nonzero only when a gating criterion failed; the directional training
// experiment is reported but never gates.
//
//   --fast        skip the directional training experiment (the long one)
//   --only NAME   run a single criterion by name
//   --list        print criterion names and exit

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "distforge/checkpoint.hpp"
#include "distforge/mechanism.hpp"
#include "distforge/sweep.hpp"
#include "test_util.hpp"

namespace {

using namespace distforge;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct CheckFail : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class... Parts>
std::string cat(Parts&&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    return os.str();
}

std::string g6(double x) {
    char b[48];
    std::snprintf(b, sizeof b, "%.6g", x);
    return b;
}

std::string sci(double x) {
    char b[48];
    std::snprintf(b, sizeof b, "%.2e", x);
    return b;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw CheckFail(msg);
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// gradient-exactness: analytic gradients of the mixed objective vs central
// finite differences in double precision on a 1-layer, d=16, V=32 model.
// ---------------------------------------------------------------------------

ModelConfig accept_model_v32() {
    ModelConfig c;
    c.hidden_dim = 16;
    c.num_layers = 1;
    c.mlp_dim = 32;
    c.query_heads = 2;
    c.kv_heads = 1;
    c.head_dim = 8;
    c.vocab_size = 32;
    c.context_len = 8;
    return c;
}

std::string c_gradient_exactness() {
    const auto t0 = Clock::now();
    const ModelConfig cfg = accept_model_v32();
    const int B = 2, T = 8;
    const int64_t rows = int64_t(B) * T;

    ParamSet<double> params = init_params<double>(cfg, 31);
    ParamSet<double> teacher = init_params<double>(cfg, 77);
    Batch batch = dftest::random_batch(cfg.vocab_size, B, T, 5);

    AlignedVec<double> teacher_logits;
    forward_logits(teacher, batch.inputs.data(), B, T, teacher_logits,
                   static_cast<ForwardCache<double>*>(nullptr));
    TeacherSignal<double> sig;
    sig.logits = teacher_logits.data();

    // loss through the standalone value functions only, independent of the
    // fused gradient path
    auto loss_at = [&](double alpha) {
        AlignedVec<double> logits;
        forward_logits(params, batch.inputs.data(), B, T, logits,
                       static_cast<ForwardCache<double>*>(nullptr));
        const double lm = lm_loss(logits.data(), batch.targets.data(), rows, cfg.vocab_size);
        const double kd =
            alpha > 0.0
                ? kd_loss(teacher_logits.data(), logits.data(), rows, cfg.vocab_size, 1.0)
                : 0.0;
        return mixed_loss_value(lm, kd, alpha);
    };

    const double h = 1e-5;
    const int coords_per_alpha = 220;
    double worst = 0.0;
    int64_t checked = 0;
    for (double alpha : {0.0, 0.5, 1.0}) {
        ParamSet<double> grads = zeros_like(params);
        ModelWorkspace<double> ws;
        loss_and_grads(params, batch, alpha, 1.0, alpha > 0.0 ? &sig : nullptr, grads, ws);

        Rng rng(mix_key(4242, uint64_t(alpha * 1000.0)));
        const int64_t total = params.num_params();
        for (int i = 0; i < coords_per_alpha; ++i) {
            int64_t flat = int64_t(rng.next_below(uint64_t(total)));
            size_t ti = 0;
            while (flat >= params.tensors[ti].size()) {
                flat -= params.tensors[ti].size();
                ++ti;
            }
            double& slot = params.tensors[ti].data[size_t(flat)];
            const double saved = slot;
            slot = saved + h;
            const double up = loss_at(alpha);
            slot = saved - h;
            const double down = loss_at(alpha);
            slot = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = grads.tensors[ti].data[size_t(flat)];
            const double err = std::abs(fd - an) / std::max({1e-3, std::abs(fd), std::abs(an)});
            worst = std::max(worst, err);
            ++checked;
        }
    }
    const double elapsed = seconds_since(t0);
    require(worst < 1e-4, cat("worst rel err ", sci(worst), " over ", checked,
                              " coordinates exceeds 1e-4"));
    require(elapsed < 60.0, cat("took ", g6(elapsed), "s (limit 60s)"));
    return cat("worst rel err ", sci(worst), " over ", checked,
               " coordinates, alphas {0, 0.5, 1}, h=1e-5");
}

// ---------------------------------------------------------------------------
// objective-endpoints: alpha=0 matches the plain-LM baseline byte for byte
// over 100 steps even with a teacher wired in; alpha=1 gradients carry no
// contribution from the ground-truth targets.
// ---------------------------------------------------------------------------

std::string c_objective_endpoints() {
    // (a) alpha = 0: 100-step trajectory equality
    ModelConfig cfg;
    cfg.hidden_dim = 16;
    cfg.num_layers = 1;
    cfg.mlp_dim = 32;
    cfg.query_heads = 2;
    cfg.kv_heads = 1;
    cfg.head_dim = 8;
    cfg.vocab_size = kByteVocab;
    cfg.context_len = 32;

    const TokenPool pool = dftest::synth_byte_pool(20000, 418);
    RunConfig base;
    base.run_id = "endpoint-base";
    base.role = Role::baseline;
    base.model = cfg;
    base.batch_size = 4;
    base.token_budget = 100 * 4 * cfg.context_len;
    base.data_seed = 91;
    base.init_seed = 92;

    RunConfig dist = base;
    dist.run_id = "endpoint-dist";
    dist.role = Role::distill;
    dist.alpha = 0.0;  // endpoint under test; config validation would refuse it
    ParamSet<float> unused_teacher = init_params<float>(cfg, 5150);

    const TrainResult rb = train_run(base, pool, nullptr);
    const TrainResult rd = train_run(dist, pool, &unused_teacher);
    require(rb.steps == 100 && rd.steps == 100,
            cat("expected 100 steps, got ", rb.steps, " and ", rd.steps));
    require(rb.log.size() == rd.log.size(), "log length mismatch");
    for (size_t i = 0; i < rb.log.size(); ++i) {
        const LogRow& a = rb.log[i];
        const LogRow& b = rd.log[i];
        require(a.step == b.step && a.tokens_seen == b.tokens_seen && a.lm_loss == b.lm_loss &&
                    a.kd_loss == b.kd_loss && a.mixed_loss == b.mixed_loss && a.lr == b.lr &&
                    a.grad_norm == b.grad_norm,
                cat("trajectory diverges at log row ", i));
    }
    const std::string dir = dftest::fresh_dir("accept_endpoints");
    save_checkpoint(dir + "/base.dfckpt", rb.params);
    save_checkpoint(dir + "/dist.dfckpt", rd.params);
    const std::string bytes_a = read_file(dir + "/base.dfckpt");
    const std::string bytes_b = read_file(dir + "/dist.dfckpt");
    require(bytes_a == bytes_b, "final checkpoints differ");

    // (b) alpha = 1: perturbing targets must leave gradients bit-identical
    const ModelConfig small = accept_model_v32();
    const int B = 2, T = 8;
    ParamSet<float> params = init_params<float>(small, 3);
    ParamSet<float> teacher = init_params<float>(small, 909);
    Batch b1 = dftest::random_batch(small.vocab_size, B, T, 14);
    Batch b2 = b1;
    for (TokenId& t : b2.targets) t = TokenId((t + 7) % small.vocab_size);

    AlignedVec<float> tl;
    forward_logits(teacher, b1.inputs.data(), B, T, tl,
                   static_cast<ForwardCache<float>*>(nullptr));
    TeacherSignal<float> sig;
    sig.logits = tl.data();

    ParamSet<float> g1 = zeros_like(params);
    ParamSet<float> g2 = zeros_like(params);
    ModelWorkspace<float> ws;
    const LossBreakdown l1 = loss_and_grads(params, b1, 1.0, 1.0, &sig, g1, ws);
    const LossBreakdown l2 = loss_and_grads(params, b2, 1.0, 1.0, &sig, g2, ws);
    require(l1.lm != l2.lm, "target perturbation did not change the reported lm value");
    require(l1.kd == l2.kd && l1.mixed == l2.mixed, "alpha=1 loss depends on targets");
    for (size_t t = 0; t < g1.tensors.size(); ++t)
        for (size_t i = 0; i < g1.tensors[t].data.size(); ++i)
            require(g1.tensors[t].data[i] == g2.tensors[t].data[i],
                    cat("alpha=1 gradient depends on targets (tensor ", g1.tensors[t].name, ")"));

    return cat("100-step trajectories byte-identical (", bytes_a.size(),
               "-byte checkpoints); alpha=1 grads bit-equal under target perturbation");
}

// ---------------------------------------------------------------------------
// kd-gradient-identity: per-position d(KD)/d(student logits) equals
// p - q (student minus teacher probabilities) at the softening temperature.
// ---------------------------------------------------------------------------

std::string c_kd_gradient_identity() {
    const int V = 64;
    const int64_t rows = 32;
    Rng rng(mix_key(606, 7));
    std::vector<double> zs(size_t(rows) * V), zt(size_t(rows) * V);
    for (double& z : zs) z = (rng.next_unit() * 2.0 - 1.0) * 4.0;
    for (double& z : zt) z = (rng.next_unit() * 2.0 - 1.0) * 4.0;
    // two extreme rows stress the softmax tails
    zs[size_t(rows - 2) * V + 3] = 30.0;
    zt[size_t(rows - 2) * V + 9] = 28.0;
    zs[size_t(rows - 1) * V + 0] = 30.0;
    zs[size_t(rows - 1) * V + 1] = 29.5;
    zt[size_t(rows - 1) * V + 2] = -30.0;

    std::vector<TokenId> targets(static_cast<size_t>(rows));
    for (TokenId& t : targets) t = TokenId(rng.next_below(V));

    auto softmax_row = [&](const std::vector<double>& z, int64_t r, double tau,
                           std::vector<double>& p) {
        double mx = -1e300;
        for (int v = 0; v < V; ++v) mx = std::max(mx, z[size_t(r) * V + v] / tau);
        double s = 0.0;
        for (int v = 0; v < V; ++v) {
            p[size_t(v)] = std::exp(z[size_t(r) * V + v] / tau - mx);
            s += p[size_t(v)];
        }
        for (int v = 0; v < V; ++v) p[size_t(v)] /= s;
    };

    TeacherSignal<double> sig;
    sig.logits = zt.data();
    double worst = 0.0;
    for (double tau : {1.0, 2.0}) {
        std::vector<double> dl(size_t(rows) * V, 0.0);
        mixed_loss_and_dlogits(zs.data(), targets.data(), rows, V, 1.0, tau, &sig, dl.data());
        std::vector<double> p(static_cast<size_t>(V));
        std::vector<double> q(static_cast<size_t>(V));
        for (int64_t r = 0; r < rows; ++r) {
            softmax_row(zs, r, tau, p);
            softmax_row(zt, r, tau, q);
            for (int v = 0; v < V; ++v) {
                // the emitted gradient is the mean over rows, scaled by 1/tau
                const double per_position = dl[size_t(r) * V + v] * double(rows) * tau;
                const double err = std::abs(per_position - (p[size_t(v)] - q[size_t(v)]));
                worst = std::max(worst, err);
            }
        }
    }
    require(worst <= 1e-10, cat("worst |d - (p - q)| = ", sci(worst), " exceeds 1e-10"));
    return cat("worst |d - (p - q)| = ", sci(worst), " over ", rows, "x", V,
               " logits at tau {1, 2}");
}

// ---------------------------------------------------------------------------
// perplexity-oracle: the harness equals a plain scalar-loop NLL recomputation
// on a 3-window pool, and an all-zero model scores exactly the vocabulary.
// ---------------------------------------------------------------------------

std::string c_perplexity_oracle() {
    ModelConfig cfg = accept_model_v32();
    cfg.vocab_size = 64;
    cfg.context_len = 16;
    const int T = cfg.context_len;
    ParamSet<float> params = init_params<float>(cfg, 21);
    // 3 full windows plus a partial tail that must be dropped
    const TokenPool pool = dftest::random_pool(cfg.vocab_size, size_t(3) * (T + 1) + 5, 77);

    const PerplexityResult one = perplexity(params, pool, T, /*batch_rows=*/1);
    const PerplexityResult two = perplexity(params, pool, T, /*batch_rows=*/2);
    require(one.num_windows == 3 && one.num_tokens == 3 * T,
            cat("expected 3 windows / ", 3 * T, " tokens, got ", one.num_windows, " / ",
                one.num_tokens));

    // scalar-loop oracle: one window at a time, naive double accumulation
    double nll_sum = 0.0;
    int64_t count = 0;
    AlignedVec<float> logits;
    for (int w = 0; w < 3; ++w) {
        const TokenId* window = pool.tokens.data() + size_t(w) * (T + 1);
        forward_logits(params, window, 1, T, logits, static_cast<ForwardCache<float>*>(nullptr));
        for (int t = 0; t < T; ++t) {
            const float* row = logits.data() + size_t(t) * cfg.vocab_size;
            double mx = -1e300;
            for (int v = 0; v < cfg.vocab_size; ++v) mx = std::max(mx, double(row[v]));
            double s = 0.0;
            for (int v = 0; v < cfg.vocab_size; ++v) s += std::exp(double(row[v]) - mx);
            const double logp = double(row[window[t + 1]]) - mx - std::log(s);
            nll_sum -= logp;
            ++count;
        }
    }
    const double oracle_ppl = std::exp(nll_sum / double(count));
    require(dftest::rel_err(one.ppl, oracle_ppl) < 1e-9,
            cat("harness ppl ", g6(one.ppl), " vs oracle ", g6(oracle_ppl), " (rel ",
                sci(dftest::rel_err(one.ppl, oracle_ppl)), ")"));
    require(dftest::rel_err(one.ppl, two.ppl) < 1e-9, "row batching changed the perplexity");
    require(dftest::rel_err(one.ppl, std::exp(one.mean_nll)) < 1e-12,
            "ppl != exp(mean_nll)");

    // uniform logits: an all-zero parameter set predicts every token equally
    const ParamSet<float> zero = zeros_like_config<float>(cfg);
    const PerplexityResult uz = perplexity(zero, pool, T);
    require(dftest::rel_err(uz.ppl, double(cfg.vocab_size)) < 1e-6,
            cat("uniform model ppl ", g6(uz.ppl), " != ", cfg.vocab_size));

    return cat("3-window oracle rel err ", sci(dftest::rel_err(one.ppl, oracle_ppl)),
               "; uniform model ppl ", g6(uz.ppl), " == V = ", cfg.vocab_size);
}

// ---------------------------------------------------------------------------
// improvement-fixtures: the percent-improvement arithmetic reproduces a
// frozen reference table (an in-domain pair each way, and the mean transfer
// improvement of one variant row over 11 transfer sets).
// ---------------------------------------------------------------------------

std::string c_improvement_fixtures() {
    // regression case: the reference table lists in-domain ppl 12.17 -> 12.52 as -2.9
    const double worse = pct_improvement(12.17, 12.52, MetricKind::ppl);
    require(std::abs(worse - (-2.9)) <= 0.05,
            cat("pct(12.17 -> 12.52) = ", g6(worse), ", expected -2.9 +- 0.05"));
    // improvement case: the table lists 12.17 -> 12.05 as +1.0
    const double better = pct_improvement(12.17, 12.05, MetricKind::ppl);
    require(std::abs(better - 1.0) <= 0.05,
            cat("pct(12.17 -> 12.05) = ", g6(better), ", expected 1.0 +- 0.05"));

    // one baseline row and one variant row over 11 transfer perplexities;
    // the variant's mean improvement is listed as +3.5
    const std::array<double, 11> base = {16.01, 21.53, 6.61,  9.33, 13.54, 20.79,
                                         24.48, 14.27, 9.24, 24.77, 12.13};
    const std::array<double, 11> variant = {15.66, 21.08, 6.41, 9.07, 13.24, 18.96,
                                            23.93, 14.06, 9.09, 23.78, 11.16};
    std::vector<double> pcts;
    for (size_t i = 0; i < base.size(); ++i)
        pcts.push_back(pct_improvement(base[i], variant[i], MetricKind::ppl));
    const double mean = aggregate_improvements(pcts);
    require(std::abs(mean - 3.5) <= 0.15,
            cat("mean transfer improvement ", g6(mean), ", expected 3.5 +- 0.15"));
    return cat("pct fixtures ", g6(worse), " / ", g6(better),
               "; 11-set transfer aggregate ", g6(mean), " within 0.15 of 3.5");
}

// ---------------------------------------------------------------------------
// mechanism-oracles: every per-token aggregate matches a naive two-pass
// recomputation; a planted hard-token gain is detected by the bootstrap; a
// flat gain produces confidence intervals that cover zero.
// ---------------------------------------------------------------------------

// Synthetic record set with every difficulty bin populated. `hard_gain`
// applies to records whose base entropy lands in the third bin, `easy_gain`
// to everything else.
RecordSet synth_records(int n, uint64_t seed, double hard_gain, double easy_gain) {
    RecordSet set;
    set.vocab_size = 256;
    set.k = 10;
    set.context_len = 64;
    set.models = {"base-ref", "student-var", "teacher-ref"};
    const DifficultyEdges e = DifficultyEdges::desk(set.vocab_size);
    Rng rng(mix_key(seed, 0xAC5EED));
    auto fill_distinct = [&](std::vector<TokenId>& out, int k) {
        while (int(out.size()) < k) {
            const TokenId c = TokenId(rng.next_below(256));
            if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
        }
    };
    set.records.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        TokenRecord r;
        r.corpus_tag = (i % 3 == 0) ? "held" : "news";
        r.position = int64_t(rng.next_below(64));
        // draw the difficulty bin explicitly so all four stay populated
        const uint64_t b = rng.next_below(10);  // 3:3:3:1 over the bins
        double lo = 0.0, hi = e.e1;
        if (b >= 3 && b < 6) {
            lo = e.e1;
            hi = e.e2;
        } else if (b >= 6 && b < 9) {
            lo = e.e2;
            hi = e.e3;
        } else if (b >= 9) {
            lo = e.e3;
            hi = e.e3 + 0.5;
        }
        r.h_base = lo + (hi - lo) * rng.next_unit();
        r.h_student = 0.92 * r.h_base;
        r.nll_base = 0.5 + 4.0 * rng.next_unit();
        const bool hard = b >= 6 && b < 9;
        const double gain = hard ? hard_gain : easy_gain;
        r.nll_student = r.nll_base * (1.0 - gain) + 0.02 * (rng.next_unit() - 0.5);
        r.nll_teacher = 0.7 * r.nll_base;
        std::vector<TokenId> teacher, student, base;
        fill_distinct(teacher, set.k);
        student.assign(teacher.begin(), teacher.begin() + 5);
        fill_distinct(student, set.k);
        base.assign(student.begin(), student.begin() + 3);
        fill_distinct(base, set.k);
        const uint64_t pick = rng.next_below(4);
        if (pick == 0) r.gt = teacher[0];                   // in base and teacher lists
        else if (pick == 1) r.gt = teacher[4];              // usually teacher-only
        else if (pick == 2) r.gt = base[7];                 // usually baseline-only
        else r.gt = TokenId(rng.next_below(256));           // mostly neither
        r.topk_teacher = std::move(teacher);
        r.topk_student = std::move(student);
        r.topk_base = std::move(base);
        set.records.push_back(std::move(r));
    }
    return set;
}

int naive_bin(double h, const DifficultyEdges& e) {
    if (h < e.e1) return 0;
    if (h < e.e2) return 1;
    if (h < e.e3) return 2;
    return 3;
}

// plain two-pass percent improvement of mean-NLL perplexities
std::optional<double> naive_pct(const std::vector<const TokenRecord*>& recs,
                                double TokenRecord::*variant) {
    if (recs.empty()) return std::nullopt;
    double nb = 0.0, nv = 0.0;
    for (const TokenRecord* r : recs) {
        nb += r->nll_base;
        nv += r->*variant;
    }
    const double n = double(recs.size());
    const double pb = std::exp(nb / n);
    const double pv = std::exp(nv / n);
    return 100.0 * (pb - pv) / pb;
}

bool naive_contains(const std::vector<TokenId>& list, TokenId id) {
    for (TokenId t : list)
        if (t == id) return true;
    return false;
}

std::string c_mechanism_oracles() {
    const DifficultyEdges edges = DifficultyEdges::desk(256);
    const RecordSet set = synth_records(10000, 90210, 0.05, 0.02);
    double worst = 0.0;
    auto track = [&](double got, double want, const std::string& what) {
        const double err = dftest::rel_err(got, want);
        worst = std::max(worst, err);
        require(err <= 1e-9, cat(what, ": ", g6(got), " vs naive ", g6(want), " (rel ",
                                 sci(err), ")"));
    };

    // difficulty-bin improvements, both variants
    for (const Variant variant : {Variant::student, Variant::teacher}) {
        const auto lib = bin_improvements(set, edges, variant);
        std::array<std::vector<const TokenRecord*>, 4> bins;
        for (const TokenRecord& r : set.records)
            bins[size_t(naive_bin(r.h_base, edges))].push_back(&r);
        auto field = variant == Variant::student ? &TokenRecord::nll_student
                                                 : &TokenRecord::nll_teacher;
        for (int b = 0; b < 4; ++b) {
            const BinStat& stat = lib.at(kDifficultyLabels[size_t(b)]);
            require(stat.count == int64_t(bins[size_t(b)].size()),
                    cat("bin ", kDifficultyLabels[size_t(b)], " count mismatch"));
            const auto want = naive_pct(bins[size_t(b)], field);
            require(stat.pct.has_value() == want.has_value(), "bin pct presence mismatch");
            if (want) track(*stat.pct, *want, cat("bin ", kDifficultyLabels[size_t(b)]));
        }
    }

    // category fractions and improvements
    {
        const auto lib = category_improvements(set);
        std::array<std::vector<const TokenRecord*>, 4> cats;
        for (const TokenRecord& r : set.records) {
            const bool in_b = naive_contains(r.topk_base, r.gt);
            const bool in_t = naive_contains(r.topk_teacher, r.gt);
            const int c = in_b && in_t ? 0 : (in_t ? 1 : (in_b ? 2 : 3));
            cats[size_t(c)].push_back(&r);
        }
        double frac_sum = 0.0;
        for (int c = 0; c < 4; ++c) {
            const CategoryStat& stat = lib.at(kCategoryLabels[size_t(c)]);
            require(stat.count == int64_t(cats[size_t(c)].size()),
                    cat("category ", kCategoryLabels[size_t(c)], " count mismatch"));
            const double want_frac =
                double(cats[size_t(c)].size()) / double(set.records.size());
            require(stat.fraction == want_frac, "category fraction mismatch");
            frac_sum += stat.fraction;
            const auto want = naive_pct(cats[size_t(c)], &TokenRecord::nll_student);
            require(stat.pct.has_value() == want.has_value(), "category pct presence mismatch");
            if (want) track(*stat.pct, *want, cat("category ", kCategoryLabels[size_t(c)]));
        }
        require(std::abs(frac_sum - 1.0) <= 1e-12, "category fractions do not sum to 1");
    }

    // concentration statistic (hard - easy) on the full set
    {
        const BootstrapResult boot = concentration_bootstrap(set, edges, 50, 4242);
        std::vector<const TokenRecord*> easy, hard;
        for (const TokenRecord& r : set.records) {
            const int b = naive_bin(r.h_base, edges);
            if (b == 0) easy.push_back(&r);
            if (b == 2) hard.push_back(&r);
        }
        const double want = *naive_pct(hard, &TokenRecord::nll_student) -
                            *naive_pct(easy, &TokenRecord::nll_student);
        track(boot.stat, want, "concentration stat");
    }

    // top-k convergence ratio
    {
        const ConvergenceResult conv = convergence_ratio(set);
        double st = 0.0, sb = 0.0;
        for (const TokenRecord& r : set.records) {
            int ot = 0, ob = 0;
            for (TokenId t : r.topk_student) {
                if (naive_contains(r.topk_teacher, t)) ++ot;
                if (naive_contains(r.topk_base, t)) ++ob;
            }
            st += double(ot) / double(set.k);
            sb += double(ob) / double(set.k);
        }
        const double n = double(set.records.size());
        track(conv.mean_student_teacher, st / n, "mean student-teacher overlap");
        track(conv.mean_student_base, sb / n, "mean student-base overlap");
        require(conv.ratio.has_value(), "convergence ratio missing");
        track(*conv.ratio, (st / n) / (sb / n), "convergence ratio");
    }

    // entropy-delta point
    {
        const EntropyDeltaPoint pt = entropy_delta_point(set);
        require(pt.model_id == set.models[1], "entropy delta tagged with the wrong model");
        double hb = 0.0, hs = 0.0;
        std::vector<const TokenRecord*> all;
        for (const TokenRecord& r : set.records) {
            hb += r.h_base;
            hs += r.h_student;
            all.push_back(&r);
        }
        const double n = double(set.records.size());
        track(pt.delta_h, hs / n - hb / n, "entropy delta");
        track(pt.pct, *naive_pct(all, &TokenRecord::nll_student), "overall improvement");
    }

    // position bins
    {
        const std::vector<int64_t> pedges = {0, 16, 32, 64};
        const auto rows = position_improvements(set, pedges);
        require(rows.size() == 3, "expected 3 position bins");
        for (size_t b = 0; b < rows.size(); ++b) {
            std::vector<const TokenRecord*> recs;
            for (const TokenRecord& r : set.records)
                if (r.position >= pedges[b] && r.position < pedges[b + 1]) recs.push_back(&r);
            require(rows[b].count == int64_t(recs.size()), "position bin count mismatch");
            const auto want = naive_pct(recs, &TokenRecord::nll_student);
            require(rows[b].pct.has_value() == want.has_value(),
                    "position pct presence mismatch");
            if (want) track(*rows[b].pct, *want, cat("position bin ", rows[b].label));
        }
    }

    // planted hard-token gain: 5% NLL improvement only inside the hard bin
    const RecordSet planted = synth_records(10000, 31337, 0.05, 0.0);
    const BootstrapResult boot = concentration_bootstrap(planted, edges, 1000, 999);
    require(boot.stat > 0.0, cat("planted concentration stat not positive: ", g6(boot.stat)));
    require(boot.ci_lo > 0.0, cat("planted CI covers zero: [", g6(boot.ci_lo), ", ",
                                  g6(boot.ci_hi), "]"));
    // the two-sided p-value is floored at 1/resamples; the plant must pin it there
    require(boot.p_value <= 1.0 / 1000.0 + 1e-15,
            cat("planted p-value ", g6(boot.p_value), " above the 1/1000 floor"));
    require(boot.skipped == 0, "bootstrap dropped resamples on the planted set");

    // flat gain: the interval should cover zero in at least 90% of seed trials
    int covered = 0;
    const int trials = 20;
    for (int s = 0; s < trials; ++s) {
        const RecordSet null_set = synth_records(4000, 5000 + uint64_t(s), 0.03, 0.03);
        const BootstrapResult nb = concentration_bootstrap(null_set, edges, 500,
                                                           mix_key(8080, uint64_t(s)));
        if (nb.ci_lo <= 0.0 && 0.0 <= nb.ci_hi) ++covered;
    }
    require(covered >= 18, cat("flat-gain CI covered zero in only ", covered, "/", trials,
                               " trials"));

    return cat("aggregates match naive recomputation (worst rel ", sci(worst),
               "); planted stat ", g6(boot.stat), " CI [", g6(boot.ci_lo), ", ", g6(boot.ci_hi),
               "] p=", g6(boot.p_value), " (1/1000 floor); flat-gain coverage ", covered, "/",
               trials);
}

// ---------------------------------------------------------------------------
// smoothing-profile-crossing: the label-smoothing benefit proxy decreases
// strictly in entropy, so it crosses any strictly-increasing measured
// improvement profile at most once on binned data.
// ---------------------------------------------------------------------------

std::string c_smoothing_profile() {
    const int V = 128256;
    const double ln_v = std::log(double(V));

    // strict decrease over a fine grid of the whole domain
    double prev = ls_benefit(0.0, V);
    require(std::abs(prev - ln_v) <= 1e-12, "profile does not start at ln V");
    const int grid = 400;
    for (int i = 1; i <= grid; ++i) {
        const double h = ln_v * double(i) / double(grid);
        const double v = ls_benefit(h, V);
        require(v < prev, cat("profile not strictly decreasing at h=", g6(h)));
        prev = v;
    }
    require(std::abs(ls_benefit(ln_v, V)) <= 1e-12, "profile does not end at zero");

    // representative bin centers under the wide-vocabulary edges {2, 5, 8}
    const std::array<double, 4> centers = {1.0, 3.5, 6.5, (8.0 + ln_v) / 2.0};
    std::array<double, 4> smooth{};
    for (size_t i = 0; i < centers.size(); ++i) smooth[i] = ls_benefit(centers[i], V);

    const std::vector<std::vector<double>> profiles = {
        {0.5, 1.5, 4.0, 12.0},   // crosses once in the middle
        {15.0, 16.0, 17.0, 18.0},  // entirely above
        {-6.0, -5.0, -4.0, -3.0},  // entirely below
        {1.2, 5.3, 5.31, 11.9},  // crosses once near the middle
    };
    int crossing_profiles = 0;
    for (const auto& prof : profiles) {
        for (size_t i = 1; i < prof.size(); ++i)
            require(prof[i] > prof[i - 1], "constructed profile is not strictly increasing");
        int flips = 0;
        for (size_t i = 1; i < prof.size(); ++i) {
            const bool was = prof[i - 1] - smooth[i - 1] > 0.0;
            const bool now = prof[i] - smooth[i] > 0.0;
            if (was != now) ++flips;
        }
        require(flips <= 1, cat("profile crosses the smoothing curve ", flips, " times"));
        if (flips == 1) ++crossing_profiles;
    }
    require(crossing_profiles >= 2, "no constructed profile produced a crossing");
    return cat("strictly decreasing over ", grid, " grid points; ", profiles.size(),
               " increasing profiles each cross at most once (", crossing_profiles,
               " cross exactly once)");
}

// ---------------------------------------------------------------------------
// directional-distillation (reported, never gates): a same-config teacher,
// students trained at the full alpha grid for 2M tokens each over three data
// seeds; at least one alpha > 0 should match or beat the plain-LM baseline
// on median held-out perplexity.
// ---------------------------------------------------------------------------

// Corpus for the training experiment, calibrated so the effect has room to
// appear: a long-tail (Zipf-ish) word distribution over ~600 generated words,
// bigram successor structure, and occasional numeric fields. At the 2M-token
// budget the models approach their achievable floor while meaningful
// uncertainty remains; a corpus that is trivially memorized (or one that
// leaves the models heavily underfit) hides the effect behind ceiling or
// noise. Deterministic in (size, seed).
std::string desk_corpus(size_t min_bytes, uint64_t seed) {
    static const char* onsets[] = {"b", "br", "c",  "cr", "d",  "dr", "f", "fl", "g", "gl",
                                   "h", "j",  "k",  "kl", "l",  "m",  "n", "p",  "pr", "qu",
                                   "r", "s",  "st", "t",  "tr", "v",  "w", "z"};
    static const char* vowels[] = {"a", "e", "i", "o", "u", "ai", "ea", "ou"};
    static const char* codas[] = {"", "n", "r", "s", "t", "l", "rn", "st"};
    const int N = 600;
    std::vector<std::string> words(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
        uint64_t h = splitmix64(mix_key(0x50AB, uint64_t(i)));
        std::string w = onsets[h % 28];
        h /= 28;
        w += vowels[h % 8];
        h /= 8;
        w += codas[h % 8];
        h /= 8;
        if (h % 3 == 0) {  // second syllable for a third of the words
            w += vowels[h / 3 % 8];
            w += codas[h / 24 % 8];
        }
        words[size_t(i)] = w;
    }
    std::vector<double> cum(static_cast<size_t>(N));
    double total = 0.0;
    for (int r = 0; r < N; ++r) {
        total += 1.0 / std::pow(double(r + 2), 1.1);
        cum[size_t(r)] = total;
    }
    for (double& c : cum) c /= total;

    Rng rng(mix_key(seed, 0xDE5C));
    auto zipf_word = [&]() {
        const double u = rng.next_unit();
        return int(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    };

    std::string out;
    out.reserve(min_bytes + 128);
    int prev = zipf_word();
    int since_stop = 0;
    char buf[32];
    while (out.size() < min_bytes) {
        int w;
        const uint64_t roll = rng.next_below(12);
        if (roll == 0) {
            // numeric field: irreducibly hard digits
            std::snprintf(buf, sizeof buf, "%llu", (unsigned long long)rng.next_below(100000));
            out += buf;
            out += ' ';
            ++since_stop;
            continue;
        }
        if (roll < 7) {
            // one of four likely successors of the previous word
            w = int((uint64_t(prev) * 2654435761ULL + rng.next_below(4)) % uint64_t(N));
        } else {
            w = zipf_word();
        }
        out += words[size_t(w)];
        ++since_stop;
        if (since_stop >= 4 && rng.next_below(6) == 0) {
            out += ". ";
            since_stop = 0;
            prev = zipf_word();
        } else {
            out += ' ';
            prev = w;
        }
    }
    return out;
}

std::string c_directional_distillation() {
    const auto t0 = Clock::now();
    ModelConfig cfg;
    cfg.hidden_dim = 64;
    cfg.num_layers = 2;
    cfg.mlp_dim = 256;
    cfg.query_heads = 4;
    cfg.kv_heads = 2;
    cfg.head_dim = 16;
    cfg.vocab_size = kByteVocab;
    cfg.context_len = 128;

    const int64_t budget = 2'000'000;
    const std::string corpus = desk_corpus(2'600'000, 4177);
    PoolSet pools = build_pools(corpus, 0.1, 8812, cfg.context_len);

    // fixed evaluation slice, identical for every run
    TokenPool held = pools.held_out;
    const size_t eval_cap = size_t(800) * size_t(cfg.context_len + 1);
    if (held.tokens.size() > eval_cap) held.tokens.resize(eval_cap);
    auto heldout_ppl = [&](const ParamSet<float>& p) {
        return perplexity(p, held, cfg.context_len, 16).ppl;
    };

    RunConfig proto;
    proto.model = cfg;
    proto.token_budget = budget;
    proto.batch_size = 16;

    RunConfig tr = proto;
    tr.run_id = "desk-teacher";
    tr.role = Role::teacher;
    tr.data_seed = 1101;
    tr.init_seed = 1102;
    const TrainResult teacher = train_run(tr, pools.train, nullptr);
    const double teacher_ppl = heldout_ppl(teacher.params);

    const std::array<double, 6> alphas = {0.2, 0.4, 0.5, 0.6, 0.8, 1.0};
    const std::array<uint64_t, 3> seeds = {21, 22, 23};
    std::vector<double> base_ppl;
    std::map<double, std::vector<double>> dist_ppl;
    for (uint64_t s : seeds) {
        RunConfig rb = proto;
        rb.run_id = cat("desk-base-s", s);
        rb.role = Role::baseline;
        rb.data_seed = s;
        rb.init_seed = 31;
        base_ppl.push_back(heldout_ppl(train_run(rb, pools.train, nullptr).params));
        for (double a : alphas) {
            RunConfig rd = rb;
            rd.run_id = cat("desk-a", format_double(a), "-s", s);
            rd.role = Role::distill;
            rd.alpha = a;
            dist_ppl[a].push_back(
                heldout_ppl(train_run(rd, pools.train, &teacher.params).params));
        }
    }

    auto median3 = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[1];
    };
    const double base_med = median3(base_ppl);
    std::string per_alpha;
    double best_med = 1e300, best_alpha = 0.0;
    for (double a : alphas) {
        const double med = median3(dist_ppl.at(a));
        per_alpha += cat(" a", format_double(a), "=", g6(med));
        if (med < best_med) {
            best_med = med;
            best_alpha = a;
        }
    }
    const std::string table =
        cat("baseline med=", g6(base_med), ", teacher=", g6(teacher_ppl), ", per-alpha med:",
            per_alpha, ", seeds {21, 22, 23}, ", g6(seconds_since(t0)), "s");
    require(best_med <= base_med,
            cat("no alpha reached the baseline on median held-out ppl; ", table));
    return cat("alpha ", format_double(best_alpha), " med ppl ", g6(best_med),
               " <= baseline ", g6(base_med), "; ", table);
}

// ---------------------------------------------------------------------------
// sweep-bookkeeping: a 2-arch x 2-budget x 2-alpha sweep produces exactly
// the expected cells, re-running touches nothing, and every table number is
// recomputable bit-exactly from the stored per-cell reports.
// ---------------------------------------------------------------------------

std::map<std::string, std::string> dir_bytes(const std::string& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file()) out[entry.path().filename().string()] =
            read_file(entry.path().string());
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(split_csv_line(line));
    return rows;
}

std::string c_sweep_bookkeeping() {
    const std::string dir = dftest::fresh_dir("accept_sweep");
    const std::string out = dir + "/out";
    write_file_atomic(dir + "/corpus.txt", dftest::synth_corpus(140000, 901));
    write_file_atomic(dir + "/ood.txt", dftest::synth_corpus(40000, 902));

    SweepConfig cfg;
    cfg.corpus_path = dir + "/corpus.txt";
    cfg.ood_paths = {{"news", dir + "/ood.txt"}};
    cfg.held_out_fraction = 0.1;
    cfg.student.hidden_dim = 16;
    cfg.student.num_layers = 1;
    cfg.student.mlp_dim = 32;
    cfg.student.query_heads = 2;
    cfg.student.kv_heads = 1;
    cfg.student.head_dim = 8;
    cfg.student.vocab_size = kByteVocab;
    cfg.student.context_len = 64;
    cfg.batch_size = 4;
    cfg.student_budget = 16 * 4 * 64;
    ModelConfig wide = cfg.student;
    wide.hidden_dim = 24;
    wide.mlp_dim = 48;
    wide.head_dim = 12;
    const int64_t lo = 8 * 4 * 64, hi = 12 * 4 * 64;
    cfg.teachers = {{"t16-lo", cfg.student, lo},
                    {"t16-hi", cfg.student, hi},
                    {"t24-lo", wide, lo},
                    {"t24-hi", wide, hi}};
    cfg.alphas = {0.5, 1.0};
    cfg.lr.peak = 3e-3;
    cfg.mc_items = 12;
    cfg.mc_choices = 3;
    cfg.mc_prompt_len = 16;
    cfg.mc_choice_len = 8;
    cfg.eval_max_windows = 8;
    cfg.validate();

    // exact cell inventory: 4 teachers + 1 baseline + (4 x 2) distill = 13
    const std::vector<CellSpec> cells = sweep_cells(cfg, out);
    require(cells.size() == 13, cat("expected 13 cells, got ", cells.size()));
    std::set<std::string> ids;
    for (const CellSpec& c : cells) ids.insert(c.id);
    std::set<std::string> want = {"baseline"};
    for (const char* label : {"t16-lo", "t16-hi", "t24-lo", "t24-hi"}) {
        want.insert(cat("teacher-", label));
        want.insert(cat("distill-", label, "-a0.5"));
        want.insert(cat("distill-", label, "-a1"));
    }
    require(ids == want, "cell id inventory differs from the expected set");
    for (size_t i = 0; i < 4; ++i)
        require(cells[i].kind == CellKind::teacher, "teacher cells must come first");

    const SweepResult r1 = run_sweep(cfg, out, 1);
    for (const CellOutcome& c : r1.cells)
        require(c.state == "done", cat("cell ", c.spec.id, " is ", c.state,
                                       c.error.empty() ? "" : ": " + c.error));
    require(r1.grid_complete, "improvement grid incomplete after a full run");

    // idempotence: a second run must not touch any cell artifact
    const auto status_before = dir_bytes(out + "/cells");
    const std::string probe_ckpt = out + "/ckpt/distill-t24-hi-a0.5.dfckpt";
    const std::string ckpt_before = read_file(probe_ckpt);
    const SweepResult r2 = run_sweep(cfg, out, 1);
    require(dir_bytes(out + "/cells") == status_before,
            "re-run rewrote cell status files (not idempotent)");
    require(read_file(probe_ckpt) == ckpt_before, "re-run rewrote a finished checkpoint");

    // tables are a pure function of the on-disk state
    const std::vector<std::string> paths1 = emit_tables(r2);
    std::map<std::string, std::string> tables_before;
    for (const std::string& p : paths1) tables_before[p] = read_file(p);
    const SweepResult loaded = load_sweep(out);
    const std::vector<std::string> paths2 = emit_tables(loaded);
    require(paths1 == paths2, "table path lists differ between runs");
    for (const std::string& p : paths2)
        require(read_file(p) == tables_before.at(p),
                cat("table ", fs::path(p).filename().string(),
                    " changed when re-derived from disk"));

    // every per-benchmark number recomputed from the stored reports
    const EvalReport baseline = read_eval_report(out + "/reports/baseline.eval.json");
    auto report_metric = [](const EvalReport& rep, const std::string& name) {
        auto p = rep.pool_ppl.find(name);
        if (p != rep.pool_ppl.end()) return std::make_pair(p->second, MetricKind::ppl);
        return std::make_pair(rep.task_acc.at(name), MetricKind::acc);
    };
    const auto bench_rows = parse_csv(tables_before.at(out + "/tables/benchmark_improvements.csv"));
    require(bench_rows.size() == size_t(1 + 4 * 2 * 4),
            cat("unexpected benchmark table size ", bench_rows.size()));
    require(bench_rows[0] == std::vector<std::string>(
                                 {"teacher_label", "tokens", "alpha", "benchmark", "metric",
                                  "pct"}),
            "benchmark table header changed");
    int recomputed = 0;
    std::map<std::string, std::map<double, std::map<std::string, double>>> disk_pct;
    for (size_t i = 1; i < bench_rows.size(); ++i) {
        const auto& row = bench_rows[i];
        const std::string cell_id = cat("distill-", row[0], "-a", row[2]);
        const EvalReport rep = read_eval_report(out + "/reports/" + cell_id + ".eval.json");
        const auto [base_v, kind] = report_metric(baseline, row[3]);
        const auto [cell_v, kind2] = report_metric(rep, row[3]);
        require(kind == kind2, "metric family mismatch");
        const double pct = pct_improvement(base_v, cell_v, kind);
        require(format_double(pct) == row[5],
                cat("benchmark ", row[3], " for ", cell_id, ": table says ", row[5],
                    ", reports give ", format_double(pct)));
        disk_pct[row[0]][std::strtod(row[2].c_str(), nullptr)][row[3]] = pct;
        ++recomputed;
    }

    // family means in improvements.csv recomputed from the same values
    const std::vector<std::string> benchmarks = {"held_out", "news", "cont_fixed", "cont_norm"};
    const std::map<std::string, std::string> family_of = {{"held_out", "in_domain_ppl"},
                                                          {"news", "ood_ppl"},
                                                          {"cont_fixed", "downstream_acc"},
                                                          {"cont_norm", "downstream_acc"}};
    const auto imp_rows = parse_csv(tables_before.at(out + "/tables/improvements.csv"));
    require(imp_rows.size() == size_t(1 + 4 * 2 * 3),
            cat("unexpected improvements table size ", imp_rows.size()));
    for (size_t i = 1; i < imp_rows.size(); ++i) {
        const auto& row = imp_rows[i];
        const double alpha = std::strtod(row[2].c_str(), nullptr);
        std::vector<double> pcts;
        for (const std::string& b : benchmarks)
            if (family_of.at(b) == row[3]) pcts.push_back(disk_pct.at(row[0]).at(alpha).at(b));
        require(format_double(aggregate_improvements(pcts)) == row[4],
                cat("family mean for ", row[0], "/", row[3], " not recomputable"));
        ++recomputed;
    }

    // best-alpha selections recomputed from the same grid
    ImprovementGrid grid;
    grid.alphas = cfg.alphas;
    grid.benchmarks = benchmarks;
    for (const auto& [b, fam] : family_of) grid.benchmark_metric[b] = fam;
    grid.pct = disk_pct;
    const auto best = select_best_alpha(grid, BestAlphaMode::per_metric);
    const auto best_rows = parse_csv(tables_before.at(out + "/tables/best_alpha.csv"));
    require(best_rows.size() == size_t(1 + 4 * 3), "unexpected best-alpha table size");
    for (size_t i = 1; i < best_rows.size(); ++i) {
        const auto& row = best_rows[i];
        const double alpha = best.at(row[0]).at(row[2]);
        require(format_double(alpha) == row[3],
                cat("best alpha for ", row[0], "/", row[2], " not recomputable"));
        std::vector<double> pcts;
        for (const std::string& b : benchmarks)
            if (family_of.at(b) == row[2]) pcts.push_back(disk_pct.at(row[0]).at(alpha).at(b));
        require(format_double(aggregate_improvements(pcts)) == row[4],
                cat("best-alpha pct for ", row[0], "/", row[2], " not recomputable"));
        ++recomputed;
    }

    return cat("13/13 cells done; re-run byte-stable; ", paths1.size(),
               " tables re-derived from disk byte-identically; ", recomputed,
               " table numbers recomputed bit-exactly from stored reports");
}

// ---------------------------------------------------------------------------
// harness
// ---------------------------------------------------------------------------

struct Criterion {
    const char* name;
    bool soft;  // reported, never gates the exit code
    std::function<std::string()> run;
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> all = {
        {"gradient-exactness", false, c_gradient_exactness},
        {"objective-endpoints", false, c_objective_endpoints},
        {"kd-gradient-identity", false, c_kd_gradient_identity},
        {"perplexity-oracle", false, c_perplexity_oracle},
        {"improvement-fixtures", false, c_improvement_fixtures},
        {"mechanism-oracles", false, c_mechanism_oracles},
        {"smoothing-profile-crossing", false, c_smoothing_profile},
        {"directional-distillation", true, c_directional_distillation},
        {"sweep-bookkeeping", false, c_sweep_bookkeeping},
    };
    return all;
}

int usage(int code) {
    std::fprintf(stderr,
                 "usage: distforge_acceptance [--fast] [--only NAME] [--list]\n"
                 "  --fast   skip the directional training experiment\n"
                 "  --only   run a single criterion by name\n"
                 "  --list   print criterion names\n");
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    bool fast = false;
    std::string only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--fast") {
            fast = true;
        } else if (arg == "--only" && i + 1 < argc) {
            only = argv[++i];
        } else if (arg == "--list") {
            for (const Criterion& c : criteria()) std::printf("%s\n", c.name);
            return 0;
        } else {
            return usage(arg == "--help" || arg == "-h" ? 0 : 2);
        }
    }
    if (!only.empty()) {
        const auto& all = criteria();
        if (std::none_of(all.begin(), all.end(),
                         [&](const Criterion& c) { return only == c.name; })) {
            std::fprintf(stderr, "unknown criterion '%s' (try --list)\n", only.c_str());
            return 2;
        }
    }

    int passed = 0, failed = 0, soft_failed = 0, skipped = 0;
    for (const Criterion& c : criteria()) {
        if (!only.empty() && only != c.name) continue;
        if (fast && c.soft) {
            std::printf("[SKIP] %-28s --fast: training experiment skipped\n", c.name);
            ++skipped;
            continue;
        }
        const auto t0 = Clock::now();
        try {
            const std::string detail = c.run();
            std::printf("[PASS] %-28s (%7.2fs) %s\n", c.name, seconds_since(t0),
                        detail.c_str());
            ++passed;
        } catch (const Error& e) {
            std::printf("[FAIL] %-28s (%7.2fs) %s error: %s%s\n", c.name, seconds_since(t0),
                        e.category().c_str(), e.what(),
                        c.soft ? " [reported, not gated]" : "");
            c.soft ? ++soft_failed : ++failed;
        } catch (const std::exception& e) {
            std::printf("[FAIL] %-28s (%7.2fs) %s%s\n", c.name, seconds_since(t0), e.what(),
                        c.soft ? " [reported, not gated]" : "");
            c.soft ? ++soft_failed : ++failed;
        }
        std::fflush(stdout);
    }
    std::printf("acceptance: %d passed, %d failed, %d skipped%s\n", passed,
                failed + soft_failed, skipped,
                soft_failed > 0 ? " (failures are all non-gating)" : "");
    return failed == 0 ? 0 : 1;
}
