#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "distforge/model.hpp"

namespace distforge {

// --- perplexity ---------------------------------------------------------------

struct PerplexityResult {
    double ppl = 0.0;
    double mean_nll = 0.0;   // nats per token; ppl == exp(mean_nll)
    int64_t num_tokens = 0;  // scored target positions
    int64_t num_windows = 0;
};

// Sequential non-overlapping windows of (context_len + 1) tokens — the same
// window shape training uses, so ppl == exp(lm loss on these windows). The
// final partial window is dropped. NLL accumulates in double with
// compensation. errors: data (pool shorter than one window), config
PerplexityResult perplexity(const ParamSet<float>& params, const TokenPool& pool, int context_len,
                            int batch_rows = 16);

// --- multiple-choice scoring --------------------------------------------------

// Returns causal logits [T, V] (row-major) for one token sequence. Wrapping
// scoring around a logit function keeps the math testable against planted
// distributions.
using LogitFn = std::function<std::vector<float>(const std::vector<TokenId>&)>;

LogitFn model_logit_fn(const ParamSet<float>& params);

// Scores each choice by summed log-likelihood of its tokens given
// prompt + preceding choice tokens; optional per-character normalization
// (byte-level: characters == tokens). Returns the argmax index; ties break
// toward the smaller index. errors: config (< 2 choices, empty choice,
// empty prompt)
int mc_select(const LogitFn& logits, const std::vector<TokenId>& prompt,
              const std::vector<std::vector<TokenId>>& choices, bool length_norm,
              std::vector<double>* scores_out = nullptr);

// --- improvement arithmetic ---------------------------------------------------

enum class MetricKind { ppl, acc };

MetricKind metric_kind_from_name(const std::string& name);  // errors: config

// ppl: 100*(baseline - value)/baseline; acc: 100*(value - baseline)/baseline.
// Positive always means the variant beats the baseline.
// errors: config (baseline <= 0)
double pct_improvement(double baseline, double value, MetricKind kind);

// Unweighted mean of percent improvements. errors: config (empty)
double aggregate_improvements(const std::vector<double>& pcts);

// Min-max rescale to [0, 100]; all-equal inputs map to all-100 by the
// degenerate rule (every alpha is equally "best"). errors: config (empty)
std::vector<double> minmax_normalize(const std::vector<double>& values);

// --- reports --------------------------------------------------------------

struct EvalReport {
    std::string model_id;
    std::map<std::string, double> pool_ppl;  // pool id -> perplexity
    std::map<std::string, double> task_acc;  // task name -> accuracy
};

std::string eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const std::string& text);  // errors: format
void write_eval_report(const std::string& path, const EvalReport& report);
EvalReport read_eval_report(const std::string& path);

// --- best-alpha selection -------------------------------------------------

// Percent improvements for every (teacher, alpha, benchmark) cell; each
// benchmark is tagged with the metric family it belongs to.
struct ImprovementGrid {
    std::vector<double> alphas;                 // required alpha set
    std::vector<std::string> benchmarks;        // stable order
    std::map<std::string, std::string> benchmark_metric;
    // teacher -> alpha -> benchmark -> pct
    std::map<std::string, std::map<double, std::map<std::string, double>>> pct;
};

enum class BestAlphaMode { per_metric, joint };

// per_metric: argmax of the benchmark-mean within each metric family.
// joint: one alpha per teacher, argmax of the mean over all benchmarks
// weighted equally (reported for every metric of that teacher).
// Ties break toward the smaller alpha. errors: data (incomplete grid),
// config (empty alpha set)
std::map<std::string, std::map<std::string, double>> select_best_alpha(
    const ImprovementGrid& grid, BestAlphaMode mode);

}  // namespace distforge
