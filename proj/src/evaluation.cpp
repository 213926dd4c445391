#include "distforge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace distforge {

PerplexityResult perplexity(const ParamSet<float>& params, const TokenPool& pool, int context_len,
                            int batch_rows) {
    if (context_len < 1) fail("config", "context_len must be >= 1");
    if (context_len > params.config.context_len)
        fail("config", "eval context exceeds the model's context_len");
    if (batch_rows < 1) fail("config", "batch_rows must be >= 1");
    const uint64_t window = uint64_t(context_len) + 1;
    const uint64_t num_windows = pool.tokens.size() / window;
    if (num_windows == 0)
        fail("data", "pool " + pool.pool_id + " shorter than one evaluation window");

    const int V = params.config.vocab_size;
    ForwardCache<float> cache;
    AlignedVec<float> logits;
    std::vector<TokenId> inputs;
    KahanSum nll;

    uint64_t done = 0;
    while (done < num_windows) {
        const int rows = int(std::min<uint64_t>(batch_rows, num_windows - done));
        inputs.resize(size_t(rows) * context_len);
        for (int b = 0; b < rows; ++b) {
            const TokenId* src = pool.tokens.data() + (done + b) * window;
            std::copy(src, src + context_len, inputs.data() + size_t(b) * context_len);
        }
        forward_logits(params, inputs.data(), rows, context_len, logits, &cache);
        for (int b = 0; b < rows; ++b) {
            const TokenId* src = pool.tokens.data() + (done + b) * window;
            for (int t = 0; t < context_len; ++t) {
                const float* row = logits.data() + (size_t(b) * context_len + t) * V;
                const TokenId target = src[t + 1];
                if (target < 0 || target >= V) fail("data", "token outside vocabulary");
                nll.add(-row_log_prob(row, V, target));
            }
        }
        done += rows;
    }

    PerplexityResult out;
    out.num_windows = int64_t(num_windows);
    out.num_tokens = int64_t(num_windows) * context_len;
    out.mean_nll = nll.value() / double(out.num_tokens);
    out.ppl = std::exp(out.mean_nll);
    return out;
}

LogitFn model_logit_fn(const ParamSet<float>& params) {
    // one shared workspace per fn instance; LogitFn consumers are sequential
    auto cache = std::make_shared<ForwardCache<float>>();
    return [&params, cache](const std::vector<TokenId>& tokens) {
        if (tokens.empty()) fail("config", "empty token sequence");
        AlignedVec<float> logits;
        forward_logits(params, tokens.data(), 1, int(tokens.size()), logits, cache.get());
        return std::vector<float>(logits.begin(), logits.end());
    };
}

int mc_select(const LogitFn& logits, const std::vector<TokenId>& prompt,
              const std::vector<std::vector<TokenId>>& choices, bool length_norm,
              std::vector<double>* scores_out) {
    if (choices.size() < 2) fail("config", "mc_select needs at least two choices");
    if (prompt.empty()) fail("config", "mc_select needs a non-empty prompt");
    std::vector<double> scores(choices.size());
    for (size_t c = 0; c < choices.size(); ++c) {
        const auto& choice = choices[c];
        if (choice.empty()) fail("config", "empty choice at index " + std::to_string(c));
        std::vector<TokenId> seq = prompt;
        seq.insert(seq.end(), choice.begin(), choice.end());
        const std::vector<float> lg = logits(seq);
        const int V = int(lg.size() / seq.size());
        // token at position p is predicted by the logits at position p-1
        KahanSum ll;
        for (size_t p = prompt.size(); p < seq.size(); ++p)
            ll.add(row_log_prob(lg.data() + (p - 1) * V, V, seq[p]));
        scores[c] = length_norm ? ll.value() / double(choice.size()) : ll.value();
    }
    if (scores_out) *scores_out = scores;
    int best = 0;
    for (size_t c = 1; c < scores.size(); ++c)
        if (scores[c] > scores[best]) best = int(c);
    return best;
}

MetricKind metric_kind_from_name(const std::string& name) {
    if (name.find("ppl") != std::string::npos) return MetricKind::ppl;
    if (name.find("acc") != std::string::npos) return MetricKind::acc;
    fail("config", "cannot infer metric kind from name: " + name);
}

double pct_improvement(double baseline, double value, MetricKind kind) {
    if (!(baseline > 0.0)) fail("config", "baseline must be > 0");
    if (kind == MetricKind::ppl) return 100.0 * (baseline - value) / baseline;
    return 100.0 * (value - baseline) / baseline;
}

double aggregate_improvements(const std::vector<double>& pcts) {
    if (pcts.empty()) fail("config", "cannot aggregate an empty list");
    KahanSum sum;
    for (double p : pcts) sum.add(p);
    return sum.value() / double(pcts.size());
}

std::vector<double> minmax_normalize(const std::vector<double>& values) {
    if (values.empty()) fail("config", "cannot normalize an empty list");
    const double lo = *std::min_element(values.begin(), values.end());
    const double hi = *std::max_element(values.begin(), values.end());
    std::vector<double> out(values.size());
    if (lo == hi) {
        std::fill(out.begin(), out.end(), 100.0);  // degenerate: all equally best
        return out;
    }
    for (size_t i = 0; i < values.size(); ++i) out[i] = 100.0 * (values[i] - lo) / (hi - lo);
    return out;
}

std::string eval_report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["model_id"] = report.model_id;
    j["pool_ppl"] = report.pool_ppl;
    j["task_acc"] = report.task_acc;
    return j.dump(2) + "\n";
}

EvalReport eval_report_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail("format", "eval report is not a JSON object");
    EvalReport r;
    try {
        r.model_id = j.at("model_id").get<std::string>();
        r.pool_ppl = j.at("pool_ppl").get<std::map<std::string, double>>();
        r.task_acc = j.at("task_acc").get<std::map<std::string, double>>();
    } catch (const nlohmann::json::exception& e) {
        fail("format", std::string("eval report field: ") + e.what());
    }
    return r;
}

void write_eval_report(const std::string& path, const EvalReport& report) {
    write_file_atomic(path, eval_report_to_json(report));
}

EvalReport read_eval_report(const std::string& path) {
    return eval_report_from_json(read_file(path));
}

std::map<std::string, std::map<std::string, double>> select_best_alpha(
    const ImprovementGrid& grid, BestAlphaMode mode) {
    if (grid.alphas.empty()) fail("config", "alpha set is empty");
    if (grid.benchmarks.empty()) fail("config", "benchmark set is empty");

    // completeness: every (teacher, alpha, benchmark) cell must be present
    for (const auto& [teacher, by_alpha] : grid.pct) {
        for (double a : grid.alphas) {
            auto it = by_alpha.find(a);
            if (it == by_alpha.end())
                fail("data", "incomplete grid: teacher " + teacher + " missing alpha " +
                                 format_double(a));
            for (const auto& bench : grid.benchmarks)
                if (!it->second.count(bench))
                    fail("data", "incomplete grid: teacher " + teacher + " alpha " +
                                     format_double(a) + " missing benchmark " + bench);
        }
    }

    // metric families in stable benchmark order
    std::vector<std::string> metrics;
    for (const auto& bench : grid.benchmarks) {
        auto it = grid.benchmark_metric.find(bench);
        if (it == grid.benchmark_metric.end())
            fail("data", "benchmark " + bench + " has no metric tag");
        if (std::find(metrics.begin(), metrics.end(), it->second) == metrics.end())
            metrics.push_back(it->second);
    }

    // ascending alpha order makes "ties -> smaller alpha" a strict-greater test
    std::vector<double> alphas = grid.alphas;
    std::sort(alphas.begin(), alphas.end());

    std::map<std::string, std::map<std::string, double>> best;
    for (const auto& [teacher, by_alpha] : grid.pct) {
        if (mode == BestAlphaMode::joint) {
            // one alpha maximizing the equal-weight mean over all benchmarks
            double best_alpha = alphas.front();
            double best_mean = -std::numeric_limits<double>::infinity();
            for (double a : alphas) {
                KahanSum sum;
                for (const auto& bench : grid.benchmarks) sum.add(by_alpha.at(a).at(bench));
                const double mean = sum.value() / double(grid.benchmarks.size());
                if (mean > best_mean) {
                    best_mean = mean;
                    best_alpha = a;
                }
            }
            for (const auto& m : metrics) best[teacher][m] = best_alpha;
        } else {
            for (const auto& m : metrics) {
                double best_alpha = alphas.front();
                double best_mean = -std::numeric_limits<double>::infinity();
                for (double a : alphas) {
                    KahanSum sum;
                    int64_t n = 0;
                    for (const auto& bench : grid.benchmarks) {
                        if (grid.benchmark_metric.at(bench) != m) continue;
                        sum.add(by_alpha.at(a).at(bench));
                        ++n;
                    }
                    const double mean = sum.value() / double(n);
                    if (mean > best_mean) {
                        best_mean = mean;
                        best_alpha = a;
                    }
                }
                best[teacher][m] = best_alpha;
            }
        }
    }
    return best;
}

}  // namespace distforge
