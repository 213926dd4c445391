#include "distforge/mechanism.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "distforge/evaluation.hpp"

namespace distforge {

namespace {

// top-k token ids of one logit row, ties broken toward smaller id
std::vector<TokenId> topk_ids(const float* row, int V, int k) {
    std::vector<TokenId> ids(V);
    std::iota(ids.begin(), ids.end(), 0);
    std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), [row](TokenId a, TokenId b) {
        if (row[a] != row[b]) return row[a] > row[b];
        return a < b;
    });
    ids.resize(k);
    return ids;
}

bool contains(const std::vector<TokenId>& ids, TokenId id) {
    return std::find(ids.begin(), ids.end(), id) != ids.end();
}

double overlap_fraction(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
    if (a.empty()) return 0.0;
    int64_t hits = 0;
    for (TokenId id : a)
        if (contains(b, id)) ++hits;
    return double(hits) / double(a.size());
}

// ppl improvement of variant NLLs over base NLLs across one record subset
std::optional<double> subset_pct(const std::vector<const TokenRecord*>& recs,
                                 double TokenRecord::*base_field,
                                 double TokenRecord::*variant_field) {
    if (recs.empty()) return std::nullopt;
    KahanSum base_nll, var_nll;
    for (const TokenRecord* r : recs) {
        base_nll.add(r->*base_field);
        var_nll.add(r->*variant_field);
    }
    const double n = double(recs.size());
    const double base_ppl = std::exp(base_nll.value() / n);
    const double var_ppl = std::exp(var_nll.value() / n);
    return pct_improvement(base_ppl, var_ppl, MetricKind::ppl);
}

}  // namespace

RecordSet collect_records(const ParamSet<float>& base, const ParamSet<float>& student,
                          const ParamSet<float>& teacher, const TokenPool& pool, int context_len,
                          int k, int64_t max_records, const std::vector<std::string>& model_ids,
                          int batch_rows) {
    const int V = base.config.vocab_size;
    if (student.config.vocab_size != V || teacher.config.vocab_size != V)
        fail("config", "models disagree on vocabulary size");
    if (k < 1 || k > V) fail("config", "k must lie in [1, vocab]");
    if (max_records < 1) fail("config", "max_records must be >= 1");
    if (model_ids.size() != 3) fail("config", "expected exactly three model ids");
    if (context_len < 1 || context_len > base.config.context_len ||
        context_len > student.config.context_len || context_len > teacher.config.context_len)
        fail("config", "context_len exceeds a model's context");
    const uint64_t window = uint64_t(context_len) + 1;
    const uint64_t num_windows = pool.tokens.size() / window;
    if (num_windows == 0) fail("data", "pool too small for one analysis window");

    RecordSet set;
    set.vocab_size = V;
    set.k = k;
    set.context_len = context_len;
    set.models = model_ids;
    set.records.reserve(size_t(std::min<int64_t>(max_records, int64_t(num_windows) * context_len)));

    ForwardCache<float> cache_b, cache_s, cache_t;
    AlignedVec<float> lg_b, lg_s, lg_t;
    std::vector<TokenId> inputs;

    uint64_t done = 0;
    while (done < num_windows && int64_t(set.records.size()) < max_records) {
        const int rows = int(std::min<uint64_t>(batch_rows, num_windows - done));
        inputs.resize(size_t(rows) * context_len);
        for (int b = 0; b < rows; ++b) {
            const TokenId* src = pool.tokens.data() + (done + b) * window;
            std::copy(src, src + context_len, inputs.data() + size_t(b) * context_len);
        }
        forward_logits(base, inputs.data(), rows, context_len, lg_b, &cache_b);
        forward_logits(student, inputs.data(), rows, context_len, lg_s, &cache_s);
        forward_logits(teacher, inputs.data(), rows, context_len, lg_t, &cache_t);
        for (int b = 0; b < rows && int64_t(set.records.size()) < max_records; ++b) {
            const TokenId* src = pool.tokens.data() + (done + b) * window;
            for (int t = 0; t < context_len && int64_t(set.records.size()) < max_records; ++t) {
                const size_t off = (size_t(b) * context_len + t) * V;
                const float* rb = lg_b.data() + off;
                const float* rs = lg_s.data() + off;
                const float* rt = lg_t.data() + off;
                TokenRecord rec;
                rec.corpus_tag = pool.pool_id;
                rec.position = t;
                rec.gt = src[t + 1];
                rec.h_base = row_entropy(rb, V);
                rec.h_student = row_entropy(rs, V);
                rec.nll_base = -row_log_prob(rb, V, rec.gt);
                rec.nll_student = -row_log_prob(rs, V, rec.gt);
                rec.nll_teacher = -row_log_prob(rt, V, rec.gt);
                rec.topk_base = topk_ids(rb, V, k);
                rec.topk_student = topk_ids(rs, V, k);
                rec.topk_teacher = topk_ids(rt, V, k);
                set.records.push_back(std::move(rec));
            }
        }
        done += rows;
    }
    return set;
}

void write_records(const std::string& path, const RecordSet& set) {
    std::ostringstream out;
    out << "DFREC1\n";
    out << nlohmann::json{{"vocab_size", set.vocab_size},
                          {"k", set.k},
                          {"context_len", set.context_len},
                          {"models", set.models}}
               .dump()
        << "\n";
    for (const auto& r : set.records) {
        out << nlohmann::json{{"tag", r.corpus_tag},
                              {"pos", r.position},
                              {"gt", r.gt},
                              {"h_base", r.h_base},
                              {"h_student", r.h_student},
                              {"nll_base", r.nll_base},
                              {"nll_student", r.nll_student},
                              {"nll_teacher", r.nll_teacher},
                              {"topk_base", r.topk_base},
                              {"topk_student", r.topk_student},
                              {"topk_teacher", r.topk_teacher}}
                   .dump()
            << "\n";
    }
    write_file_atomic(path, out.str());
}

RecordSet read_records(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != "DFREC1")
        fail("format", "not a DFREC1 record file: " + path);
    if (!std::getline(in, line)) fail("format", "missing record header: " + path);
    nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
    if (header.is_discarded()) fail("format", "unparseable record header: " + path);

    RecordSet set;
    try {
        set.vocab_size = header.at("vocab_size").get<int>();
        set.k = header.at("k").get<int>();
        set.context_len = header.at("context_len").get<int>();
        set.models = header.at("models").get<std::vector<std::string>>();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) fail("format", "unparseable record line: " + path);
            TokenRecord r;
            r.corpus_tag = j.at("tag").get<std::string>();
            r.position = j.at("pos").get<int64_t>();
            r.gt = j.at("gt").get<TokenId>();
            r.h_base = j.at("h_base").get<double>();
            r.h_student = j.at("h_student").get<double>();
            r.nll_base = j.at("nll_base").get<double>();
            r.nll_student = j.at("nll_student").get<double>();
            r.nll_teacher = j.at("nll_teacher").get<double>();
            r.topk_base = j.at("topk_base").get<std::vector<TokenId>>();
            r.topk_student = j.at("topk_student").get<std::vector<TokenId>>();
            r.topk_teacher = j.at("topk_teacher").get<std::vector<TokenId>>();
            set.records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        fail("format", std::string("record field: ") + e.what());
    }
    return set;
}

DifficultyEdges DifficultyEdges::desk(int vocab_size) {
    if (vocab_size < 2) fail("config", "vocab_size must be >= 2");
    const double ln_v = std::log(double(vocab_size));
    return {0.25 * ln_v, 0.625 * ln_v, 1.0 * ln_v};
}

void DifficultyEdges::validate() const {
    if (!(e1 > 0.0 && e1 < e2 && e2 < e3))
        fail("config", "difficulty edges must be strictly ascending and positive");
}

int difficulty_bin(double h, const DifficultyEdges& edges) {
    edges.validate();
    if (!std::isfinite(h) || h < 0.0) fail("data", "entropy must be finite and >= 0");
    if (h < edges.e1) return 0;
    if (h < edges.e2) return 1;
    if (h < edges.e3) return 2;
    return 3;
}

std::map<std::string, BinStat> bin_improvements(const RecordSet& set, const DifficultyEdges& edges,
                                                Variant variant) {
    edges.validate();
    std::array<std::vector<const TokenRecord*>, 4> bins;
    for (const auto& r : set.records) bins[difficulty_bin(r.h_base, edges)].push_back(&r);
    auto field = variant == Variant::student ? &TokenRecord::nll_student : &TokenRecord::nll_teacher;
    std::map<std::string, BinStat> out;
    for (int i = 0; i < 4; ++i) {
        BinStat stat;
        stat.count = int64_t(bins[i].size());
        stat.pct = subset_pct(bins[i], &TokenRecord::nll_base, field);
        out[kDifficultyLabels[i]] = stat;
    }
    return out;
}

TokenCategory categorize_token(TokenId gt, const std::vector<TokenId>& topk_base,
                               const std::vector<TokenId>& topk_teacher) {
    const bool in_base = contains(topk_base, gt);
    const bool in_teacher = contains(topk_teacher, gt);
    if (in_base && in_teacher) return TokenCategory::both;
    if (in_teacher) return TokenCategory::teacher_only;
    if (in_base) return TokenCategory::baseline_only;
    return TokenCategory::neither;
}

std::map<std::string, CategoryStat> category_improvements(const RecordSet& set) {
    if (set.records.empty()) fail("data", "no records to categorize");
    std::array<std::vector<const TokenRecord*>, 4> cats;
    for (const auto& r : set.records)
        cats[int(categorize_token(r.gt, r.topk_base, r.topk_teacher))].push_back(&r);
    std::map<std::string, CategoryStat> out;
    for (int i = 0; i < 4; ++i) {
        CategoryStat stat;
        stat.count = int64_t(cats[i].size());
        stat.fraction = double(stat.count) / double(set.records.size());
        stat.pct = subset_pct(cats[i], &TokenRecord::nll_base, &TokenRecord::nll_student);
        out[kCategoryLabels[i]] = stat;
    }
    return out;
}

namespace {

// concentration statistic on an index subset; nullopt if either bin is empty
std::optional<double> concentration_stat(const RecordSet& set, const std::vector<int64_t>& idx,
                                         const DifficultyEdges& edges) {
    std::vector<const TokenRecord*> easy, hard;
    for (int64_t i : idx) {
        const TokenRecord& r = set.records[size_t(i)];
        const int bin = difficulty_bin(r.h_base, edges);
        if (bin == 0) easy.push_back(&r);
        else if (bin == 2) hard.push_back(&r);
    }
    const auto easy_pct = subset_pct(easy, &TokenRecord::nll_base, &TokenRecord::nll_student);
    const auto hard_pct = subset_pct(hard, &TokenRecord::nll_base, &TokenRecord::nll_student);
    if (!easy_pct || !hard_pct) return std::nullopt;
    return *hard_pct - *easy_pct;
}

}  // namespace

BootstrapResult concentration_bootstrap(const RecordSet& set, const DifficultyEdges& edges,
                                        int resamples, uint64_t seed) {
    if (resamples < 1) fail("config", "resamples must be >= 1");
    const int64_t n = int64_t(set.records.size());
    if (n == 0) fail("data", "no records");

    std::vector<int64_t> all(n);
    std::iota(all.begin(), all.end(), int64_t(0));
    const auto full = concentration_stat(set, all, edges);
    if (!full)
        fail("data", "empty hard or easy difficulty bin; concentration undefined");

    BootstrapResult out;
    out.stat = *full;
    out.resamples = resamples;

    std::vector<double> stats;
    stats.reserve(size_t(resamples));
    std::vector<int64_t> idx(size_t(n), 0);
    for (int r = 0; r < resamples; ++r) {
        Rng rng(mix_key(seed, uint64_t(r)));
        for (int64_t i = 0; i < n; ++i) idx[size_t(i)] = int64_t(rng.next_below(uint64_t(n)));
        const auto s = concentration_stat(set, idx, edges);
        if (s) stats.push_back(*s);
        else ++out.skipped;
    }
    if (stats.empty()) fail("data", "all bootstrap resamples had empty bins");

    std::sort(stats.begin(), stats.end());
    auto quantile = [&stats](double q) {
        const double pos = q * double(stats.size() - 1);
        const size_t lo = size_t(pos);
        const size_t hi = std::min(lo + 1, stats.size() - 1);
        const double w = pos - double(lo);
        return stats[lo] * (1.0 - w) + stats[hi] * w;
    };
    out.ci_lo = quantile(0.025);
    out.ci_hi = quantile(0.975);

    int64_t le = 0, ge = 0;
    for (double s : stats) {
        if (s <= 0.0) ++le;
        if (s >= 0.0) ++ge;
    }
    const double m = double(stats.size());
    double p = 2.0 * std::min(double(le) / m, double(ge) / m);
    p = std::max(p, 1.0 / double(resamples));
    p = std::min(p, 1.0);
    out.p_value = p;
    return out;
}

double ls_benefit(double h, int vocab_size) {
    if (vocab_size < 2) fail("config", "vocab_size must be >= 2");
    const double ln_v = std::log(double(vocab_size));
    if (!std::isfinite(h) || h < 0.0 || h > ln_v * (1.0 + 1e-12))
        fail("data", "entropy outside [0, ln V]");
    return ln_v - h;
}

ConvergenceResult convergence_ratio(const RecordSet& set) {
    if (set.records.empty()) fail("data", "no records");
    KahanSum st, sb;
    for (const auto& r : set.records) {
        st.add(overlap_fraction(r.topk_student, r.topk_teacher));
        sb.add(overlap_fraction(r.topk_student, r.topk_base));
    }
    ConvergenceResult out;
    const double n = double(set.records.size());
    out.mean_student_teacher = st.value() / n;
    out.mean_student_base = sb.value() / n;
    if (out.mean_student_base > 0.0) out.ratio = out.mean_student_teacher / out.mean_student_base;
    return out;
}

EntropyDeltaPoint entropy_delta_point(const RecordSet& set) {
    if (set.records.empty()) fail("data", "no records");
    KahanSum hb, hs, nb, ns;
    for (const auto& r : set.records) {
        hb.add(r.h_base);
        hs.add(r.h_student);
        nb.add(r.nll_base);
        ns.add(r.nll_student);
    }
    const double n = double(set.records.size());
    EntropyDeltaPoint out;
    out.model_id = set.models.size() > 1 ? set.models[1] : "student";
    out.delta_h = hs.value() / n - hb.value() / n;
    out.pct = pct_improvement(std::exp(nb.value() / n), std::exp(ns.value() / n), MetricKind::ppl);
    return out;
}

std::vector<PositionBin> position_improvements(const RecordSet& set,
                                               const std::vector<int64_t>& edges) {
    if (edges.size() < 2) fail("config", "need at least two position edges");
    for (size_t i = 0; i + 1 < edges.size(); ++i)
        if (edges[i] < 0 || edges[i] >= edges[i + 1])
            fail("config", "position edges must be nonnegative and strictly ascending");

    std::vector<PositionBin> out(edges.size() - 1);
    std::vector<std::vector<const TokenRecord*>> bins(out.size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i].lo = edges[i];
        out[i].hi = edges[i + 1];
        out[i].label = "[" + std::to_string(edges[i]) + "," + std::to_string(edges[i + 1]) + ")";
    }
    for (const auto& r : set.records) {
        for (size_t i = 0; i < out.size(); ++i) {
            if (r.position >= out[i].lo && r.position < out[i].hi) {
                bins[i].push_back(&r);
                break;
            }
        }
    }
    for (size_t i = 0; i < out.size(); ++i) {
        out[i].count = int64_t(bins[i].size());
        out[i].pct = subset_pct(bins[i], &TokenRecord::nll_base, &TokenRecord::nll_student);
    }
    return out;
}

}  // namespace distforge
