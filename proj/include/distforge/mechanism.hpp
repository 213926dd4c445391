#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "distforge/model.hpp"

namespace distforge {

// One scored target position, with everything the per-token analyses need:
// base-model difficulty (entropy, nats), per-model NLLs, and top-k id lists.
struct TokenRecord {
    std::string corpus_tag;
    int64_t position = 0;  // position within the context window
    TokenId gt = 0;
    double h_base = 0.0;     // base-model predictive entropy (nats)
    double h_student = 0.0;  // student entropy, for entropy-delta plots
    double nll_base = 0.0;
    double nll_student = 0.0;
    double nll_teacher = 0.0;
    std::vector<TokenId> topk_base;
    std::vector<TokenId> topk_student;
    std::vector<TokenId> topk_teacher;
};

struct RecordSet {
    int vocab_size = 0;
    int k = 10;
    int context_len = 0;
    std::vector<std::string> models;  // {base_id, student_id, teacher_id}
    std::vector<TokenRecord> records;
};

// Scores the same sequential windows under all three models in one
// deterministic pass (window by window, position by position), stopping at
// max_records. errors: config (mismatched vocabularies), data (pool too
// small)
RecordSet collect_records(const ParamSet<float>& base, const ParamSet<float>& student,
                          const ParamSet<float>& teacher, const TokenPool& pool, int context_len,
                          int k, int64_t max_records, const std::vector<std::string>& model_ids,
                          int batch_rows = 16);

// Versioned record file: "DFREC1" line, header JSON line, one JSON record
// per line (plain text; compresses well externally).
void write_records(const std::string& path, const RecordSet& set);
RecordSet read_records(const std::string& path);  // errors: io, format

// --- difficulty bins --------------------------------------------------------

// Entropy bin edges in nats. paper() uses the published {2, 5, 8}; desk(V)
// rescales to {0.25, 0.625, 1.0} * ln(V) so the top bin stays reachable at
// small vocabularies.
struct DifficultyEdges {
    double e1 = 2.0;
    double e2 = 5.0;
    double e3 = 8.0;

    static DifficultyEdges paper() { return {2.0, 5.0, 8.0}; }
    static DifficultyEdges desk(int vocab_size);
    void validate() const;  // errors: config (not strictly ascending / nonpositive)
};

inline constexpr std::array<const char*, 4> kDifficultyLabels{"easy", "moderate", "hard",
                                                              "difficult"};

// Half-open bins: easy [0,e1), moderate [e1,e2), hard [e2,e3), difficult
// [e3, inf). errors: data (negative or non-finite entropy)
int difficulty_bin(double h, const DifficultyEdges& edges);

// --- aggregate analyses -------------------------------------------------------

struct BinStat {
    int64_t count = 0;
    std::optional<double> pct;  // absent for empty bins
};

enum class Variant { student, teacher };

// Per-bin perplexity improvement of the variant over the base model:
// pct(exp(mean nll_base in bin), exp(mean nll_variant in bin)).
std::map<std::string, BinStat> bin_improvements(const RecordSet& set, const DifficultyEdges& edges,
                                                Variant variant);

enum class TokenCategory { both, teacher_only, baseline_only, neither };

inline constexpr std::array<const char*, 4> kCategoryLabels{"both", "teacher_only",
                                                            "baseline_only", "neither"};

// Membership of the ground-truth token in the base/teacher top-k lists.
TokenCategory categorize_token(TokenId gt, const std::vector<TokenId>& topk_base,
                               const std::vector<TokenId>& topk_teacher);

struct CategoryStat {
    int64_t count = 0;
    double fraction = 0.0;
    std::optional<double> pct;  // student-vs-base ppl improvement inside the category
};

std::map<std::string, CategoryStat> category_improvements(const RecordSet& set);

// --- concentration bootstrap ---------------------------------------------

struct BootstrapResult {
    double stat = 0.0;   // pct(hard bin) - pct(easy bin) on the full set
    double ci_lo = 0.0;  // 2.5th percentile of resampled stats
    double ci_hi = 0.0;  // 97.5th percentile
    double p_value = 1.0;
    int resamples = 0;
    int skipped = 0;  // resamples dropped for an empty hard/easy bin
};

// Percentile bootstrap over records with replacement; two-sided sign test
// p = 2 * min(frac <= 0, frac >= 0), clamped to [1/resamples, 1].
// errors: data (empty hard or easy bin in the full set), config (resamples < 1)
BootstrapResult concentration_bootstrap(const RecordSet& set, const DifficultyEdges& edges,
                                        int resamples, uint64_t seed);

// --- label-smoothing analogy / convergence / trends -----------------------

// Effective label-smoothing benefit proxy at difficulty h: ln(V) - h.
// errors: data (h outside [0, ln V])
double ls_benefit(double h, int vocab_size);

struct ConvergenceResult {
    double mean_student_teacher = 0.0;  // mean top-k overlap fraction
    double mean_student_base = 0.0;
    std::optional<double> ratio;  // absent when the denominator is zero
};

ConvergenceResult convergence_ratio(const RecordSet& set);

struct EntropyDeltaPoint {
    std::string model_id;
    double delta_h = 0.0;  // mean(h_student) - mean(h_base)
    double pct = 0.0;      // overall student-vs-base ppl improvement
};

EntropyDeltaPoint entropy_delta_point(const RecordSet& set);

// Position bins [edges[i], edges[i+1]) over within-window positions.
// errors: config (fewer than 2 edges, not strictly ascending, negative)
struct PositionBin {
    std::string label;
    int64_t lo = 0;
    int64_t hi = 0;
    int64_t count = 0;
    std::optional<double> pct;
};

std::vector<PositionBin> position_improvements(const RecordSet& set,
                                               const std::vector<int64_t>& edges);

}  // namespace distforge
