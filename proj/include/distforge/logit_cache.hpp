#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "distforge/model.hpp"

namespace distforge {

// Precomputed teacher signal for distillation sweeps, keyed to one exact
// batch stream (pool, seed, batch, context). Two payload modes:
//  - "full": raw float32 logits per step — bit-identical to recomputing the
//    teacher on the fly (the exactness mode used by tests),
//  - "topk": per position the top-K probabilities at a fixed tau plus the
//    remainder mass, expanded at load time as uniform over the tail
//    (a documented approximation that trades accuracy for disk).
struct LogitCacheHeader {
    int vocab_size = 0;
    int batch_size = 0;
    int context_len = 0;
    int64_t num_steps = 0;
    std::string mode;  // "full" | "topk"
    int top_k = 0;
    double tau = 1.0;
    uint64_t data_seed = 0;
    std::string pool_id;
};

class TeacherLogitCache {
public:
    // Replays the batch stream and writes teacher outputs for `num_steps`
    // steps. top_k == 0 selects full mode; otherwise 0 < top_k < vocab.
    // errors: config (bad top_k, pool too small), io
    static void build(const std::string& path, const ParamSet<float>& teacher,
                      const TokenPool& pool, int batch_size, int context_len, uint64_t data_seed,
                      int64_t num_steps, int top_k, double tau);

    // errors: io, format (magic, truncation)
    static TeacherLogitCache open(const std::string& path);

    const LogitCacheHeader& header() const { return header_; }
    bool exact() const { return header_.mode == "full"; }

    // full mode: raw logits [B*T, V]; topk mode: dense probs at header tau.
    // errors: data (step out of range), format (truncation)
    void load_step(int64_t step, AlignedVec<float>& out) const;

private:
    LogitCacheHeader header_;
    std::string path_;
    uint64_t payload_base_ = 0;
    uint64_t step_stride_ = 0;
    mutable std::ifstream file_;
};

}  // namespace distforge
