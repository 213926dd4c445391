#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "distforge/common.hpp"

namespace distforge {

using TokenId = int32_t;

constexpr int kByteVocab = 256;

// Byte-level tokenization: token id == byte value. Round-trips exactly and
// fixes the vocabulary at 256 for every model in the lab.
std::vector<TokenId> tokenize_bytes(std::string_view bytes);
std::string detokenize(const std::vector<TokenId>& ids);  // errors: data (id out of range)

// A contiguous run of tokens cut from a source corpus. `seed` keys the batch
// ordering drawn from this pool; `byte_range` records provenance ([begin,end)
// offsets into the source file) for the manifest.
struct TokenPool {
    std::string pool_id;
    std::vector<TokenId> tokens;
    int vocab_size = kByteVocab;
    uint64_t seed = 0;
    std::pair<uint64_t, uint64_t> byte_range{0, 0};
};

struct PoolSet {
    TokenPool train;
    TokenPool held_out;
    std::vector<TokenPool> ood;  // user-supplied files, tagged by name
};

// Splits one corpus into a training pool and a held-out pool over disjoint
// token ranges (held-out = final fraction). Both splits must fit at least one
// context window of (context_len + 1) tokens.
// errors: config (fraction outside (0, 0.5)), data (corpus too small)
PoolSet build_pools(std::string_view corpus, double held_out_fraction, uint64_t seed,
                    int context_len);

TokenPool make_ood_pool(const std::string& tag, std::string_view bytes, uint64_t seed);

// Manifest JSON for a pool set: pool ids, byte offsets, seed, vocab size.
std::string pools_manifest_json(const PoolSet& pools);
void write_pools_manifest(const std::string& path, const PoolSet& pools);

// One training batch. inputs/targets are row-major [batch_size, context_len],
// targets shifted one token ahead of inputs within the same source window.
struct Batch {
    int batch_size = 0;
    int context_len = 0;
    std::vector<TokenId> inputs;
    std::vector<TokenId> targets;
    std::vector<uint64_t> window_ids;  // source window index per row (for caches/tests)
};

// Deterministic non-repeating batch stream. The pool is cut into fixed
// windows of (context_len + 1) tokens; window order is a pure function of
// (seed, window index) via a counter-based key, so no permutation is stored
// and any two runs with the same seed see identical batches. Single writer:
// one stream object per consumer; the pool itself is read-only and shareable.
class BatchStream {
public:
    // errors: config (batch_size or context_len < 1)
    BatchStream(const TokenPool& pool, int batch_size, int context_len, uint64_t seed);

    // Fills `out` with the next batch_size windows. Returns false (without
    // touching `out`) when fewer than batch_size unused windows remain.
    bool next(Batch& out);

    uint64_t num_windows() const { return uint64_t(order_.size()); }
    uint64_t cursor() const { return cursor_; }
    const std::vector<uint64_t>& window_order() const { return order_; }

private:
    const TokenPool& pool_;
    int batch_size_;
    int context_len_;
    std::vector<uint64_t> order_;
    uint64_t cursor_ = 0;
};

}  // namespace distforge
