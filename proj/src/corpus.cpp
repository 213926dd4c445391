#include "distforge/corpus.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

namespace distforge {

std::vector<TokenId> tokenize_bytes(std::string_view bytes) {
    std::vector<TokenId> ids(bytes.size());
    for (size_t i = 0; i < bytes.size(); ++i) ids[i] = TokenId(uint8_t(bytes[i]));
    return ids;
}

std::string detokenize(const std::vector<TokenId>& ids) {
    std::string out(ids.size(), '\0');
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= kByteVocab)
            fail("data", "token id " + std::to_string(ids[i]) + " outside byte vocabulary");
        out[i] = char(uint8_t(ids[i]));
    }
    return out;
}

PoolSet build_pools(std::string_view corpus, double held_out_fraction, uint64_t seed,
                    int context_len) {
    if (!(held_out_fraction > 0.0 && held_out_fraction < 0.5))
        fail("config", "held_out_fraction must lie in (0, 0.5)");
    if (context_len < 1) fail("config", "context_len must be >= 1");

    const uint64_t n = corpus.size();
    const uint64_t window = uint64_t(context_len) + 1;
    uint64_t held = uint64_t(double(n) * held_out_fraction);
    held = std::max(held, window);  // held-out must hold at least one window
    if (n < held || n - held < window)
        fail("data", "corpus too small: each split needs at least " + std::to_string(window) +
                         " tokens");
    const uint64_t train_n = n - held;

    PoolSet out;
    out.train.pool_id = "train";
    out.train.tokens = tokenize_bytes(corpus.substr(0, train_n));
    out.train.seed = seed;
    out.train.byte_range = {0, train_n};

    out.held_out.pool_id = "held_out";
    out.held_out.tokens = tokenize_bytes(corpus.substr(train_n));
    out.held_out.seed = seed;
    out.held_out.byte_range = {train_n, n};
    return out;
}

TokenPool make_ood_pool(const std::string& tag, std::string_view bytes, uint64_t seed) {
    if (tag.empty()) fail("config", "ood pool tag must be non-empty");
    TokenPool pool;
    pool.pool_id = tag;
    pool.tokens = tokenize_bytes(bytes);
    pool.seed = seed;
    pool.byte_range = {0, bytes.size()};
    return pool;
}

static nlohmann::json pool_manifest(const TokenPool& pool) {
    return nlohmann::json{{"pool_id", pool.pool_id},
                          {"byte_offsets", {pool.byte_range.first, pool.byte_range.second}},
                          {"seed", pool.seed},
                          {"vocab_size", pool.vocab_size},
                          {"num_tokens", pool.tokens.size()}};
}

std::string pools_manifest_json(const PoolSet& pools) {
    nlohmann::json doc;
    doc["pools"] = nlohmann::json::array();
    doc["pools"].push_back(pool_manifest(pools.train));
    doc["pools"].push_back(pool_manifest(pools.held_out));
    for (const auto& p : pools.ood) doc["pools"].push_back(pool_manifest(p));
    return doc.dump(2) + "\n";
}

void write_pools_manifest(const std::string& path, const PoolSet& pools) {
    write_file_atomic(path, pools_manifest_json(pools));
}

BatchStream::BatchStream(const TokenPool& pool, int batch_size, int context_len, uint64_t seed)
    : pool_(pool), batch_size_(batch_size), context_len_(context_len) {
    if (batch_size < 1) fail("config", "batch_size must be >= 1");
    if (context_len < 1) fail("config", "context_len must be >= 1");
    const uint64_t window = uint64_t(context_len) + 1;
    const uint64_t n = pool.tokens.size() / window;
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), uint64_t(0));
    // shuffle = stable order under a counter-based key; nothing is stored
    // beyond the indices themselves, and the order is reproducible from
    // (seed, n) alone
    std::sort(order_.begin(), order_.end(), [seed](uint64_t a, uint64_t b) {
        uint64_t ka = mix_key(seed, a);
        uint64_t kb = mix_key(seed, b);
        if (ka != kb) return ka < kb;
        return a < b;
    });
}

bool BatchStream::next(Batch& out) {
    if (cursor_ + uint64_t(batch_size_) > order_.size()) return false;
    const uint64_t window = uint64_t(context_len_) + 1;
    out.batch_size = batch_size_;
    out.context_len = context_len_;
    out.inputs.resize(size_t(batch_size_) * context_len_);
    out.targets.resize(size_t(batch_size_) * context_len_);
    out.window_ids.resize(size_t(batch_size_));
    for (int b = 0; b < batch_size_; ++b) {
        const uint64_t w = order_[cursor_ + b];
        out.window_ids[b] = w;
        const TokenId* src = pool_.tokens.data() + w * window;
        TokenId* in_row = out.inputs.data() + size_t(b) * context_len_;
        TokenId* tg_row = out.targets.data() + size_t(b) * context_len_;
        for (int t = 0; t < context_len_; ++t) {
            in_row[t] = src[t];
            tg_row[t] = src[t + 1];
        }
    }
    cursor_ += uint64_t(batch_size_);
    return true;
}

}  // namespace distforge
