#include "distforge/logit_cache.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>

#include <json.hpp>

namespace distforge {

namespace {
constexpr char kMagic[] = "DFLOGC1\n";
constexpr size_t kMagicLen = 8;

uint64_t stride_for(const LogitCacheHeader& h) {
    const uint64_t rows = uint64_t(h.batch_size) * h.context_len;
    if (h.mode == "full") return rows * uint64_t(h.vocab_size) * sizeof(float);
    return rows * (uint64_t(h.top_k) * (sizeof(uint32_t) + sizeof(float)) + sizeof(float));
}
}  // namespace

void TeacherLogitCache::build(const std::string& path, const ParamSet<float>& teacher,
                              const TokenPool& pool, int batch_size, int context_len,
                              uint64_t data_seed, int64_t num_steps, int top_k, double tau) {
    const int V = teacher.config.vocab_size;
    if (top_k < 0 || top_k >= V) fail("config", "top_k must lie in [0, vocab)");
    if (!(tau > 0.0)) fail("config", "tau must be > 0");
    if (num_steps < 1) fail("config", "num_steps must be >= 1");

    LogitCacheHeader h;
    h.vocab_size = V;
    h.batch_size = batch_size;
    h.context_len = context_len;
    h.num_steps = num_steps;
    h.mode = top_k == 0 ? "full" : "topk";
    h.top_k = top_k;
    h.tau = tau;
    h.data_seed = data_seed;
    h.pool_id = pool.pool_id;

    BatchStream stream(pool, batch_size, context_len, data_seed);
    if (stream.num_windows() < uint64_t(num_steps) * batch_size)
        fail("config", "pool too small for requested cache length");

    nlohmann::json hj{{"vocab_size", h.vocab_size},   {"batch_size", h.batch_size},
                      {"context_len", h.context_len}, {"num_steps", h.num_steps},
                      {"mode", h.mode},               {"top_k", h.top_k},
                      {"tau", h.tau},                 {"data_seed", h.data_seed},
                      {"pool_id", h.pool_id}};
    const std::string htext = hj.dump();

    const std::string tmp = path + ".tmp";
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("io", "cannot open " + tmp + " for writing");
    out.write(kMagic, kMagicLen);
    uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(htext.data(), std::streamsize(htext.size()));

    Batch batch;
    ForwardCache<float> cache;
    AlignedVec<float> logits;
    const int64_t rows = int64_t(batch_size) * context_len;
    std::vector<int> order(V);
    std::vector<double> probs(V);
    for (int64_t step = 0; step < num_steps; ++step) {
        if (!stream.next(batch)) fail("state", "batch stream exhausted during cache build");
        forward_logits(teacher, batch.inputs.data(), batch_size, context_len, logits, &cache);
        if (h.mode == "full") {
            out.write(reinterpret_cast<const char*>(logits.data()),
                      std::streamsize(logits.size() * sizeof(float)));
            continue;
        }
        for (int64_t r = 0; r < rows; ++r) {
            const float* row = logits.data() + r * V;
            double m = row[0];
            for (int j = 1; j < V; ++j) m = std::max(m, double(row[j]));
            double sum = 0.0;
            for (int j = 0; j < V; ++j) {
                probs[j] = std::exp(double(row[j]) / tau - m / tau);
                sum += probs[j];
            }
            std::iota(order.begin(), order.end(), 0);
            std::partial_sort(order.begin(), order.begin() + top_k, order.end(),
                              [&](int a, int b) { return probs[a] > probs[b]; });
            double kept = 0.0;
            for (int i = 0; i < top_k; ++i) kept += probs[order[i]] / sum;
            float remainder = float(std::max(0.0, 1.0 - kept));
            for (int i = 0; i < top_k; ++i) {
                uint32_t id = uint32_t(order[i]);
                out.write(reinterpret_cast<const char*>(&id), sizeof(uint32_t));
            }
            for (int i = 0; i < top_k; ++i) {
                float pv = float(probs[order[i]] / sum);
                out.write(reinterpret_cast<const char*>(&pv), sizeof(float));
            }
            out.write(reinterpret_cast<const char*>(&remainder), sizeof(float));
        }
    }
    out.flush();
    if (!out) fail("io", "write failed for " + tmp);
    out.close();
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail("io", "rename " + tmp + " -> " + path + ": " + ec.message());
}

TeacherLogitCache TeacherLogitCache::open(const std::string& path) {
    TeacherLogitCache c;
    c.path_ = path;
    c.file_.open(path, std::ios::binary);
    if (!c.file_) fail("io", "cannot open " + path);
    char magic[kMagicLen];
    c.file_.read(magic, kMagicLen);
    if (!c.file_ || std::memcmp(magic, kMagic, kMagicLen) != 0)
        fail("format", "not a DFLOGC1 cache: " + path);
    uint64_t hlen = 0;
    c.file_.read(reinterpret_cast<char*>(&hlen), 8);
    std::string htext(hlen, '\0');
    c.file_.read(htext.data(), std::streamsize(hlen));
    if (!c.file_) fail("format", "truncated cache header: " + path);
    nlohmann::json hj = nlohmann::json::parse(htext, nullptr, false);
    if (hj.is_discarded()) fail("format", "unparseable cache header: " + path);
    try {
        c.header_.vocab_size = hj.at("vocab_size").get<int>();
        c.header_.batch_size = hj.at("batch_size").get<int>();
        c.header_.context_len = hj.at("context_len").get<int>();
        c.header_.num_steps = hj.at("num_steps").get<int64_t>();
        c.header_.mode = hj.at("mode").get<std::string>();
        c.header_.top_k = hj.at("top_k").get<int>();
        c.header_.tau = hj.at("tau").get<double>();
        c.header_.data_seed = hj.at("data_seed").get<uint64_t>();
        c.header_.pool_id = hj.at("pool_id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail("format", std::string("cache header field: ") + e.what());
    }
    c.payload_base_ = kMagicLen + 8 + hlen;
    c.step_stride_ = stride_for(c.header_);

    std::error_code ec;
    const uint64_t fsize = std::filesystem::file_size(path, ec);
    if (ec || fsize < c.payload_base_ + c.step_stride_ * uint64_t(c.header_.num_steps))
        fail("format", "truncated cache payload: " + path);
    return c;
}

void TeacherLogitCache::load_step(int64_t step, AlignedVec<float>& out) const {
    if (step < 0 || step >= header_.num_steps)
        fail("data", "cache step " + std::to_string(step) + " out of range");
    const int V = header_.vocab_size;
    const int64_t rows = int64_t(header_.batch_size) * header_.context_len;
    out.resize(size_t(rows) * V);
    file_.clear();
    file_.seekg(std::streamoff(payload_base_ + step_stride_ * uint64_t(step)));
    if (header_.mode == "full") {
        file_.read(reinterpret_cast<char*>(out.data()),
                   std::streamsize(out.size() * sizeof(float)));
        if (!file_) fail("format", "truncated cache read: " + path_);
        return;
    }
    const int K = header_.top_k;
    std::vector<uint32_t> ids(K);
    std::vector<float> pv(K);
    for (int64_t r = 0; r < rows; ++r) {
        file_.read(reinterpret_cast<char*>(ids.data()), std::streamsize(K * sizeof(uint32_t)));
        file_.read(reinterpret_cast<char*>(pv.data()), std::streamsize(K * sizeof(float)));
        float remainder = 0.0f;
        file_.read(reinterpret_cast<char*>(&remainder), sizeof(float));
        if (!file_) fail("format", "truncated cache read: " + path_);
        float* row = out.data() + r * V;
        const float tail = remainder / float(V - K);
        for (int j = 0; j < V; ++j) row[j] = tail;
        for (int i = 0; i < K; ++i) {
            if (ids[i] >= uint32_t(V)) fail("format", "cache token id out of range: " + path_);
            row[ids[i]] = pv[i];
        }
    }
}

}  // namespace distforge
