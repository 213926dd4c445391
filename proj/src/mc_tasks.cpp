#include "distforge/mc_tasks.hpp"

#include <algorithm>

namespace distforge {

McTask make_continuation_task(const TokenPool& pool, const std::string& name, int num_items,
                              int prompt_len, int choice_len, int num_choices, bool fixed_len,
                              uint64_t seed) {
    if (num_items < 1) fail("config", "num_items must be >= 1");
    if (prompt_len < 1 || choice_len < 1) fail("config", "prompt/choice lengths must be >= 1");
    if (num_choices < 2) fail("config", "num_choices must be >= 2");
    const int64_t max_choice = fixed_len ? choice_len : 2 * choice_len;
    const int64_t span = int64_t(prompt_len) + max_choice;
    if (int64_t(pool.tokens.size()) < span + 1)
        fail("config", "pool " + pool.pool_id + " too small for mc items");

    Rng rng(mix_key(seed, 0x6d63) ^ splitmix64(std::hash<std::string>{}(pool.pool_id)));
    const int64_t n = int64_t(pool.tokens.size());

    McTask task;
    task.name = name;
    task.length_norm = !fixed_len;
    task.items.reserve(size_t(num_items));
    auto slice = [&](int64_t start, int64_t len) {
        return std::vector<TokenId>(pool.tokens.begin() + start, pool.tokens.begin() + start + len);
    };
    for (int i = 0; i < num_items; ++i) {
        McItem item;
        const int64_t pstart = int64_t(rng.next_below(uint64_t(n - span)));
        item.prompt = slice(pstart, prompt_len);
        const std::vector<TokenId> truth = slice(pstart + prompt_len, choice_len);

        item.correct = int(rng.next_below(uint64_t(num_choices)));
        for (int c = 0; c < num_choices; ++c) {
            if (c == item.correct) {
                item.choices.push_back(truth);
                continue;
            }
            // distractor: continuation of an unrelated position, re-drawn on
            // the (unlikely) exact collision with the true continuation
            for (;;) {
                const int64_t dlen =
                    fixed_len ? choice_len
                              : choice_len / 2 + int64_t(rng.next_below(
                                                     uint64_t(2 * choice_len - choice_len / 2) + 1));
                const int64_t dstart = int64_t(rng.next_below(uint64_t(n - dlen)));
                std::vector<TokenId> d = slice(dstart, dlen);
                if (d != truth) {
                    item.choices.push_back(std::move(d));
                    break;
                }
            }
        }
        task.items.push_back(std::move(item));
    }
    return task;
}

double task_accuracy(const LogitFn& logits, const McTask& task) {
    if (task.items.empty()) fail("config", "task has no items");
    int64_t correct = 0;
    for (const auto& item : task.items)
        if (mc_select(logits, item.prompt, item.choices, task.length_norm) == item.correct)
            ++correct;
    return double(correct) / double(task.items.size());
}

}  // namespace distforge
