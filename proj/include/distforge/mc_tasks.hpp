#pragma once

#include <string>
#include <vector>

#include "distforge/corpus.hpp"
#include "distforge/evaluation.hpp"

namespace distforge {

// Planted-rule multiple-choice items over byte strings. The scoring math is
// the same as any downstream benchmark would use; only the item source is
// synthetic (spans of a pool with shuffled-span distractors).
struct McItem {
    std::vector<TokenId> prompt;
    std::vector<std::vector<TokenId>> choices;
    int correct = 0;
};

struct McTask {
    std::string name;
    bool length_norm = false;
    std::vector<McItem> items;
};

// Continuation selection: the prompt is a span of the pool, the correct
// choice is its true continuation, distractors are continuations of other
// random positions. fixed_len=true keeps all choices the same length
// (scored unnormalized); fixed_len=false draws distractor lengths in
// [choice_len/2, 2*choice_len] and scores per character.
// errors: config (pool too small, num_choices < 2)
McTask make_continuation_task(const TokenPool& pool, const std::string& name, int num_items,
                              int prompt_len, int choice_len, int num_choices, bool fixed_len,
                              uint64_t seed);

// Fraction of items where mc_select picks the correct choice.
double task_accuracy(const LogitFn& logits, const McTask& task);

}  // namespace distforge
