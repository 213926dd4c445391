#pragma once

#include <cstdint>

#include "distforge/corpus.hpp"

namespace distforge {

// Loss values for one batch (means over all batch*context positions).
// mixed = (1 - alpha) * lm + alpha * kd.
struct LossBreakdown {
    double lm = 0.0;
    double kd = 0.0;
    double mixed = 0.0;
};

// Optional teacher signal for the KD term. Exactly one pointer is set:
//  - logits: raw teacher logits [rows, V]; softened at the given tau here.
//  - probs:  dense teacher probabilities [rows, V] already at the target tau
//            (the cached-logits path). Zero entries contribute nothing.
// The teacher side is data, never a gradient path.
template <class S>
struct TeacherSignal {
    const S* logits = nullptr;
    const S* probs = nullptr;
};

// Mean negative log-likelihood of targets under student logits [rows, V].
// errors: data (target id outside [0, V))
template <class S>
double lm_loss(const S* logits, const TokenId* targets, int64_t rows, int V);

// Mean over rows of KL(teacher_tau || student_tau), teacher fixed.
// errors: config (tau <= 0)
template <class S>
double kd_loss(const S* teacher_logits, const S* student_logits, int64_t rows, int V, double tau);

// errors: config (alpha outside [0, 1])
double mixed_loss_value(double lm, double kd, double alpha);

// One fused pass: loss values plus d(mixed)/d(student logits) written to
// dlogits [rows, V]. The alpha endpoints take exact shortcuts: alpha == 0
// never touches the teacher, alpha == 1 contributes no target-dependent
// gradient (the lm value is still reported for logging).
// errors: config (alpha/tau out of range, alpha > 0 without teacher),
//         data (target id out of range)
template <class S>
LossBreakdown mixed_loss_and_dlogits(const S* student_logits, const TokenId* targets, int64_t rows,
                                     int V, double alpha, double tau,
                                     const TeacherSignal<S>* teacher, S* dlogits);

// Per-row entropy (nats) of softmax(logits row); used by the analysis pass.
template <class S>
double row_entropy(const S* logits_row, int V);

// Per-row log-softmax value at one index, computed in double accumulation.
template <class S>
double row_log_prob(const S* logits_row, int V, int index);

}  // namespace distforge
