#pragma once

#include <functional>
#include <string>
#include <vector>

#include "distforge/logit_cache.hpp"
#include "distforge/model.hpp"

namespace distforge {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;  // applied after bias correction
    double weight_decay = 0.1;
};

// Linear warmup over the first warmup_frac of steps, then cosine decay from
// the peak down to final_frac * peak at the last step.
struct LrSchedule {
    double peak = 3e-4;
    double warmup_frac = 0.05;
    double final_frac = 0.10;
};

// errors: config (total_steps < 1, step outside [0, total_steps], bad fracs)
double lr_at_step(int64_t step, int64_t total_steps, const LrSchedule& sched);

// Scales grads in place so the global L2 norm is at most max_norm; returns
// the pre-clip norm. errors: numerics (non-finite norm), config (max_norm <= 0)
template <class S>
double clip_global_norm(ParamSet<S>& grads, double max_norm);

// First/second moment estimates, congruent with the parameter layout.
template <class S>
struct OptState {
    ParamSet<S> m;
    ParamSet<S> v;
    int64_t step = 0;
};

template <class S>
OptState<S> make_opt_state(const ParamSet<S>& params);

// Decoupled weight decay; decay skips tensors flagged decay=false (norm
// gains). update = m_hat / (sqrt(v_hat) + eps) + wd * p, applied as
// p -= lr * update. errors: state (layout mismatch)
template <class S>
void adamw_step(ParamSet<S>& params, const ParamSet<S>& grads, OptState<S>& state, double lr,
                const AdamConfig& adam);

enum class Role { teacher, baseline, distill };

std::string role_name(Role role);
Role role_from_name(const std::string& name);  // errors: config

// One training run, fully determined by its config: identical configs give
// byte-identical checkpoints.
struct RunConfig {
    std::string run_id = "run";
    Role role = Role::baseline;
    ModelConfig model;
    int64_t token_budget = 0;
    int batch_size = 16;
    uint64_t data_seed = 0;
    uint64_t init_seed = 0;
    double alpha = 0.0;  // KD weight in the mixed objective
    double tau = 1.0;
    LrSchedule lr;
    AdamConfig adam;
    double clip_norm = 1.0;
    std::string teacher_checkpoint;  // distill runs: path to the frozen teacher
    std::string teacher_cache;       // optional DFLOGC1 file replacing teacher forwards
    int mid_evals = 0;               // intermediate eval points (0 = final only)
};

// Config-boundary validation: distill requires a teacher and alpha > 0;
// teacher/baseline roles require alpha == 0; budget covers at least one step.
// errors: config
void validate_run_config(const RunConfig& run);

std::string run_config_to_json(const RunConfig& run);
RunConfig run_config_from_json(const std::string& text);  // errors: format, config

struct LogRow {
    int64_t step = 0;         // 0-based
    int64_t tokens_seen = 0;  // after this step
    double lm_loss = 0.0;
    double kd_loss = 0.0;
    double mixed_loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;  // pre-clip global norm
};

struct TrainResult {
    ParamSet<float> params;
    std::vector<LogRow> log;
    int64_t steps = 0;
    int64_t tokens_seen = 0;
};

using MidEvalHook = std::function<void(int64_t step, const ParamSet<float>& params)>;

// Runs the full recipe on one pool. The teacher (when given) is frozen: only
// its logits enter the objective, no gradient state exists for it. A cache
// (when given) replaces teacher forward passes; in "full" mode the two paths
// are bit-identical.
// errors: config (budget/pool mismatch, missing teacher for alpha > 0,
// cache/stream mismatch), numerics (divergence, reported with the step)
TrainResult train_run(const RunConfig& run, const TokenPool& pool,
                      const ParamSet<float>* teacher, const TeacherLogitCache* cache = nullptr,
                      const MidEvalHook& mid_eval = nullptr);

// CSV with header step,tokens_seen,lm_loss,kd_loss,mixed_loss,lr,grad_norm;
// numbers are round-trip formatted.
void write_training_log_csv(const std::string& path, const std::vector<LogRow>& log);

}  // namespace distforge
