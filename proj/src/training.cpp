#include "distforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace distforge {

double lr_at_step(int64_t step, int64_t total_steps, const LrSchedule& sched) {
    if (total_steps < 1) fail("config", "total_steps must be >= 1");
    if (step < 0 || step > total_steps) fail("config", "step outside [0, total_steps]");
    if (!(sched.peak > 0.0)) fail("config", "peak lr must be > 0");
    if (!(sched.warmup_frac >= 0.0 && sched.warmup_frac < 1.0))
        fail("config", "warmup_frac must lie in [0, 1)");
    if (!(sched.final_frac >= 0.0 && sched.final_frac <= 1.0))
        fail("config", "final_frac must lie in [0, 1]");

    const int64_t warmup = int64_t(sched.warmup_frac * double(total_steps));
    const double final_lr = sched.final_frac * sched.peak;
    if (warmup > 0 && step <= warmup) return sched.peak * double(step) / double(warmup);
    if (step >= total_steps) return final_lr;
    const double t = double(step - warmup) / double(total_steps - warmup);
    return final_lr + (sched.peak - final_lr) * 0.5 * (1.0 + std::cos(M_PI * t));
}

template <class S>
double clip_global_norm(ParamSet<S>& grads, double max_norm) {
    if (!(max_norm > 0.0)) fail("config", "max_norm must be > 0");
    KahanSum sq;
    for (const auto& t : grads.tensors)
        for (const S v : t.data) sq.add(double(v) * double(v));
    const double norm = std::sqrt(sq.value());
    if (!std::isfinite(norm)) fail("numerics", "non-finite gradient norm");
    if (norm > max_norm) {
        const S scale = S(max_norm / norm);
        for (auto& t : grads.tensors)
            for (S& v : t.data) v *= scale;
    }
    return norm;
}

template <class S>
OptState<S> make_opt_state(const ParamSet<S>& params) {
    OptState<S> st;
    st.m = zeros_like(params);
    st.v = zeros_like(params);
    st.step = 0;
    return st;
}

template <class S>
void adamw_step(ParamSet<S>& params, const ParamSet<S>& grads, OptState<S>& state, double lr,
                const AdamConfig& adam) {
    if (grads.tensors.size() != params.tensors.size() ||
        state.m.tensors.size() != params.tensors.size())
        fail("state", "optimizer tensor layout mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(adam.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(adam.beta2, double(state.step));
    for (size_t i = 0; i < params.tensors.size(); ++i) {
        auto& p = params.tensors[i];
        const auto& g = grads.tensors[i];
        auto& m = state.m.tensors[i];
        auto& v = state.v.tensors[i];
        if (g.data.size() != p.data.size()) fail("state", "gradient shape mismatch at " + p.name);
        const double wd = p.decay ? adam.weight_decay : 0.0;
        for (size_t j = 0; j < p.data.size(); ++j) {
            const double gj = double(g.data[j]);
            const double mj = adam.beta1 * double(m.data[j]) + (1.0 - adam.beta1) * gj;
            const double vj = adam.beta2 * double(v.data[j]) + (1.0 - adam.beta2) * gj * gj;
            m.data[j] = S(mj);
            v.data[j] = S(vj);
            const double update = (mj / bc1) / (std::sqrt(vj / bc2) + adam.eps);
            p.data[j] = S(double(p.data[j]) - lr * (update + wd * double(p.data[j])));
        }
    }
}

std::string role_name(Role role) {
    switch (role) {
        case Role::teacher: return "teacher";
        case Role::baseline: return "baseline";
        case Role::distill: return "distill";
    }
    fail("config", "unknown role");
}

Role role_from_name(const std::string& name) {
    if (name == "teacher") return Role::teacher;
    if (name == "baseline") return Role::baseline;
    if (name == "distill") return Role::distill;
    fail("config", "unknown role name: " + name);
}

void validate_run_config(const RunConfig& run) {
    run.model.validate();
    if (run.batch_size < 1) fail("config", "batch_size must be >= 1");
    if (!(run.alpha >= 0.0 && run.alpha <= 1.0)) fail("config", "alpha must lie in [0, 1]");
    if (!(run.tau > 0.0)) fail("config", "tau must be > 0");
    if (!(run.clip_norm > 0.0)) fail("config", "clip_norm must be > 0");
    const int64_t tokens_per_step = int64_t(run.batch_size) * run.model.context_len;
    if (run.token_budget < tokens_per_step)
        fail("config", "token_budget smaller than one optimizer step");
    if (run.role == Role::distill) {
        if (run.teacher_checkpoint.empty() && run.teacher_cache.empty())
            fail("config", "distill run needs a teacher checkpoint or cache");
        if (!(run.alpha > 0.0)) fail("config", "distill run requires alpha > 0");
    } else if (run.alpha != 0.0) {
        fail("config", role_name(run.role) + " run requires alpha == 0");
    }
    if (run.mid_evals < 0) fail("config", "mid_evals must be >= 0");
}

std::string run_config_to_json(const RunConfig& run) {
    nlohmann::json j;
    j["run_id"] = run.run_id;
    j["role"] = role_name(run.role);
    j["model"] = nlohmann::json::parse(model_config_to_json(run.model));
    j["token_budget"] = run.token_budget;
    j["batch_size"] = run.batch_size;
    j["data_seed"] = run.data_seed;
    j["init_seed"] = run.init_seed;
    j["alpha"] = run.alpha;
    j["tau"] = run.tau;
    j["lr"] = {{"peak", run.lr.peak},
               {"warmup_frac", run.lr.warmup_frac},
               {"final_frac", run.lr.final_frac}};
    j["adam"] = {{"beta1", run.adam.beta1},
                 {"beta2", run.adam.beta2},
                 {"eps", run.adam.eps},
                 {"weight_decay", run.adam.weight_decay}};
    j["clip_norm"] = run.clip_norm;
    j["teacher_checkpoint"] = run.teacher_checkpoint;
    j["teacher_cache"] = run.teacher_cache;
    j["mid_evals"] = run.mid_evals;
    return j.dump(2);
}

RunConfig run_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail("format", "run config is not a JSON object");
    RunConfig run;
    try {
        run.run_id = j.value("run_id", run.run_id);
        run.role = role_from_name(j.value("role", "baseline"));
        run.model = model_config_from_json(j.at("model").dump());
        run.token_budget = j.at("token_budget").get<int64_t>();
        run.batch_size = j.value("batch_size", run.batch_size);
        run.data_seed = j.value("data_seed", run.data_seed);
        run.init_seed = j.value("init_seed", run.init_seed);
        run.alpha = j.value("alpha", run.alpha);
        run.tau = j.value("tau", run.tau);
        if (j.contains("lr")) {
            run.lr.peak = j["lr"].value("peak", run.lr.peak);
            run.lr.warmup_frac = j["lr"].value("warmup_frac", run.lr.warmup_frac);
            run.lr.final_frac = j["lr"].value("final_frac", run.lr.final_frac);
        }
        if (j.contains("adam")) {
            run.adam.beta1 = j["adam"].value("beta1", run.adam.beta1);
            run.adam.beta2 = j["adam"].value("beta2", run.adam.beta2);
            run.adam.eps = j["adam"].value("eps", run.adam.eps);
            run.adam.weight_decay = j["adam"].value("weight_decay", run.adam.weight_decay);
        }
        run.clip_norm = j.value("clip_norm", run.clip_norm);
        run.teacher_checkpoint = j.value("teacher_checkpoint", run.teacher_checkpoint);
        run.teacher_cache = j.value("teacher_cache", run.teacher_cache);
        run.mid_evals = j.value("mid_evals", run.mid_evals);
    } catch (const nlohmann::json::exception& e) {
        fail("format", std::string("run config field: ") + e.what());
    }
    validate_run_config(run);
    return run;
}

TrainResult train_run(const RunConfig& run, const TokenPool& pool,
                      const ParamSet<float>* teacher, const TeacherLogitCache* cache,
                      const MidEvalHook& mid_eval) {
    run.model.validate();
    const int B = run.batch_size;
    const int T = run.model.context_len;
    const int V = run.model.vocab_size;
    const int64_t tokens_per_step = int64_t(B) * T;
    const int64_t total_steps = run.token_budget / tokens_per_step;
    if (total_steps < 1) fail("config", "token_budget smaller than one optimizer step");

    const bool want_kd = run.alpha > 0.0;
    if (want_kd && teacher == nullptr && cache == nullptr)
        fail("config", "alpha > 0 requires a teacher model or cache");
    if (teacher != nullptr && teacher->config.vocab_size != V)
        fail("config", "teacher/student vocabulary mismatch");
    if (teacher != nullptr && teacher->config.context_len < T)
        fail("config", "teacher context shorter than student context");
    if (cache != nullptr) {
        const LogitCacheHeader& h = cache->header();
        if (h.vocab_size != V || h.batch_size != B || h.context_len != T ||
            h.data_seed != run.data_seed || h.pool_id != pool.pool_id)
            fail("config", "teacher cache does not match this run's batch stream");
        if (h.num_steps < total_steps) fail("config", "teacher cache shorter than the run");
        if (h.mode == "topk" && h.tau != run.tau)
            fail("config", "teacher cache built at a different tau");
    }

    BatchStream stream(pool, B, T, run.data_seed);
    if (stream.num_windows() < uint64_t(total_steps) * uint64_t(B))
        fail("config", "pool too small for the token budget without repetition");

    TrainResult result;
    result.params = init_params<float>(run.model, run.init_seed);
    OptState<float> opt = make_opt_state(result.params);
    ParamSet<float> grads = zeros_like(result.params);
    ModelWorkspace<float> ws;
    ForwardCache<float> teacher_cache_fwd;
    AlignedVec<float> teacher_logits;
    Batch batch;

    // mid-eval points: mid_evals evenly spaced checkpoints before the end
    std::vector<int64_t> eval_steps;
    for (int i = 1; i <= run.mid_evals; ++i)
        eval_steps.push_back(total_steps * i / (run.mid_evals + 1));

    result.log.reserve(size_t(total_steps));
    for (int64_t step = 0; step < total_steps; ++step) {
        if (!stream.next(batch)) fail("state", "batch stream exhausted mid-run");

        TeacherSignal<float> signal;
        const TeacherSignal<float>* signal_ptr = nullptr;
        if (want_kd) {
            if (cache != nullptr) {
                cache->load_step(step, teacher_logits);
                if (cache->exact()) signal.logits = teacher_logits.data();
                else signal.probs = teacher_logits.data();
            } else {
                forward_logits(*teacher, batch.inputs.data(), B, T, teacher_logits,
                               &teacher_cache_fwd);
                signal.logits = teacher_logits.data();
            }
            signal_ptr = &signal;
        }

        LossBreakdown lb =
            loss_and_grads(result.params, batch, run.alpha, run.tau, signal_ptr, grads, ws);
        if (!std::isfinite(lb.mixed))
            fail("numerics", run.run_id + " diverged at step " + std::to_string(step) +
                                 " (loss=" + std::to_string(lb.mixed) + ")");

        double norm = 0.0;
        try {
            norm = clip_global_norm(grads, run.clip_norm);
        } catch (const Error& e) {
            // a finite loss with non-finite gradients is still a blown-up run;
            // report it with the same step context as a loss explosion
            if (e.category() != "numerics") throw;
            fail("numerics", run.run_id + " diverged at step " + std::to_string(step) +
                                 " (non-finite gradient norm)");
        }
        const double lr = lr_at_step(step + 1, total_steps, run.lr);
        adamw_step(result.params, grads, opt, lr, run.adam);

        LogRow row;
        row.step = step;
        row.tokens_seen = (step + 1) * tokens_per_step;
        row.lm_loss = lb.lm;
        row.kd_loss = lb.kd;
        row.mixed_loss = lb.mixed;
        row.lr = lr;
        row.grad_norm = norm;
        result.log.push_back(row);

        if (mid_eval && !eval_steps.empty() &&
            std::find(eval_steps.begin(), eval_steps.end(), step + 1) != eval_steps.end())
            mid_eval(step + 1, result.params);
    }
    result.steps = total_steps;
    result.tokens_seen = total_steps * tokens_per_step;
    return result;
}

void write_training_log_csv(const std::string& path, const std::vector<LogRow>& log) {
    std::ostringstream out;
    out << "step,tokens_seen,lm_loss,kd_loss,mixed_loss,lr,grad_norm\n";
    for (const auto& r : log) {
        out << r.step << ',' << r.tokens_seen << ',' << format_double(r.lm_loss) << ','
            << format_double(r.kd_loss) << ',' << format_double(r.mixed_loss) << ','
            << format_double(r.lr) << ',' << format_double(r.grad_norm) << '\n';
    }
    write_file_atomic(path, out.str());
}

template double clip_global_norm<float>(ParamSet<float>&, double);
template double clip_global_norm<double>(ParamSet<double>&, double);
template OptState<float> make_opt_state<float>(const ParamSet<float>&);
template OptState<double> make_opt_state<double>(const ParamSet<double>&);
template void adamw_step<float>(ParamSet<float>&, const ParamSet<float>&, OptState<float>&, double,
                                const AdamConfig&);
template void adamw_step<double>(ParamSet<double>&, const ParamSet<double>&, OptState<double>&,
                                 double, const AdamConfig&);

}  // namespace distforge
