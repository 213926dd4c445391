#include "distforge/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <random>
#include <set>
#include <thread>

#include <json.hpp>

#include "distforge/checkpoint.hpp"

namespace distforge {

namespace {

// Stable across platforms (unlike std::hash), so per-label seeds are part of
// the reproducibility contract. FNV-1a, 64-bit.
uint64_t stable_hash(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

bool valid_label(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
            return false;
    }
    return true;
}

struct CellPaths {
    std::string status;
    std::string checkpoint;
    std::string log;
    std::string report;
};

CellPaths cell_paths(const std::string& out_dir, const std::string& id) {
    CellPaths p;
    p.status = out_dir + "/cells/" + id + ".status.json";
    p.checkpoint = out_dir + "/ckpt/" + id + ".dfckpt";
    p.log = out_dir + "/logs/" + id + ".csv";
    p.report = out_dir + "/reports/" + id + ".eval.json";
    return p;
}

std::string fresh_nonce() {
    std::random_device rd;
    uint64_t a = (uint64_t(rd()) << 32) ^ rd();
    uint64_t b =
        uint64_t(std::chrono::steady_clock::now().time_since_epoch().count());
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx%016llx", (unsigned long long)splitmix64(a),
                  (unsigned long long)splitmix64(b));
    return buf;
}

void write_status(const std::string& out_dir, const CellSpec& spec, const std::string& state,
                  const std::string& error) {
    const CellPaths p = cell_paths(out_dir, spec.id);
    nlohmann::json j;
    j["cell_id"] = spec.id;
    j["state"] = state;
    j["error"] = error;
    j["nonce"] = fresh_nonce();
    j["checkpoint"] = p.checkpoint;
    j["log"] = p.log;
    j["report"] = p.report;
    j["run"] = nlohmann::json::parse(run_config_to_json(spec.run));
    write_file_atomic(p.status, j.dump(2) + "\n");
}

// A cell counts as finished only when all three artifacts agree; a partial
// set (say, a deleted checkpoint) sends the cell back to training.
bool cell_is_done(const std::string& out_dir, const std::string& id) {
    const CellPaths p = cell_paths(out_dir, id);
    if (!file_exists(p.status) || !file_exists(p.checkpoint) || !file_exists(p.report))
        return false;
    nlohmann::json j = nlohmann::json::parse(read_file(p.status), nullptr, false);
    if (j.is_discarded() || !j.is_object()) return false;
    return j.value("state", "") == "done";
}

TokenPool capped_pool(const TokenPool& pool, int context_len, int64_t max_windows) {
    if (max_windows <= 0) return pool;
    const uint64_t window = uint64_t(context_len) + 1;
    const uint64_t keep = std::min<uint64_t>(pool.tokens.size(), uint64_t(max_windows) * window);
    TokenPool out = pool;
    out.tokens.resize(keep);
    return out;
}

struct EvalFixtures {
    const PoolSet* pools = nullptr;
    std::vector<McTask> tasks;
};

EvalReport evaluate_cell(const SweepConfig& cfg, const CellSpec& spec,
                         const ParamSet<float>& params, const EvalFixtures& fixtures) {
    EvalReport report;
    report.model_id = spec.id;
    const int ctx = params.config.context_len;
    {
        TokenPool held = capped_pool(fixtures.pools->held_out, ctx, cfg.eval_max_windows);
        report.pool_ppl[held.pool_id] = perplexity(params, held, ctx).ppl;
    }
    for (const TokenPool& ood : fixtures.pools->ood) {
        TokenPool capped = capped_pool(ood, ctx, cfg.eval_max_windows);
        report.pool_ppl[ood.pool_id] = perplexity(params, capped, ctx).ppl;
    }
    LogitFn fn = model_logit_fn(params);
    for (const McTask& task : fixtures.tasks) {
        report.task_acc[task.name] = task_accuracy(fn, task);
    }
    return report;
}

void execute_cell(const SweepConfig& cfg, const std::string& out_dir, const CellSpec& spec,
                  const EvalFixtures& fixtures) {
    if (cell_is_done(out_dir, spec.id)) return;
    const CellPaths paths = cell_paths(out_dir, spec.id);
    try {
        ParamSet<float> teacher;
        const ParamSet<float>* teacher_ptr = nullptr;
        if (spec.kind == CellKind::distill) {
            if (!file_exists(spec.run.teacher_checkpoint))
                fail("state", "teacher checkpoint missing for cell '" + spec.id +
                                  "' — run its teacher cell first");
            teacher = load_checkpoint(spec.run.teacher_checkpoint);
            teacher_ptr = &teacher;
        }
        TrainResult result = train_run(spec.run, fixtures.pools->train, teacher_ptr);
        save_checkpoint(paths.checkpoint, result.params);
        write_training_log_csv(paths.log, result.log);
        EvalReport report = evaluate_cell(cfg, spec, result.params, fixtures);
        write_eval_report(paths.report, report);
        write_status(out_dir, spec, "done", "");
    } catch (const Error& e) {
        write_status(out_dir, spec, "failed", e.what());
    } catch (const std::exception& e) {
        write_status(out_dir, spec, "failed", std::string("unexpected: ") + e.what());
    }
}

void run_cells_parallel(const SweepConfig& cfg, const std::string& out_dir,
                        const std::vector<CellSpec>& cells, const EvalFixtures& fixtures,
                        int workers) {
    if (cells.empty()) return;
    const int n = std::max(1, std::min<int>(workers, int(cells.size())));
    if (n == 1) {
        for (const CellSpec& c : cells) execute_cell(cfg, out_dir, c, fixtures);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(size_t(n));
    for (int w = 0; w < n; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= cells.size()) return;
                execute_cell(cfg, out_dir, cells[i], fixtures);
            }
        });
    }
    for (std::thread& t : pool) t.join();
}

std::vector<McTask> build_tasks(const SweepConfig& cfg, const PoolSet& pools) {
    std::vector<McTask> tasks;
    tasks.push_back(make_continuation_task(pools.held_out, "cont_fixed", cfg.mc_items,
                                           cfg.mc_prompt_len, cfg.mc_choice_len, cfg.mc_choices,
                                           /*fixed_len=*/true, mix_key(cfg.eval_seed, 1)));
    tasks.push_back(make_continuation_task(pools.held_out, "cont_norm", cfg.mc_items,
                                           cfg.mc_prompt_len, cfg.mc_choice_len, cfg.mc_choices,
                                           /*fixed_len=*/false, mix_key(cfg.eval_seed, 2)));
    return tasks;
}

PoolSet build_sweep_pools(const SweepConfig& cfg) {
    std::string corpus = read_file(cfg.corpus_path);
    PoolSet pools = build_pools(corpus, cfg.held_out_fraction, cfg.data_seed,
                                cfg.student.context_len);
    for (const auto& [tag, path] : cfg.ood_paths) {
        pools.ood.push_back(make_ood_pool(tag, read_file(path), cfg.data_seed));
    }
    return pools;
}

// Benchmarks in stable order: in-domain ppl, each transfer pool's ppl, each
// task's accuracy.
void grid_benchmarks(const SweepConfig& cfg, const PoolSet& pools,
                     const std::vector<McTask>& tasks, ImprovementGrid& grid) {
    grid.benchmarks.clear();
    grid.benchmark_metric.clear();
    grid.benchmarks.push_back(pools.held_out.pool_id);
    grid.benchmark_metric[pools.held_out.pool_id] = "in_domain_ppl";
    for (const TokenPool& ood : pools.ood) {
        grid.benchmarks.push_back(ood.pool_id);
        grid.benchmark_metric[ood.pool_id] = "ood_ppl";
    }
    for (const McTask& task : tasks) {
        grid.benchmarks.push_back(task.name);
        grid.benchmark_metric[task.name] = "downstream_acc";
    }
}

double benchmark_pct(const std::string& metric_family, double baseline, double value) {
    const MetricKind kind =
        metric_family == "downstream_acc" ? MetricKind::acc : MetricKind::ppl;
    return pct_improvement(baseline, value, kind);
}

std::optional<double> report_value(const EvalReport& report, const std::string& benchmark) {
    auto p = report.pool_ppl.find(benchmark);
    if (p != report.pool_ppl.end()) return p->second;
    auto t = report.task_acc.find(benchmark);
    if (t != report.task_acc.end()) return t->second;
    return std::nullopt;
}

}  // namespace

SweepConfig SweepConfig::desk_default() {
    SweepConfig cfg;
    ModelConfig tiny;
    tiny.hidden_dim = 32;
    tiny.num_layers = 1;
    tiny.mlp_dim = 128;
    tiny.query_heads = 4;
    tiny.kv_heads = 2;
    tiny.head_dim = 8;
    ModelConfig small;  // defaults
    ModelConfig medium;
    medium.hidden_dim = 96;
    medium.num_layers = 4;
    medium.mlp_dim = 384;
    medium.query_heads = 4;
    medium.kv_heads = 2;
    medium.head_dim = 24;

    const std::vector<std::pair<std::string, ModelConfig>> sizes = {
        {"tiny", tiny}, {"small", small}, {"medium", medium}};
    const std::vector<std::pair<std::string, int64_t>> budgets = {
        {"0.5M", 500'000}, {"2M", 2'000'000}, {"8M", 8'000'000}};
    for (const auto& [size_name, model] : sizes) {
        for (const auto& [budget_name, budget] : budgets) {
            TeacherSpec spec;
            spec.label = size_name + "-" + budget_name;
            spec.model = model;
            spec.token_budget = budget;
            cfg.teachers.push_back(spec);
        }
    }
    cfg.student = small;
    cfg.student_budget = 2'000'000;
    cfg.alphas = {0.2, 0.4, 0.5, 0.6, 0.8, 1.0};
    return cfg;
}

void SweepConfig::validate() const {
    student.validate();
    if (student_budget < 1) fail("config", "student_budget must be >= 1");
    if (batch_size < 1) fail("config", "batch_size must be >= 1");
    if (!(held_out_fraction > 0.0 && held_out_fraction < 0.5))
        fail("config", "held_out_fraction must lie in (0, 0.5)");
    if (!(tau > 0.0)) fail("config", "tau must be > 0");
    if (!(clip_norm > 0.0)) fail("config", "clip_norm must be > 0");
    if (teachers.empty()) fail("config", "at least one teacher is required");
    if (alphas.empty()) fail("config", "at least one alpha is required");
    std::set<std::string> labels;
    int min_ctx = student.context_len;
    for (const TeacherSpec& t : teachers) {
        if (!valid_label(t.label))
            fail("config", "teacher label '" + t.label +
                               "' must be non-empty [A-Za-z0-9_.-]");
        if (!labels.insert(t.label).second)
            fail("config", "duplicate teacher label '" + t.label + "'");
        t.model.validate();
        if (t.token_budget < 1) fail("config", "teacher '" + t.label + "' budget must be >= 1");
        if (t.model.vocab_size != student.vocab_size)
            fail("config", "teacher '" + t.label + "' vocab differs from the student's");
        if (t.model.context_len < student.context_len)
            fail("config", "teacher '" + t.label + "' context is shorter than the student's");
        min_ctx = std::min(min_ctx, t.model.context_len);
    }
    std::set<double> seen;
    for (double a : alphas) {
        if (!(a > 0.0 && a <= 1.0)) fail("config", "alphas must lie in (0, 1]");
        if (!seen.insert(a).second) fail("config", "duplicate alpha in grid");
    }
    if (mc_items < 1 || mc_choices < 2 || mc_prompt_len < 1 || mc_choice_len < 1)
        fail("config", "mc task parameters out of range");
    if (mc_prompt_len + 2 * mc_choice_len + 1 > min_ctx)
        fail("config", "mc items do not fit the shortest model context");
    if (eval_max_windows < 0) fail("config", "eval_max_windows must be >= 0");
}

std::string sweep_config_to_json(const SweepConfig& cfg) {
    nlohmann::json j;
    j["corpus_path"] = cfg.corpus_path;
    j["ood_paths"] = nlohmann::json::array();
    for (const auto& [tag, path] : cfg.ood_paths)
        j["ood_paths"].push_back({{"tag", tag}, {"path", path}});
    j["held_out_fraction"] = cfg.held_out_fraction;
    j["student"] = nlohmann::json::parse(model_config_to_json(cfg.student));
    j["student_budget"] = cfg.student_budget;
    j["teachers"] = nlohmann::json::array();
    for (const TeacherSpec& t : cfg.teachers) {
        j["teachers"].push_back({{"label", t.label},
                                 {"model", nlohmann::json::parse(model_config_to_json(t.model))},
                                 {"token_budget", t.token_budget}});
    }
    j["alphas"] = cfg.alphas;
    j["data_seed"] = cfg.data_seed;
    j["init_seed"] = cfg.init_seed;
    j["teacher_data_seed"] = cfg.teacher_data_seed;
    j["teacher_init_seed"] = cfg.teacher_init_seed;
    j["eval_seed"] = cfg.eval_seed;
    j["batch_size"] = cfg.batch_size;
    j["tau"] = cfg.tau;
    j["lr"] = {{"peak", cfg.lr.peak},
               {"warmup_frac", cfg.lr.warmup_frac},
               {"final_frac", cfg.lr.final_frac}};
    j["adam"] = {{"beta1", cfg.adam.beta1},
                 {"beta2", cfg.adam.beta2},
                 {"eps", cfg.adam.eps},
                 {"weight_decay", cfg.adam.weight_decay}};
    j["clip_norm"] = cfg.clip_norm;
    j["mc_items"] = cfg.mc_items;
    j["mc_choices"] = cfg.mc_choices;
    j["mc_prompt_len"] = cfg.mc_prompt_len;
    j["mc_choice_len"] = cfg.mc_choice_len;
    j["eval_max_windows"] = cfg.eval_max_windows;
    return j.dump(2);
}

SweepConfig sweep_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail("format", "sweep config is not a JSON object");
    SweepConfig cfg;
    try {
        cfg.corpus_path = j.value("corpus_path", cfg.corpus_path);
        if (j.contains("ood_paths")) {
            cfg.ood_paths.clear();
            for (const auto& item : j.at("ood_paths"))
                cfg.ood_paths.emplace_back(item.at("tag").get<std::string>(),
                                           item.at("path").get<std::string>());
        }
        cfg.held_out_fraction = j.value("held_out_fraction", cfg.held_out_fraction);
        if (j.contains("student"))
            cfg.student = model_config_from_json(j.at("student").dump());
        cfg.student_budget = j.value("student_budget", cfg.student_budget);
        if (j.contains("teachers")) {
            cfg.teachers.clear();
            for (const auto& item : j.at("teachers")) {
                TeacherSpec t;
                t.label = item.at("label").get<std::string>();
                t.model = model_config_from_json(item.at("model").dump());
                t.token_budget = item.at("token_budget").get<int64_t>();
                cfg.teachers.push_back(t);
            }
        }
        if (j.contains("alphas")) cfg.alphas = j.at("alphas").get<std::vector<double>>();
        cfg.data_seed = j.value("data_seed", cfg.data_seed);
        cfg.init_seed = j.value("init_seed", cfg.init_seed);
        cfg.teacher_data_seed = j.value("teacher_data_seed", cfg.teacher_data_seed);
        cfg.teacher_init_seed = j.value("teacher_init_seed", cfg.teacher_init_seed);
        cfg.eval_seed = j.value("eval_seed", cfg.eval_seed);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.tau = j.value("tau", cfg.tau);
        if (j.contains("lr")) {
            cfg.lr.peak = j["lr"].value("peak", cfg.lr.peak);
            cfg.lr.warmup_frac = j["lr"].value("warmup_frac", cfg.lr.warmup_frac);
            cfg.lr.final_frac = j["lr"].value("final_frac", cfg.lr.final_frac);
        }
        if (j.contains("adam")) {
            cfg.adam.beta1 = j["adam"].value("beta1", cfg.adam.beta1);
            cfg.adam.beta2 = j["adam"].value("beta2", cfg.adam.beta2);
            cfg.adam.eps = j["adam"].value("eps", cfg.adam.eps);
            cfg.adam.weight_decay = j["adam"].value("weight_decay", cfg.adam.weight_decay);
        }
        cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
        cfg.mc_items = j.value("mc_items", cfg.mc_items);
        cfg.mc_choices = j.value("mc_choices", cfg.mc_choices);
        cfg.mc_prompt_len = j.value("mc_prompt_len", cfg.mc_prompt_len);
        cfg.mc_choice_len = j.value("mc_choice_len", cfg.mc_choice_len);
        cfg.eval_max_windows = j.value("eval_max_windows", cfg.eval_max_windows);
    } catch (const nlohmann::json::exception& e) {
        fail("format", std::string("sweep config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::vector<CellSpec> sweep_cells(const SweepConfig& cfg, const std::string& out_dir) {
    std::vector<CellSpec> cells;

    auto student_run = [&](const std::string& id, double alpha) {
        RunConfig run;
        run.run_id = id;
        run.model = cfg.student;
        run.token_budget = cfg.student_budget;
        run.batch_size = cfg.batch_size;
        run.data_seed = cfg.data_seed;
        run.init_seed = cfg.init_seed;
        run.alpha = alpha;
        run.tau = cfg.tau;
        run.lr = cfg.lr;
        run.adam = cfg.adam;
        run.clip_norm = cfg.clip_norm;
        return run;
    };

    for (const TeacherSpec& t : cfg.teachers) {
        CellSpec cell;
        cell.kind = CellKind::teacher;
        cell.id = "teacher-" + t.label;
        cell.teacher_label = t.label;
        cell.run.run_id = cell.id;
        cell.run.role = Role::teacher;
        cell.run.model = t.model;
        cell.run.token_budget = t.token_budget;
        cell.run.batch_size = cfg.batch_size;
        cell.run.data_seed = mix_key(cfg.teacher_data_seed, stable_hash(t.label));
        cell.run.init_seed = mix_key(cfg.teacher_init_seed, stable_hash(t.label));
        cell.run.lr = cfg.lr;
        cell.run.adam = cfg.adam;
        cell.run.clip_norm = cfg.clip_norm;
        cells.push_back(cell);
    }

    {
        CellSpec cell;
        cell.kind = CellKind::baseline;
        cell.id = "baseline";
        cell.run = student_run(cell.id, 0.0);
        cell.run.role = Role::baseline;
        cells.push_back(cell);
    }

    for (const TeacherSpec& t : cfg.teachers) {
        for (double alpha : cfg.alphas) {
            CellSpec cell;
            cell.kind = CellKind::distill;
            cell.teacher_label = t.label;
            cell.alpha = alpha;
            cell.id = "distill-" + t.label + "-a" + format_double(alpha);
            cell.run = student_run(cell.id, alpha);
            cell.run.role = Role::distill;
            cell.run.teacher_checkpoint = cell_paths(out_dir, "teacher-" + t.label).checkpoint;
            cells.push_back(cell);
        }
    }
    return cells;
}

SweepResult run_sweep(const SweepConfig& cfg, const std::string& out_dir, int workers,
                      const std::string& only_cell) {
    cfg.validate();
    ensure_dir(out_dir);
    for (const char* sub : {"/cells", "/ckpt", "/logs", "/reports", "/tables"})
        ensure_dir(out_dir + sub);
    write_file_atomic(out_dir + "/sweep_config.json", sweep_config_to_json(cfg) + "\n");

    PoolSet pools = build_sweep_pools(cfg);
    write_pools_manifest(out_dir + "/pools.json", pools);

    EvalFixtures fixtures;
    fixtures.pools = &pools;
    fixtures.tasks = build_tasks(cfg, pools);

    const std::vector<CellSpec> cells = sweep_cells(cfg, out_dir);

    if (!only_cell.empty()) {
        auto it = std::find_if(cells.begin(), cells.end(),
                               [&](const CellSpec& c) { return c.id == only_cell; });
        if (it == cells.end()) fail("config", "unknown cell id '" + only_cell + "'");
        execute_cell(cfg, out_dir, *it, fixtures);
        return load_sweep(out_dir);
    }

    std::vector<CellSpec> phase_teachers;
    std::vector<CellSpec> phase_students;
    for (const CellSpec& c : cells) {
        (c.kind == CellKind::teacher ? phase_teachers : phase_students).push_back(c);
    }
    run_cells_parallel(cfg, out_dir, phase_teachers, fixtures, workers);
    run_cells_parallel(cfg, out_dir, phase_students, fixtures, workers);
    return load_sweep(out_dir);
}

SweepResult load_sweep(const std::string& out_dir) {
    SweepResult result;
    result.out_dir = out_dir;
    result.config = sweep_config_from_json(read_file(out_dir + "/sweep_config.json"));
    const SweepConfig& cfg = result.config;

    // Benchmarks are re-derived from the config; the item sets themselves are
    // pure functions of (corpus, seeds), so names alone identify them.
    PoolSet pools = build_sweep_pools(cfg);
    std::vector<McTask> tasks = build_tasks(cfg, pools);
    result.grid.alphas = cfg.alphas;
    grid_benchmarks(cfg, pools, tasks, result.grid);

    for (const CellSpec& spec : sweep_cells(cfg, out_dir)) {
        CellOutcome outcome;
        outcome.spec = spec;
        const CellPaths p = cell_paths(out_dir, spec.id);
        outcome.checkpoint = p.checkpoint;
        outcome.log = p.log;
        outcome.report = p.report;
        outcome.state = "missing";
        if (file_exists(p.status)) {
            nlohmann::json j = nlohmann::json::parse(read_file(p.status), nullptr, false);
            if (!j.is_discarded() && j.is_object()) {
                const std::string state = j.value("state", "missing");
                outcome.error = j.value("error", "");
                if (state == "failed") {
                    outcome.state = "failed";
                } else if (state == "done" && cell_is_done(out_dir, spec.id)) {
                    outcome.state = "done";
                    outcome.eval = read_eval_report(p.report);
                }
            }
        }
        result.cells.push_back(std::move(outcome));
    }

    const std::string held_id = pools.held_out.pool_id;
    for (const CellOutcome& c : result.cells) {
        if (c.state != "done" || !c.eval) continue;
        if (c.spec.kind == CellKind::baseline) {
            result.baseline = c.eval;
        } else if (c.spec.kind == CellKind::teacher) {
            auto it = c.eval->pool_ppl.find(held_id);
            if (it != c.eval->pool_ppl.end())
                result.teacher_heldout_ppl[c.spec.teacher_label] = it->second;
        }
    }

    bool all_distill_done = true;
    for (const CellOutcome& c : result.cells) {
        if (c.spec.kind != CellKind::distill) continue;
        if (c.state != "done" || !c.eval || !result.baseline) {
            all_distill_done = false;
            continue;
        }
        std::map<std::string, double>& row =
            result.grid.pct[c.spec.teacher_label][c.spec.alpha];
        for (const std::string& benchmark : result.grid.benchmarks) {
            auto base = report_value(*result.baseline, benchmark);
            auto value = report_value(*c.eval, benchmark);
            if (!base || !value) continue;
            row[benchmark] =
                benchmark_pct(result.grid.benchmark_metric.at(benchmark), *base, *value);
        }
    }
    result.grid_complete = all_distill_done && result.baseline.has_value();
    return result;
}

namespace {

const std::vector<std::string> kMetricFamilies = {"in_domain_ppl", "ood_ppl", "downstream_acc"};

std::optional<double> family_mean(const ImprovementGrid& grid, const std::string& teacher,
                                  double alpha, const std::string& family) {
    auto t = grid.pct.find(teacher);
    if (t == grid.pct.end()) return std::nullopt;
    auto a = t->second.find(alpha);
    if (a == t->second.end()) return std::nullopt;
    std::vector<double> pcts;
    for (const std::string& benchmark : grid.benchmarks) {
        if (grid.benchmark_metric.at(benchmark) != family) continue;
        auto b = a->second.find(benchmark);
        if (b == a->second.end()) return std::nullopt;
        pcts.push_back(b->second);
    }
    if (pcts.empty()) return std::nullopt;
    return aggregate_improvements(pcts);
}

std::optional<double> all_benchmark_mean(const ImprovementGrid& grid, const std::string& teacher,
                                         double alpha) {
    auto t = grid.pct.find(teacher);
    if (t == grid.pct.end()) return std::nullopt;
    auto a = t->second.find(alpha);
    if (a == t->second.end()) return std::nullopt;
    std::vector<double> pcts;
    for (const std::string& benchmark : grid.benchmarks) {
        auto b = a->second.find(benchmark);
        if (b == a->second.end()) return std::nullopt;
        pcts.push_back(b->second);
    }
    if (pcts.empty()) return std::nullopt;
    return aggregate_improvements(pcts);
}

std::string csv_cell(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

void write_table(std::vector<std::string>& written, const std::string& path,
                 const std::string& content) {
    write_file_atomic(path, content);
    written.push_back(path);
}

}  // namespace

std::vector<std::string> emit_tables(const SweepResult& result) {
    const SweepConfig& cfg = result.config;
    const ImprovementGrid& grid = result.grid;
    const std::string dir = result.out_dir + "/tables";
    ensure_dir(dir);
    std::vector<std::string> written;
    std::vector<std::string> notes;

    std::map<std::string, int64_t> budget;
    for (const TeacherSpec& t : cfg.teachers) budget[t.label] = t.token_budget;
    auto tokens_of = [&](const std::string& label) {
        return format_double(double(budget.at(label)));
    };

    {
        std::string csv = "teacher_label,tokens,alpha,metric,pct\n";
        for (const TeacherSpec& t : cfg.teachers) {
            for (double alpha : cfg.alphas) {
                for (const std::string& family : kMetricFamilies) {
                    csv += t.label + "," + tokens_of(t.label) + "," + format_double(alpha) +
                           "," + family + "," +
                           csv_cell(family_mean(grid, t.label, alpha, family)) + "\n";
                }
            }
        }
        write_table(written, dir + "/improvements.csv", csv);
    }

    {
        std::string csv = "teacher_label,tokens,alpha,benchmark,metric,pct\n";
        for (const TeacherSpec& t : cfg.teachers) {
            for (double alpha : cfg.alphas) {
                for (const std::string& benchmark : grid.benchmarks) {
                    std::optional<double> pct;
                    auto ti = grid.pct.find(t.label);
                    if (ti != grid.pct.end()) {
                        auto ai = ti->second.find(alpha);
                        if (ai != ti->second.end()) {
                            auto bi = ai->second.find(benchmark);
                            if (bi != ai->second.end()) pct = bi->second;
                        }
                    }
                    csv += t.label + "," + tokens_of(t.label) + "," + format_double(alpha) +
                           "," + benchmark + "," + grid.benchmark_metric.at(benchmark) + "," +
                           csv_cell(pct) + "\n";
                }
            }
        }
        write_table(written, dir + "/benchmark_improvements.csv", csv);
    }

    std::map<std::string, std::map<std::string, double>> best_per_metric;
    std::map<std::string, std::map<std::string, double>> best_joint;
    if (result.grid_complete) {
        try {
            best_per_metric = select_best_alpha(grid, BestAlphaMode::per_metric);
            best_joint = select_best_alpha(grid, BestAlphaMode::joint);
        } catch (const Error& e) {
            notes.push_back(std::string("best-alpha selection skipped: ") + e.what());
            best_per_metric.clear();
            best_joint.clear();
        }
    } else {
        notes.push_back("best-alpha tables skipped: improvement grid is incomplete");
    }

    if (!best_per_metric.empty()) {
        std::string csv = "teacher_label,tokens,metric,alpha,pct\n";
        for (const TeacherSpec& t : cfg.teachers) {
            auto ti = best_per_metric.find(t.label);
            if (ti == best_per_metric.end()) continue;
            for (const std::string& family : kMetricFamilies) {
                auto mi = ti->second.find(family);
                if (mi == ti->second.end()) continue;
                const double alpha = mi->second;
                csv += t.label + "," + tokens_of(t.label) + "," + family + "," +
                       format_double(alpha) + "," +
                       csv_cell(family_mean(grid, t.label, alpha, family)) + "\n";
            }
        }
        write_table(written, dir + "/best_alpha.csv", csv);
    }

    if (!best_joint.empty()) {
        std::string csv = "teacher_label,tokens,alpha,mean_pct\n";
        for (const TeacherSpec& t : cfg.teachers) {
            auto ti = best_joint.find(t.label);
            if (ti == best_joint.end() || ti->second.empty()) continue;
            const double alpha = ti->second.begin()->second;  // same for every metric
            csv += t.label + "," + tokens_of(t.label) + "," + format_double(alpha) + "," +
                   csv_cell(all_benchmark_mean(grid, t.label, alpha)) + "\n";
        }
        write_table(written, dir + "/joint_best_alpha.csv", csv);
    }

    {
        // Min-max rescaled scores over the alpha axis, one row per
        // (teacher, metric, alpha); emitted only for complete alpha rows.
        std::string csv = "teacher_label,tokens,metric,alpha,score\n";
        for (const TeacherSpec& t : cfg.teachers) {
            for (const std::string& family : kMetricFamilies) {
                std::vector<double> means;
                bool complete = true;
                for (double alpha : cfg.alphas) {
                    auto m = family_mean(grid, t.label, alpha, family);
                    if (!m) {
                        complete = false;
                        break;
                    }
                    means.push_back(*m);
                }
                if (!complete) {
                    notes.push_back("alpha_heatmap: skipped " + t.label + "/" + family +
                                    " (incomplete alpha row)");
                    continue;
                }
                std::vector<double> scores = minmax_normalize(means);
                for (size_t i = 0; i < cfg.alphas.size(); ++i) {
                    csv += t.label + "," + tokens_of(t.label) + "," + family + "," +
                           format_double(cfg.alphas[i]) + "," + format_double(scores[i]) + "\n";
                }
            }
        }
        write_table(written, dir + "/alpha_heatmap.csv", csv);
    }

    if (std::find(cfg.alphas.begin(), cfg.alphas.end(), 1.0) != cfg.alphas.end()) {
        // Pure-distillation endpoint vs the best mixed cell, per metric.
        std::string csv = "teacher_label,tokens,metric,pct_alpha_1,best_alpha,best_pct,delta\n";
        for (const TeacherSpec& t : cfg.teachers) {
            for (const std::string& family : kMetricFamilies) {
                auto pure = family_mean(grid, t.label, 1.0, family);
                std::optional<double> best;
                std::optional<double> best_alpha;
                for (double alpha : cfg.alphas) {
                    auto m = family_mean(grid, t.label, alpha, family);
                    if (m && (!best || *m > *best)) {
                        best = m;
                        best_alpha = alpha;
                    }
                }
                csv += t.label + "," + tokens_of(t.label) + "," + family + "," +
                       csv_cell(pure) + "," + csv_cell(best_alpha) + "," + csv_cell(best) + ",";
                if (pure && best) csv += format_double(*pure - *best);
                csv += "\n";
            }
        }
        write_table(written, dir + "/pure_kd.csv", csv);
    }

    {
        // Teacher quality (held-out ppl) against transfer, for the trend read.
        std::string csv = "teacher_label,tokens,teacher_heldout_ppl,alpha,metric,pct\n";
        for (const TeacherSpec& t : cfg.teachers) {
            auto ppl = result.teacher_heldout_ppl.find(t.label);
            if (ppl == result.teacher_heldout_ppl.end()) {
                notes.push_back("trend: teacher " + t.label + " has no held-out ppl yet");
                continue;
            }
            for (double alpha : cfg.alphas) {
                for (const std::string& family : kMetricFamilies) {
                    csv += t.label + "," + tokens_of(t.label) + "," +
                           format_double(ppl->second) + "," + format_double(alpha) + "," +
                           family + "," + csv_cell(family_mean(grid, t.label, alpha, family)) +
                           "\n";
                }
            }
        }
        write_table(written, dir + "/trend.csv", csv);
    }

    {
        nlohmann::json manifest;
        manifest["tables"] = written;
        manifest["cells"] = nlohmann::json::object();
        nlohmann::json missing = nlohmann::json::array();
        for (const CellOutcome& c : result.cells) {
            manifest["cells"][c.spec.id] = c.state;
            if (c.state != "done") missing.push_back(c.spec.id);
        }
        manifest["missing"] = missing;
        manifest["grid_complete"] = result.grid_complete;
        manifest["notes"] = notes;
        write_file_atomic(dir + "/manifest.json", manifest.dump(2) + "\n");
        written.push_back(dir + "/manifest.json");
    }
    return written;
}

}  // namespace distforge
