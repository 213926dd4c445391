// distforge CLI: train single models, build teacher logit caches, evaluate
// checkpoints, run teacher-student sweeps, and run the per-token analyses.
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "distforge/checkpoint.hpp"
#include "distforge/logit_cache.hpp"
#include "distforge/mechanism.hpp"
#include "distforge/sweep.hpp"

using namespace distforge;

namespace {

PoolSet load_cli_pools(const std::string& corpus_path,
                       const std::vector<std::string>& ood_specs, double held_out_fraction,
                       uint64_t seed, int context_len) {
    PoolSet pools =
        build_pools(read_file(corpus_path), held_out_fraction, seed, context_len);
    for (const std::string& spec : ood_specs) {
        const size_t eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= spec.size())
            fail("config", "--ood expects tag=path, got '" + spec + "'");
        const std::string tag = spec.substr(0, eq);
        const std::string path = spec.substr(eq + 1);
        pools.ood.push_back(make_ood_pool(tag, read_file(path), seed));
    }
    return pools;
}

std::vector<McTask> cli_tasks(const TokenPool& held, int items, int choices, int prompt_len,
                              int choice_len, uint64_t eval_seed) {
    std::vector<McTask> tasks;
    tasks.push_back(make_continuation_task(held, "cont_fixed", items, prompt_len, choice_len,
                                           choices, /*fixed_len=*/true, mix_key(eval_seed, 1)));
    tasks.push_back(make_continuation_task(held, "cont_norm", items, prompt_len, choice_len,
                                           choices, /*fixed_len=*/false, mix_key(eval_seed, 2)));
    return tasks;
}

// --cell accepts "baseline", "teacher:<label>", or "<label>:<alpha>".
std::string parse_cell_spec(const std::string& spec) {
    if (spec == "baseline") return "baseline";
    const size_t colon = spec.find(':');
    if (colon == std::string::npos) return "teacher-" + spec;
    const std::string lhs = spec.substr(0, colon);
    const std::string rhs = spec.substr(colon + 1);
    if (lhs == "teacher") return "teacher-" + rhs;
    double alpha = 0.0;
    try {
        alpha = std::stod(rhs);
    } catch (const std::exception&) {
        fail("config", "--cell: cannot parse alpha in '" + spec + "'");
    }
    return "distill-" + lhs + "-a" + format_double(alpha);
}

struct TrainCli {
    std::string config_path;
    std::string corpus_path;
    std::string out_dir = ".";
    std::string teacher_path;  // overrides config
    std::string cache_path;    // overrides config
    double alpha = -1.0;       // <0: keep config value
    double held_out_fraction = 0.1;
    int64_t token_budget = 0;  // 0: keep config value
};

void do_train(const TrainCli& cli, bool force_distill) {
    RunConfig run = run_config_from_json(read_file(cli.config_path));
    if (force_distill) run.role = Role::distill;
    if (!cli.teacher_path.empty()) run.teacher_checkpoint = cli.teacher_path;
    if (!cli.cache_path.empty()) run.teacher_cache = cli.cache_path;
    if (cli.alpha >= 0.0) run.alpha = cli.alpha;
    if (cli.token_budget > 0) run.token_budget = cli.token_budget;
    validate_run_config(run);

    PoolSet pools = load_cli_pools(cli.corpus_path, {}, cli.held_out_fraction, run.data_seed,
                                   run.model.context_len);

    ParamSet<float> teacher;
    const ParamSet<float>* teacher_ptr = nullptr;
    if (run.role == Role::distill && !run.teacher_checkpoint.empty()) {
        teacher = load_checkpoint(run.teacher_checkpoint);
        teacher_ptr = &teacher;
    }
    TeacherLogitCache cache;
    const TeacherLogitCache* cache_ptr = nullptr;
    if (!run.teacher_cache.empty()) {
        cache = TeacherLogitCache::open(run.teacher_cache);
        cache_ptr = &cache;
    }

    TrainResult result = train_run(run, pools.train, teacher_ptr, cache_ptr);

    ensure_dir(cli.out_dir);
    const std::string ckpt = cli.out_dir + "/" + run.run_id + ".dfckpt";
    const std::string log = cli.out_dir + "/" + run.run_id + ".csv";
    save_checkpoint(ckpt, result.params);
    write_training_log_csv(log, result.log);

    const LogRow& last = result.log.back();
    std::printf("run %s: %lld steps, %lld tokens\n", run.run_id.c_str(),
                (long long)result.steps, (long long)result.tokens_seen);
    std::printf("final lm=%s kd=%s mixed=%s grad_norm=%s\n",
                format_double(last.lm_loss).c_str(), format_double(last.kd_loss).c_str(),
                format_double(last.mixed_loss).c_str(), format_double(last.grad_norm).c_str());
    std::printf("checkpoint: %s\nlog: %s\n", ckpt.c_str(), log.c_str());
}

int run_cli(int argc, char** argv) {
    CLI::App app{
        "distforge: a desk-scale lab for mixed-objective distillation "
        "pretraining of byte-level language models"};
    app.require_subcommand(1);

    // ---- train / distill ----
    TrainCli train_cli;
    CLI::App* train = app.add_subcommand("train", "Train one model from a run-config JSON");
    train->add_option("--config", train_cli.config_path, "run-config JSON")->required();
    train->add_option("--corpus", train_cli.corpus_path, "corpus file")->required();
    train->add_option("--out", train_cli.out_dir, "output directory");
    train->add_option("--teacher", train_cli.teacher_path, "teacher checkpoint (distill role)");
    train->add_option("--cache", train_cli.cache_path, "teacher logit cache file");
    train->add_option("--alpha", train_cli.alpha, "override the KD weight");
    train->add_option("--budget", train_cli.token_budget, "override the token budget");
    train->add_option("--held-out-fraction", train_cli.held_out_fraction,
                      "fraction reserved for evaluation");
    train->callback([&] { do_train(train_cli, /*force_distill=*/false); });

    TrainCli distill_cli;
    CLI::App* distill =
        app.add_subcommand("distill", "Train a student against a frozen teacher");
    distill->add_option("--config", distill_cli.config_path, "run-config JSON")->required();
    distill->add_option("--corpus", distill_cli.corpus_path, "corpus file")->required();
    distill->add_option("--out", distill_cli.out_dir, "output directory");
    distill->add_option("--teacher", distill_cli.teacher_path,
                        "teacher checkpoint (optional when --cache covers the run)");
    distill->add_option("--cache", distill_cli.cache_path, "teacher logit cache file");
    distill->add_option("--alpha", distill_cli.alpha, "override the KD weight");
    distill->add_option("--budget", distill_cli.token_budget, "override the token budget");
    distill->add_option("--held-out-fraction", distill_cli.held_out_fraction,
                        "fraction reserved for evaluation");
    distill->callback([&] { do_train(distill_cli, /*force_distill=*/true); });

    // ---- cache ----
    struct {
        std::string teacher, corpus, out;
        int64_t steps = 0;
        int top_k = 0;
        double tau = 1.0;
        int batch_size = 16;
        uint64_t data_seed = 0;
        double held_out_fraction = 0.1;
    } cache_cli;
    CLI::App* cache = app.add_subcommand(
        "cache", "Precompute a teacher logit cache for one exact batch stream");
    cache->add_option("--teacher", cache_cli.teacher, "teacher checkpoint")->required();
    cache->add_option("--corpus", cache_cli.corpus, "corpus file")->required();
    cache->add_option("--out", cache_cli.out, "cache file to write")->required();
    cache->add_option("--steps", cache_cli.steps, "number of training steps to cover")
        ->required();
    cache->add_option("--top-k", cache_cli.top_k, "0 = exact full logits; K > 0 = top-K probs");
    cache->add_option("--tau", cache_cli.tau, "softmax temperature for top-K mode");
    cache->add_option("--batch-size", cache_cli.batch_size, "stream batch size");
    cache->add_option("--data-seed", cache_cli.data_seed, "stream data seed");
    cache->add_option("--held-out-fraction", cache_cli.held_out_fraction,
                      "fraction reserved for evaluation");
    cache->callback([&] {
        ParamSet<float> teacher = load_checkpoint(cache_cli.teacher);
        const int ctx = teacher.config.context_len;
        PoolSet pools = load_cli_pools(cache_cli.corpus, {}, cache_cli.held_out_fraction,
                                       cache_cli.data_seed, ctx);
        TeacherLogitCache::build(cache_cli.out, teacher, pools.train, cache_cli.batch_size, ctx,
                                 cache_cli.data_seed, cache_cli.steps, cache_cli.top_k,
                                 cache_cli.tau);
        std::printf("cache: %s (%lld steps, mode %s)\n", cache_cli.out.c_str(),
                    (long long)cache_cli.steps, cache_cli.top_k == 0 ? "full" : "topk");
    });

    // ---- eval ----
    struct {
        std::string ckpt, corpus, out;
        std::vector<std::string> ood;
        double held_out_fraction = 0.1;
        uint64_t data_seed = 0;
        uint64_t eval_seed = 7;
        int mc_items = 96, mc_choices = 4, mc_prompt_len = 48, mc_choice_len = 24;
    } eval_cli;
    CLI::App* eval = app.add_subcommand(
        "eval", "Evaluate a checkpoint: held-out and transfer perplexity, task accuracy");
    eval->add_option("--ckpt", eval_cli.ckpt, "model checkpoint")->required();
    eval->add_option("--corpus", eval_cli.corpus, "corpus file")->required();
    eval->add_option("--out", eval_cli.out, "eval-report JSON to write")->required();
    eval->add_option("--ood", eval_cli.ood, "transfer pool as tag=path (repeatable)");
    eval->add_option("--held-out-fraction", eval_cli.held_out_fraction,
                     "fraction reserved for evaluation");
    eval->add_option("--data-seed", eval_cli.data_seed, "pool seed (provenance only)");
    eval->add_option("--eval-seed", eval_cli.eval_seed, "task construction seed");
    eval->add_option("--mc-items", eval_cli.mc_items, "items per task");
    eval->add_option("--mc-choices", eval_cli.mc_choices, "choices per item");
    eval->add_option("--mc-prompt-len", eval_cli.mc_prompt_len, "prompt length (tokens)");
    eval->add_option("--mc-choice-len", eval_cli.mc_choice_len, "choice length (tokens)");
    eval->callback([&] {
        ParamSet<float> params = load_checkpoint(eval_cli.ckpt);
        const int ctx = params.config.context_len;
        PoolSet pools = load_cli_pools(eval_cli.corpus, eval_cli.ood,
                                       eval_cli.held_out_fraction, eval_cli.data_seed, ctx);
        EvalReport report;
        report.model_id = eval_cli.ckpt;
        report.pool_ppl[pools.held_out.pool_id] = perplexity(params, pools.held_out, ctx).ppl;
        for (const TokenPool& ood : pools.ood)
            report.pool_ppl[ood.pool_id] = perplexity(params, ood, ctx).ppl;
        LogitFn fn = model_logit_fn(params);
        for (const McTask& task :
             cli_tasks(pools.held_out, eval_cli.mc_items, eval_cli.mc_choices,
                       eval_cli.mc_prompt_len, eval_cli.mc_choice_len, eval_cli.eval_seed))
            report.task_acc[task.name] = task_accuracy(fn, task);
        write_eval_report(eval_cli.out, report);
        for (const auto& [pool, ppl] : report.pool_ppl)
            std::printf("ppl %-16s %s\n", pool.c_str(), format_double(ppl).c_str());
        for (const auto& [task, acc] : report.task_acc)
            std::printf("acc %-16s %s\n", task.c_str(), format_double(acc).c_str());
        std::printf("report: %s\n", eval_cli.out.c_str());
    });

    // ---- sweep ----
    struct {
        std::string config, corpus, out, cell, emit_config;
        int workers = 1;
        bool desk = false;
    } sweep_cli;
    CLI::App* sweep = app.add_subcommand(
        "sweep", "Run (or resume) a teacher-student grid and emit analysis tables");
    sweep->add_option("--config", sweep_cli.config, "sweep-config JSON");
    sweep->add_flag("--desk-default", sweep_cli.desk, "use the built-in desk grid");
    sweep->add_option("--corpus", sweep_cli.corpus, "override the config's corpus path");
    sweep->add_option("--out", sweep_cli.out, "sweep output directory");
    sweep->add_option("--workers", sweep_cli.workers, "parallel cells (each cell single-threaded)");
    sweep->add_option("--cell", sweep_cli.cell,
                      "run one cell: baseline | teacher:<label> | <label>:<alpha>");
    sweep->add_option("--emit-config", sweep_cli.emit_config,
                      "write the resolved config JSON to this path and exit");
    sweep->callback([&] {
        SweepConfig cfg;
        if (sweep_cli.desk && !sweep_cli.config.empty())
            fail("config", "--config and --desk-default are mutually exclusive");
        if (sweep_cli.desk) {
            cfg = SweepConfig::desk_default();
        } else if (!sweep_cli.config.empty()) {
            cfg = sweep_config_from_json(read_file(sweep_cli.config));
        } else {
            fail("config", "sweep needs --config or --desk-default");
        }
        if (!sweep_cli.corpus.empty()) cfg.corpus_path = sweep_cli.corpus;
        if (!sweep_cli.emit_config.empty()) {
            write_file_atomic(sweep_cli.emit_config, sweep_config_to_json(cfg) + "\n");
            std::printf("config: %s\n", sweep_cli.emit_config.c_str());
            return;
        }
        if (sweep_cli.out.empty()) fail("config", "sweep needs --out");
        const std::string only =
            sweep_cli.cell.empty() ? std::string() : parse_cell_spec(sweep_cli.cell);
        SweepResult result = run_sweep(cfg, sweep_cli.out, sweep_cli.workers, only);
        int done = 0, failed = 0, missing = 0;
        for (const CellOutcome& c : result.cells) {
            if (c.state == "done") ++done;
            else if (c.state == "failed") ++failed;
            else ++missing;
            if (c.state == "failed")
                std::printf("failed %-28s %s\n", c.spec.id.c_str(), c.error.c_str());
        }
        std::printf("cells: %d done, %d failed, %d missing\n", done, failed, missing);
        for (const std::string& path : emit_tables(result))
            std::printf("table: %s\n", path.c_str());
    });

    // ---- analyze ----
    struct {
        std::string base, student, teacher, corpus, out;
        std::string edges = "desk";
        std::string tag = "held_out";
        int64_t max_records = 200000;
        int k = 10;
        int resamples = 1000;
        uint64_t seed = 7;
        double held_out_fraction = 0.1;
        std::vector<int64_t> position_edges;
    } an_cli;
    CLI::App* analyze = app.add_subcommand(
        "analyze", "Score per-token records under base/student/teacher and aggregate");
    analyze->add_option("--base", an_cli.base, "baseline checkpoint")->required();
    analyze->add_option("--student", an_cli.student, "student checkpoint")->required();
    analyze->add_option("--teacher", an_cli.teacher, "teacher checkpoint")->required();
    analyze->add_option("--corpus", an_cli.corpus, "corpus file")->required();
    analyze->add_option("--out", an_cli.out, "output directory")->required();
    analyze->add_option("--edges", an_cli.edges, "difficulty edges: desk | paper");
    analyze->add_option("--max-records", an_cli.max_records, "record cap");
    analyze->add_option("--k", an_cli.k, "top-k list length");
    analyze->add_option("--resamples", an_cli.resamples, "bootstrap resamples");
    analyze->add_option("--seed", an_cli.seed, "bootstrap seed");
    analyze->add_option("--held-out-fraction", an_cli.held_out_fraction,
                        "fraction reserved for evaluation");
    analyze->add_option("--position-edges", an_cli.position_edges,
                        "within-window position bin edges");
    analyze->callback([&] {
        ParamSet<float> base = load_checkpoint(an_cli.base);
        ParamSet<float> student = load_checkpoint(an_cli.student);
        ParamSet<float> teacher = load_checkpoint(an_cli.teacher);
        const int ctx = std::min({base.config.context_len, student.config.context_len,
                                  teacher.config.context_len});
        PoolSet pools =
            load_cli_pools(an_cli.corpus, {}, an_cli.held_out_fraction, 0, ctx);
        RecordSet set = collect_records(base, student, teacher, pools.held_out, ctx, an_cli.k,
                                        an_cli.max_records,
                                        {an_cli.base, an_cli.student, an_cli.teacher});
        ensure_dir(an_cli.out);
        const std::string rec_path = an_cli.out + "/records.dfrec";
        write_records(rec_path, set);

        DifficultyEdges edges;
        if (an_cli.edges == "desk") {
            edges = DifficultyEdges::desk(set.vocab_size);
        } else if (an_cli.edges == "paper") {
            edges = DifficultyEdges::paper();
        } else {
            fail("config", "--edges must be desk or paper");
        }

        std::vector<int64_t> pedges = an_cli.position_edges;
        if (pedges.empty()) {
            for (int64_t e : {int64_t(0), int64_t(ctx) / 4, int64_t(ctx) / 2,
                              3 * int64_t(ctx) / 4, int64_t(ctx)})
                if (pedges.empty() || e > pedges.back()) pedges.push_back(e);
        }

        nlohmann::json out;
        out["records"] = rec_path;
        out["num_records"] = set.records.size();
        out["k"] = set.k;
        out["models"] = set.models;
        out["edges"] = {{"e1", edges.e1}, {"e2", edges.e2}, {"e3", edges.e3}};

        for (Variant v : {Variant::student, Variant::teacher}) {
            const char* name = v == Variant::student ? "student" : "teacher";
            nlohmann::json bins = nlohmann::json::object();
            for (const auto& [label, stat] : bin_improvements(set, edges, v)) {
                nlohmann::json b = {{"count", stat.count}};
                if (stat.pct) b["pct"] = *stat.pct;
                bins[label] = b;
            }
            out["difficulty_bins"][name] = bins;
        }
        {
            nlohmann::json cats = nlohmann::json::object();
            for (const auto& [label, stat] : category_improvements(set)) {
                nlohmann::json c = {{"count", stat.count}, {"fraction", stat.fraction}};
                if (stat.pct) c["pct"] = *stat.pct;
                cats[label] = c;
            }
            out["categories"] = cats;
        }
        try {
            BootstrapResult boot =
                concentration_bootstrap(set, edges, an_cli.resamples, an_cli.seed);
            out["concentration"] = {{"stat", boot.stat},       {"ci_lo", boot.ci_lo},
                                    {"ci_hi", boot.ci_hi},     {"p_value", boot.p_value},
                                    {"resamples", boot.resamples}, {"skipped", boot.skipped}};
            std::printf("concentration: hard-easy %s [%s, %s], p=%s\n",
                        format_double(boot.stat).c_str(), format_double(boot.ci_lo).c_str(),
                        format_double(boot.ci_hi).c_str(), format_double(boot.p_value).c_str());
        } catch (const Error& e) {
            out["concentration"] = {{"error", e.what()}};
            std::printf("concentration: unavailable (%s)\n", e.what());
        }
        {
            ConvergenceResult conv = convergence_ratio(set);
            nlohmann::json c = {{"mean_student_teacher", conv.mean_student_teacher},
                                {"mean_student_base", conv.mean_student_base}};
            if (conv.ratio) c["ratio"] = *conv.ratio;
            out["convergence"] = c;
        }
        {
            EntropyDeltaPoint pt = entropy_delta_point(set);
            out["entropy_delta"] = {
                {"model_id", pt.model_id}, {"delta_h", pt.delta_h}, {"pct", pt.pct}};
        }
        {
            nlohmann::json rows = nlohmann::json::array();
            for (const PositionBin& bin : position_improvements(set, pedges)) {
                nlohmann::json b = {{"label", bin.label},
                                    {"lo", bin.lo},
                                    {"hi", bin.hi},
                                    {"count", bin.count}};
                if (bin.pct) b["pct"] = *bin.pct;
                rows.push_back(b);
            }
            out["position_bins"] = rows;
        }
        {
            // Mean label-smoothing-benefit proxy per difficulty bin.
            std::array<KahanSum, 4> sums;
            std::array<int64_t, 4> counts{};
            for (const TokenRecord& r : set.records) {
                const int bin = difficulty_bin(r.h_base, edges);
                sums[size_t(bin)].add(ls_benefit(r.h_base, set.vocab_size));
                ++counts[size_t(bin)];
            }
            nlohmann::json bins = nlohmann::json::object();
            for (size_t i = 0; i < counts.size(); ++i) {
                nlohmann::json b = {{"count", counts[i]}};
                if (counts[i] > 0) b["mean"] = sums[i].value() / double(counts[i]);
                bins[kDifficultyLabels[i]] = b;
            }
            out["ls_benefit_by_bin"] = bins;
        }

        const std::string analysis = an_cli.out + "/analysis.json";
        write_file_atomic(analysis, out.dump(2) + "\n");
        std::printf("records: %s (%lld)\nanalysis: %s\n", rec_path.c_str(),
                    (long long)set.records.size(), analysis.c_str());
    });

    // ---- report ----
    struct {
        std::string out;
    } report_cli;
    CLI::App* report = app.add_subcommand(
        "report", "Re-derive tables and print a summary for an existing sweep directory");
    report->add_option("--out", report_cli.out, "sweep output directory")->required();
    report->callback([&] {
        SweepResult result = load_sweep(report_cli.out);
        for (const CellOutcome& c : result.cells) {
            std::string note;
            if (c.state == "done" && c.eval) {
                for (const auto& [pool, ppl] : c.eval->pool_ppl)
                    note += " " + pool + "=" + format_double(ppl);
            } else if (!c.error.empty()) {
                note = " " + c.error;
            }
            std::printf("%-8s %-28s%s\n", c.state.c_str(), c.spec.id.c_str(), note.c_str());
        }
        if (result.grid_complete) {
            auto best = select_best_alpha(result.grid, BestAlphaMode::per_metric);
            for (const auto& [teacher, metrics] : best)
                for (const auto& [metric, alpha] : metrics)
                    std::printf("best_alpha %-12s %-16s %s\n", teacher.c_str(), metric.c_str(),
                                format_double(alpha).c_str());
        } else {
            std::printf("grid incomplete: best-alpha selection skipped\n");
        }
        for (const std::string& path : emit_tables(result))
            std::printf("table: %s\n", path.c_str());
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 2;
    }
}
