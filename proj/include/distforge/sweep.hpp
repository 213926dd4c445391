#pragma once

#include <optional>
#include <string>
#include <vector>

#include "distforge/evaluation.hpp"
#include "distforge/mc_tasks.hpp"
#include "distforge/training.hpp"

namespace distforge {

struct TeacherSpec {
    std::string label;  // [A-Za-z0-9_.-]+
    ModelConfig model;
    int64_t token_budget = 0;
};

// One teacher-student sweep: every teacher is trained on its own budget, one
// shared baseline (alpha = 0) is trained with the student's data ordering,
// and each (teacher, alpha) cell distills into a fresh student.
struct SweepConfig {
    std::string corpus_path;
    std::vector<std::pair<std::string, std::string>> ood_paths;  // (tag, path)
    double held_out_fraction = 0.1;

    ModelConfig student;
    int64_t student_budget = 0;
    std::vector<TeacherSpec> teachers;
    std::vector<double> alphas;

    uint64_t data_seed = 1;           // student/baseline stream + split
    uint64_t init_seed = 2;           // student/baseline init
    uint64_t teacher_data_seed = 1001;  // mixed per-label
    uint64_t teacher_init_seed = 1002;
    uint64_t eval_seed = 7;

    int batch_size = 16;
    double tau = 1.0;
    LrSchedule lr;
    AdamConfig adam;
    double clip_norm = 1.0;

    int mc_items = 96;
    int mc_choices = 4;
    int mc_prompt_len = 48;
    int mc_choice_len = 24;
    int64_t eval_max_windows = 0;  // cap ppl windows per pool (0 = all)

    // The default desk grid: {tiny, small, medium} teachers x {0.5M, 2M, 8M}
    // tokens, student = small @ 2M, the full published alpha set.
    static SweepConfig desk_default();

    void validate() const;  // errors: config
};

std::string sweep_config_to_json(const SweepConfig& cfg);
SweepConfig sweep_config_from_json(const std::string& text);  // errors: format, config

// --- cells -----------------------------------------------------------------

enum class CellKind { teacher, baseline, distill };

struct CellSpec {
    CellKind kind = CellKind::baseline;
    std::string id;             // file-system name, unique within the sweep
    std::string teacher_label;  // teacher/distill cells
    double alpha = 0.0;         // distill cells
    RunConfig run;
};

// The complete cell list for a config, teachers first (their checkpoints are
// inputs to distill cells). Cell ids and run configs are pure functions of
// the sweep config.
std::vector<CellSpec> sweep_cells(const SweepConfig& cfg, const std::string& out_dir);

struct CellOutcome {
    CellSpec spec;
    std::string state;  // "done" | "failed" | "missing"
    std::string error;
    std::string checkpoint;
    std::string log;
    std::string report;
    std::optional<EvalReport> eval;
};

struct SweepResult {
    SweepConfig config;
    std::string out_dir;
    std::vector<CellOutcome> cells;
    std::optional<EvalReport> baseline;           // present when the baseline cell is done
    std::map<std::string, double> teacher_heldout_ppl;  // label -> in-domain ppl
    ImprovementGrid grid;  // complete only when every distill cell is done
    bool grid_complete = false;
};

// Runs (or resumes) a sweep. Finished cells — status file, checkpoint and
// report all present — are skipped untouched, so re-running an interrupted
// or completed sweep is free; deleting one cell's outputs retrains exactly
// that cell. `workers` caps process-level parallelism over cells (each
// cell's math stays single-threaded and deterministic). `only_cell`
// restricts execution to one cell id (its inputs must already exist).
// errors: config, io; per-cell failures land in the cell's status file, not
// as exceptions
SweepResult run_sweep(const SweepConfig& cfg, const std::string& out_dir, int workers,
                      const std::string& only_cell = "");

// Rebuilds a SweepResult purely from what is on disk.
SweepResult load_sweep(const std::string& out_dir);  // errors: io, format

// Writes the analysis tables under <out_dir>/tables plus a manifest.json.
// Missing cells are marked in the tables (empty pct) and in the manifest,
// never silently dropped. Returns the table paths.
std::vector<std::string> emit_tables(const SweepResult& result);

}  // namespace distforge
