#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attack.hpp"
#include "serialize.hpp"
#include "surrogate.hpp"

namespace dlove {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Worker-pool size for the attack stage; values outside [1, 64] are clamped.
inline constexpr const char* kWorkersEnvVar = "DLOVE_WORKERS";

enum class ExperimentMode { Whitebox, BlackboxPerTarget, BlackboxCommon };

const char* mode_name(ExperimentMode mode);
ExperimentMode mode_from_name(const std::string& name);

// Where covers come from and how many (training set and attack set sizes
// both scale with ExperimentConfig::scale).
struct DatasetSpec {
    DatasetSource source = DatasetSource::synthetic();
    int train_images = 200;
    int attack_images = 20;

    void validate() const;
};

// Shared payload geometry for the common-surrogate mode.
struct CommonSection {
    Shape io_shape{64, 64, 3};
    int wm_bits = 10;
    ArchParams arch;

    void validate() const;
};

// One experiment, declaratively: which techniques, how they are trained,
// how the surrogates are fitted, and how the attack is run. Per-stage seeds
// never appear here — every stage derives its seed from the global one.
struct ExperimentConfig {
    std::string name = "experiment";
    ExperimentMode mode = ExperimentMode::Whitebox;
    std::string out_dir = "runs/experiment";
    Seed seed = 0;
    double scale = 1.0;

    std::vector<TechniqueProfile> techniques;
    DatasetSpec dataset;
    TrainConfig target_training;
    TrainConfig surrogate_training; // blackbox modes
    FinetuneBudget finetune;        // blackbox modes
    CommonSection common;           // blackbox-common mode
    AttackConfig attack;

    void validate() const;

    // Applies `scale` to image sizes (rounded to a multiple of 4, floor 8),
    // dataset counts, epochs, and pair budgets, and resets scale to 1.
    ExperimentConfig scaled() const;

    json to_json() const;
    static ExperimentConfig from_json(const json& j);
    static ExperimentConfig load(const std::string& path);
    void save(const std::string& path) const;

    // FNV-1a over the canonical serialization of every semantically
    // meaningful field: `name` and `out_dir` relabel/relocate a run without
    // changing what it computes, so they are excluded.
    std::uint64_t config_hash() const;
};

// One executed (or skipped-as-cached) stage instance.
struct StageRecord {
    std::string name;     // e.g. "train-target/redmark-like"
    std::string hash;     // 16 hex digits over params + parent hashes
    std::string dir;      // relative to out_dir
    std::vector<std::string> artifacts; // relative to out_dir
    bool skipped = false;
    std::string completed_at; // ISO-8601 UTC; informational only
};

// One row of the evaluation matrix (Technique / Epoch / Image / PertLimit /
// quality metrics / rates). Epoch and Image are the fine-tuning budget that
// produced the attack (zero in whitebox mode).
struct ReportRow {
    std::string technique;
    int epochs = 0;
    int pairs = 0;
    double pert_limit = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    double lpips_proxy = 0.0;
    double mse = 0.0;
    double ber = 0.0;
    double cosine = 0.0;
    double asr = 0.0;          // percent
    double removal_rate = 0.0; // percent
    int count = 0;
};

struct SweepSummary {
    std::string axis;
    std::vector<double> values;
    // Per technique: the smallest swept value whose ASR is within 2
    // percentage points of that technique's maximum.
    std::map<std::string, double> optimal;
};

// What a run leaves behind: the config it ran, its hash, every stage's
// artifacts, and the evaluation rows. Written once, at the end.
struct RunManifest {
    std::string toolkit_version = kToolkitVersion;
    std::string created_at;
    std::string out_dir;
    std::string config_hash; // 16 hex digits
    json config;             // full config as run (pre-scale)
    std::vector<StageRecord> stages;
    std::vector<ReportRow> rows;
    std::optional<SweepSummary> sweep;

    json to_json() const;
    static RunManifest from_json(const json& j);
    void save(const std::string& path) const;
    // Verifies the stored hash matches the stored config and that every
    // listed artifact still exists under the manifest's out_dir.
    static RunManifest load(const std::string& path);
};

// Executes an experiment as a graph of content-addressed stages under
// out_dir/stages/: a stage whose inputs hash identically to a previous run
// is skipped and its artifacts reused, so reruns are resumable and sweeps
// share their expensive upstream stages. Stages communicate only through
// files, which makes a resumed run reproduce a fresh one exactly.
class ExperimentRunner {
  public:
    explicit ExperimentRunner(ExperimentConfig cfg);

    void set_workers(int workers);
    int workers() const { return workers_; }

    const ExperimentConfig& config() const { return config_; }
    const ExperimentConfig& scaled_config() const { return scaled_; }

    // Stage kinds for this mode, in execution order.
    std::vector<std::string> stage_plan() const;

    // Runs every stage through `stage` (inclusive), writing the manifest at
    // the end. Stage kinds outside the mode's plan are rejected.
    RunManifest run_until(const std::string& stage);

    // Full pipeline through evaluation.
    RunManifest run();

    // One run per value along the axis ("finetune-epochs", "finetune-pairs"
    // or "epsilon"), reusing unchanged stages, plus the optimal-value
    // selection per technique.
    RunManifest sweep(const std::string& axis, const std::vector<double>& values);

  private:
    struct StageResult;
    StageResult ensure_stage(const std::string& name, const json& params,
                             const std::vector<const StageResult*>& parents,
                             const std::function<void(const std::string& dir,
                                                      std::vector<std::string>& artifacts)>& body);
    std::vector<ReportRow> execute_graph(const ExperimentConfig& sc,
                                         const std::string& until);

    ExperimentConfig config_;
    ExperimentConfig scaled_;
    int workers_ = 1;
    std::vector<StageRecord> stage_log_;
};

// Renders the manifest's rows as "csv" or "text-table" under the manifest's
// out_dir and returns the file path. A manifest without rows is incomplete
// and is rejected (StateError) — never an empty table.
std::string write_report(const RunManifest& manifest, const std::string& format);

// JSON bridges for the remaining config structs.
void to_json(json& j, const DatasetSpec& d);
void from_json(const json& j, DatasetSpec& d);
void to_json(json& j, const CommonSection& c);
void from_json(const json& j, CommonSection& c);
void to_json(json& j, const FinetuneBudget& b);
void from_json(const json& j, FinetuneBudget& b);
void to_json(json& j, const SuccessPolicy& p);
void from_json(const json& j, SuccessPolicy& p);
void to_json(json& j, const AttackConfig& a);
void from_json(const json& j, AttackConfig& a);
void to_json(json& j, const ReportRow& r);
void from_json(const json& j, ReportRow& r);
void to_json(json& j, const StageRecord& s);
void from_json(const json& j, StageRecord& s);

} // namespace dlove
