// Command-line front end for the watermark-attack toolkit. Talks to the
// library exclusively through the C API in dlove/dlove.h.
//
// Exit codes: 0 success, 1 configuration/usage error, 2 stage failure.

#include "CLI11.hpp"
#include "dlove/dlove.h"

#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitStageFailure = 2;

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    double scale = 1.0;
    bool has_seed = false;
    bool has_out = false;
    bool has_scale = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags* flags) {
    cmd->add_option("--config", flags->config_path,
                    "Experiment config file (JSON; see configs/ for examples)");
    cmd->add_option("--seed", flags->seed, "Override the config's global seed")
        ->each([flags](const std::string&) { flags->has_seed = true; });
    cmd->add_option("--out", flags->out_dir,
                    "Override the config's output directory")
        ->each([flags](const std::string&) { flags->has_out = true; });
    cmd->add_option("--scale", flags->scale,
                    "Override the config's scale factor (sizes, counts, epochs)")
        ->each([flags](const std::string&) { flags->has_scale = true; });
}

int fail(const char* what, dlove_status status) {
    std::fprintf(stderr, "dlove: %s: %s\n", what, dlove_last_error());
    if (status == DLOVE_ERR_INVALID_ARGUMENT || status == DLOVE_ERR_IO ||
        status == DLOVE_ERR_FORMAT)
        return kExitConfigError;
    return kExitStageFailure;
}

int env_workers() {
    const char* raw = std::getenv("DLOVE_WORKERS");
    if (!raw || raw[0] == '\0')
        return 1;
    char* end = nullptr;
    const long n = std::strtol(raw, &end, 10);
    if (end == raw || *end != '\0' || n < 1) {
        std::fprintf(stderr, "dlove: ignoring invalid DLOVE_WORKERS='%s'\n", raw);
        return 1;
    }
    return static_cast<int>(n);
}

using ExperimentPtr =
    std::unique_ptr<dlove_experiment, decltype(&dlove_experiment_close)>;

// Opens the config and applies overrides; open/override failures are always
// configuration errors.
int open_experiment(const CommonFlags& flags, ExperimentPtr* out) {
    if (flags.config_path.empty()) {
        std::fprintf(stderr, "dlove: --config is required\n");
        return kExitConfigError;
    }
    dlove_experiment* raw = nullptr;
    if (dlove_experiment_open(flags.config_path.c_str(), &raw) != DLOVE_OK) {
        std::fprintf(stderr, "dlove: cannot load '%s': %s\n",
                     flags.config_path.c_str(), dlove_last_error());
        return kExitConfigError;
    }
    ExperimentPtr exp(raw, &dlove_experiment_close);
    if (flags.has_seed)
        dlove_experiment_override_seed(exp.get(), flags.seed);
    if (flags.has_out)
        dlove_experiment_override_out_dir(exp.get(), flags.out_dir.c_str());
    if (flags.has_scale)
        dlove_experiment_override_scale(exp.get(), flags.scale);
    dlove_experiment_set_workers(exp.get(), env_workers());
    *out = std::move(exp);
    return kExitOk;
}

int run_stage(const CommonFlags& flags, const std::string& stage) {
    ExperimentPtr exp(nullptr, &dlove_experiment_close);
    if (int rc = open_experiment(flags, &exp))
        return rc;
    if (dlove_status s = dlove_experiment_run(exp.get(), stage.c_str()))
        return fail(stage.c_str(), s);
    char out_dir[4096];
    dlove_experiment_out_dir(exp.get(), out_dir, sizeof(out_dir));
    std::printf("%s/manifest.json\n", out_dir);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Watermark-overwriting attack toolkit (version " +
                 std::string(dlove_version()) + ")"};
    app.require_subcommand(1);
    app.footer("Environment:\n  DLOVE_WORKERS   worker threads for the attack "
               "stage (default 1, merged by input index)\n\n"
               "Exit codes: 0 success, 1 config error, 2 stage failure.");

    struct StageCommand {
        const char* name;
        const char* help;
    };
    const std::vector<StageCommand> stages = {
        {"train-target", "Train the watermarking pipelines under attack"},
        {"train-surrogate", "Train the attacker's surrogate pipeline(s)"},
        {"harvest", "Harvest (watermarked image, payload) pairs from the targets"},
        {"finetune", "Fine-tune the surrogate decoder on harvested pairs"},
        {"attack", "Craft perturbations against the attack set"},
        {"evaluate", "Aggregate attack results into the evaluation matrix"},
    };

    std::vector<std::unique_ptr<CommonFlags>> flag_sets;
    std::string picked_stage;
    for (const StageCommand& sc : stages) {
        auto flags = std::make_unique<CommonFlags>();
        CLI::App* cmd = app.add_subcommand(sc.name, sc.help);
        add_common_flags(cmd, flags.get());
        cmd->callback([&picked_stage, name = std::string(sc.name)] {
            picked_stage = name;
        });
        flag_sets.push_back(std::move(flags));
    }

    auto sweep_flags = std::make_unique<CommonFlags>();
    std::string sweep_axis;
    std::vector<double> sweep_values;
    CLI::App* sweep_cmd = app.add_subcommand(
        "sweep", "Run once per value of one knob and pick the optimum");
    add_common_flags(sweep_cmd, sweep_flags.get());
    sweep_cmd
        ->add_option("--axis", sweep_axis,
                     "Knob to sweep: finetune-epochs | finetune-pairs | epsilon")
        ->required();
    sweep_cmd
        ->add_option("--values", sweep_values,
                     "Comma-separated values for the axis")
        ->required()
        ->delimiter(',');

    auto report_flags = std::make_unique<CommonFlags>();
    std::string report_format = "csv";
    CLI::App* report_cmd = app.add_subcommand(
        "report", "Render the evaluation matrix from a finished run");
    add_common_flags(report_cmd, report_flags.get());
    report_cmd->add_option("--format", report_format,
                           "Report format: csv | text-table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfigError;
    }

    if (!picked_stage.empty()) {
        for (std::size_t i = 0; i < stages.size(); ++i)
            if (picked_stage == stages[i].name)
                return run_stage(*flag_sets[i], picked_stage);
    }

    if (sweep_cmd->parsed()) {
        ExperimentPtr exp(nullptr, &dlove_experiment_close);
        if (int rc = open_experiment(*sweep_flags, &exp))
            return rc;
        if (dlove_status s = dlove_experiment_sweep(
                exp.get(), sweep_axis.c_str(), sweep_values.data(),
                static_cast<int>(sweep_values.size())))
            return fail("sweep", s);
        char out_dir[4096];
        dlove_experiment_out_dir(exp.get(), out_dir, sizeof(out_dir));
        std::printf("%s/manifest.json\n", out_dir);
        return kExitOk;
    }

    if (report_cmd->parsed()) {
        std::string out_dir = report_flags->out_dir;
        if (!report_flags->has_out) {
            // Fall back to the config's output directory.
            ExperimentPtr exp(nullptr, &dlove_experiment_close);
            if (int rc = open_experiment(*report_flags, &exp))
                return rc;
            char buf[4096];
            dlove_experiment_out_dir(exp.get(), buf, sizeof(buf));
            out_dir = buf;
        }
        char path[4096];
        if (dlove_status s = dlove_report(out_dir.c_str(), report_format.c_str(),
                                          path, sizeof(path)))
            return fail("report", s);
        std::printf("%s\n", path);
        return kExitOk;
    }

    std::fprintf(stderr, "dlove: no subcommand selected\n");
    return kExitConfigError;
}
