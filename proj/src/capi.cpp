#include "dlove/dlove.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>

#include "experiment.hpp"

using namespace dlove;

// The C boundary: every entry point catches, records the message in a
// thread-local slot, and maps the error taxonomy onto status codes 1:1.

namespace {

thread_local std::string t_last_error;

void copy_out(const std::string& s, char* buf, int cap) {
    if (!buf || cap <= 0)
        return;
    const std::size_t n = std::min(s.size(), static_cast<std::size_t>(cap - 1));
    std::memcpy(buf, s.data(), n);
    buf[n] = '\0';
}

dlove_status record(dlove_status status, const std::string& message) {
    t_last_error = message;
    return status;
}

template <typename Fn>
dlove_status guarded(Fn&& fn) {
    try {
        fn();
        return DLOVE_OK;
    } catch (const InvalidArgument& e) {
        return record(DLOVE_ERR_INVALID_ARGUMENT, e.what());
    } catch (const IoError& e) {
        return record(DLOVE_ERR_IO, e.what());
    } catch (const FormatError& e) {
        return record(DLOVE_ERR_FORMAT, e.what());
    } catch (const UnsupportedError& e) {
        return record(DLOVE_ERR_UNSUPPORTED, e.what());
    } catch (const ShapeError& e) {
        return record(DLOVE_ERR_SHAPE, e.what());
    } catch (const StateError& e) {
        return record(DLOVE_ERR_STATE, e.what());
    } catch (const DivergenceError& e) {
        return record(DLOVE_ERR_DIVERGENCE, e.what());
    } catch (const std::exception& e) {
        return record(DLOVE_ERR_INTERNAL, e.what());
    } catch (...) {
        return record(DLOVE_ERR_INTERNAL, "unknown error");
    }
}

dlove_status require(bool ok, const char* message) {
    return ok ? DLOVE_OK : record(DLOVE_ERR_INVALID_ARGUMENT, message);
}

} // namespace

struct dlove_experiment {
    ExperimentConfig config;
    int workers = 1;
};

extern "C" {

const char* dlove_version(void) { return kToolkitVersion; }

const char* dlove_last_error(void) { return t_last_error.c_str(); }

dlove_status dlove_experiment_open(const char* config_path,
                                   dlove_experiment** out) {
    if (dlove_status s = require(config_path && out,
                                 "dlove_experiment_open: null argument"))
        return s;
    *out = nullptr;
    return guarded([&] {
        auto exp = std::make_unique<dlove_experiment>();
        exp->config = ExperimentConfig::load(config_path);
        *out = exp.release();
    });
}

dlove_status dlove_experiment_open_json(const char* config_json,
                                        dlove_experiment** out) {
    if (dlove_status s = require(config_json && out,
                                 "dlove_experiment_open_json: null argument"))
        return s;
    *out = nullptr;
    return guarded([&] {
        json j;
        try {
            j = json::parse(config_json);
        } catch (const json::exception& e) {
            throw FormatError(std::string("malformed experiment config: ") +
                              e.what());
        }
        auto exp = std::make_unique<dlove_experiment>();
        exp->config = ExperimentConfig::from_json(j);
        *out = exp.release();
    });
}

void dlove_experiment_close(dlove_experiment* exp) { delete exp; }

dlove_status dlove_experiment_override_seed(dlove_experiment* exp,
                                            uint64_t seed) {
    if (dlove_status s = require(exp, "override_seed: null experiment"))
        return s;
    exp->config.seed = seed;
    return DLOVE_OK;
}

dlove_status dlove_experiment_override_out_dir(dlove_experiment* exp,
                                               const char* out_dir) {
    if (dlove_status s = require(exp && out_dir && out_dir[0] != '\0',
                                 "override_out_dir: null or empty argument"))
        return s;
    exp->config.out_dir = out_dir;
    return DLOVE_OK;
}

dlove_status dlove_experiment_override_scale(dlove_experiment* exp,
                                             double scale) {
    if (dlove_status s = require(exp, "override_scale: null experiment"))
        return s;
    // A bad scale can never become valid later, so reject it here rather
    // than at run time. Bounds match ExperimentConfig::validate.
    if (dlove_status s = require(std::isfinite(scale) && scale > 0.0 &&
                                     scale <= 64.0,
                                 "override_scale: scale must lie in (0, 64]"))
        return s;
    exp->config.scale = scale;
    return DLOVE_OK;
}

dlove_status dlove_experiment_set_workers(dlove_experiment* exp, int workers) {
    if (dlove_status s = require(exp, "set_workers: null experiment"))
        return s;
    exp->workers = workers;
    return DLOVE_OK;
}

dlove_status dlove_experiment_run(dlove_experiment* exp, const char* stage) {
    if (dlove_status s = require(exp && stage, "run: null argument"))
        return s;
    return guarded([&] {
        ExperimentRunner runner(exp->config);
        runner.set_workers(exp->workers);
        runner.run_until(stage);
    });
}

dlove_status dlove_experiment_sweep(dlove_experiment* exp, const char* axis,
                                    const double* values, int count) {
    if (dlove_status s = require(exp && axis, "sweep: null argument"))
        return s;
    if (dlove_status s =
            require(values != nullptr || count == 0, "sweep: null values"))
        return s;
    return guarded([&] {
        ExperimentRunner runner(exp->config);
        runner.set_workers(exp->workers);
        runner.sweep(axis, std::vector<double>(values, values + count));
    });
}

dlove_status dlove_experiment_out_dir(const dlove_experiment* exp,
                                      char* path_buf, int path_cap) {
    if (dlove_status s = require(exp && path_buf && path_cap > 0,
                                 "out_dir: null argument"))
        return s;
    copy_out(exp->config.out_dir, path_buf, path_cap);
    return DLOVE_OK;
}

dlove_status dlove_report(const char* out_dir, const char* format,
                          char* path_buf, int path_cap) {
    if (dlove_status s = require(out_dir && format, "report: null argument"))
        return s;
    return guarded([&] {
        const std::filesystem::path manifest_path =
            std::filesystem::path(out_dir) / "manifest.json";
        if (!std::filesystem::exists(manifest_path))
            throw StateError("no manifest found under '" + std::string(out_dir) +
                             "' — run an experiment first");
        const RunManifest manifest = RunManifest::load(manifest_path.string());
        const std::string path = write_report(manifest, format);
        copy_out(path, path_buf, path_cap);
    });
}

} // extern "C"
