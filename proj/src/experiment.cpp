#include "experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <thread>

#include "image_io.hpp"
#include "metrics.hpp"
#include "train.hpp"

namespace dlove {

namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string timestamp_utc() {
    const std::time_t now =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string sanitize_stage_name(const std::string& name) {
    std::string out = name;
    for (char& c : out)
        if (c == '/' || c == ' ')
            c = '_';
    return out;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw IoError("failed writing '" + path.string() + "'");
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

std::string fmt4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string fmt1(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string quoted = "\"";
    for (char c : s) {
        if (c == '"')
            quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

// Runs fn(0..n-1) on `workers` threads; item order is observable only
// through the per-index output slots, so the thread count never changes
// results. The first exception wins and cancels the remaining items.
void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    if (n <= 0)
        return;
    if (workers <= 1 || n == 1) {
        for (int i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    auto drain = [&] {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= n)
                return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error)
                    first_error = std::current_exception();
                next.store(n); // cancel remaining items
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int count = std::min(workers, n);
    pool.reserve(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t)
        pool.emplace_back(drain);
    for (std::thread& t : pool)
        t.join();
    if (first_error)
        std::rethrow_exception(first_error);
}

TechniqueProfile technique_from_json(const json& j) {
    if (j.is_string())
        return profile_by_name(j.get<std::string>());
    if (!j.is_object())
        throw FormatError("technique entries must be preset names or objects");
    if (j.contains("preset")) {
        TechniqueProfile p = profile_by_name(j.at("preset").get<std::string>());
        if (j.contains("name")) j.at("name").get_to(p.name);
        if (j.contains("cover_shape")) j.at("cover_shape").get_to(p.cover_shape);
        if (j.contains("watermark_kind")) {
            const auto kind = j.at("watermark_kind").get<std::string>();
            if (kind == "bits")
                p.watermark_kind = Watermark::Kind::Bits;
            else if (kind == "image")
                p.watermark_kind = Watermark::Kind::Image;
            else
                throw InvalidArgument("unknown watermark kind '" + kind + "'");
        }
        if (j.contains("n_bits")) j.at("n_bits").get_to(p.n_bits);
        if (j.contains("wm_shape")) j.at("wm_shape").get_to(p.wm_shape);
        if (j.contains("has_discriminator"))
            j.at("has_discriminator").get_to(p.has_discriminator);
        if (j.contains("noise_layers"))
            p.noise_layers = j.at("noise_layers").get<std::vector<NoiseSpec>>();
        if (j.contains("screen_shoot_robust"))
            j.at("screen_shoot_robust").get_to(p.screen_shoot_robust);
        if (j.contains("arch")) j.at("arch").get_to(p.arch);
        return p;
    }
    return j.get<TechniqueProfile>();
}

int scaled_count(int value, double scale) {
    return std::max(1, static_cast<int>(std::llround(value * scale)));
}

int scaled_dim(int value, double scale) {
    const int m = static_cast<int>(std::llround(value * scale / 4.0)) * 4;
    return std::max(8, m);
}

} // namespace

// ---------------------------------------------------------------------------
// Names and JSON bridges

const char* mode_name(ExperimentMode mode) {
    switch (mode) {
    case ExperimentMode::Whitebox: return "whitebox";
    case ExperimentMode::BlackboxPerTarget: return "blackbox-per-target";
    case ExperimentMode::BlackboxCommon: return "blackbox-common";
    }
    throw InvalidArgument("unknown experiment mode");
}

ExperimentMode mode_from_name(const std::string& name) {
    if (name == "whitebox") return ExperimentMode::Whitebox;
    if (name == "blackbox-per-target") return ExperimentMode::BlackboxPerTarget;
    if (name == "blackbox-common") return ExperimentMode::BlackboxCommon;
    throw InvalidArgument("unknown experiment mode '" + name + "'");
}

void DatasetSpec::validate() const {
    if (train_images < 1)
        throw InvalidArgument("dataset: train_images must be >= 1");
    if (attack_images < 1)
        throw InvalidArgument("dataset: attack_images must be >= 1");
    if (source.kind == DatasetSource::Kind::Directory && source.directory.empty())
        throw InvalidArgument("dataset: directory source needs a path");
}

void CommonSection::validate() const {
    if (wm_bits < 1)
        throw InvalidArgument("common: wm_bits must be >= 1");
    if (io_shape.c != 1 && io_shape.c != 3)
        throw InvalidArgument("common: io_shape must have 1 or 3 channels");
    if (io_shape.h < 8 || io_shape.w < 8 || io_shape.h % 4 != 0 || io_shape.w % 4 != 0)
        throw InvalidArgument("common: io_shape sides must be multiples of 4, >= 8");
    arch.validate();
}

void to_json(json& j, const DatasetSpec& d) {
    j = json{{"train_images", d.train_images}, {"attack_images", d.attack_images}};
    if (d.source.kind == DatasetSource::Kind::Directory) {
        j["source"] = "directory";
        j["directory"] = d.source.directory;
        j["with_replacement"] = d.source.with_replacement;
    } else {
        j["source"] = "synthetic";
    }
}

void from_json(const json& j, DatasetSpec& d) {
    d = DatasetSpec{};
    d.train_images = j.value("train_images", d.train_images);
    d.attack_images = j.value("attack_images", d.attack_images);
    const std::string source = j.value("source", "synthetic");
    if (source == "directory") {
        d.source = DatasetSource::from_directory(j.value("directory", ""),
                                                 j.value("with_replacement", false));
    } else if (source == "synthetic") {
        d.source = DatasetSource::synthetic();
    } else {
        throw InvalidArgument("unknown dataset source '" + source + "'");
    }
}

void to_json(json& j, const CommonSection& c) {
    j = json{{"io_shape", c.io_shape}, {"wm_bits", c.wm_bits}, {"arch", c.arch}};
}

void from_json(const json& j, CommonSection& c) {
    c = CommonSection{};
    if (j.contains("io_shape")) j.at("io_shape").get_to(c.io_shape);
    c.wm_bits = j.value("wm_bits", c.wm_bits);
    if (j.contains("arch")) j.at("arch").get_to(c.arch);
}

void to_json(json& j, const FinetuneBudget& b) {
    j = json{{"epochs", b.epochs},
             {"num_pairs", b.num_pairs},
             {"learning_rate", b.learning_rate}};
}

void from_json(const json& j, FinetuneBudget& b) {
    b = FinetuneBudget{};
    b.epochs = j.value("epochs", b.epochs);
    b.num_pairs = j.value("num_pairs", b.num_pairs);
    b.learning_rate = j.value("learning_rate", b.learning_rate);
    b.seed = 0; // always derived from the global seed
}

void to_json(json& j, const SuccessPolicy& p) {
    j = json{{"removal_threshold", p.removal_threshold},
             {"image_success_threshold", p.image_success_threshold},
             {"image_cosine_min", p.image_cosine_min},
             {"removal_cosine_max", p.removal_cosine_max}};
}

void from_json(const json& j, SuccessPolicy& p) {
    p = SuccessPolicy{};
    p.removal_threshold = j.value("removal_threshold", p.removal_threshold);
    p.image_success_threshold =
        j.value("image_success_threshold", p.image_success_threshold);
    p.image_cosine_min = j.value("image_cosine_min", p.image_cosine_min);
    p.removal_cosine_max = j.value("removal_cosine_max", p.removal_cosine_max);
    p.pyramid_seed = 0; // always derived from the global seed
}

namespace {

std::string loss_name(AttackLoss loss) {
    return loss == AttackLoss::L1 ? "l1" : "mse";
}

AttackLoss loss_from_name(const std::string& name) {
    if (name == "mse") return AttackLoss::Mse;
    if (name == "l1") return AttackLoss::L1;
    throw InvalidArgument("unknown attack loss '" + name + "'");
}

std::string objective_name(AttackObjective o) {
    switch (o) {
    case AttackObjective::WhiteboxFull: return "whitebox-full";
    case AttackObjective::AlgorithmLiteral: return "algorithm-literal";
    case AttackObjective::Blackbox: return "blackbox";
    }
    throw InvalidArgument("unknown attack objective");
}

AttackObjective objective_from_name(const std::string& name) {
    if (name == "whitebox-full") return AttackObjective::WhiteboxFull;
    if (name == "algorithm-literal") return AttackObjective::AlgorithmLiteral;
    if (name == "blackbox") return AttackObjective::Blackbox;
    throw InvalidArgument("unknown attack objective '" + name + "'");
}

} // namespace

void to_json(json& j, const AttackConfig& a) {
    j = json{{"epsilon", a.epsilon},
             {"learning_rate", a.learning_rate},
             {"max_iter", a.max_iter},
             {"loss", loss_name(a.loss)},
             {"objective", objective_name(a.objective)},
             {"check_every", a.check_every},
             {"clamp_pixels", a.clamp_pixels},
             {"quantize_before_verify", a.quantize_before_verify},
             {"policy", a.policy}};
    if (a.escalation)
        j["escalation"] = json{{"epsilon_max", a.escalation->epsilon_max},
                               {"steps", a.escalation->steps}};
}

void from_json(const json& j, AttackConfig& a) {
    a = AttackConfig{};
    a.epsilon = j.value("epsilon", a.epsilon);
    a.learning_rate = j.value("learning_rate", a.learning_rate);
    a.max_iter = j.value("max_iter", a.max_iter);
    if (j.contains("loss")) a.loss = loss_from_name(j.at("loss").get<std::string>());
    if (j.contains("objective"))
        a.objective = objective_from_name(j.at("objective").get<std::string>());
    a.check_every = j.value("check_every", a.check_every);
    a.clamp_pixels = j.value("clamp_pixels", a.clamp_pixels);
    a.quantize_before_verify =
        j.value("quantize_before_verify", a.quantize_before_verify);
    if (j.contains("policy")) j.at("policy").get_to(a.policy);
    if (j.contains("escalation") && !j.at("escalation").is_null()) {
        EscalationSchedule esc;
        esc.epsilon_max = j.at("escalation").value("epsilon_max", esc.epsilon_max);
        esc.steps = j.at("escalation").value("steps", esc.steps);
        a.escalation = esc;
    }
    a.seed = 0; // always derived from the global seed
}

void to_json(json& j, const ReportRow& r) {
    j = json{{"technique", r.technique}, {"epochs", r.epochs},
             {"pairs", r.pairs},         {"pert_limit", r.pert_limit},
             {"psnr", r.psnr},           {"ssim", r.ssim},
             {"lpips_proxy", r.lpips_proxy}, {"mse", r.mse},
             {"ber", r.ber},             {"cosine", r.cosine},
             {"asr", r.asr},             {"removal_rate", r.removal_rate},
             {"count", r.count}};
}

void from_json(const json& j, ReportRow& r) {
    r = ReportRow{};
    j.at("technique").get_to(r.technique);
    j.at("epochs").get_to(r.epochs);
    j.at("pairs").get_to(r.pairs);
    j.at("pert_limit").get_to(r.pert_limit);
    j.at("psnr").get_to(r.psnr);
    j.at("ssim").get_to(r.ssim);
    j.at("lpips_proxy").get_to(r.lpips_proxy);
    j.at("mse").get_to(r.mse);
    j.at("ber").get_to(r.ber);
    j.at("cosine").get_to(r.cosine);
    j.at("asr").get_to(r.asr);
    j.at("removal_rate").get_to(r.removal_rate);
    j.at("count").get_to(r.count);
}

void to_json(json& j, const StageRecord& s) {
    j = json{{"name", s.name},         {"hash", s.hash},
             {"dir", s.dir},           {"artifacts", s.artifacts},
             {"skipped", s.skipped},   {"completed_at", s.completed_at}};
}

void from_json(const json& j, StageRecord& s) {
    s = StageRecord{};
    j.at("name").get_to(s.name);
    j.at("hash").get_to(s.hash);
    j.at("dir").get_to(s.dir);
    j.at("artifacts").get_to(s.artifacts);
    s.skipped = j.value("skipped", false);
    s.completed_at = j.value("completed_at", "");
}

// ---------------------------------------------------------------------------
// ExperimentConfig

void ExperimentConfig::validate() const {
    if (name.empty())
        throw InvalidArgument("experiment: name must not be empty");
    if (out_dir.empty())
        throw InvalidArgument("experiment: out_dir must not be empty");
    if (!(scale > 0.0) || scale > 64.0)
        throw InvalidArgument("experiment: scale must be in (0, 64]");
    if (techniques.empty())
        throw InvalidArgument("experiment: at least one technique is required");
    std::set<std::string> names;
    for (const TechniqueProfile& t : techniques) {
        t.validate();
        if (!names.insert(t.name).second)
            throw InvalidArgument("experiment: duplicate technique name '" +
                                  t.name + "'");
    }
    dataset.validate();
    target_training.validate();
    attack.validate();
    if (mode != ExperimentMode::Whitebox) {
        surrogate_training.validate();
        finetune.validate();
    }
    if (mode == ExperimentMode::BlackboxCommon) {
        common.validate();
        for (const TechniqueProfile& t : techniques) {
            if (t.watermark_kind != Watermark::Kind::Bits)
                throw UnsupportedError(
                    "experiment: blackbox-common members must carry bit payloads "
                    "('" + t.name + "' does not)");
            if (t.n_bits < common.wm_bits)
                throw InvalidArgument(
                    "experiment: member '" + t.name + "' carries " +
                    std::to_string(t.n_bits) + " bits, below the common cap of " +
                    std::to_string(common.wm_bits));
        }
    }
}

ExperimentConfig ExperimentConfig::scaled() const {
    ExperimentConfig sc = *this;
    const double s = scale;
    for (TechniqueProfile& t : sc.techniques) {
        t.cover_shape.h = scaled_dim(t.cover_shape.h, s);
        t.cover_shape.w = scaled_dim(t.cover_shape.w, s);
        if (t.watermark_kind == Watermark::Kind::Image) {
            t.wm_shape.h = t.cover_shape.h;
            t.wm_shape.w = t.cover_shape.w;
        }
    }
    sc.common.io_shape.h = scaled_dim(common.io_shape.h, s);
    sc.common.io_shape.w = scaled_dim(common.io_shape.w, s);
    sc.dataset.train_images = scaled_count(dataset.train_images, s);
    sc.dataset.attack_images = scaled_count(dataset.attack_images, s);
    sc.target_training.epochs = scaled_count(target_training.epochs, s);
    sc.surrogate_training.epochs = scaled_count(surrogate_training.epochs, s);
    sc.finetune.epochs = scaled_count(finetune.epochs, s);
    sc.finetune.num_pairs = scaled_count(finetune.num_pairs, s);
    sc.scale = 1.0;
    return sc;
}

json ExperimentConfig::to_json() const {
    json j;
    j["name"] = name;
    j["mode"] = mode_name(mode);
    j["out_dir"] = out_dir;
    j["seed"] = seed;
    j["scale"] = scale;
    j["techniques"] = techniques;
    j["dataset"] = dataset;
    j["target_training"] = target_training;
    j["surrogate_training"] = surrogate_training;
    j["finetune"] = finetune;
    j["common"] = common;
    j["attack"] = attack;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    try {
        ExperimentConfig c;
        c.name = j.value("name", c.name);
        if (j.contains("mode"))
            c.mode = mode_from_name(j.at("mode").get<std::string>());
        c.out_dir = j.value("out_dir", c.out_dir);
        c.seed = j.value("seed", c.seed);
        c.scale = j.value("scale", c.scale);
        if (!j.contains("techniques"))
            throw InvalidArgument("experiment config needs a 'techniques' list");
        for (const json& t : j.at("techniques"))
            c.techniques.push_back(technique_from_json(t));
        if (j.contains("dataset")) j.at("dataset").get_to(c.dataset);
        if (j.contains("target_training"))
            j.at("target_training").get_to(c.target_training);
        if (j.contains("surrogate_training"))
            j.at("surrogate_training").get_to(c.surrogate_training);
        if (j.contains("finetune")) j.at("finetune").get_to(c.finetune);
        if (j.contains("common")) j.at("common").get_to(c.common);
        if (j.contains("attack")) j.at("attack").get_to(c.attack);
        c.target_training.seed = 0;
        c.target_training.pyramid_seed = 0;
        c.surrogate_training.seed = 0;
        c.surrogate_training.pyramid_seed = 0;
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed experiment config: ") + e.what());
    }
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    return from_json(read_json_file(path));
}

void ExperimentConfig::save(const std::string& path) const {
    write_text_file(path, to_json().dump(2) + "\n");
}

std::uint64_t ExperimentConfig::config_hash() const {
    json j = to_json();
    j.erase("name");
    j.erase("out_dir");
    // Per-stage seeds are always overwritten with values derived from the
    // global seed, so whatever the structs happen to carry is not semantic.
    for (const char* section : {"target_training", "surrogate_training"}) {
        j.at(section).erase("seed");
        j.at(section).erase("pyramid_seed");
    }
    return fnv1a64(j.dump());
}

// ---------------------------------------------------------------------------
// RunManifest

json RunManifest::to_json() const {
    json j;
    j["toolkit_version"] = toolkit_version;
    j["created_at"] = created_at;
    j["out_dir"] = out_dir;
    j["config_hash"] = config_hash;
    j["config"] = config;
    j["stages"] = stages;
    j["rows"] = rows;
    if (sweep) {
        j["sweep"] = json{{"axis", sweep->axis},
                          {"values", sweep->values},
                          {"optimal", sweep->optimal}};
    }
    return j;
}

RunManifest RunManifest::from_json(const json& j) {
    try {
        RunManifest m;
        m.toolkit_version = j.at("toolkit_version").get<std::string>();
        m.created_at = j.value("created_at", "");
        m.out_dir = j.at("out_dir").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.config = j.at("config");
        m.stages = j.at("stages").get<std::vector<StageRecord>>();
        m.rows = j.at("rows").get<std::vector<ReportRow>>();
        if (j.contains("sweep")) {
            SweepSummary s;
            j.at("sweep").at("axis").get_to(s.axis);
            j.at("sweep").at("values").get_to(s.values);
            s.optimal = j.at("sweep")
                            .at("optimal")
                            .get<std::map<std::string, double>>();
            m.sweep = std::move(s);
        }
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed run manifest: ") + e.what());
    }
}

void RunManifest::save(const std::string& path) const {
    write_text_file(path, to_json().dump(2) + "\n");
}

RunManifest RunManifest::load(const std::string& path) {
    RunManifest m = from_json(read_json_file(path));
    const std::uint64_t actual =
        ExperimentConfig::from_json(m.config).config_hash();
    if (hex16(actual) != m.config_hash)
        throw FormatError("run manifest at '" + path +
                          "' does not match its stored config hash");
    for (const StageRecord& s : m.stages)
        for (const std::string& a : s.artifacts)
            if (!fs::exists(fs::path(m.out_dir) / a))
                throw IoError("run manifest lists missing artifact '" + a + "'");
    return m;
}

// ---------------------------------------------------------------------------
// ExperimentRunner

struct ExperimentRunner::StageResult {
    StageRecord record;
    std::string abs_dir;

    std::string artifact(const std::string& rel) const {
        return (fs::path(abs_dir) / rel).string();
    }
};

ExperimentRunner::ExperimentRunner(ExperimentConfig cfg) : config_(std::move(cfg)) {
    config_.validate();
    scaled_ = config_.scaled();
    scaled_.validate();
}

void ExperimentRunner::set_workers(int workers) {
    workers_ = std::clamp(workers, 1, 64);
}

std::vector<std::string> ExperimentRunner::stage_plan() const {
    if (config_.mode == ExperimentMode::Whitebox)
        return {"train-target", "attack", "evaluate"};
    return {"train-target", "train-surrogate", "harvest", "finetune", "attack",
            "evaluate"};
}

ExperimentRunner::StageResult ExperimentRunner::ensure_stage(
    const std::string& name, const json& params,
    const std::vector<const StageResult*>& parents,
    const std::function<void(const std::string& dir,
                             std::vector<std::string>& artifacts)>& body) {
    std::string key = name;
    key += '\n';
    key += params.dump();
    for (const StageResult* p : parents) {
        key += '\n';
        key += p->record.hash;
    }
    key += '\n';
    key += kToolkitVersion;
    const std::string hash = hex16(fnv1a64(key));

    StageResult result;
    result.record.name = name;
    result.record.hash = hash;
    const std::string rel_dir = "stages/" + sanitize_stage_name(name) + "-" + hash;
    result.record.dir = rel_dir;
    const fs::path out_root(config_.out_dir);
    const fs::path abs_dir = out_root / rel_dir;
    result.abs_dir = abs_dir.string();

    auto log_stage = [&](const StageRecord& record) {
        for (const StageRecord& existing : stage_log_)
            if (existing.name == record.name && existing.hash == record.hash)
                return;
        stage_log_.push_back(record);
    };

    const fs::path marker = abs_dir / "stage.json";
    if (fs::exists(marker)) {
        try {
            const json j = read_json_file(marker);
            if (j.value("hash", "") == hash) {
                bool complete = true;
                std::vector<std::string> artifacts;
                for (const json& a : j.at("artifacts")) {
                    artifacts.push_back(a.get<std::string>());
                    if (!fs::exists(out_root / artifacts.back()))
                        complete = false;
                }
                if (complete) {
                    result.record.artifacts = std::move(artifacts);
                    result.record.skipped = true;
                    result.record.completed_at = j.value("completed_at", "");
                    log_stage(result.record);
                    return result;
                }
            }
        } catch (const std::exception&) {
            // fall through: stale or unreadable marker means rebuild
        }
    }

    std::error_code ec;
    fs::remove_all(abs_dir, ec);
    fs::create_directories(abs_dir);
    std::vector<std::string> artifacts_in_stage;
    try {
        body(result.abs_dir, artifacts_in_stage);
    } catch (const std::exception& e) {
        throw StateError("stage '" + name + "' failed: " + e.what());
    }
    for (const std::string& rel : artifacts_in_stage) {
        result.record.artifacts.push_back(
            (fs::path(rel_dir) / rel).generic_string());
        if (!fs::exists(out_root / result.record.artifacts.back()))
            throw StateError("stage '" + name + "' did not produce promised artifact '" +
                             rel + "'");
    }
    result.record.completed_at = timestamp_utc();
    json marker_json{{"name", name},
                     {"hash", hash},
                     {"params", params},
                     {"artifacts", result.record.artifacts},
                     {"completed_at", result.record.completed_at}};
    write_text_file(marker, marker_json.dump(2) + "\n");
    log_stage(result.record);
    return result;
}

namespace {

// Stage seeds derive from the global seed and the stage's full name, so any
// stage can be recomputed independently of execution order.
Seed stage_seed_for(Seed global, const std::string& stage_name) {
    return derive_seed(global, stage_name.c_str());
}

struct TrainedStageStats {
    double held_out_accuracy = 0.0;
};

void train_into(const TechniqueProfile& profile, const TrainConfig& section,
                const DatasetSpec& data, int count, Seed stage_seed,
                const std::string& dir, const std::string& ckpt_name,
                std::vector<std::string>& artifacts) {
    const Dataset train = build_dataset(data.source, static_cast<std::size_t>(count),
                                        profile.cover_shape,
                                        derive_seed(stage_seed, "data"));
    Pipeline pipeline = build_pipeline(profile, derive_seed(stage_seed, "init"));
    TrainConfig cfg = section;
    cfg.seed = derive_seed(stage_seed, "train");
    cfg.pyramid_seed = derive_seed(stage_seed, "pyramid");
    train_pipeline(pipeline, train, cfg);
    const int eval_count = std::max(1, count / 10);
    const Dataset held_out =
        build_dataset(data.source, static_cast<std::size_t>(eval_count),
                      profile.cover_shape, derive_seed(stage_seed, "eval"));
    const double acc =
        evaluate_pipeline(pipeline, held_out, derive_seed(stage_seed, "eval-payloads"));
    save_pipeline(pipeline, (fs::path(dir) / ckpt_name).string());
    write_text_file(fs::path(dir) / "stats.json",
                    json{{"held_out_accuracy", acc},
                         {"held_out_images", eval_count}}
                            .dump(2) +
                        "\n");
    artifacts.push_back(ckpt_name);
    artifacts.push_back("stats.json");
}

} // namespace

std::vector<ReportRow> ExperimentRunner::execute_graph(const ExperimentConfig& sc,
                                                       const std::string& until) {
    const std::vector<std::string> plan = stage_plan();
    const auto it = std::find(plan.begin(), plan.end(), until);
    if (it == plan.end()) {
        static const std::set<std::string> known{
            "train-target", "train-surrogate", "harvest",
            "finetune",     "attack",          "evaluate"};
        if (known.count(until))
            throw InvalidArgument("stage '" + until + "' is not part of mode '" +
                                  mode_name(config_.mode) + "'");
        throw InvalidArgument("unknown stage '" + until + "'");
    }
    const std::size_t upto = static_cast<std::size_t>(it - plan.begin());
    auto wants = [&](const char* kind) {
        const auto k = std::find(plan.begin(), plan.end(), kind);
        return k != plan.end() &&
               static_cast<std::size_t>(k - plan.begin()) <= upto;
    };

    const bool whitebox = sc.mode == ExperimentMode::Whitebox;
    const bool common_mode = sc.mode == ExperimentMode::BlackboxCommon;
    const std::size_t n_tech = sc.techniques.size();

    // --- train-target -------------------------------------------------------
    std::vector<StageResult> targets;
    targets.reserve(n_tech);
    for (const TechniqueProfile& t : sc.techniques) {
        const std::string name = "train-target/" + t.name;
        const Seed ss = stage_seed_for(sc.seed, name);
        json params{{"seed", ss},
                    {"profile", t},
                    {"train", sc.target_training},
                    {"dataset", sc.dataset},
                    {"count", sc.dataset.train_images}};
        targets.push_back(ensure_stage(
            name, params, {}, [&](const std::string& dir, std::vector<std::string>& arts) {
                train_into(t, sc.target_training, sc.dataset,
                           sc.dataset.train_images, ss, dir, "target.ckpt", arts);
            }));
    }
    if (!wants("attack") && !wants("train-surrogate"))
        return {};

    // --- train-surrogate ----------------------------------------------------
    std::vector<StageResult> surrogates; // per technique, or a single common one
    if (!whitebox && wants("train-surrogate")) {
        if (common_mode) {
            const std::string name = "train-surrogate/common";
            const Seed ss = stage_seed_for(sc.seed, name);
            json params{{"seed", ss},
                        {"common", sc.common},
                        {"train", sc.surrogate_training},
                        {"dataset", sc.dataset},
                        {"count", sc.dataset.train_images},
                        {"members", sc.techniques}};
            surrogates.push_back(ensure_stage(
                name, params, {},
                [&](const std::string& dir, std::vector<std::string>& arts) {
                    CommonSurrogateSpec spec;
                    spec.io_shape = sc.common.io_shape;
                    spec.wm_bits = sc.common.wm_bits;
                    spec.member_targets = sc.techniques;
                    spec.arch = sc.common.arch;
                    const Dataset data = build_dataset(
                        sc.dataset.source,
                        static_cast<std::size_t>(sc.dataset.train_images),
                        spec.io_shape, derive_seed(ss, "data"));
                    TrainConfig cfg = sc.surrogate_training;
                    cfg.seed = derive_seed(ss, "train");
                    cfg.pyramid_seed = derive_seed(ss, "pyramid");
                    Pipeline surrogate = build_common_surrogate(spec, data, cfg);
                    const Dataset held_out = build_dataset(
                        sc.dataset.source,
                        static_cast<std::size_t>(
                            std::max(1, sc.dataset.train_images / 10)),
                        spec.io_shape, derive_seed(ss, "eval"));
                    const double acc = evaluate_pipeline(
                        surrogate, held_out, derive_seed(ss, "eval-payloads"));
                    save_pipeline(surrogate,
                                  (fs::path(dir) / "surrogate.ckpt").string());
                    write_text_file(fs::path(dir) / "stats.json",
                                    json{{"held_out_accuracy", acc}}.dump(2) + "\n");
                    arts.push_back("surrogate.ckpt");
                    arts.push_back("stats.json");
                }));
        } else {
            for (const TechniqueProfile& t : sc.techniques) {
                const std::string name = "train-surrogate/" + t.name;
                const Seed ss = stage_seed_for(sc.seed, name);
                json params{{"seed", ss},
                            {"profile", t},
                            {"train", sc.surrogate_training},
                            {"dataset", sc.dataset},
                            {"count", sc.dataset.train_images}};
                surrogates.push_back(ensure_stage(
                    name, params, {},
                    [&](const std::string& dir, std::vector<std::string>& arts) {
                        train_into(t, sc.surrogate_training, sc.dataset,
                                   sc.dataset.train_images, ss, dir,
                                   "surrogate.ckpt", arts);
                    }));
            }
        }
    }
    if (!whitebox && !wants("harvest"))
        return {};

    // --- harvest ------------------------------------------------------------
    std::vector<StageResult> harvests;
    if (!whitebox && wants("harvest")) {
        for (std::size_t i = 0; i < n_tech; ++i) {
            const TechniqueProfile& t = sc.techniques[i];
            const std::string name = "harvest/" + t.name;
            const Seed ss = stage_seed_for(sc.seed, name);
            json params{{"seed", ss},
                        {"num_pairs", sc.finetune.num_pairs},
                        {"dataset", sc.dataset}};
            const StageResult& target_stage = targets[i];
            harvests.push_back(ensure_stage(
                name, params, {&target_stage},
                [&](const std::string& dir, std::vector<std::string>& arts) {
                    const Pipeline target =
                        load_pipeline(target_stage.artifact("target.ckpt"));
                    const Dataset covers = build_dataset(
                        sc.dataset.source,
                        static_cast<std::size_t>(sc.finetune.num_pairs),
                        target.profile.cover_shape, derive_seed(ss, "covers"));
                    const std::vector<AttackPair> pairs =
                        harvest_pairs(target, covers, sc.finetune.num_pairs,
                                      derive_seed(ss, "payloads"));
                    save_pairs(pairs, (fs::path(dir) / "pairs").string());
                    arts.push_back("pairs/pairs.json");
                }));
        }
    }
    if (!whitebox && !wants("finetune"))
        return {};

    // --- finetune -----------------------------------------------------------
    std::vector<StageResult> finetunes; // per technique, or a single pooled one
    if (!whitebox && wants("finetune")) {
        if (common_mode) {
            const std::string name = "finetune/common";
            const Seed ss = stage_seed_for(sc.seed, name);
            json params{{"seed", ss}, {"budget", sc.finetune}};
            std::vector<const StageResult*> parents{&surrogates.front()};
            for (const StageResult& h : harvests)
                parents.push_back(&h);
            finetunes.push_back(ensure_stage(
                name, params, parents,
                [&](const std::string& dir, std::vector<std::string>& arts) {
                    const Pipeline surrogate =
                        load_pipeline(surrogates.front().artifact("surrogate.ckpt"));
                    std::vector<AttackPair> pooled;
                    for (const StageResult& h : harvests) {
                        const std::vector<AttackPair> member =
                            load_pairs(h.artifact("pairs"));
                        for (const AttackPair& p : member)
                            pooled.push_back(adapt_pair_for(surrogate, p));
                    }
                    FinetuneBudget budget = sc.finetune;
                    budget.num_pairs = static_cast<int>(pooled.size());
                    budget.seed = derive_seed(ss, "finetune");
                    const double before = decoder_pair_loss(surrogate, pooled);
                    const Pipeline tuned = finetune_common(surrogate, pooled, budget);
                    const double after = decoder_pair_loss(tuned, pooled);
                    save_pipeline(tuned, (fs::path(dir) / "tuned.ckpt").string());
                    write_text_file(
                        fs::path(dir) / "stats.json",
                        json{{"pair_loss_before", before},
                             {"pair_loss_after", after},
                             {"pooled_pairs", pooled.size()},
                             {"pair_accuracy", pair_accuracy(tuned, pooled)}}
                                .dump(2) +
                            "\n");
                    arts.push_back("tuned.ckpt");
                    arts.push_back("stats.json");
                }));
        } else {
            for (std::size_t i = 0; i < n_tech; ++i) {
                const TechniqueProfile& t = sc.techniques[i];
                const std::string name = "finetune/" + t.name;
                const Seed ss = stage_seed_for(sc.seed, name);
                json params{{"seed", ss}, {"budget", sc.finetune}};
                const StageResult& surrogate_stage = surrogates[i];
                const StageResult& harvest_stage = harvests[i];
                finetunes.push_back(ensure_stage(
                    name, params, {&surrogate_stage, &harvest_stage},
                    [&](const std::string& dir, std::vector<std::string>& arts) {
                        const Pipeline surrogate = load_pipeline(
                            surrogate_stage.artifact("surrogate.ckpt"));
                        const std::vector<AttackPair> pairs =
                            load_pairs(harvest_stage.artifact("pairs"));
                        FinetuneBudget budget = sc.finetune;
                        budget.seed = derive_seed(ss, "finetune");
                        const double before = decoder_pair_loss(
                            surrogate, pairs, derive_seed(budget.seed, "pyramid"));
                        const Pipeline tuned =
                            finetune_decoder(surrogate, pairs, budget);
                        const double after = decoder_pair_loss(
                            tuned, pairs, derive_seed(budget.seed, "pyramid"));
                        save_pipeline(tuned,
                                      (fs::path(dir) / "tuned.ckpt").string());
                        write_text_file(
                            fs::path(dir) / "stats.json",
                            json{{"pair_loss_before", before},
                                 {"pair_loss_after", after},
                                 {"pair_accuracy", pair_accuracy(tuned, pairs)}}
                                    .dump(2) +
                                "\n");
                        arts.push_back("tuned.ckpt");
                        arts.push_back("stats.json");
                    }));
            }
        }
    }
    if (!wants("attack"))
        return {};

    // --- attack -------------------------------------------------------------
    AttackConfig atk = sc.attack;
    atk.policy.pyramid_seed = derive_seed(sc.seed, "policy-pyramid");
    std::vector<StageResult> attacks;
    for (std::size_t i = 0; i < n_tech; ++i) {
        const TechniqueProfile& t = sc.techniques[i];
        const std::string name = "attack/" + t.name;
        const Seed ss = stage_seed_for(sc.seed, name);
        json params{{"seed", ss},
                    {"attack", atk},
                    {"policy_pyramid_seed", atk.policy.pyramid_seed},
                    {"count", sc.dataset.attack_images},
                    {"dataset", sc.dataset},
                    {"mode", mode_name(sc.mode)}};
        std::vector<const StageResult*> parents{&targets[i]};
        const StageResult* tune_stage = nullptr;
        if (!whitebox) {
            tune_stage = common_mode ? &finetunes.front() : &finetunes[i];
            parents.push_back(tune_stage);
        }
        const StageResult& target_stage = targets[i];
        attacks.push_back(ensure_stage(
            name, params, parents,
            [&](const std::string& dir, std::vector<std::string>& arts) {
                const Pipeline target =
                    load_pipeline(target_stage.artifact("target.ckpt"));
                std::optional<Pipeline> surrogate;
                if (tune_stage)
                    surrogate = load_pipeline(tune_stage->artifact("tuned.ckpt"));
                const int n = sc.dataset.attack_images;
                const Dataset covers = build_dataset(
                    sc.dataset.source, static_cast<std::size_t>(n),
                    target.profile.cover_shape, derive_seed(ss, "covers"));
                const std::vector<AttackPair> pairs = harvest_pairs(
                    target, covers, n, derive_seed(ss, "payloads"));
                fs::create_directories(fs::path(dir) / "attacked");

                const TechniqueProfile& beta_profile =
                    surrogate ? surrogate->profile : target.profile;
                std::vector<json> per_image(static_cast<std::size_t>(n));
                parallel_for(n, workers_, [&](int idx) {
                    const std::size_t u = static_cast<std::size_t>(idx);
                    const Image& W = pairs[u].watermarked;
                    const Watermark& alpha = pairs[u].wm;
                    Watermark beta;
                    for (int k = 0;; ++k) {
                        beta = beta_profile.sample_watermark(
                            derive_seed(ss, "beta", static_cast<Seed>(idx) * 31 + k));
                        if (!(beta == alpha) || k >= 16)
                            break;
                    }
                    AttackConfig acfg = atk;
                    acfg.seed = derive_seed(ss, "craft", static_cast<Seed>(idx));
                    AttackResult r =
                        surrogate ? attack_blackbox(*surrogate, target, W, beta,
                                                    acfg, &alpha)
                                  : attack_whitebox(target, W, alpha, beta, acfg);
                    double cosine_val = 0.0;
                    if (common_mode) {
                        // The cap means the attacker claims only the first
                        // wm_bits positions; judge the overwrite there.
                        const std::size_t cap =
                            static_cast<std::size_t>(sc.common.wm_bits);
                        const Watermark prefix = Watermark::from_bits(
                            {r.extracted.bits.begin(),
                             r.extracted.bits.begin() + static_cast<long>(cap)});
                        r.success = prefix == beta;
                        cosine_val = cosine_similarity(prefix, beta);
                    } else {
                        cosine_val = cosine_similarity(r.extracted, beta);
                    }
                    r.metrics.mse = mse(W, r.attacked);
                    r.metrics.psnr = psnr(W, r.attacked);
                    r.metrics.ssim = ssim(W, r.attacked);
                    r.metrics.lpips_proxy =
                        lpips_proxy(W, r.attacked, acfg.policy.pyramid_seed);
                    r.metrics.ber = alpha.is_bits() ? ber(r.extracted, alpha) : 0.0;
                    r.metrics.cosine = cosine_val;
                    char img_name[32];
                    std::snprintf(img_name, sizeof(img_name), "attacked/img-%03d.png",
                                  idx);
                    Image png = r.attacked;
                    png.clamp01(); // files cannot carry out-of-range samples
                    save_image(png, (fs::path(dir) / img_name).string());
                    per_image[u] = json{{"index", idx},
                                        {"success", r.success},
                                        {"removal", r.removal},
                                        {"iterations", r.iterations_used},
                                        {"epsilon_used", r.epsilon_used},
                                        {"psnr", r.metrics.psnr},
                                        {"ssim", r.metrics.ssim},
                                        {"lpips_proxy", r.metrics.lpips_proxy},
                                        {"mse", r.metrics.mse},
                                        {"ber", r.metrics.ber},
                                        {"cosine", r.metrics.cosine},
                                        {"image", img_name}};
                });
                json results{{"technique", t.name},
                             {"mode", mode_name(sc.mode)},
                             {"epsilon", atk.epsilon},
                             {"images", per_image}};
                write_text_file(fs::path(dir) / "results.json",
                                results.dump(2) + "\n");
                arts.push_back("results.json");
                for (int idx = 0; idx < n; ++idx) {
                    char img_name[32];
                    std::snprintf(img_name, sizeof(img_name), "attacked/img-%03d.png",
                                  idx);
                    arts.push_back(img_name);
                }
            }));
    }
    if (!wants("evaluate"))
        return {};

    // --- evaluate -----------------------------------------------------------
    const int row_epochs = whitebox ? 0 : sc.finetune.epochs;
    const int row_pairs = whitebox ? 0 : sc.finetune.num_pairs;
    const std::string name = "evaluate";
    const Seed ss = stage_seed_for(sc.seed, name);
    json tech_names = json::array();
    for (const TechniqueProfile& t : sc.techniques)
        tech_names.push_back(t.name);
    json params{{"seed", ss},
                {"techniques", tech_names},
                {"epochs", row_epochs},
                {"pairs", row_pairs},
                {"pert_limit", atk.epsilon}};
    std::vector<const StageResult*> parents;
    for (const StageResult& a : attacks)
        parents.push_back(&a);
    const StageResult eval_stage = ensure_stage(
        name, params, parents,
        [&](const std::string& dir, std::vector<std::string>& arts) {
            json rows = json::array();
            for (std::size_t i = 0; i < n_tech; ++i) {
                const json results =
                    read_json_file(attacks[i].artifact("results.json"));
                std::vector<AttackResult> skeletons;
                for (const json& row : results.at("images")) {
                    AttackResult r;
                    r.success = row.at("success").get<bool>();
                    r.removal = row.at("removal").get<bool>();
                    r.metrics.psnr = row.at("psnr").get<double>();
                    r.metrics.ssim = row.at("ssim").get<double>();
                    r.metrics.lpips_proxy = row.at("lpips_proxy").get<double>();
                    r.metrics.mse = row.at("mse").get<double>();
                    r.metrics.ber = row.at("ber").get<double>();
                    r.metrics.cosine = row.at("cosine").get<double>();
                    skeletons.push_back(std::move(r));
                }
                const AggregateReport agg = aggregate(skeletons);
                ReportRow out;
                out.technique = sc.techniques[i].name;
                out.epochs = row_epochs;
                out.pairs = row_pairs;
                out.pert_limit = atk.epsilon;
                out.psnr = agg.means.psnr;
                out.ssim = agg.means.ssim;
                out.lpips_proxy = agg.means.lpips_proxy;
                out.mse = agg.means.mse;
                out.ber = agg.means.ber;
                out.cosine = agg.means.cosine;
                out.asr = agg.asr;
                out.removal_rate = agg.removal_rate;
                out.count = agg.count;
                rows.push_back(out);
            }
            write_text_file(fs::path(dir) / "results.json",
                            json{{"rows", rows}}.dump(2) + "\n");
            arts.push_back("results.json");
        });

    const json results = read_json_file(fs::path(eval_stage.abs_dir) / "results.json");
    return results.at("rows").get<std::vector<ReportRow>>();
}

RunManifest ExperimentRunner::run_until(const std::string& stage) {
    stage_log_.clear();
    const std::vector<ReportRow> rows = execute_graph(scaled_, stage);
    RunManifest manifest;
    manifest.created_at = timestamp_utc();
    manifest.out_dir = config_.out_dir;
    manifest.config_hash = hex16(config_.config_hash());
    manifest.config = config_.to_json();
    manifest.stages = stage_log_;
    manifest.rows = rows;
    manifest.save((fs::path(config_.out_dir) / "manifest.json").string());
    return manifest;
}

RunManifest ExperimentRunner::run() { return run_until("evaluate"); }

RunManifest ExperimentRunner::sweep(const std::string& axis,
                                    const std::vector<double>& values) {
    if (values.empty())
        throw InvalidArgument("sweep: values list must not be empty");
    const bool finetune_axis =
        axis == "finetune-epochs" || axis == "finetune-pairs";
    if (!finetune_axis && axis != "epsilon")
        throw InvalidArgument("sweep: unknown axis '" + axis + "'");
    if (finetune_axis && config_.mode == ExperimentMode::Whitebox)
        throw InvalidArgument("sweep: axis '" + axis +
                              "' does not apply to whitebox mode");

    std::vector<ExperimentConfig> variants;
    variants.reserve(values.size());
    for (double v : values) {
        ExperimentConfig sc = scaled_;
        if (axis == "finetune-epochs") {
            sc.finetune.epochs = static_cast<int>(std::llround(v));
        } else if (axis == "finetune-pairs") {
            sc.finetune.num_pairs = static_cast<int>(std::llround(v));
        } else {
            sc.attack.epsilon = v;
        }
        sc.validate(); // fail fast before any stage runs
        variants.push_back(std::move(sc));
    }

    stage_log_.clear();
    std::vector<ReportRow> all_rows;
    for (const ExperimentConfig& sc : variants) {
        std::vector<ReportRow> rows = execute_graph(sc, "evaluate");
        all_rows.insert(all_rows.end(), rows.begin(), rows.end());
    }

    SweepSummary summary;
    summary.axis = axis;
    summary.values = values;
    for (const TechniqueProfile& t : config_.techniques) {
        double max_asr = 0.0;
        std::vector<std::pair<double, double>> points; // (value, asr)
        std::size_t row_idx = 0;
        for (std::size_t vi = 0; vi < values.size(); ++vi) {
            for (std::size_t ti = 0; ti < config_.techniques.size(); ++ti, ++row_idx) {
                if (config_.techniques[ti].name != t.name)
                    continue;
                points.emplace_back(values[vi], all_rows[row_idx].asr);
                max_asr = std::max(max_asr, all_rows[row_idx].asr);
            }
        }
        double best = points.front().first;
        bool found = false;
        for (const auto& [value, asr] : points) {
            if (asr + 2.0 >= max_asr && (!found || value < best)) {
                best = value;
                found = true;
            }
        }
        summary.optimal[t.name] = best;
    }

    RunManifest manifest;
    manifest.created_at = timestamp_utc();
    manifest.out_dir = config_.out_dir;
    manifest.config_hash = hex16(config_.config_hash());
    manifest.config = config_.to_json();
    manifest.stages = stage_log_;
    manifest.rows = all_rows;
    manifest.sweep = std::move(summary);
    manifest.save((fs::path(config_.out_dir) / "manifest.json").string());
    return manifest;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::vector<std::vector<std::string>> render_cells(const RunManifest& manifest) {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"Technique", "Epoch", "Image", "PertLimit", "PSNR", "SSIM",
                     "LPIPS_proxy", "MSE", "ASR", "RemovalRate"});
    for (const ReportRow& r : manifest.rows) {
        cells.push_back({r.technique, std::to_string(r.epochs),
                         std::to_string(r.pairs), fmt4(r.pert_limit), fmt4(r.psnr),
                         fmt4(r.ssim), fmt4(r.lpips_proxy), fmt4(r.mse), fmt1(r.asr),
                         fmt1(r.removal_rate)});
    }
    return cells;
}

} // namespace

std::string write_report(const RunManifest& manifest, const std::string& format) {
    if (manifest.rows.empty())
        throw StateError("incomplete manifest: no evaluation rows to report");
    const std::vector<std::vector<std::string>> cells = render_cells(manifest);
    const fs::path out_root(manifest.out_dir);
    if (format == "csv") {
        std::string text;
        for (const std::vector<std::string>& row : cells) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (i)
                    text += ',';
                text += csv_field(row[i]);
            }
            text += '\n';
        }
        const fs::path path = out_root / "report.csv";
        write_text_file(path, text);
        return path.string();
    }
    if (format == "text-table") {
        std::vector<std::size_t> widths(cells.front().size(), 0);
        for (const std::vector<std::string>& row : cells)
            for (std::size_t i = 0; i < row.size(); ++i)
                widths[i] = std::max(widths[i], row[i].size());
        std::string text;
        auto emit_row = [&](const std::vector<std::string>& row) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (i)
                    text += "  ";
                const std::size_t pad = widths[i] - row[i].size();
                if (i == 0) { // technique column is left-aligned
                    text += row[i];
                    text.append(pad, ' ');
                } else {
                    text.append(pad, ' ');
                    text += row[i];
                }
            }
            text += '\n';
        };
        emit_row(cells.front());
        for (std::size_t i = 0; i < widths.size(); ++i) {
            if (i)
                text += "  ";
            text.append(widths[i], '-');
        }
        text += '\n';
        for (std::size_t r = 1; r < cells.size(); ++r)
            emit_row(cells[r]);
        const fs::path path = out_root / "report.txt";
        write_text_file(path, text);
        return path.string();
    }
    throw InvalidArgument("unknown report format '" + format +
                          "' (expected 'csv' or 'text-table')");
}

} // namespace dlove
