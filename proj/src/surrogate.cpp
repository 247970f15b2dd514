#include "surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "image_io.hpp"
#include "json.hpp"
#include "metrics.hpp"
#include "nn/pyramid.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace dlove {

namespace {

double stable_sigmoid(double z) {
    if (z >= 0.0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Shared precondition for fine-tuning and evaluation: the pair must fit the
// pipeline's input and payload contract exactly.
void require_pair_fits(const AttackPair& pair, const Pipeline& pipeline,
                       const char* what) {
    require_valid_image(pair.watermarked, what);
    pair.wm.validate(what);
    const TechniqueProfile& prof = pipeline.profile;
    if (pair.watermarked.shape() != prof.cover_shape)
        throw ShapeError(std::string(what) + ": pair image " +
                         pair.watermarked.shape().str() +
                         " does not match pipeline input " +
                         prof.cover_shape.str());
    if (pair.wm.kind != prof.watermark_kind)
        throw InvalidArgument(std::string(what) +
                              ": pair payload kind does not match the pipeline");
    if (pair.wm.is_bits()) {
        if (pair.wm.bits.size() != static_cast<std::size_t>(prof.n_bits))
            throw ShapeError(std::string(what) + ": pair carries " +
                             std::to_string(pair.wm.bits.size()) +
                             " bits but the pipeline decodes " +
                             std::to_string(prof.n_bits));
    } else if (pair.wm.image.shape() != prof.wm_shape) {
        throw ShapeError(std::string(what) + ": pair payload " +
                         pair.wm.image.shape().str() +
                         " does not match the pipeline payload " +
                         prof.wm_shape.str());
    }
}

// Loss of D(watermarked) against the harvested payload for one pair, with
// decoder parameter gradients accumulated into gstore when non-null.
double pair_loss_and_grad(const Pipeline& pipeline, const AttackPair& pair,
                          const nn::PerceptualPyramid* pyramid,
                          nn::ParamStore* gstore) {
    if (pipeline.bit_decoder) {
        BitDecoderNet::Ctx ctx;
        const std::vector<double> logits =
            pipeline.bit_decoder->forward(pair.watermarked, &ctx);
        const double loss = bce_with_logits(logits, pair.wm.bits);
        if (gstore) {
            std::vector<double> dlogits(logits.size());
            const double n = static_cast<double>(logits.size());
            for (std::size_t i = 0; i < logits.size(); ++i)
                dlogits[i] = (stable_sigmoid(logits[i]) -
                              static_cast<double>(pair.wm.bits[i])) /
                             n;
            pipeline.bit_decoder->backward(ctx, dlogits, gstore);
        }
        return loss;
    }
    ImageDecoderNet::Ctx ctx;
    const Tensor est = pipeline.image_decoder->forward(pair.watermarked, &ctx);
    const Tensor& target = pair.wm.image;
    const double n = static_cast<double>(est.size());
    double loss = 0.0;
    Tensor dest(est.shape());
    for (std::size_t i = 0; i < est.data.size(); ++i) {
        const double diff = est.data[i] - target.data[i];
        loss += diff * diff / n;
        dest.data[i] = 2.0 * diff / n;
    }
    Tensor dperc;
    loss += pyramid->distance_with_grad(pyramid->features(target), est, &dperc);
    for (std::size_t i = 0; i < dest.data.size(); ++i)
        dest.data[i] += dperc.data[i];
    if (gstore)
        pipeline.image_decoder->backward(ctx, dest, gstore);
    return loss;
}

} // namespace

void FinetuneBudget::validate() const {
    if (epochs < 1)
        throw InvalidArgument("FinetuneBudget: epochs must be >= 1");
    if (num_pairs < 1)
        throw InvalidArgument("FinetuneBudget: num_pairs must be >= 1");
    if (!(std::isfinite(learning_rate) && learning_rate > 0.0))
        throw InvalidArgument("FinetuneBudget: learning_rate must be finite and > 0");
}

FinetuneBudget finetune_preset(const std::string& technique_name) {
    FinetuneBudget b;
    if (technique_name == "redmark-like") {
        b.epochs = 40;
        b.num_pairs = 200;
    } else if (technique_name == "hidden-like") {
        b.epochs = 60;
        b.num_pairs = 300;
    } else if (technique_name == "pimog-like") {
        b.epochs = 70;
        b.num_pairs = 400;
    } else if (technique_name == "hiding-like") {
        b.epochs = 90;
        b.num_pairs = 500;
    } // anything else keeps the umbrella 100/500 recipe
    return b;
}

void CommonSurrogateSpec::validate() const {
    if (io_shape.h <= 0 || io_shape.w <= 0 ||
        (io_shape.c != 1 && io_shape.c != 3))
        throw InvalidArgument("CommonSurrogateSpec: bad io_shape " +
                              io_shape.str());
    if (wm_bits < 1)
        throw InvalidArgument("CommonSurrogateSpec: wm_bits must be >= 1");
    if (member_targets.empty())
        throw InvalidArgument("CommonSurrogateSpec: no member targets");
    for (const TechniqueProfile& member : member_targets) {
        member.validate();
        if (member.watermark_kind != Watermark::Kind::Bits)
            throw UnsupportedError(
                "CommonSurrogateSpec: member '" + member.name +
                "' carries an image watermark; the shared surrogate serves "
                "bit-string targets only");
        if (member.n_bits < wm_bits)
            throw InvalidArgument(
                "CommonSurrogateSpec: member '" + member.name + "' carries " +
                std::to_string(member.n_bits) + " bits, below the " +
                std::to_string(wm_bits) +
                "-bit cap (the cap truncates, never pads)");
    }
}

Pipeline train_surrogate(const TechniqueProfile& profile, const Dataset& data,
                         const TrainConfig& cfg) {
    Pipeline pipeline = build_pipeline(profile, cfg.seed);
    train_pipeline(pipeline, data, cfg);
    return pipeline;
}

std::vector<AttackPair> harvest_pairs(const Pipeline& target, const Dataset& covers,
                                      int n, Seed seed) {
    if (n < 1)
        throw InvalidArgument("harvest_pairs: n must be >= 1");
    if (static_cast<std::size_t>(n) > covers.size())
        throw InvalidArgument("harvest_pairs: asked for " + std::to_string(n) +
                              " pairs but only " + std::to_string(covers.size()) +
                              " covers are available");
    std::vector<AttackPair> pairs;
    pairs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        AttackPair pair;
        pair.wm = target.profile.sample_watermark(
            derive_seed(seed, "pair", static_cast<std::uint64_t>(i)));
        pair.watermarked =
            embed(target, covers.items[static_cast<std::size_t>(i)].image, pair.wm);
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

std::pair<std::vector<AttackPair>, std::vector<AttackPair>>
split_pairs(const std::vector<AttackPair>& pairs, double held_out_fraction) {
    if (pairs.empty())
        throw InvalidArgument("split_pairs: no pairs");
    if (!(held_out_fraction >= 0.0 && held_out_fraction < 1.0))
        throw InvalidArgument("split_pairs: held_out_fraction must lie in [0,1)");
    std::size_t held = static_cast<std::size_t>(
        std::floor(held_out_fraction * static_cast<double>(pairs.size())));
    if (held >= pairs.size())
        held = pairs.size() - 1; // keep at least one training pair
    const std::size_t train_n = pairs.size() - held;
    return {std::vector<AttackPair>(pairs.begin(), pairs.begin() + train_n),
            std::vector<AttackPair>(pairs.begin() + train_n, pairs.end())};
}

double decoder_pair_loss(const Pipeline& pipeline,
                         const std::vector<AttackPair>& pairs, Seed pyramid_seed) {
    if (pairs.empty())
        throw InvalidArgument("decoder_pair_loss: no pairs");
    std::optional<nn::PerceptualPyramid> pyramid;
    if (pipeline.image_decoder)
        pyramid.emplace(pipeline.profile.wm_shape.c, pyramid_seed,
                        pipeline.profile.arch.pyramid_widths);
    double total = 0.0;
    for (const AttackPair& pair : pairs) {
        require_pair_fits(pair, pipeline, "decoder_pair_loss");
        total += pair_loss_and_grad(pipeline, pair,
                                    pyramid ? &*pyramid : nullptr, nullptr);
    }
    return total / static_cast<double>(pairs.size());
}

double pair_accuracy(const Pipeline& pipeline, const std::vector<AttackPair>& pairs) {
    if (pairs.empty())
        throw InvalidArgument("pair_accuracy: no pairs");
    double total = 0.0;
    for (const AttackPair& pair : pairs) {
        require_pair_fits(pair, pipeline, "pair_accuracy");
        const WatermarkEstimate est = extract(pipeline, pair.watermarked);
        if (pair.wm.is_bits())
            total += bit_accuracy(est.logits, pair.wm.bits);
        else
            total += cosine_similarity(decode_estimate(est), pair.wm);
    }
    return total / static_cast<double>(pairs.size());
}

Pipeline finetune_decoder(const Pipeline& surrogate,
                          const std::vector<AttackPair>& pairs,
                          const FinetuneBudget& budget) {
    budget.validate();
    if (pairs.size() < static_cast<std::size_t>(budget.num_pairs))
        throw InvalidArgument("finetune_decoder: budget wants " +
                              std::to_string(budget.num_pairs) +
                              " pairs but only " + std::to_string(pairs.size()) +
                              " were provided");
    Pipeline tuned = surrogate;
    const std::size_t n = static_cast<std::size_t>(budget.num_pairs);
    for (std::size_t i = 0; i < n; ++i)
        require_pair_fits(pairs[i], tuned, "finetune_decoder");

    nn::ParamStore& dstore = tuned.bit_decoder ? tuned.bit_decoder->params
                                               : tuned.image_decoder->params;
    nn::Adam adam(dstore.size(), budget.learning_rate);
    std::optional<nn::PerceptualPyramid> pyramid;
    if (tuned.image_decoder)
        pyramid.emplace(tuned.profile.wm_shape.c,
                        derive_seed(budget.seed, "pyramid"),
                        tuned.profile.arch.pyramid_widths);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = std::min<std::size_t>(8, n);

    for (int epoch = 0; epoch < budget.epochs; ++epoch) {
        Rng order_rng(derive_seed(budget.seed, "order",
                                  static_cast<std::uint64_t>(epoch)));
        order_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(start + batch, n);
            dstore.zero_grads();
            double batch_loss = 0.0;
            for (std::size_t i = start; i < stop; ++i)
                batch_loss += pair_loss_and_grad(tuned, pairs[order[i]],
                                                 pyramid ? &*pyramid : nullptr,
                                                 &dstore);
            if (!std::isfinite(batch_loss))
                throw DivergenceError(
                    "fine-tuning loss became non-finite at epoch " +
                    std::to_string(epoch));
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (double& g : dstore.grads)
                g *= inv;
            adam.step(dstore.values, dstore.grads);
        }
        if (!dstore.all_finite())
            throw DivergenceError(
                "fine-tuned parameters became non-finite after epoch " +
                std::to_string(epoch));
    }
    dstore.zero_grads();
    return tuned;
}

Pipeline build_common_surrogate(const CommonSurrogateSpec& spec, const Dataset& data,
                                const TrainConfig& cfg) {
    spec.validate();
    TechniqueProfile profile;
    profile.name = "common-surrogate";
    profile.cover_shape = spec.io_shape;
    profile.watermark_kind = Watermark::Kind::Bits;
    profile.n_bits = spec.wm_bits;
    profile.arch = spec.arch;
    return train_surrogate(profile, data, cfg);
}

AttackPair adapt_pair_for(const Pipeline& surrogate, const AttackPair& pair) {
    if (!surrogate.bit_decoder)
        throw InvalidArgument(
            "adapt_pair_for: the shared surrogate decodes bit strings only");
    if (!pair.wm.is_bits())
        throw InvalidArgument("adapt_pair_for: pair payload is not a bit string");
    pair.wm.validate("adapt_pair_for");
    require_valid_image(pair.watermarked, "adapt_pair_for");
    const Shape io = surrogate.profile.cover_shape;
    const int cap = surrogate.profile.n_bits;
    if (pair.wm.bits.size() < static_cast<std::size_t>(cap))
        throw InvalidArgument("adapt_pair_for: pair carries " +
                              std::to_string(pair.wm.bits.size()) +
                              " bits, below the " + std::to_string(cap) +
                              "-bit cap");
    AttackPair out;
    Image img = pair.watermarked;
    if (img.c != io.c)
        img = convert_channels(img, io.c);
    if (img.h != io.h || img.w != io.w)
        img = resize_bilinear(img, io.h, io.w);
    out.watermarked = std::move(img);
    out.wm = Watermark::from_bits(std::vector<std::uint8_t>(
        pair.wm.bits.begin(), pair.wm.bits.begin() + cap));
    return out;
}

Pipeline finetune_common(const Pipeline& surrogate,
                         const std::vector<AttackPair>& pooled,
                         const FinetuneBudget& budget) {
    if (pooled.empty())
        throw InvalidArgument("finetune_common: empty pair pool");
    for (const AttackPair& pair : pooled)
        require_pair_fits(pair, surrogate, "finetune_common");
    return finetune_decoder(surrogate, pooled, budget);
}

void save_pairs(const std::vector<AttackPair>& pairs, const std::string& dir) {
    if (pairs.empty())
        throw InvalidArgument("save_pairs: no pairs");
    const bool bits = pairs.front().wm.is_bits();
    for (const AttackPair& pair : pairs) {
        pair.wm.validate("save_pairs");
        if (pair.wm.is_bits() != bits)
            throw InvalidArgument("save_pairs: mixed payload kinds in one archive");
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("save_pairs: cannot create directory " + dir + ": " +
                      ec.message());

    json manifest;
    manifest["kind"] = bits ? "bits" : "image";
    manifest["count"] = pairs.size();
    json entries = json::array();
    char name[32];
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::snprintf(name, sizeof(name), "pair-%04zu.png", i);
        save_image(pairs[i].watermarked, (fs::path(dir) / name).string());
        json entry;
        entry["image"] = name;
        if (bits) {
            entry["bits"] = bits_to_hex(pairs[i].wm.bits);
            entry["n_bits"] = pairs[i].wm.bits.size();
        } else {
            std::snprintf(name, sizeof(name), "pair-%04zu-payload.png", i);
            save_image(pairs[i].wm.image, (fs::path(dir) / name).string());
            entry["payload"] = name;
        }
        entries.push_back(std::move(entry));
    }
    manifest["pairs"] = std::move(entries);

    const fs::path manifest_path = fs::path(dir) / "pairs.json";
    std::ofstream out(manifest_path);
    if (!out)
        throw IoError("save_pairs: cannot write " + manifest_path.string());
    out << manifest.dump(2) << '\n';
    if (!out.flush())
        throw IoError("save_pairs: write failed for " + manifest_path.string());
}

std::vector<AttackPair> load_pairs(const std::string& dir) {
    const fs::path manifest_path = fs::path(dir) / "pairs.json";
    std::ifstream in(manifest_path);
    if (!in)
        throw IoError("load_pairs: cannot read " + manifest_path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw FormatError("load_pairs: malformed manifest " +
                          manifest_path.string() + ": " + e.what());
    }
    try {
        const bool bits = manifest.at("kind").get<std::string>() == "bits";
        std::vector<AttackPair> pairs;
        for (const json& entry : manifest.at("pairs")) {
            AttackPair pair;
            pair.watermarked = load_image(
                (fs::path(dir) / entry.at("image").get<std::string>()).string());
            if (bits) {
                pair.wm = Watermark::from_bits(
                    hex_to_bits(entry.at("bits").get<std::string>(),
                                entry.at("n_bits").get<std::size_t>()));
            } else {
                pair.wm = Watermark::from_image(load_image(
                    (fs::path(dir) / entry.at("payload").get<std::string>())
                        .string()));
            }
            pairs.push_back(std::move(pair));
        }
        return pairs;
    } catch (const json::exception& e) {
        throw FormatError("load_pairs: manifest " + manifest_path.string() +
                          " is missing fields: " + e.what());
    }
}

} // namespace dlove
