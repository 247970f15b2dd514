#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "image_io.hpp"
#include "surrogate.hpp"

using namespace dlove;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "dlove-surrogate-tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

TechniqueProfile small_bits_profile(const char* name, int n_bits, Shape cover) {
    TechniqueProfile p;
    p.name = name;
    p.cover_shape = cover;
    p.watermark_kind = Watermark::Kind::Bits;
    p.n_bits = n_bits;
    p.arch = ArchParams::micro();
    return p;
}

// A target trained far enough that harvested pairs carry real signal.
const Pipeline& trained_target() {
    static const Pipeline pipe = [] {
        TechniqueProfile p = small_bits_profile("trained-target", 4, {8, 8, 1});
        p.arch.encoder_widths = {4, 8, 8};
        p.arch.decoder_widths = {4, 8, 8, 8, 8};
        p.arch.decoder_fc = 16;
        Pipeline pipe = build_pipeline(p, 1001);
        const Dataset train =
            build_dataset(DatasetSource::synthetic(), 64, p.cover_shape, 555);
        TrainConfig cfg;
        cfg.epochs = 25;
        cfg.batch_size = 8;
        cfg.learning_rate = 3e-3;
        cfg.loss_weights.image_mse = 0.0;
        cfg.seed = 81;
        cfg.pyramid_seed = 82;
        train_pipeline(pipe, train, cfg);
        return pipe;
    }();
    return pipe;
}

TrainConfig quick_train_config(Seed seed, int epochs) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 4;
    cfg.learning_rate = 3e-3;
    cfg.loss_weights.image_mse = 0.0;
    cfg.seed = seed;
    cfg.pyramid_seed = seed + 1;
    return cfg;
}

} // namespace

TEST_CASE("train_surrogate is deterministic in the config seed") {
    const TechniqueProfile prof = small_bits_profile("surrogate", 4, {8, 8, 1});
    const Dataset data =
        build_dataset(DatasetSource::synthetic(), 12, prof.cover_shape, 300);

    const Pipeline a = train_surrogate(prof, data, quick_train_config(5, 2));
    const Pipeline b = train_surrogate(prof, data, quick_train_config(5, 2));
    CHECK(a.encoder.params.values == b.encoder.params.values);
    CHECK(a.bit_decoder->params.values == b.bit_decoder->params.values);

    const Pipeline c = train_surrogate(prof, data, quick_train_config(6, 2));
    CHECK(a.bit_decoder->params.values != c.bit_decoder->params.values);
}

TEST_CASE("harvest_pairs embeds fresh seeded payloads deterministically") {
    const Pipeline& target = trained_target();
    const Dataset covers =
        build_dataset(DatasetSource::synthetic(), 30, target.profile.cover_shape, 700);

    CHECK_THROWS_AS(harvest_pairs(target, covers, 0, 1), InvalidArgument);
    CHECK_THROWS_AS(harvest_pairs(target, covers, 31, 1), InvalidArgument);

    const std::vector<AttackPair> pairs = harvest_pairs(target, covers, 30, 42);
    REQUIRE(pairs.size() == 30);
    const std::vector<AttackPair> again = harvest_pairs(target, covers, 30, 42);

    std::set<std::vector<std::uint8_t>> distinct;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        REQUIRE(pairs[i].wm.is_bits());
        REQUIRE(pairs[i].wm.bits.size() == 4);
        REQUIRE(pairs[i].watermarked ==
                embed(target, covers.items[i].image, pairs[i].wm));
        REQUIRE(pairs[i].watermarked == again[i].watermarked);
        REQUIRE(pairs[i].wm == again[i].wm);
        distinct.insert(pairs[i].wm.bits);
    }
    // 4-bit payloads only have 16 patterns; just require honest variety here.
    CHECK(distinct.size() >= 8);

    // A different harvest seed draws different payloads.
    const std::vector<AttackPair> other = harvest_pairs(target, covers, 30, 43);
    int same = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        same += pairs[i].wm == other[i].wm;
    CHECK(same < 30);

    // Harvested payloads re-extract on the target they came from.
    CHECK(pair_accuracy(target, {pairs.front()}) >= 0.9);
}

TEST_CASE("harvested payloads are pairwise distinct at realistic widths") {
    const TechniqueProfile prof = small_bits_profile("wide", 16, {8, 8, 1});
    const Pipeline target = build_pipeline(prof, 9);
    const Dataset covers =
        build_dataset(DatasetSource::synthetic(), 500, prof.cover_shape, 701);
    const std::vector<AttackPair> pairs = harvest_pairs(target, covers, 500, 11);
    std::set<std::vector<std::uint8_t>> distinct;
    for (const AttackPair& p : pairs)
        distinct.insert(p.wm.bits);
    CHECK(distinct.size() >= 495);
}

TEST_CASE("split_pairs reserves the tail and keeps training non-empty") {
    std::vector<AttackPair> pairs(10);
    for (int i = 0; i < 10; ++i)
        pairs[static_cast<std::size_t>(i)].wm =
            sample_bit_watermark(4, static_cast<Seed>(i));

    auto [train, held] = split_pairs(pairs, 0.1);
    CHECK(train.size() == 9);
    CHECK(held.size() == 1);
    CHECK(held.front().wm == pairs.back().wm);
    CHECK(train.front().wm == pairs.front().wm);

    auto [all, none] = split_pairs(pairs, 0.0);
    CHECK(all.size() == 10);
    CHECK(none.empty());

    // A tiny set never loses its last training pair.
    std::vector<AttackPair> two(pairs.begin(), pairs.begin() + 2);
    auto [t2, h2] = split_pairs(two, 0.9);
    CHECK(t2.size() == 1);
    CHECK(h2.size() == 1);

    CHECK_THROWS_AS(split_pairs(pairs, 1.0), InvalidArgument);
    CHECK_THROWS_AS(split_pairs({}, 0.1), InvalidArgument);
}

TEST_CASE("finetune_decoder fits the target pairs without touching the encoder") {
    const Pipeline& target = trained_target();
    const Dataset covers =
        build_dataset(DatasetSource::synthetic(), 24, target.profile.cover_shape, 702);
    const std::vector<AttackPair> harvested = harvest_pairs(target, covers, 24, 97);
    auto [train_pairs, held_out] = split_pairs(harvested, 0.1);

    // The surrogate shares the design but nothing else with the target.
    Pipeline surrogate =
        train_surrogate(target.profile,
                        build_dataset(DatasetSource::synthetic(), 16,
                                      target.profile.cover_shape, 703),
                        quick_train_config(404, 2));

    FinetuneBudget budget;
    budget.epochs = 30;
    budget.num_pairs = static_cast<int>(train_pairs.size());
    budget.learning_rate = 3e-3;
    budget.seed = 12;

    const double loss_before = decoder_pair_loss(surrogate, train_pairs);
    const Pipeline tuned = finetune_decoder(surrogate, train_pairs, budget);
    const double loss_after = decoder_pair_loss(tuned, train_pairs);

    CHECK(loss_after < loss_before);
    CHECK(tuned.encoder.params.values == surrogate.encoder.params.values);
    CHECK(tuned.bit_decoder->params.values != surrogate.bit_decoder->params.values);
    // Fitting ~20 pairs of a 4-bit code for 30 epochs must at least learn
    // the training set.
    CHECK(pair_accuracy(tuned, train_pairs) >= 0.8);
    CHECK(pair_accuracy(tuned, held_out) >= 0.0); // smoke: evaluates cleanly

    SUBCASE("budget larger than the pair pool is rejected") {
        FinetuneBudget greedy = budget;
        greedy.num_pairs = 1000;
        CHECK_THROWS_AS(finetune_decoder(surrogate, train_pairs, greedy),
                        InvalidArgument);
    }
    SUBCASE("mismatched payload kind is rejected") {
        std::vector<AttackPair> wrong = train_pairs;
        wrong.front().wm =
            Watermark::from_image(synthesize_image({8, 8, 1}, 5));
        FinetuneBudget one = budget;
        one.num_pairs = 1;
        CHECK_THROWS_AS(finetune_decoder(surrogate, wrong, one), InvalidArgument);
    }
    SUBCASE("bad budgets are rejected") {
        FinetuneBudget bad = budget;
        bad.epochs = 0;
        CHECK_THROWS_AS(finetune_decoder(surrogate, train_pairs, bad),
                        InvalidArgument);
        bad = budget;
        bad.num_pairs = 0;
        CHECK_THROWS_AS(finetune_decoder(surrogate, train_pairs, bad),
                        InvalidArgument);
        bad = budget;
        bad.learning_rate = 0.0;
        CHECK_THROWS_AS(finetune_decoder(surrogate, train_pairs, bad),
                        InvalidArgument);
    }
}

TEST_CASE("finetune_decoder handles image payloads through the same path") {
    TechniqueProfile prof;
    prof.name = "image-surrogate";
    prof.cover_shape = {8, 8, 1};
    prof.watermark_kind = Watermark::Kind::Image;
    prof.wm_shape = {8, 8, 1};
    prof.arch = ArchParams::micro();
    const Pipeline target = build_pipeline(prof, 21);
    const Dataset covers =
        build_dataset(DatasetSource::synthetic(), 6, prof.cover_shape, 704);
    const std::vector<AttackPair> pairs = harvest_pairs(target, covers, 6, 22);
    REQUIRE_FALSE(pairs.front().wm.is_bits());

    const Pipeline surrogate = build_pipeline(prof, 23);
    FinetuneBudget budget;
    budget.epochs = 5;
    budget.num_pairs = 6;
    budget.seed = 24;

    const Seed eval_pyramid = derive_seed(budget.seed, "pyramid");
    const double before = decoder_pair_loss(surrogate, pairs, eval_pyramid);
    const Pipeline tuned = finetune_decoder(surrogate, pairs, budget);
    const double after = decoder_pair_loss(tuned, pairs, eval_pyramid);
    CHECK(after < before);
    CHECK(tuned.encoder.params.values == surrogate.encoder.params.values);
}

TEST_CASE("finetune presets mirror the per-technique budget table") {
    CHECK(finetune_preset("redmark-like").epochs == 40);
    CHECK(finetune_preset("redmark-like").num_pairs == 200);
    CHECK(finetune_preset("hidden-like").epochs == 60);
    CHECK(finetune_preset("hidden-like").num_pairs == 300);
    CHECK(finetune_preset("pimog-like").epochs == 70);
    CHECK(finetune_preset("pimog-like").num_pairs == 400);
    CHECK(finetune_preset("hiding-like").epochs == 90);
    CHECK(finetune_preset("hiding-like").num_pairs == 500);
    // Unknown techniques get the umbrella recipe.
    CHECK(finetune_preset("custom").epochs == 100);
    CHECK(finetune_preset("custom").num_pairs == 500);
}

TEST_CASE("build_common_surrogate enforces the membership contract") {
    CommonSurrogateSpec spec;
    spec.io_shape = {8, 8, 1};
    spec.wm_bits = 10;
    spec.arch = ArchParams::micro();
    spec.member_targets = {small_bits_profile("member-a", 12, {8, 8, 1}),
                           small_bits_profile("member-b", 16, {16, 16, 1})};

    const Dataset data = build_dataset(DatasetSource::synthetic(), 8, spec.io_shape, 60);
    const Pipeline common = build_common_surrogate(spec, data, quick_train_config(61, 1));
    CHECK(common.profile.cover_shape == spec.io_shape);
    CHECK(common.profile.n_bits == 10);
    REQUIRE(common.bit_decoder.has_value());

    const Pipeline again = build_common_surrogate(spec, data, quick_train_config(61, 1));
    CHECK(common.bit_decoder->params.values == again.bit_decoder->params.values);

    SUBCASE("image-watermark members are rejected") {
        TechniqueProfile img;
        img.name = "image-member";
        img.cover_shape = {8, 8, 1};
        img.watermark_kind = Watermark::Kind::Image;
        img.wm_shape = {8, 8, 1};
        img.arch = ArchParams::micro();
        CommonSurrogateSpec bad = spec;
        bad.member_targets.push_back(img);
        CHECK_THROWS_AS(build_common_surrogate(bad, data, quick_train_config(61, 1)),
                        UnsupportedError);
    }
    SUBCASE("members narrower than the cap are rejected") {
        CommonSurrogateSpec bad = spec;
        bad.member_targets.push_back(small_bits_profile("narrow", 8, {8, 8, 1}));
        CHECK_THROWS_AS(build_common_surrogate(bad, data, quick_train_config(61, 1)),
                        InvalidArgument);
    }
    SUBCASE("an empty membership is rejected") {
        CommonSurrogateSpec bad = spec;
        bad.member_targets.clear();
        CHECK_THROWS_AS(build_common_surrogate(bad, data, quick_train_config(61, 1)),
                        InvalidArgument);
    }
}

TEST_CASE("adapt_pair_for rescales images and truncates payloads to the cap") {
    CommonSurrogateSpec spec;
    spec.io_shape = {16, 16, 3};
    spec.wm_bits = 10;
    spec.arch = ArchParams::micro();
    spec.member_targets = {small_bits_profile("member", 16, {8, 8, 1})};
    const Dataset data = build_dataset(DatasetSource::synthetic(), 4, spec.io_shape, 63);
    const Pipeline common = build_common_surrogate(spec, data, quick_train_config(64, 1));

    const Pipeline member = build_pipeline(spec.member_targets.front(), 65);
    const Dataset covers = build_dataset(DatasetSource::synthetic(), 3, {8, 8, 1}, 66);
    const std::vector<AttackPair> raw = harvest_pairs(member, covers, 3, 67);

    const AttackPair adapted = adapt_pair_for(common, raw.front());
    CHECK(adapted.watermarked.shape() == Shape{16, 16, 3});
    CHECK(adapted.wm.bits.size() == 10);
    CHECK(std::equal(adapted.wm.bits.begin(), adapted.wm.bits.end(),
                     raw.front().wm.bits.begin()));

    AttackPair narrow = raw.front();
    narrow.wm = sample_bit_watermark(6, 1);
    CHECK_THROWS_AS(adapt_pair_for(common, narrow), InvalidArgument);

    SUBCASE("finetune_common rejects unadapted and empty pools") {
        CHECK_THROWS_AS(finetune_common(common, {}, FinetuneBudget{}),
                        InvalidArgument);
        CHECK_THROWS_AS(finetune_common(common, raw, FinetuneBudget{1, 1, 1e-3, 0}),
                        ShapeError);

        std::vector<AttackPair> pool;
        for (const AttackPair& p : raw)
            pool.push_back(adapt_pair_for(common, p));
        const Pipeline tuned =
            finetune_common(common, pool, FinetuneBudget{2, 3, 1e-3, 5});
        CHECK(tuned.encoder.params.values == common.encoder.params.values);
        CHECK(tuned.bit_decoder->params.values != common.bit_decoder->params.values);
    }
}

TEST_CASE("pair archives round-trip through PNG plus manifest") {
    const Pipeline& target = trained_target();
    const Dataset covers =
        build_dataset(DatasetSource::synthetic(), 5, target.profile.cover_shape, 705);
    const std::vector<AttackPair> pairs = harvest_pairs(target, covers, 5, 71);

    const fs::path dir = scratch_dir() / "bits-archive";
    save_pairs(pairs, dir.string());
    const std::vector<AttackPair> loaded = load_pairs(dir.string());
    REQUIRE(loaded.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(loaded[i].wm == pairs[i].wm);
        REQUIRE(loaded[i].watermarked.shape() == pairs[i].watermarked.shape());
        double worst = 0.0;
        for (std::size_t j = 0; j < pairs[i].watermarked.data.size(); ++j)
            worst = std::max(worst, std::abs(loaded[i].watermarked.data[j] -
                                             pairs[i].watermarked.data[j]));
        CHECK(worst <= 0.5 / 255.0 + 1e-12); // 8-bit quantization only
    }

    SUBCASE("image payloads ride along as companion files") {
        std::vector<AttackPair> img_pairs(2);
        img_pairs[0].watermarked = synthesize_image({8, 8, 3}, 75);
        img_pairs[0].wm = Watermark::from_image(synthesize_image({8, 8, 1}, 76));
        img_pairs[1].watermarked = synthesize_image({8, 8, 3}, 77);
        img_pairs[1].wm = Watermark::from_image(synthesize_image({8, 8, 1}, 78));
        const fs::path idir = scratch_dir() / "image-archive";
        save_pairs(img_pairs, idir.string());
        const std::vector<AttackPair> back = load_pairs(idir.string());
        REQUIRE(back.size() == 2);
        CHECK_FALSE(back[0].wm.is_bits());
        CHECK(back[0].wm.image.shape() == Shape{8, 8, 1});
    }

    SUBCASE("mixed payload kinds cannot share an archive") {
        std::vector<AttackPair> mixed = pairs;
        mixed.back().wm = Watermark::from_image(synthesize_image({8, 8, 1}, 79));
        CHECK_THROWS_AS(save_pairs(mixed, (scratch_dir() / "mixed").string()),
                        InvalidArgument);
    }

    SUBCASE("missing and malformed archives fail loudly") {
        CHECK_THROWS_AS(load_pairs((scratch_dir() / "nowhere").string()), IoError);
        const fs::path broken = scratch_dir() / "broken";
        fs::create_directories(broken);
        std::ofstream(broken / "pairs.json") << "this is not json";
        CHECK_THROWS_AS(load_pairs(broken.string()), FormatError);
        const fs::path partial = scratch_dir() / "partial";
        fs::create_directories(partial);
        std::ofstream(partial / "pairs.json") << R"({"kind":"bits","pairs":[{}]})";
        CHECK_THROWS_AS(load_pairs(partial.string()), FormatError);
    }
}

TEST_CASE("resolution round trips barely disturb a trained target") {
    const Pipeline& target = trained_target();
    const Dataset covers =
        build_dataset(DatasetSource::synthetic(), 20, target.profile.cover_shape, 706);
    const std::vector<AttackPair> pairs = harvest_pairs(target, covers, 20, 81);

    double direct = 0.0, round_trip = 0.0;
    for (const AttackPair& pair : pairs) {
        direct += bit_accuracy(extract(target, pair.watermarked).logits, pair.wm.bits);
        const Image up = resize_bilinear(pair.watermarked, 16, 16);
        const Image back = resize_bilinear(up, 8, 8);
        round_trip += bit_accuracy(extract(target, back).logits, pair.wm.bits);
    }
    direct /= 20.0;
    round_trip /= 20.0;
    CHECK(std::abs(direct - round_trip) <= 0.1);
}
