#include "dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "image_io.hpp"

namespace fs = std::filesystem;

namespace dlove {

Shape Dataset::shape() const {
    if (items.empty()) throw StateError("Dataset::shape: empty dataset");
    const Shape s = items.front().image.shape();
    for (const auto& it : items)
        if (it.image.shape() != s)
            throw StateError("Dataset::shape: mixed shapes in dataset '" + name + "'");
    return s;
}

DatasetSource DatasetSource::synthetic() {
    return DatasetSource{};
}

DatasetSource DatasetSource::from_directory(std::string path, bool with_replacement) {
    DatasetSource s;
    s.kind = Kind::Directory;
    s.directory = std::move(path);
    s.with_replacement = with_replacement;
    return s;
}

namespace {

// Each generator writes one grayscale layer in [0,1].
Tensor gradient_layer(int h, int w, Rng& rng) {
    Tensor t(h, w, 1);
    const double angle = rng.uniform() * 2.0 * M_PI;
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double lo = rng.uniform() * 0.4;
    const double hi = 0.6 + rng.uniform() * 0.4;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double u = (x / std::max(1.0, w - 1.0)) * dx +
                             (y / std::max(1.0, h - 1.0)) * dy;
            const double s = std::clamp(0.5 + 0.5 * u, 0.0, 1.0);
            t.at(y, x, 0) = lo + (hi - lo) * s;
        }
    return t;
}

Tensor plaid_layer(int h, int w, Rng& rng) {
    Tensor t(h, w, 1);
    const double fx = 1.0 + rng.uniform() * 5.0;
    const double fy = 1.0 + rng.uniform() * 5.0;
    const double px = rng.uniform() * 2.0 * M_PI;
    const double py = rng.uniform() * 2.0 * M_PI;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = 0.5 + 0.25 * std::sin(2.0 * M_PI * fx * x / w + px) +
                             0.25 * std::sin(2.0 * M_PI * fy * y / h + py);
            t.at(y, x, 0) = std::clamp(v, 0.0, 1.0);
        }
    return t;
}

// Low-resolution noise upscaled bilinearly: smooth blotchy texture.
Tensor blotch_layer(int h, int w, Rng& rng) {
    const int gh = 2 + static_cast<int>(rng.index(7));
    const int gw = 2 + static_cast<int>(rng.index(7));
    Tensor grid(gh, gw, 1);
    for (auto& v : grid.data) v = rng.uniform();
    return resize_bilinear(grid, h, w);
}

void stamp_shapes(Tensor& t, Rng& rng) {
    const int n = 2 + static_cast<int>(rng.index(5));
    for (int k = 0; k < n; ++k) {
        const double value = rng.uniform();
        const bool disc = rng.bit() != 0;
        const int cy = static_cast<int>(rng.index(static_cast<std::uint64_t>(t.h)));
        const int cx = static_cast<int>(rng.index(static_cast<std::uint64_t>(t.w)));
        const int r = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(
                              std::max(2, std::min(t.h, t.w) / 3))));
        for (int y = std::max(0, cy - r); y <= std::min(t.h - 1, cy + r); ++y)
            for (int x = std::max(0, cx - r); x <= std::min(t.w - 1, cx + r); ++x) {
                if (disc && (y - cy) * (y - cy) + (x - cx) * (x - cx) > r * r) continue;
                t.at(y, x, 0) = value;
            }
    }
}

} // namespace

Image synthesize_image(const Shape& shape, Seed seed) {
    if (shape.h <= 0 || shape.w <= 0 || (shape.c != 1 && shape.c != 3))
        throw InvalidArgument("synthesize_image: bad shape " + shape.str());
    Rng rng(seed);
    Image img(shape.h, shape.w, shape.c);
    for (int ch = 0; ch < shape.c; ++ch) {
        // Blend two base layers, optionally stamp shapes, add fine grain.
        Tensor a, b;
        switch (rng.index(3)) {
            case 0: a = gradient_layer(shape.h, shape.w, rng); break;
            case 1: a = plaid_layer(shape.h, shape.w, rng); break;
            default: a = blotch_layer(shape.h, shape.w, rng); break;
        }
        switch (rng.index(3)) {
            case 0: b = gradient_layer(shape.h, shape.w, rng); break;
            case 1: b = plaid_layer(shape.h, shape.w, rng); break;
            default: b = blotch_layer(shape.h, shape.w, rng); break;
        }
        const double mix = rng.uniform();
        for (int i = 0; i < shape.h * shape.w; ++i)
            a.data[i] = mix * a.data[i] + (1.0 - mix) * b.data[i];
        if (rng.uniform() < 0.7) stamp_shapes(a, rng);
        const double grain = 0.01 + 0.03 * rng.uniform();
        for (int y = 0; y < shape.h; ++y)
            for (int x = 0; x < shape.w; ++x)
                img.at(y, x, ch) = std::clamp(
                    a.at(y, x, 0) + grain * (rng.uniform() - 0.5), 0.0, 1.0);
    }
    return img;
}

Dataset build_dataset(const DatasetSource& source, std::size_t count,
                      const Shape& shape, Seed seed, Split split) {
    if (count == 0) throw InvalidArgument("build_dataset: count must be >= 1");
    if (shape.h <= 0 || shape.w <= 0 || (shape.c != 1 && shape.c != 3))
        throw InvalidArgument("build_dataset: bad shape " + shape.str());

    Dataset ds;
    ds.split = split;
    ds.items.reserve(count);

    if (source.kind == DatasetSource::Kind::Synthetic) {
        ds.name = "synthetic-" + std::to_string(count);
        for (std::size_t i = 0; i < count; ++i)
            ds.items.push_back({synthesize_image(shape, derive_seed(seed, "item", i)), {}});
        return ds;
    }

    if (!fs::is_directory(source.directory))
        throw IoError("build_dataset: not a directory: " + source.directory);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(source.directory)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") files.push_back(entry.path().string());
    }
    if (files.empty())
        throw IoError("build_dataset: no PNG files in " + source.directory);
    std::sort(files.begin(), files.end()); // discovery order is filesystem-dependent
    if (!source.with_replacement && count > files.size())
        throw InvalidArgument("build_dataset: requested " + std::to_string(count) +
                              " images but directory holds only " +
                              std::to_string(files.size()));

    Rng rng(derive_seed(seed, "directory-order"));
    rng.shuffle(files);
    ds.name = fs::path(source.directory).filename().string();
    for (std::size_t i = 0; i < count; ++i) {
        const std::string& path =
            source.with_replacement && i >= files.size()
                ? files[rng.index(files.size())]
                : files[i];
        Image img = load_image(path, shape.c);
        if (img.h != shape.h || img.w != shape.w)
            img = resize_bilinear(img, shape.h, shape.w);
        ds.items.push_back({std::move(img), {}});
    }
    return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, std::size_t n_first) {
    if (n_first > ds.items.size())
        throw InvalidArgument("split_dataset: split point past end");
    Dataset a, b;
    a.name = ds.name + "-a";
    b.name = ds.name + "-b";
    a.split = Split::Train;
    b.split = Split::Test;
    a.items.assign(ds.items.begin(), ds.items.begin() + static_cast<long>(n_first));
    b.items.assign(ds.items.begin() + static_cast<long>(n_first), ds.items.end());
    return {std::move(a), std::move(b)};
}

} // namespace dlove
