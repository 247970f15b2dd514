#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"
#include "watermark.hpp"

namespace dlove {

enum class Split { Train, Test, AttackPairs };

struct DatasetItem {
    Image image;
    std::optional<Watermark> watermark; // attached by harvesting/labeling steps
};

struct Dataset {
    std::string name;
    std::vector<DatasetItem> items;
    Split split = Split::Train;

    std::size_t size() const { return items.size(); }
    Shape shape() const; // common image shape; throws on empty/mixed datasets
};

// Where the images come from: a synthetic generator or a PNG directory.
struct DatasetSource {
    enum class Kind { Synthetic, Directory };
    Kind kind = Kind::Synthetic;
    std::string directory;        // used when kind == Directory
    bool with_replacement = false; // directory only: allow count > file count

    static DatasetSource synthetic();
    static DatasetSource from_directory(std::string path, bool with_replacement = false);
};

// One synthetic cover image: a seeded mixture of gradients, textures, and
// geometric shapes. Deterministic in (shape, seed).
Image synthesize_image(const Shape& shape, Seed seed);

// Builds `count` images of `shape` from the source, deterministically
// ordered under `seed`. Directory files are discovered in sorted order,
// then sampled/shuffled by the seed and resized to `shape`.
Dataset build_dataset(const DatasetSource& source, std::size_t count,
                      const Shape& shape, Seed seed, Split split = Split::Train);

// Splits by position after the seeded ordering; the halves are disjoint.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, std::size_t n_first);

} // namespace dlove
