#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dlove {

// Error taxonomy. Each subclass maps onto one C-API status code, so keep
// the set small and the meanings disjoint.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition (bad count, bad range, ...).
struct InvalidArgument : Error {
    using Error::Error;
};

// The filesystem said no: unreadable path, unwritable directory, ...
struct IoError : Error {
    using Error::Error;
};

// Bytes were readable but not decodable: corrupt PNG stream, bad checkpoint
// checksum, malformed config or manifest.
struct FormatError : Error {
    using Error::Error;
};

// Valid input that this toolkit deliberately does not handle (16-bit PNG,
// image-watermark member in a bit-string-only surrogate, ...).
struct UnsupportedError : Error {
    using Error::Error;
};

// Tensor/watermark arity does not match what the receiving network expects.
struct ShapeError : Error {
    using Error::Error;
};

// An operation was invoked on an object in the wrong state (incomplete
// manifest, missing stage output, ...).
struct StateError : Error {
    using Error::Error;
};

// Training produced a non-finite loss.
struct DivergenceError : Error {
    using Error::Error;
};

struct Shape {
    int h = 0;
    int w = 0;
    int c = 0;

    bool operator==(const Shape&) const = default;
    long long pixels() const { return static_cast<long long>(h) * w; }
    long long volume() const { return static_cast<long long>(h) * w * c; }
    std::string str() const {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    }
};

// Seeds are plain 64-bit values; all randomness in the toolkit flows from
// one of these through Rng, so identical seeds give identical results.
using Seed = std::uint64_t;

} // namespace dlove
