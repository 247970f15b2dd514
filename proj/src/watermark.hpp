#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace dlove {

// Payload carried by a watermarking pipeline: either a bit string or a
// full image (for hiding-images style techniques).
struct Watermark {
    enum class Kind { Bits, Image };

    Kind kind = Kind::Bits;
    std::vector<std::uint8_t> bits; // entries in {0,1}, used when kind == Bits
    Image image;                    // used when kind == Image

    Watermark() = default;
    static Watermark from_bits(std::vector<std::uint8_t> b);
    static Watermark from_image(Image img);

    bool is_bits() const { return kind == Kind::Bits; }
    // Payload size: bit count, or pixel-value count for image watermarks.
    std::size_t size() const;
    void validate(const char* what) const;

    bool operator==(const Watermark& other) const;
};

// Uniform i.i.d. bits; identical (n, seed) give identical output.
Watermark sample_bit_watermark(std::size_t n, Seed seed);

// Hex round trip for manifests: bits are packed MSB-first per nibble and the
// explicit length disambiguates trailing padding. "101" <-> ("a0", 3).
std::string bits_to_hex(const std::vector<std::uint8_t>& bits);
std::vector<std::uint8_t> hex_to_bits(const std::string& hex, std::size_t n_bits);

} // namespace dlove
