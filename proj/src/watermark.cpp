#include "watermark.hpp"

namespace dlove {

Watermark Watermark::from_bits(std::vector<std::uint8_t> b) {
    Watermark w;
    w.kind = Kind::Bits;
    w.bits = std::move(b);
    w.validate("Watermark::from_bits");
    return w;
}

Watermark Watermark::from_image(Image img) {
    Watermark w;
    w.kind = Kind::Image;
    w.image = std::move(img);
    w.validate("Watermark::from_image");
    return w;
}

std::size_t Watermark::size() const {
    return is_bits() ? bits.size() : image.size();
}

void Watermark::validate(const char* what) const {
    if (is_bits()) {
        if (bits.empty()) throw InvalidArgument(std::string(what) + ": empty bit string");
        for (auto b : bits)
            if (b != 0 && b != 1)
                throw InvalidArgument(std::string(what) + ": bits must be 0 or 1");
    } else {
        require_valid_image(image, what);
    }
}

bool Watermark::operator==(const Watermark& other) const {
    if (kind != other.kind) return false;
    return is_bits() ? bits == other.bits : image == other.image;
}

Watermark sample_bit_watermark(std::size_t n, Seed seed) {
    if (n == 0) throw InvalidArgument("sample_bit_watermark: n must be >= 1");
    Rng rng(seed);
    std::vector<std::uint8_t> bits(n);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng.bit());
    return Watermark::from_bits(std::move(bits));
}

std::string bits_to_hex(const std::vector<std::uint8_t>& bits) {
    static const char* digits = "0123456789abcdef";
    std::string hex;
    hex.reserve((bits.size() + 3) / 4);
    unsigned nibble = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        nibble = (nibble << 1) | (bits[i] & 1u);
        if (i % 4 == 3) {
            hex.push_back(digits[nibble]);
            nibble = 0;
        }
    }
    if (bits.size() % 4 != 0) {
        nibble <<= 4 - bits.size() % 4;
        hex.push_back(digits[nibble]);
    }
    if (hex.size() % 2 != 0) hex.push_back('0'); // whole bytes, as in "a0" for 3 bits
    return hex;
}

std::vector<std::uint8_t> hex_to_bits(const std::string& hex, std::size_t n_bits) {
    if (hex.size() * 4 < n_bits)
        throw FormatError("hex_to_bits: string too short for " + std::to_string(n_bits) + " bits");
    std::vector<std::uint8_t> bits(n_bits);
    for (std::size_t i = 0; i < n_bits; ++i) {
        const char ch = hex[i / 4];
        unsigned nibble = 0;
        if (ch >= '0' && ch <= '9') nibble = ch - '0';
        else if (ch >= 'a' && ch <= 'f') nibble = ch - 'a' + 10;
        else if (ch >= 'A' && ch <= 'F') nibble = ch - 'A' + 10;
        else throw FormatError(std::string("hex_to_bits: invalid digit '") + ch + "'");
        bits[i] = static_cast<std::uint8_t>((nibble >> (3 - i % 4)) & 1u);
    }
    return bits;
}

} // namespace dlove
