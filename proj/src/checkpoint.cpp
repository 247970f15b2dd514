#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "pipeline.hpp"
#include "serialize.hpp"

namespace dlove {

namespace {

constexpr char kMagic[8] = {'D', 'L', 'O', 'V', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void append_u32(std::vector<char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::vector<char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_doubles(std::vector<char>& out, const std::vector<double>& v) {
    static_assert(sizeof(double) == 8);
    const std::size_t at = out.size();
    out.resize(at + v.size() * 8);
    std::memcpy(out.data() + at, v.data(), v.size() * 8);
}

struct Reader {
    const std::vector<char>& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size())
            throw FormatError(std::string("checkpoint truncated reading ") + what);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    void doubles(std::vector<double>& out, std::size_t count, const char* what) {
        need(count * 8, what);
        out.resize(count);
        std::memcpy(out.data(), buf.data() + pos, count * 8);
        pos += count * 8;
    }
};

std::uint32_t crc_of(const std::vector<char>& buf, std::size_t from, std::size_t to) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data() + from),
                static_cast<uInt>(to - from));
    return static_cast<std::uint32_t>(crc);
}

} // namespace

void save_pipeline(const Pipeline& pipeline, const std::string& path) {
    json header;
    header["profile"] = pipeline.profile;
    header["init_seed"] = pipeline.init_seed;
    header["pyramid_seed"] = pipeline.pyramid_seed;
    if (!pipeline.train_config_json.empty())
        header["train_config"] = json::parse(pipeline.train_config_json);
    json counts;
    counts["encoder"] = pipeline.encoder.params.size();
    if (pipeline.bit_decoder) counts["bit_decoder"] = pipeline.bit_decoder->params.size();
    if (pipeline.image_decoder)
        counts["image_decoder"] = pipeline.image_decoder->params.size();
    if (pipeline.discriminator)
        counts["discriminator"] = pipeline.discriminator->params.size();
    header["param_counts"] = counts;
    const std::string header_str = header.dump();

    std::vector<char> buf(kMagic, kMagic + sizeof(kMagic));
    const std::size_t checked_from = buf.size();
    append_u32(buf, kVersion);
    append_u64(buf, header_str.size());
    buf.insert(buf.end(), header_str.begin(), header_str.end());
    append_doubles(buf, pipeline.encoder.params.values);
    if (pipeline.bit_decoder) append_doubles(buf, pipeline.bit_decoder->params.values);
    if (pipeline.image_decoder) append_doubles(buf, pipeline.image_decoder->params.values);
    if (pipeline.discriminator) append_doubles(buf, pipeline.discriminator->params.values);
    append_u32(buf, crc_of(buf, checked_from, buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Pipeline load_pipeline(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());

    if (buf.size() < sizeof(kMagic) + 4 + 8 + 4 ||
        std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw FormatError("'" + path + "' is not a pipeline checkpoint");
    const std::size_t checked_from = sizeof(kMagic);
    const std::size_t checked_to = buf.size() - 4;

    Reader r{buf, checked_from};
    const std::uint32_t version = r.u32("version");
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t header_len = r.u64("header length");
    r.need(header_len, "header");
    json header;
    try {
        header = json::parse(buf.begin() + static_cast<std::ptrdiff_t>(r.pos),
                             buf.begin() + static_cast<std::ptrdiff_t>(r.pos + header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    r.pos += header_len;

    Pipeline p(header.at("profile").get<TechniqueProfile>());
    p.init_seed = header.value("init_seed", Seed{0});
    p.pyramid_seed = header.value("pyramid_seed", Seed{0});
    if (header.contains("train_config"))
        p.train_config_json = header.at("train_config").dump();

    const json& counts = header.at("param_counts");
    auto check_count = [&](const char* key, std::size_t have) {
        if (counts.value(key, std::size_t{0}) != have)
            throw FormatError(std::string("checkpoint parameter count mismatch for ") + key);
    };
    check_count("encoder", p.encoder.params.size());
    if (p.bit_decoder) check_count("bit_decoder", p.bit_decoder->params.size());
    if (p.image_decoder) check_count("image_decoder", p.image_decoder->params.size());
    if (p.discriminator) check_count("discriminator", p.discriminator->params.size());

    r.doubles(p.encoder.params.values, p.encoder.params.size(), "encoder params");
    if (p.bit_decoder)
        r.doubles(p.bit_decoder->params.values, p.bit_decoder->params.size(),
                  "decoder params");
    if (p.image_decoder)
        r.doubles(p.image_decoder->params.values, p.image_decoder->params.size(),
                  "decoder params");
    if (p.discriminator)
        r.doubles(p.discriminator->params.values, p.discriminator->params.size(),
                  "discriminator params");

    if (r.pos != checked_to)
        throw FormatError("checkpoint has trailing bytes before the checksum");
    const std::uint32_t stored = r.u32("checksum");
    if (stored != crc_of(buf, checked_from, checked_to))
        throw FormatError("checkpoint checksum mismatch (file is corrupt)");
    return p;
}

} // namespace dlove
