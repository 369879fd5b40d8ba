#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "lsrigru/config.hpp"
#include "lsrigru/error.hpp"
#include "lsrigru/model.hpp"

namespace lsrigru {

/// Binary model file.
///
/// Layout, all integers little-endian:
///   8 bytes  magic "LSRIGRU1"
///   u32      format version (1)
///   u32 len, bytes   config echo (`key = value` text)
///   u32 len, bytes   RNG state text
///   u32      tensor count
///   per tensor: u32 name len, name bytes, u32 rows, u32 cols, rows·cols IEEE-754 f64
struct Checkpoint {
    PipelineConfig config;
    Model model;
    std::string rng_state;
};

inline constexpr std::string_view kCheckpointMagic = "LSRIGRU1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFFu));
}

inline void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFFu));
}

inline void put_str(std::string& out, std::string_view s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + k])) << (8 * k);
        pos_ += 4;
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + k])) << (8 * k);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(bytes_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw DataError("checkpoint truncated");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
    std::string out(kCheckpointMagic);
    detail::put_u32(out, kCheckpointVersion);
    detail::put_str(out, config_text(ck.config));
    detail::put_str(out, ck.rng_state);
    auto model = ck.model;
    const auto tensors = model.tensors();
    detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        detail::put_str(out, t.name);
        detail::put_u32(out, static_cast<std::uint32_t>(t.rows));
        detail::put_u32(out, static_cast<std::uint32_t>(t.cols));
        for (double v : t.values) detail::put_f64(out, v);
    }
    return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
    detail::Reader in(bytes);
    if (in.raw(kCheckpointMagic.size()) != kCheckpointMagic) throw DataError("not a checkpoint (bad magic)");
    if (const auto v = in.u32(); v != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(v));
    Checkpoint ck;
    apply_config_text(ck.config, in.str());
    ck.rng_state = in.str();
    ck.model = Model::zeros(ck.config.train.arch);
    auto tensors = ck.model.tensors();
    const auto count = in.u32();
    if (count != tensors.size())
        throw DataError("checkpoint holds " + std::to_string(count) + " tensors, architecture needs " +
                        std::to_string(tensors.size()));
    for (auto& t : tensors) {
        const auto name = in.str();
        const auto rows = in.u32();
        const auto cols = in.u32();
        if (name != t.name || rows != t.rows || cols != t.cols)
            throw DataError("checkpoint tensor '" + name + "' does not match expected '" + t.name + "' " +
                            std::to_string(t.rows) + "x" + std::to_string(t.cols));
        for (double& v : t.values) v = in.f64();
    }
    if (!in.done()) throw DataError("trailing bytes after checkpoint");
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing", path);
    const auto bytes = serialize_checkpoint(ck);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed", path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading", path);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace lsrigru
