#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace sysrisk {

inline std::uint64_t fnv1a(const void* bytes, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(std::string_view s) { return fnv1a(s.data(), s.size()); }

/// Incremental FNV-1a over typed values; used for structural fingerprints.
class Hasher {
public:
    Hasher& add(std::uint64_t v) {
        h_ = fnv1a(&v, sizeof v, h_);
        return *this;
    }
    Hasher& add(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        return add(bits);
    }
    Hasher& add(std::string_view s) {
        add(static_cast<std::uint64_t>(s.size()));
        h_ = fnv1a(s.data(), s.size(), h_);
        return *this;
    }
    template <class Range>
    Hasher& add_range(const Range& r) {
        add(static_cast<std::uint64_t>(r.size()));
        for (const auto& v : r) add(v);
        return *this;
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ull;
};

} // namespace sysrisk
