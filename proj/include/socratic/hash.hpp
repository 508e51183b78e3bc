#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace socratic {

// FNV-1a, 64 bit. Used everywhere a stable, platform-independent content
// hash is needed (cache keys, context buckets, config hashes). Inputs are
// length-prefixed by the callers that combine several fields so that
// ("ab","c") and ("a","bc") cannot collide.
class Fnv1a64 {
public:
    Fnv1a64& update(std::string_view bytes) {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= kPrime;
        }
        return *this;
    }

    Fnv1a64& update_byte(uint8_t b) {
        state_ ^= b;
        state_ *= kPrime;
        return *this;
    }

    // Little-endian, fixed width.
    Fnv1a64& update_u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) update_byte(static_cast<uint8_t>(v >> (8 * i)));
        return *this;
    }

    Fnv1a64& update_u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) update_byte(static_cast<uint8_t>(v >> (8 * i)));
        return *this;
    }

    // Length-prefixed string, for multi-field digests.
    Fnv1a64& update_field(std::string_view s) {
        update_u64(s.size());
        return update(s);
    }

    uint64_t digest() const { return state_; }

private:
    static constexpr uint64_t kOffset = 0xcbf29ce484222325ull;
    static constexpr uint64_t kPrime = 0x100000001b3ull;
    uint64_t state_ = kOffset;
};

inline uint64_t fnv1a64(std::string_view bytes) {
    return Fnv1a64{}.update(bytes).digest();
}

std::string hex64(uint64_t v);

}  // namespace socratic
