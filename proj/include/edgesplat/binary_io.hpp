#pragma once

#include "edgesplat/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

namespace edgesplat {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian hosts");

/// Raw little-endian writer for trivially copyable values.
class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& os) : os_(os) {}

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    void put(const T& v) {
        os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }

    template <typename T>
    void put_vector(const std::vector<T>& v) {
        put<std::uint64_t>(v.size());
        for (const auto& x : v) {
            put(x);
        }
    }

    void put_string(const std::string& s) {
        put<std::uint64_t>(s.size());
        os_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    void put_bytes(const char* data, std::size_t n) { os_.write(data, static_cast<std::streamsize>(n)); }

private:
    std::ostream& os_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::istream& is) : is_(is) {}

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    T get() {
        T v;
        is_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!is_) {
            throw IoError("unexpected end of binary stream");
        }
        return v;
    }

    template <typename T>
    std::vector<T> get_vector(std::uint64_t max_len = (1ull << 32)) {
        const auto n = get<std::uint64_t>();
        if (n > max_len) {
            throw IoError("binary stream declares an implausible array length");
        }
        std::vector<T> v;
        v.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            v.push_back(get<T>());
        }
        return v;
    }

    std::string get_string(std::uint64_t max_len = (1ull << 28)) {
        const auto n = get<std::uint64_t>();
        if (n > max_len) {
            throw IoError("binary stream declares an implausible string length");
        }
        std::string s(n, '\0');
        is_.read(s.data(), static_cast<std::streamsize>(n));
        if (!is_) {
            throw IoError("unexpected end of binary stream");
        }
        return s;
    }

    void expect_bytes(const char* data, std::size_t n, const char* what) {
        std::string buf(n, '\0');
        is_.read(buf.data(), static_cast<std::streamsize>(n));
        if (!is_ || std::memcmp(buf.data(), data, n) != 0) {
            throw IoError(std::string("bad ") + what);
        }
    }

private:
    std::istream& is_;
};

} // namespace edgesplat
