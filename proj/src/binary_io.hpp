#pragma once

// Little-endian encode/decode helpers shared by the dataset and probe formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace streamprobe::detail {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        const auto* p = reinterpret_cast<const unsigned char*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }
    void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    template <typename T>
    void put_array(std::span<const T> values) {
        const auto* p = reinterpret_cast<const unsigned char*>(values.data());
        bytes_.insert(bytes_.end(), p, p + values.size_bytes());
    }

    const std::vector<unsigned char>& bytes() const { return bytes_; }
    std::size_t size() const { return bytes_.size(); }
    void clear() { bytes_.clear(); }

private:
    std::vector<unsigned char> bytes_;
};

// Bounds-checked cursor over a byte buffer. `ok()` turns false on overrun
// and every later read returns zeros.
class ByteReader {
public:
    explicit ByteReader(std::span<const unsigned char> data) : data_(data) {}

    template <typename T>
    T get() {
        T value{};
        if (!take(sizeof(T))) return value;
        std::memcpy(&value, data_.data() + pos_ - sizeof(T), sizeof(T));
        return value;
    }
    std::string get_string(std::size_t n) {
        if (!take(n)) return {};
        return {reinterpret_cast<const char*>(data_.data() + pos_ - n), n};
    }
    template <typename T>
    bool get_array(std::span<T> out) {
        if (!take(out.size_bytes())) return false;
        std::memcpy(out.data(), data_.data() + pos_ - out.size_bytes(), out.size_bytes());
        return true;
    }

    bool ok() const { return ok_; }
    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    bool take(std::size_t n) {
        if (!ok_ || data_.size() - pos_ < n) {
            ok_ = false;
            return false;
        }
        pos_ += n;
        return true;
    }

    std::span<const unsigned char> data_;
    std::size_t pos_ = 0;
    bool ok_ = true;
};

}  // namespace streamprobe::detail
