#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

namespace nanoua {

// Bounds-checked little-endian cursor over a borrowed byte range.
// A read past the end returns zero and latches the truncated flag instead of
// touching out-of-range memory; callers test ok()/truncated() at the points
// where a bogus zero value would change control flow.
class ByteReader {
public:
    ByteReader() = default;
    ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
    explicit ByteReader(std::span<const uint8_t> b) : data_(b.data()), size_(b.size()) {}

    size_t pos() const { return pos_; }
    size_t size() const { return size_; }
    size_t remaining() const { return size_ - pos_; }
    bool truncated() const { return truncated_; }
    bool ok() const { return !truncated_; }

    uint8_t u8() {
        if (!need(1)) return 0;
        return data_[pos_++];
    }
    uint16_t u16() {
        if (!need(2)) return 0;
        uint16_t v = uint16_t(data_[pos_]) | uint16_t(data_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }
    uint32_t u32() {
        if (!need(4)) return 0;
        uint32_t v = uint32_t(data_[pos_]) | uint32_t(data_[pos_ + 1]) << 8 |
                     uint32_t(data_[pos_ + 2]) << 16 | uint32_t(data_[pos_ + 3]) << 24;
        pos_ += 4;
        return v;
    }
    uint64_t u64() {
        uint64_t lo = u32();
        uint64_t hi = u32();
        return lo | hi << 32;
    }
    int8_t i8() { return int8_t(u8()); }
    int16_t i16() { return int16_t(u16()); }
    int32_t i32() { return int32_t(u32()); }
    int64_t i64() { return int64_t(u64()); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    // Borrowed view of the next n bytes; empty view + truncated flag if short.
    std::span<const uint8_t> view(size_t n) {
        if (!need(n)) return {};
        auto v = std::span<const uint8_t>(data_ + pos_, n);
        pos_ += n;
        return v;
    }

    void skip(size_t n) {
        if (need(n)) pos_ += n;
    }

private:
    bool need(size_t n) {
        if (size_ - pos_ < n) {
            truncated_ = true;
            pos_ = size_;
            return false;
        }
        return true;
    }

    const uint8_t* data_ = nullptr;
    size_t size_ = 0;
    size_t pos_ = 0;
    bool truncated_ = false;
};

// Append-only little-endian byte builder with patch support for length fields
// that are only known after the payload is written.
class ByteWriter {
public:
    void u8(uint8_t v) { out_.push_back(v); }
    void u16(uint16_t v) {
        out_.push_back(uint8_t(v));
        out_.push_back(uint8_t(v >> 8));
    }
    void u32(uint32_t v) {
        out_.push_back(uint8_t(v));
        out_.push_back(uint8_t(v >> 8));
        out_.push_back(uint8_t(v >> 16));
        out_.push_back(uint8_t(v >> 24));
    }
    void u64(uint64_t v) {
        u32(uint32_t(v));
        u32(uint32_t(v >> 32));
    }
    void i8(int8_t v) { u8(uint8_t(v)); }
    void i16(int16_t v) { u16(uint16_t(v)); }
    void i32(int32_t v) { u32(uint32_t(v)); }
    void i64(int64_t v) { u64(uint64_t(v)); }
    void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
    void bytes(const uint8_t* p, size_t n) { out_.insert(out_.end(), p, p + n); }
    void bytes(std::span<const uint8_t> b) { bytes(b.data(), b.size()); }

    void patch_u32(size_t at, uint32_t v) {
        out_[at] = uint8_t(v);
        out_[at + 1] = uint8_t(v >> 8);
        out_[at + 2] = uint8_t(v >> 16);
        out_[at + 3] = uint8_t(v >> 24);
    }

    size_t size() const { return out_.size(); }
    const std::vector<uint8_t>& data() const { return out_; }
    std::vector<uint8_t> take() { return std::move(out_); }

private:
    std::vector<uint8_t> out_;
};

}  // namespace nanoua
