#pragma once
// Little-endian encoding helpers shared by the binary containers.

#include "bpr/common.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

namespace bpr::io {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

    // u16 length prefix followed by the bytes.
    void short_string(std::string_view s);

    const std::vector<char>& bytes() const { return bytes_; }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::vector<char> bytes_;
};

// Reads from an in-memory buffer; every read past the end throws FormatError
// with the byte offset at which the data ran out.
class ByteReader {
public:
    explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1, "u8")); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2, "u16")); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4, "u32")); }
    std::uint64_t u64() { return get(8, "u64"); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string raw(std::size_t n, std::string_view what);
    std::string short_string(std::string_view what) { return raw(u16(), what); }

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool at_end() const { return pos_ == data_.size(); }
    void require(std::size_t n, std::string_view what) const;

private:
    std::uint64_t get(int n, std::string_view what);
    std::vector<char> data_;
    std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& bytes);

}  // namespace bpr::io
