#include "bpr/binary_io.hpp"

#include <fstream>
#include <iterator>
#include <limits>

namespace bpr::io {

void ByteWriter::short_string(std::string_view s) {
    if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
        throw ValidationError("string too long for u16 length prefix: " + std::string(s.substr(0, 32)));
    }
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
}

void ByteReader::require(std::size_t n, std::string_view what) const {
    if (remaining() < n) {
        throw FormatError("truncated data at byte offset " + std::to_string(pos_) + " while reading " +
                          std::string(what) + " (need " + std::to_string(n) + " bytes, have " +
                          std::to_string(remaining()) + ")");
    }
}

std::uint64_t ByteReader::get(int n, std::string_view what) {
    require(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
}

std::string ByteReader::raw(std::size_t n, std::string_view what) {
    require(n, what);
    std::string s(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
}

std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace bpr::io
