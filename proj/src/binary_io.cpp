#include "fnsda/binary_io.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "fnsda/errors.hpp"

namespace fnsda {

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t hash) {
    for (unsigned char b : bytes) {
        hash ^= b;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::uint64_t fnv1a64(const std::string& text) {
    return fnv1a64(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::uint64_t file_digest(const std::filesystem::path& path) { return fnv1a64(read_file(path)); }

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void ByteWriter::str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
}

void ByteWriter::f64s(std::span<const double> v) {
    bytes_.reserve(bytes_.size() + 8 * v.size());
    for (double x : v) f64(x);
}

std::uint64_t ByteReader::get(int n) {
    if (remaining() < static_cast<std::size_t>(n)) throw FormatError("unexpected end of data");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
}

std::string ByteReader::raw(std::size_t n) {
    if (remaining() < n) throw FormatError("unexpected end of data");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
}

std::string ByteReader::str(std::size_t max_len) {
    const std::uint32_t n = u32();
    if (n > max_len) throw FormatError("string length " + std::to_string(n) + " exceeds limit");
    return raw(n);
}

std::vector<double> ByteReader::f64s(std::size_t n) {
    if (remaining() / 8 < n) throw FormatError("unexpected end of data");
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()),
                                                           text.size()));
}

std::span<const unsigned char> checked_body(std::span<const unsigned char> bytes) {
    if (bytes.size() < 8) throw FormatError("file too short for checksum");
    const auto body = bytes.first(bytes.size() - 8);
    ByteReader tail(bytes.last(8));
    if (tail.u64() != fnv1a64(body)) throw FormatError("checksum mismatch");
    return body;
}

}  // namespace fnsda
