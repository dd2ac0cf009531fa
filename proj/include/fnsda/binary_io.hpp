#pragma once

// Little-endian byte buffers shared by the dataset and checkpoint formats.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fnsda {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t hash = kFnvOffset);
std::uint64_t fnv1a64(const std::string& text);
std::uint64_t file_digest(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    /// u32 length, then bytes.
    void str(const std::string& s);
    void f64s(std::span<const double> v);

    const std::vector<unsigned char>& bytes() const { return bytes_; }
    /// Appends the FNV-1a checksum of everything written so far.
    void seal() { u64(fnv1a64(bytes_)); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    std::vector<unsigned char> bytes_;
};

/// Bounds-checked reader; throws FormatError on truncation.
class ByteReader {
public:
    explicit ByteReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }
    std::string raw(std::size_t n);
    std::string str(std::size_t max_len = 1 << 20);
    std::vector<double> f64s(std::size_t n);

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::uint64_t get(int n);
    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// Verifies and strips the trailing checksum; FormatError on mismatch.
std::span<const unsigned char> checked_body(std::span<const unsigned char> bytes);

}  // namespace fnsda
