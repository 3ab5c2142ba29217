#include "emorank/binary_io.h"

#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <iterator>

namespace emorank {

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for large buffers.
    std::size_t off = 0;
    while (off < bytes.size()) {
        const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
        c = ::crc32(c, bytes.data() + off, static_cast<uInt>(n));
        off += n;
    }
    return static_cast<std::uint32_t>(c);
}

void ByteWriter::crc() { u32(crc32_of(buf_)); }

void ByteReader::expect_magic(std::string_view m) {
    auto got = take(m.size());
    if (!std::equal(m.begin(), m.end(), got.begin())) {
        fail(ErrorKind::kFormat, what_ + ": bad magic (expected \"" + std::string(m) + "\")");
    }
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
    if (remaining() < n) {
        fail(ErrorKind::kFormat, what_ + ": truncated at byte " + std::to_string(pos_));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
}

std::uint32_t ByteReader::u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | b[static_cast<std::size_t>(i)];
    }
    return v;
}

std::uint64_t ByteReader::u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | b[static_cast<std::size_t>(i)];
    }
    return v;
}

std::string ByteReader::str() {
    const std::uint32_t n = u32();
    auto b = take(n);
    return std::string(b.begin(), b.end());
}

void ByteReader::verify_crc() {
    const std::uint32_t expected = crc32_of(bytes_.first(pos_));
    const std::uint32_t stored = u32();
    if (stored != expected) {
        fail(ErrorKind::kChecksum, what_ + ": CRC32 mismatch");
    }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::kIo, "cannot open " + path.string());
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::kIo, "cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        fail(ErrorKind::kIo, "write failed for " + path.string());
    }
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        fail(ErrorKind::kIo, "sha256 failed");
    }
    std::string hex;
    hex.reserve(len * 2);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

std::string sha256_hex(std::string_view text) {
    return sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file_bytes(path)); }

}  // namespace emorank
