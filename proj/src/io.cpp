#include "melodia/io.hpp"

#include <cstdio>
#include <fstream>

namespace melodia::io {

namespace fs = std::filesystem;

void Writer::bytes(const void* data, size_t len) {
    const auto* p = static_cast<const uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + len);
}

void Writer::u32(uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    bytes(b, 4);
}

void Writer::u64(uint64_t v) {
    u32(static_cast<uint32_t>(v));
    u32(static_cast<uint32_t>(v >> 32));
}

void Writer::f32(float v) {
    static_assert(sizeof(float) == 4);
    uint32_t bits = 0;
    std::memcpy(&bits, &v, 4);
    u32(bits);
}

void Writer::matrix(const Eigen::MatrixXf& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) f32(m(r, c));
}

void Writer::tag(const char magic[4]) { bytes(magic, 4); }

void Reader::bytes(void* out, size_t len) {
    require(pos_ + len <= buf_.size(), ErrorCode::format_error, "truncated file");
    std::memcpy(out, buf_.data() + pos_, len);
    pos_ += len;
}

uint32_t Reader::u32() {
    uint8_t b[4];
    bytes(b, 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint64_t Reader::u64() {
    const uint64_t lo = u32();
    const uint64_t hi = u32();
    return lo | hi << 32;
}

float Reader::f32() {
    const uint32_t bits = u32();
    float v = 0.0f;
    std::memcpy(&v, &bits, 4);
    return v;
}

Eigen::MatrixXf Reader::matrix(int rows, int cols) {
    Eigen::MatrixXf m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = f32();
    return m;
}

void Reader::expect_tag(const char magic[4], const std::string& what) {
    char got[5] = {0};
    bytes(got, 4);
    if (std::memcmp(got, magic, 4) != 0) {
        fail(ErrorCode::format_error,
             what + ": bad magic '" + std::string(got, 4) + "', expected '" +
                 std::string(magic, 4) + "'");
    }
}

std::string Reader::str(size_t len) {
    std::string s(len, '\0');
    bytes(s.data(), len);
    return s;
}

std::vector<uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io_error, "cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto len = static_cast<size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<uint8_t> data(len);
    if (len > 0) in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(len));
    require(in.good(), ErrorCode::io_error, "read failed on " + path.string());
    return data;
}

void write_file_atomic(const fs::path& path, const void* data, size_t len) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), ErrorCode::io_error, "cannot open " + tmp.string() + " for write");
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
        require(out.good(), ErrorCode::io_error, "write failed on " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::io_error, "rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

void write_file_atomic(const fs::path& path, const std::vector<uint8_t>& data) {
    write_file_atomic(path, data.data(), data.size());
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    write_file_atomic(path, text.data(), text.size());
}

std::string read_text(const fs::path& path) {
    auto raw = read_file(path);
    return std::string(raw.begin(), raw.end());
}

}  // namespace melodia::io
