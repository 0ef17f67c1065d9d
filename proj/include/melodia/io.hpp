#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "melodia/common.hpp"

namespace melodia::io {

// Little-endian binary stream helpers over an in-memory buffer. All on-disk
// formats in this project are "magic + u32 header length + JSON header +
// row-major f32 blobs", assembled in memory and written atomically.
class Writer {
public:
    void bytes(const void* data, size_t len);
    void u32(uint32_t v);
    void u64(uint64_t v);
    void f32(float v);
    void matrix(const Eigen::MatrixXf& m);  // row-major
    void tag(const char magic[4]);

    const std::vector<uint8_t>& buffer() const { return buf_; }

private:
    std::vector<uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::vector<uint8_t> data) : buf_(std::move(data)) {}

    void bytes(void* out, size_t len);
    uint32_t u32();
    uint64_t u64();
    float f32();
    Eigen::MatrixXf matrix(int rows, int cols);
    void expect_tag(const char magic[4], const std::string& what);
    std::string str(size_t len);
    size_t remaining() const { return buf_.size() - pos_; }

private:
    std::vector<uint8_t> buf_;
    size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::filesystem::path& path);

// temp-file + rename so concurrent writers and crashed runs never leave a
// truncated artifact behind
void write_file_atomic(const std::filesystem::path& path, const void* data, size_t len);
void write_file_atomic(const std::filesystem::path& path, const std::vector<uint8_t>& data);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

std::string read_text(const std::filesystem::path& path);

}  // namespace melodia::io
