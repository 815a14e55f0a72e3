#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sceneseg/errors.hpp"

namespace sceneseg {

// Dense row-major matrix of doubles. All numeric kernels in this library work
// in double precision; the on-disk containers store 32-bit floats.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

    const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
    double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline Mat transpose(const Mat& a) {
    Mat out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

// out = a * b, naive triple loop. Shapes: (m x k) * (k x n) -> (m x n).
inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: shape mismatch");
    Mat out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        double* orow = out.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double av = ar[k];
            if (av == 0.0) continue;
            const double* br = b.row(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += av * br[j];
        }
    }
    return out;
}

// -------------------------------------------------------------------------
// Binary tensor container.
//
// Fixed little-endian layout, shared by feature files, model output files and
// weight tensors so corpora can be reproduced bit-exactly from any language:
//
//   bytes 0..7    magic "SSEGBIN1"
//   bytes 8..11   u32 header version (1)
//   bytes 12..19  kind tag, 8 bytes, NUL padded ("frame", "audio", "text",
//                 "outputs", "tensor")
//   bytes 20..23  u32 rows
//   bytes 24..27  u32 cols
//   bytes 28..35  f64 fps (0 when not applicable)
//   bytes 36..43  f64 duration in seconds (0 when not applicable)
//   bytes 44..    payload, IEEE-754 binary32 little-endian
//
// Payload sizes: "frame"/"audio"/"text"/"tensor" carry rows*cols values;
// "outputs" carries rows*cols label scores, then rows boundary probabilities,
// then rows offsets.
// -------------------------------------------------------------------------

struct Container {
    std::string kind;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    double fps = 0.0;
    double duration_s = 0.0;
    std::vector<float> data;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t x) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t x) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    put_u64(out, bits);
}

inline void put_f32(std::string& out, float x) {
    std::uint32_t bits;
    std::memcpy(&bits, &x, 4);
    put_u32(out, bits);
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline double get_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
}

inline float get_f32(const unsigned char* p) {
    std::uint32_t bits = get_u32(p);
    float x;
    std::memcpy(&x, &bits, 4);
    return x;
}

} // namespace detail

constexpr char kContainerMagic[8] = {'S', 'S', 'E', 'G', 'B', 'I', 'N', '1'};
constexpr std::size_t kContainerHeaderBytes = 44;

inline std::string encode_container(const Container& c) {
    if (c.kind.size() > 8) throw std::invalid_argument("container kind tag too long: " + c.kind);
    std::string out;
    out.reserve(kContainerHeaderBytes + c.data.size() * 4);
    out.append(kContainerMagic, 8);
    detail::put_u32(out, 1);
    std::string tag = c.kind;
    tag.resize(8, '\0');
    out.append(tag);
    detail::put_u32(out, c.rows);
    detail::put_u32(out, c.cols);
    detail::put_f64(out, c.fps);
    detail::put_f64(out, c.duration_s);
    for (float f : c.data) detail::put_f32(out, f);
    return out;
}

inline Container decode_container(const std::string& bytes, const std::string& origin = "") {
    const auto fail = [&](const std::string& msg) -> ParseError {
        return ParseError("container " + (origin.empty() ? std::string("<memory>") : origin) + ": " + msg);
    };
    if (bytes.size() < kContainerHeaderBytes) throw fail("truncated header");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (std::memcmp(p, kContainerMagic, 8) != 0) throw fail("bad magic");
    if (detail::get_u32(p + 8) != 1) throw fail("unsupported header version");
    Container c;
    const char* tag = bytes.data() + 12;
    c.kind.assign(tag, tag + 8);
    c.kind.erase(c.kind.find_last_not_of('\0') + 1);
    c.rows = detail::get_u32(p + 20);
    c.cols = detail::get_u32(p + 24);
    c.fps = detail::get_f64(p + 28);
    c.duration_s = detail::get_f64(p + 36);
    std::size_t expected = static_cast<std::size_t>(c.rows) * c.cols;
    if (c.kind == "outputs") expected += 2ull * c.rows;
    if (bytes.size() != kContainerHeaderBytes + expected * 4) throw fail("payload size mismatch");
    c.data.resize(expected);
    const unsigned char* q = p + kContainerHeaderBytes;
    for (std::size_t i = 0; i < expected; ++i) c.data[i] = detail::get_f32(q + i * 4);
    return c;
}

inline void write_container_file(const std::string& path, const Container& c) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    const std::string bytes = encode_container(c);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

inline Container read_container_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_container(bytes, path);
}

inline Container mat_to_container(const Mat& m, const std::string& kind, double fps = 0.0,
                                  double duration_s = 0.0) {
    Container c;
    c.kind = kind;
    c.rows = static_cast<std::uint32_t>(m.rows);
    c.cols = static_cast<std::uint32_t>(m.cols);
    c.fps = fps;
    c.duration_s = duration_s;
    c.data.reserve(m.v.size());
    for (double x : m.v) c.data.push_back(static_cast<float>(x));
    return c;
}

inline Mat container_to_mat(const Container& c) {
    Mat m(static_cast<int>(c.rows), static_cast<int>(c.cols));
    const std::size_t n = static_cast<std::size_t>(c.rows) * c.cols;
    for (std::size_t i = 0; i < n; ++i) m.v[i] = static_cast<double>(c.data[i]);
    return m;
}

} // namespace sceneseg
