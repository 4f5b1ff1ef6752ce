#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "modp/error.hpp"
#include "modp/rng.hpp"
#include "modp/schema.hpp"
#include "modp/text.hpp"

namespace modp {

// N x ncols binary matrix, one-hot within every question block.
// Dense one byte per cell, row-major. Immutable once loaded.
struct ResponseMatrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<size_t> block_starts;
    std::vector<uint8_t> cells;

    size_t question_count() const { return block_starts.empty() ? 0 : block_starts.size() - 1; }

    uint8_t at(size_t r, size_t c) const { return cells[r * cols + c]; }

    std::span<const uint8_t> row(size_t r) const {
        return std::span<const uint8_t>(cells.data() + r * cols, cols);
    }

    // one set column per question block
    std::vector<size_t> set_columns(size_t r) const {
        std::vector<size_t> out;
        out.reserve(question_count());
        const uint8_t* p = cells.data() + r * cols;
        for (size_t q = 0; q + 1 < block_starts.size(); ++q) {
            for (size_t i = block_starts[q]; i < block_starts[q + 1]; ++i) {
                if (p[i]) {
                    out.push_back(i);
                    break;
                }
            }
        }
        return out;
    }

    // per-question category index, uint16 per question; used for Hamming work
    std::vector<uint16_t> category_indices(size_t r) const {
        std::vector<uint16_t> out(question_count());
        const uint8_t* p = cells.data() + r * cols;
        for (size_t q = 0; q + 1 < block_starts.size(); ++q) {
            for (size_t i = block_starts[q]; i < block_starts[q + 1]; ++i) {
                if (p[i]) {
                    out[q] = static_cast<uint16_t>(i - block_starts[q]);
                    break;
                }
            }
        }
        return out;
    }

    void validate() const {
        if (cells.size() != rows * cols) throw ValidationError("matrix: cell storage size mismatch");
        for (size_t r = 0; r < rows; ++r) {
            const uint8_t* p = cells.data() + r * cols;
            for (size_t q = 0; q + 1 < block_starts.size(); ++q) {
                int ones = 0;
                for (size_t i = block_starts[q]; i < block_starts[q + 1]; ++i) ones += p[i] != 0;
                if (ones != 1)
                    throw ValidationError("row " + std::to_string(r) + ": block " + std::to_string(q) +
                                          " has " + std::to_string(ones) + " ones, expected exactly 1");
            }
        }
    }
};

inline ResponseMatrix load_matrix(const CategoricalSchema& schema,
                                  const std::vector<std::vector<uint8_t>>& encoded_rows) {
    ResponseMatrix m;
    m.cols = schema.total_columns();
    m.block_starts = schema.block_starts;
    m.rows = encoded_rows.size();
    m.cells.reserve(m.rows * m.cols);
    for (const auto& r : encoded_rows) {
        if (r.size() != m.cols) throw ValidationError("encoded row length mismatch");
        m.cells.insert(m.cells.end(), r.begin(), r.end());
    }
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// crosstabulation: counts = R^T R over binary rows
// ---------------------------------------------------------------------------

struct Crosstab {
    size_t ncols = 0;
    int64_t n_rows = 0;
    std::vector<size_t> block_starts;
    std::vector<int64_t> counts;  // ncols*ncols, symmetric

    int64_t at(size_t i, size_t j) const { return counts[i * ncols + j]; }
    int64_t& at(size_t i, size_t j) { return counts[i * ncols + j]; }
};

inline Crosstab crosstab(const ResponseMatrix& m) {
    Crosstab ct;
    ct.ncols = m.cols;
    ct.n_rows = static_cast<int64_t>(m.rows);
    ct.block_starts = m.block_starts;
    ct.counts.assign(m.cols * m.cols, 0);
    for (size_t r = 0; r < m.rows; ++r) {
        const auto set = m.set_columns(r);
        for (size_t a : set)
            for (size_t b : set) ct.at(a, b) += 1;
    }
    return ct;
}

inline std::vector<int64_t> univariate_counts(const ResponseMatrix& m) {
    std::vector<int64_t> out(m.cols, 0);
    for (size_t r = 0; r < m.rows; ++r) {
        const uint8_t* p = m.cells.data() + r * m.cols;
        for (size_t c = 0; c < m.cols; ++c) out[c] += p[c] != 0;
    }
    return out;
}

inline ResponseMatrix bootstrap_resample(const ResponseMatrix& m, uint64_t seed) {
    if (m.rows == 0) throw ValidationError("bootstrap_resample: empty matrix");
    Rng rng = substream(seed, StreamTag::bootstrap);
    ResponseMatrix out;
    out.rows = m.rows;
    out.cols = m.cols;
    out.block_starts = m.block_starts;
    out.cells.resize(m.rows * m.cols);
    for (size_t r = 0; r < m.rows; ++r) {
        const size_t src = static_cast<size_t>(rng.next_below(m.rows));
        std::memcpy(out.cells.data() + r * m.cols, m.cells.data() + src * m.cols, m.cols);
    }
    return out;
}

// ---------------------------------------------------------------------------
// encoded-matrix file
//
//   magic   8 bytes  "MODPMAT\n"
//   u32     version  (1)
//   u64     N        row count
//   u32     ncols
//   u32     qcount
//   u32[qcount+1]    block_starts
//   u8[N*ncols]      cells, row-major
//
// little-endian throughout
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

inline uint32_t get_u32(std::istream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline uint64_t get_u64(std::istream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

} // namespace detail

inline constexpr char kMatrixMagic[8] = {'M', 'O', 'D', 'P', 'M', 'A', 'T', '\n'};

inline void write_matrix(const std::string& path, const ResponseMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write matrix file: " + path);
    out.write(kMatrixMagic, 8);
    detail::put_u32(out, 1);
    detail::put_u64(out, m.rows);
    detail::put_u32(out, static_cast<uint32_t>(m.cols));
    detail::put_u32(out, static_cast<uint32_t>(m.question_count()));
    for (size_t b : m.block_starts) detail::put_u32(out, static_cast<uint32_t>(b));
    out.write(reinterpret_cast<const char*>(m.cells.data()),
              static_cast<std::streamsize>(m.cells.size()));
    if (!out) throw ValidationError("short write: " + path);
}

inline ResponseMatrix read_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open matrix file: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMatrixMagic, 8) != 0)
        throw ValidationError("not a matrix file: " + path);
    const uint32_t version = detail::get_u32(in);
    if (version != 1)
        throw ValidationError("matrix file " + path + ": unsupported version " + std::to_string(version));
    ResponseMatrix m;
    m.rows = detail::get_u64(in);
    m.cols = detail::get_u32(in);
    const uint32_t qcount = detail::get_u32(in);
    m.block_starts.resize(qcount + 1);
    for (auto& b : m.block_starts) b = detail::get_u32(in);
    m.cells.resize(m.rows * m.cols);
    in.read(reinterpret_cast<char*>(m.cells.data()), static_cast<std::streamsize>(m.cells.size()));
    if (!in) throw ValidationError("matrix file truncated: " + path);
    m.validate();
    return m;
}

// one line per (i, j >= i, count); zero cells omitted
inline std::string serialize_crosstab(const Crosstab& ct) {
    std::string out = "# modp-crosstab v1\n";
    out += "# N " + std::to_string(ct.n_rows) + "\n";
    out += "# ncols " + std::to_string(ct.ncols) + "\n";
    for (size_t i = 0; i < ct.ncols; ++i)
        for (size_t j = i; j < ct.ncols; ++j)
            if (ct.at(i, j) != 0)
                out += std::to_string(i) + "\t" + std::to_string(j) + "\t" +
                       std::to_string(ct.at(i, j)) + "\n";
    return out;
}

} // namespace modp
