#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "modp/dataset.hpp"
#include "modp/error.hpp"
#include "modp/rng.hpp"

namespace modp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// One non-self-predicting affine map. Output column i sees every input
// column except those in i's own question block: weight(j,i) = 0 whenever
// j and i fall in the same block.
struct MaskedAffine {
    Matrix weight;  // ncols x ncols, output = sigmoid(X * weight + bias^T)
    Vector bias;
};

inline void apply_mask(MaskedAffine& blade, const std::vector<size_t>& block_starts) {
    for (size_t q = 0; q + 1 < block_starts.size(); ++q) {
        const auto start = static_cast<Eigen::Index>(block_starts[q]);
        const auto len = static_cast<Eigen::Index>(block_starts[q + 1] - block_starts[q]);
        blade.weight.block(start, start, len, len).setZero();
    }
}

// zero the same block-diagonal holes in a gradient (or any congruent matrix)
inline void mask_blocks(Matrix& m, const std::vector<size_t>& block_starts) {
    for (size_t q = 0; q + 1 < block_starts.size(); ++q) {
        const auto start = static_cast<Eigen::Index>(block_starts[q]);
        const auto len = static_cast<Eigen::Index>(block_starts[q + 1] - block_starts[q]);
        m.block(start, start, len, len).setZero();
    }
}

// two linear layers with a ReLU between, softmax over blade logits
struct GatingNet {
    Matrix w1;  // ncols x reduced_features
    Vector b1;
    Matrix w2;  // reduced_features x num_blades
    Vector b2;
};

struct MultiBladeModel {
    std::vector<size_t> block_starts;
    std::vector<MaskedAffine> blades;
    GatingNet gating;
    std::string name;   // "model_<blades>_<reduced_features>"
    uint64_t seed = 0;  // master seed the parameters came from

    size_t cols() const { return block_starts.empty() ? 0 : block_starts.back(); }
    size_t num_blades() const { return blades.size(); }
    size_t reduced_features() const { return static_cast<size_t>(gating.w1.cols()); }
};

namespace detail {

inline void fill_uniform(Matrix& m, double bound, Rng& rng) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            m(i, j) = (2.0 * rng.next_double() - 1.0) * bound;
}

inline void fill_uniform(Vector& v, double bound, Rng& rng) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v(i) = (2.0 * rng.next_double() - 1.0) * bound;
}

inline double xavier_bound(size_t fan_in, size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

} // namespace detail

// Xavier-uniform weights, biases uniform in +-1/sqrt(fan_out), mask applied
// immediately so the invariant holds from step zero.
inline MultiBladeModel init_model(const std::vector<size_t>& block_starts, size_t num_blades,
                                  size_t reduced_features, uint64_t seed) {
    if (num_blades < 1) throw ValidationError("model needs at least 1 blade");
    if (reduced_features < 1) throw ValidationError("model needs reduced_features >= 1");
    MultiBladeModel model;
    model.block_starts = block_starts;
    model.name = "model_" + std::to_string(num_blades) + "_" + std::to_string(reduced_features);
    model.seed = seed;
    const size_t n = model.cols();
    Rng rng = substream(seed, StreamTag::param_init);
    for (size_t b = 0; b < num_blades; ++b) {
        MaskedAffine blade;
        blade.weight.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        blade.bias.resize(static_cast<Eigen::Index>(n));
        detail::fill_uniform(blade.weight, detail::xavier_bound(n, n), rng);
        detail::fill_uniform(blade.bias, 1.0 / std::sqrt(static_cast<double>(n)), rng);
        apply_mask(blade, block_starts);
        model.blades.push_back(std::move(blade));
    }
    model.gating.w1.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(reduced_features));
    model.gating.b1.resize(static_cast<Eigen::Index>(reduced_features));
    model.gating.w2.resize(static_cast<Eigen::Index>(reduced_features),
                           static_cast<Eigen::Index>(num_blades));
    model.gating.b2.resize(static_cast<Eigen::Index>(num_blades));
    detail::fill_uniform(model.gating.w1, detail::xavier_bound(n, reduced_features), rng);
    detail::fill_uniform(model.gating.b1, 1.0 / std::sqrt(static_cast<double>(reduced_features)), rng);
    detail::fill_uniform(model.gating.w2, detail::xavier_bound(reduced_features, num_blades), rng);
    detail::fill_uniform(model.gating.b2, 1.0 / std::sqrt(static_cast<double>(num_blades)), rng);
    return model;
}

// ---------------------------------------------------------------------------
// forward passes
// ---------------------------------------------------------------------------

inline Matrix to_dense(const ResponseMatrix& m) {
    Matrix x(static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
    for (size_t r = 0; r < m.rows; ++r)
        for (size_t c = 0; c < m.cols; ++c)
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m.at(r, c);
    return x;
}

inline Matrix to_dense(const ResponseMatrix& m, const std::vector<size_t>& row_indices) {
    Matrix x(static_cast<Eigen::Index>(row_indices.size()), static_cast<Eigen::Index>(m.cols));
    for (size_t r = 0; r < row_indices.size(); ++r)
        for (size_t c = 0; c < m.cols; ++c)
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m.at(row_indices[r], c);
    return x;
}

inline Matrix sigmoid(Matrix z) {
    return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

inline Matrix blade_forward(const MaskedAffine& blade, const Matrix& x) {
    if (x.cols() != blade.weight.rows()) throw ValidationError("blade_forward: dimension mismatch");
    Matrix z = x * blade.weight;
    z.rowwise() += blade.bias.transpose();
    return sigmoid(std::move(z));
}

inline Matrix blade_forward(const MaskedAffine& blade, const ResponseMatrix& m) {
    return blade_forward(blade, to_dense(m));
}

// row-wise softmax with max subtraction
inline Matrix softmax_rows(Matrix logits) {
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        logits.row(r) = (logits.row(r).array() - mx).exp();
        logits.row(r) /= logits.row(r).sum();
    }
    return logits;
}

// intermediates kept for backprop and diagnostics
struct GatingCache {
    Matrix pre_relu;  // N x F
    Matrix hidden;    // N x F
    Matrix weights;   // N x B, rows sum to 1
};

inline GatingCache gating_forward_cached(const GatingNet& g, const Matrix& x) {
    if (x.cols() != g.w1.rows()) throw ValidationError("gating_forward: dimension mismatch");
    GatingCache cache;
    cache.pre_relu = x * g.w1;
    cache.pre_relu.rowwise() += g.b1.transpose();
    cache.hidden = cache.pre_relu.cwiseMax(0.0);
    Matrix logits = cache.hidden * g.w2;
    logits.rowwise() += g.b2.transpose();
    cache.weights = softmax_rows(std::move(logits));
    return cache;
}

inline Matrix gating_forward(const GatingNet& g, const Matrix& x) {
    return gating_forward_cached(g, x).weights;
}

inline Matrix gating_forward(const GatingNet& g, const ResponseMatrix& m) {
    return gating_forward(g, to_dense(m));
}

struct ForwardCache {
    std::vector<Matrix> blade_probs;  // per blade, N x ncols
    GatingCache gating;
    Matrix output;  // N x ncols, convex combination of blade outputs
};

inline ForwardCache model_forward_cached(const MultiBladeModel& model, const Matrix& x) {
    ForwardCache cache;
    cache.gating = gating_forward_cached(model.gating, x);
    cache.output = Matrix::Zero(x.rows(), x.cols());
    cache.blade_probs.reserve(model.num_blades());
    for (size_t b = 0; b < model.num_blades(); ++b) {
        Matrix p = blade_forward(model.blades[b], x);
        cache.output.noalias() +=
            cache.gating.weights.col(static_cast<Eigen::Index>(b)).asDiagonal() * p;
        cache.blade_probs.push_back(std::move(p));
    }
    return cache;
}

inline Matrix model_forward(const MultiBladeModel& model, const Matrix& x) {
    return model_forward_cached(model, x).output;
}

inline Matrix model_forward(const MultiBladeModel& model, const ResponseMatrix& m) {
    return model_forward(model, to_dense(m));
}

// ---------------------------------------------------------------------------
// blade diagnostics
// ---------------------------------------------------------------------------

struct BladeDiagnostics {
    std::vector<int> dominant;        // per row, argmax gating weight, ties -> lowest index
    Matrix sorted_weights;            // N x B, each row descending
    std::vector<int64_t> blade_rows;  // rows assigned per blade
    Matrix category_percent;          // B x ncols, percent of assigned rows with that column set
};

inline std::vector<int> dominant_blades(const Matrix& weights) {
    std::vector<int> out(static_cast<size_t>(weights.rows()));
    for (Eigen::Index r = 0; r < weights.rows(); ++r) {
        int best = 0;
        for (Eigen::Index b = 1; b < weights.cols(); ++b)
            if (weights(r, b) > weights(r, best)) best = static_cast<int>(b);
        out[static_cast<size_t>(r)] = best;
    }
    return out;
}

inline BladeDiagnostics blade_diagnostics(const MultiBladeModel& model, const ResponseMatrix& m) {
    const Matrix x = to_dense(m);
    const Matrix weights = gating_forward(model.gating, x);
    BladeDiagnostics d;
    d.dominant = dominant_blades(weights);
    d.sorted_weights = weights;
    for (Eigen::Index r = 0; r < d.sorted_weights.rows(); ++r) {
        std::vector<double> row(d.sorted_weights.cols());
        for (Eigen::Index b = 0; b < d.sorted_weights.cols(); ++b) row[static_cast<size_t>(b)] = weights(r, b);
        std::sort(row.begin(), row.end(), std::greater<>());
        for (Eigen::Index b = 0; b < d.sorted_weights.cols(); ++b) d.sorted_weights(r, b) = row[static_cast<size_t>(b)];
    }
    const size_t nb = model.num_blades();
    d.blade_rows.assign(nb, 0);
    d.category_percent = Matrix::Zero(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(m.cols));
    for (size_t r = 0; r < m.rows; ++r) {
        const int b = d.dominant[r];
        d.blade_rows[static_cast<size_t>(b)] += 1;
        for (size_t c : m.set_columns(r)) d.category_percent(b, static_cast<Eigen::Index>(c)) += 1.0;
    }
    for (size_t b = 0; b < nb; ++b)
        if (d.blade_rows[b] > 0)
            d.category_percent.row(static_cast<Eigen::Index>(b)) *=
                100.0 / static_cast<double>(d.blade_rows[b]);
    return d;
}

// co_assignment(a,b) = #rows dominant in blade a of model1 and blade b of model2
inline Eigen::MatrixXi co_assignment(const MultiBladeModel& model1, const MultiBladeModel& model2,
                                     const ResponseMatrix& m) {
    const Matrix x = to_dense(m);
    const auto dom1 = dominant_blades(gating_forward(model1.gating, x));
    const auto dom2 = dominant_blades(gating_forward(model2.gating, x));
    Eigen::MatrixXi co = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(model1.num_blades()),
                                               static_cast<Eigen::Index>(model2.num_blades()));
    for (size_t r = 0; r < m.rows; ++r) co(dom1[r], dom2[r]) += 1;
    return co;
}

// ---------------------------------------------------------------------------
// checkpoint file
//
//   magic    8 bytes "MODPCKPT"
//   u32      version (1)
//   u64      seed
//   u32      num_blades, u32 reduced_features, u32 ncols, u32 qcount
//   u32[qcount+1] block_starts
//   u32 len + bytes   model name
//   per blade: weight row-major f64[ncols*ncols], bias f64[ncols]
//   gating: w1 row-major f64[ncols*F], b1 f64[F], w2 row-major f64[F*B], b2 f64[B]
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'M', 'O', 'D', 'P', 'C', 'K', 'P', 'T'};

namespace detail {

inline void put_matrix(std::ostream& out, const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double v = m(r, c);
            out.write(reinterpret_cast<const char*>(&v), 8);
        }
}

inline void put_vector(std::ostream& out, const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double x = v(i);
        out.write(reinterpret_cast<const char*>(&x), 8);
    }
}

inline void get_matrix(std::istream& in, Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            double v = 0;
            in.read(reinterpret_cast<char*>(&v), 8);
            m(r, c) = v;
        }
}

inline void get_vector(std::istream& in, Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        double x = 0;
        in.read(reinterpret_cast<char*>(&x), 8);
        v(i) = x;
    }
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const MultiBladeModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, 8);
    detail::put_u32(out, 1);
    detail::put_u64(out, model.seed);
    detail::put_u32(out, static_cast<uint32_t>(model.num_blades()));
    detail::put_u32(out, static_cast<uint32_t>(model.reduced_features()));
    detail::put_u32(out, static_cast<uint32_t>(model.cols()));
    detail::put_u32(out, static_cast<uint32_t>(model.block_starts.size() - 1));
    for (size_t b : model.block_starts) detail::put_u32(out, static_cast<uint32_t>(b));
    detail::put_u32(out, static_cast<uint32_t>(model.name.size()));
    out.write(model.name.data(), static_cast<std::streamsize>(model.name.size()));
    for (const auto& blade : model.blades) {
        detail::put_matrix(out, blade.weight);
        detail::put_vector(out, blade.bias);
    }
    detail::put_matrix(out, model.gating.w1);
    detail::put_vector(out, model.gating.b1);
    detail::put_matrix(out, model.gating.w2);
    detail::put_vector(out, model.gating.b2);
    if (!out) throw ValidationError("short write: " + path);
}

inline MultiBladeModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw ValidationError("not a checkpoint file: " + path);
    const uint32_t version = detail::get_u32(in);
    if (version != 1)
        throw ValidationError("checkpoint " + path + ": unsupported version " + std::to_string(version));
    MultiBladeModel model;
    model.seed = detail::get_u64(in);
    const uint32_t nb = detail::get_u32(in);
    const uint32_t rf = detail::get_u32(in);
    const uint32_t ncols = detail::get_u32(in);
    const uint32_t qcount = detail::get_u32(in);
    model.block_starts.resize(qcount + 1);
    for (auto& b : model.block_starts) b = detail::get_u32(in);
    if (model.cols() != ncols) throw ValidationError("checkpoint: block_starts/ncols mismatch");
    {
        const uint32_t len = detail::get_u32(in);
        model.name.resize(len);
        in.read(model.name.data(), len);
    }
    for (uint32_t b = 0; b < nb; ++b) {
        MaskedAffine blade;
        blade.weight.resize(ncols, ncols);
        blade.bias.resize(ncols);
        detail::get_matrix(in, blade.weight);
        detail::get_vector(in, blade.bias);
        model.blades.push_back(std::move(blade));
    }
    model.gating.w1.resize(ncols, rf);
    model.gating.b1.resize(rf);
    model.gating.w2.resize(rf, nb);
    model.gating.b2.resize(nb);
    detail::get_matrix(in, model.gating.w1);
    detail::get_vector(in, model.gating.b1);
    detail::get_matrix(in, model.gating.w2);
    detail::get_vector(in, model.gating.b2);
    if (!in) throw ValidationError("checkpoint truncated: " + path);
    return model;
}

} // namespace modp
