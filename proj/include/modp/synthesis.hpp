#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "modp/dataset.hpp"
#include "modp/error.hpp"
#include "modp/metrics.hpp"
#include "modp/model.hpp"
#include "modp/rng.hpp"

namespace modp {

// Synthetic rows plus the entropy of the draws that produced them.
// source_row keeps the alignment to the true input (identity until rows
// are filtered), block_entropy holds per-(row,question) bits so that
// post-processing can recompute totals after replacing blocks.
struct SynthesisResult {
    ResponseMatrix rows;
    std::vector<double> entropy_bits;      // per row, sum of block entropies
    std::vector<double> block_entropy;     // rows x Q, row-major
    std::vector<size_t> source_row;        // index into the true matrix
    std::vector<int> instance;             // instance index each row came from

    size_t question_count() const { return rows.question_count(); }

    double block_bits(size_t r, size_t q) const { return block_entropy[r * question_count() + q]; }

    void recompute_totals() {
        const size_t nq = question_count();
        entropy_bits.assign(rows.rows, 0.0);
        for (size_t r = 0; r < rows.rows; ++r)
            for (size_t q = 0; q < nq; ++q) entropy_bits[r] += block_entropy[r * nq + q];
    }
};

// Sample one category per (row, question) from the block-normalized
// probabilities. Entropy is accumulated as -sum (q+1e-10) log2(q+1e-10)
// over the normalized block. Draws use an independent sub-stream per
// (row, question, instance), so later instances never disturb earlier ones.
// row_offset shifts the global row index when probs is a chunk of a larger
// matrix; chunked and whole-matrix calls then produce identical draws.
inline SynthesisResult instantiate(const Matrix& probs, const std::vector<size_t>& block_starts,
                                   uint64_t seed, int instance_index = 0, size_t row_offset = 0) {
    const size_t n = static_cast<size_t>(probs.rows());
    const size_t ncols = static_cast<size_t>(probs.cols());
    const size_t nq = block_starts.size() - 1;
    if (block_starts.back() != ncols) throw ValidationError("instantiate: block/column mismatch");

    SynthesisResult res;
    res.rows.rows = n;
    res.rows.cols = ncols;
    res.rows.block_starts = block_starts;
    res.rows.cells.assign(n * ncols, 0);
    res.block_entropy.assign(n * nq, 0.0);
    res.source_row.resize(n);
    res.instance.assign(n, instance_index);

    constexpr double stabilizer = 1e-10;
    const double inv_log2 = 1.0 / std::log(2.0);
    std::vector<double> q(ncols);
    for (size_t r = 0; r < n; ++r) {
        res.source_row[r] = row_offset + r;
        for (size_t k = 0; k < nq; ++k) {
            const size_t start = block_starts[k], end = block_starts[k + 1];
            double total = 0;
            for (size_t i = start; i < end; ++i) {
                q[i] = probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i));
                total += q[i];
            }
            if (!std::isfinite(total) || total <= 0)
                throw NumericalError("instantiate: non-finite or non-positive probability block (row " +
                                     std::to_string(row_offset + r) + ", question " +
                                     std::to_string(k) + ")");
            double bits = 0;
            for (size_t i = start; i < end; ++i) {
                q[i] /= total;
                bits -= (q[i] + stabilizer) * std::log(q[i] + stabilizer) * inv_log2;
            }
            res.block_entropy[r * nq + k] = bits;

            Rng rng = substream(seed, StreamTag::instantiate, row_offset + r, k,
                                static_cast<uint64_t>(instance_index));
            const double u = rng.next_double();
            double cum = 0;
            size_t chosen = end - 1;
            for (size_t i = start; i < end; ++i) {
                cum += q[i];
                if (u < cum) {
                    chosen = i;
                    break;
                }
            }
            res.rows.cells[r * ncols + chosen] = 1;
        }
    }
    res.recompute_totals();
    return res;
}

// Concatenate a chunk produced with a matching row_offset.
inline void append_rows(SynthesisResult& acc, const SynthesisResult& part) {
    if (acc.rows.rows == 0 && acc.rows.cols == 0) {
        acc.rows.cols = part.rows.cols;
        acc.rows.block_starts = part.rows.block_starts;
    }
    if (acc.rows.cols != part.rows.cols || acc.rows.block_starts != part.rows.block_starts)
        throw ValidationError("append_rows: block structure mismatch");
    acc.rows.cells.insert(acc.rows.cells.end(), part.rows.cells.begin(), part.rows.cells.end());
    acc.rows.rows += part.rows.rows;
    acc.block_entropy.insert(acc.block_entropy.end(), part.block_entropy.begin(),
                             part.block_entropy.end());
    acc.entropy_bits.insert(acc.entropy_bits.end(), part.entropy_bits.begin(),
                            part.entropy_bits.end());
    acc.source_row.insert(acc.source_row.end(), part.source_row.begin(), part.source_row.end());
    acc.instance.insert(acc.instance.end(), part.instance.begin(), part.instance.end());
}

// Per (row, question), pass the true block through with probability p,
// otherwise keep the synthetic draw. Replaced blocks carry zero entropy;
// totals are recomputed over the kept blocks.
inline SynthesisResult randomized_response(const ResponseMatrix& true_rows,
                                           const SynthesisResult& synth, double p, uint64_t seed) {
    if (p < 0.0 || p > 1.0) throw ValidationError("randomized_response: p must be in [0,1]");
    if (synth.rows.rows != true_rows.rows && synth.source_row.empty())
        throw ValidationError("randomized_response: row alignment unknown");
    SynthesisResult out = synth;
    const size_t nq = synth.question_count();
    const size_t ncols = synth.rows.cols;
    for (size_t r = 0; r < synth.rows.rows; ++r) {
        const size_t src = synth.source_row[r];
        if (src >= true_rows.rows) throw ValidationError("randomized_response: source row out of range");
        for (size_t k = 0; k < nq; ++k) {
            Rng rng = substream(seed, StreamTag::randomized_response, src, k);
            if (rng.next_double() < p) {
                const size_t start = synth.rows.block_starts[k], end = synth.rows.block_starts[k + 1];
                for (size_t i = start; i < end; ++i)
                    out.rows.cells[r * ncols + i] = true_rows.at(src, i);
                out.block_entropy[r * nq + k] = 0.0;
            }
        }
    }
    out.recompute_totals();
    return out;
}

struct RemovalResult {
    SynthesisResult kept;
    std::vector<size_t> removed;  // indices into the input result's rows
};

// Drop any synthetic row whose set-column pairs hit a cell that is zero in
// the true crosstab. Survivors keep their original order and alignment.
inline RemovalResult remove_structural_zero_rows(const Crosstab& true_ct,
                                                 const SynthesisResult& synth) {
    if (true_ct.ncols != synth.rows.cols)
        throw ValidationError("remove_structural_zero_rows: column mismatch");
    RemovalResult res;
    const size_t nq = synth.question_count();
    const size_t ncols = synth.rows.cols;
    res.kept.rows.cols = ncols;
    res.kept.rows.block_starts = synth.rows.block_starts;
    for (size_t r = 0; r < synth.rows.rows; ++r) {
        const auto set = synth.rows.set_columns(r);
        bool hit = false;
        for (size_t a = 0; a < set.size() && !hit; ++a)
            for (size_t b = a + 1; b < set.size(); ++b)
                if (true_ct.at(set[a], set[b]) == 0) {
                    hit = true;
                    break;
                }
        if (hit) {
            res.removed.push_back(r);
        } else {
            res.kept.rows.cells.insert(res.kept.rows.cells.end(),
                                       synth.rows.cells.begin() + static_cast<ptrdiff_t>(r * ncols),
                                       synth.rows.cells.begin() + static_cast<ptrdiff_t>((r + 1) * ncols));
            res.kept.block_entropy.insert(
                res.kept.block_entropy.end(),
                synth.block_entropy.begin() + static_cast<ptrdiff_t>(r * nq),
                synth.block_entropy.begin() + static_cast<ptrdiff_t>((r + 1) * nq));
            res.kept.source_row.push_back(synth.source_row[r]);
            res.kept.instance.push_back(synth.instance[r]);
            res.kept.rows.rows += 1;
        }
    }
    res.kept.recompute_totals();
    return res;
}

// Row-wise loss for two-instance selection: the sum over a row's set
// cross-block column pairs of that cell's current absolute log deviation
// (instance-1 crosstab vs true).
inline std::vector<double> two_instance_row_losses(const Crosstab& true_ct,
                                                   const SynthesisResult& inst1,
                                                   double pseudocount = 0.5) {
    if (true_ct.ncols != inst1.rows.cols)
        throw ValidationError("two_instance_row_losses: column mismatch");
    const Crosstab syn_ct = crosstab(inst1.rows);
    std::vector<double> losses(inst1.rows.rows, 0.0);
    for (size_t r = 0; r < inst1.rows.rows; ++r) {
        const auto set = inst1.rows.set_columns(r);
        double loss = 0;
        for (size_t a = 0; a < set.size(); ++a)
            for (size_t b = a + 1; b < set.size(); ++b)
                loss += logdev_cell(static_cast<double>(syn_ct.at(set[a], set[b])),
                                    static_cast<double>(true_ct.at(set[a], set[b])), pseudocount);
        losses[r] = loss;
    }
    return losses;
}

// Emit instance 2's row whenever instance 1's row-wise loss exceeds the
// threshold (no check on the second instance), else instance 1's row.
inline SynthesisResult two_instance_select(const Crosstab& true_ct, const SynthesisResult& inst1,
                                           const SynthesisResult& inst2, double threshold,
                                           double pseudocount = 0.5) {
    if (inst1.rows.rows != inst2.rows.rows || inst1.rows.cols != inst2.rows.cols)
        throw ValidationError("two_instance_select: misaligned instances");
    for (size_t r = 0; r < inst1.rows.rows; ++r)
        if (inst1.source_row[r] != inst2.source_row[r])
            throw ValidationError("two_instance_select: instances disagree on source rows");

    const auto losses = two_instance_row_losses(true_ct, inst1, pseudocount);
    SynthesisResult out = inst1;
    const size_t nq = inst1.question_count();
    const size_t ncols = inst1.rows.cols;
    for (size_t r = 0; r < inst1.rows.rows; ++r) {
        if (losses[r] > threshold) {
            std::copy(inst2.rows.cells.begin() + static_cast<ptrdiff_t>(r * ncols),
                      inst2.rows.cells.begin() + static_cast<ptrdiff_t>((r + 1) * ncols),
                      out.rows.cells.begin() + static_cast<ptrdiff_t>(r * ncols));
            std::copy(inst2.block_entropy.begin() + static_cast<ptrdiff_t>(r * nq),
                      inst2.block_entropy.begin() + static_cast<ptrdiff_t>((r + 1) * nq),
                      out.block_entropy.begin() + static_cast<ptrdiff_t>(r * nq));
            out.instance[r] = inst2.instance[r];
        }
    }
    out.recompute_totals();
    return out;
}

// quantile of the row losses, for picking the selection threshold
inline double loss_quantile(std::vector<double> losses, double q) {
    if (losses.empty()) return 0.0;
    if (q <= 0.0) return -std::numeric_limits<double>::infinity();
    if (q >= 1.0) return std::numeric_limits<double>::infinity();
    std::sort(losses.begin(), losses.end());
    const double pos = q * static_cast<double>(losses.size() - 1);
    return losses[static_cast<size_t>(pos)];
}

struct SidecarData {
    uint64_t seed = 0;
    std::vector<double> entropy_bits;  // per original input row
    std::vector<int> removed;
    std::vector<int> instance;         // 1-based; 0 for removed rows
};

// sidecar: one line per original input row
inline std::string serialize_sidecar(size_t true_rows, const SynthesisResult& final_result,
                                     uint64_t seed) {
    std::vector<int> removed(true_rows, 1);
    std::vector<double> bits(true_rows, 0.0);
    std::vector<int> inst(true_rows, 0);
    for (size_t r = 0; r < final_result.rows.rows; ++r) {
        const size_t src = final_result.source_row[r];
        removed[src] = 0;
        bits[src] = final_result.entropy_bits[r];
        inst[src] = final_result.instance[r] + 1;  // 1-based in the artifact
    }
    std::string out = "# modp-synth-sidecar v1\n# seed " + std::to_string(seed) + "\n";
    out += "# row\tentropy_bits\tremoved\tinstance\n";
    for (size_t r = 0; r < true_rows; ++r)
        out += std::to_string(r) + "\t" + fmt_double(bits[r]) + "\t" + std::to_string(removed[r]) +
               "\t" + std::to_string(inst[r]) + "\n";
    return out;
}

inline SidecarData parse_sidecar(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.empty() || trim(lines[0]) != "# modp-synth-sidecar v1")
        throw ValidationError("not a synthesis sidecar (bad or missing version line)");
    SidecarData sc;
    for (const std::string& raw : lines) {
        const std::string line = trim(raw);
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto tok = tokenize(line);
            if (tok.size() == 3 && tok[1] == "seed")
                if (const auto s = parse_uint(tok[2])) sc.seed = *s;
            continue;
        }
        const auto tok = tokenize(line);
        if (tok.size() != 4) throw ValidationError("sidecar: bad line '" + line + "'");
        const auto row = parse_int(tok[0]);
        const auto bits = parse_double(tok[1]);
        const auto rem = parse_int(tok[2]);
        const auto inst = parse_int(tok[3]);
        if (!row || !bits || !rem || !inst)
            throw ValidationError("sidecar: bad line '" + line + "'");
        if (static_cast<size_t>(*row) != sc.entropy_bits.size())
            throw ValidationError("sidecar: rows out of order at '" + line + "'");
        sc.entropy_bits.push_back(*bits);
        sc.removed.push_back(static_cast<int>(*rem));
        sc.instance.push_back(static_cast<int>(*inst));
    }
    return sc;
}

} // namespace modp
