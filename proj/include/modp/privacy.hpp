#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "modp/dataset.hpp"
#include "modp/error.hpp"
#include "modp/rng.hpp"
#include "modp/synthesis.hpp"
#include "modp/text.hpp"

namespace modp {

// For each row, how many rows of m (itself included) are bitwise identical.
inline std::vector<int64_t> true_multiplicity(const ResponseMatrix& m) {
    std::unordered_map<std::string_view, int64_t> groups;
    groups.reserve(m.rows * 2);
    for (size_t r = 0; r < m.rows; ++r) {
        std::string_view key(reinterpret_cast<const char*>(m.cells.data() + r * m.cols), m.cols);
        groups[key] += 1;
    }
    std::vector<int64_t> out(m.rows);
    for (size_t r = 0; r < m.rows; ++r) {
        std::string_view key(reinterpret_cast<const char*>(m.cells.data() + r * m.cols), m.cols);
        out[r] = groups[key];
    }
    return out;
}

inline std::vector<double> effective_multiplicity(const std::vector<int64_t>& multiplicity,
                                                  const std::vector<double>& entropy_bits) {
    if (multiplicity.size() != entropy_bits.size())
        throw ValidationError("effective_multiplicity: length mismatch");
    std::vector<double> out(multiplicity.size());
    for (size_t r = 0; r < out.size(); ++r)
        out[r] = static_cast<double>(multiplicity[r]) * std::exp2(entropy_bits[r]);
    return out;
}

// Hamming distance in questions (number of blocks whose set column differs).
inline size_t hamming_questions(const ResponseMatrix& a, size_t ra, const ResponseMatrix& b,
                                size_t rb) {
    size_t h = 0;
    const uint8_t* pa = a.cells.data() + ra * a.cols;
    const uint8_t* pb = b.cells.data() + rb * b.cols;
    for (size_t q = 0; q + 1 < a.block_starts.size(); ++q) {
        const size_t start = a.block_starts[q], end = a.block_starts[q + 1];
        if (std::memcmp(pa + start, pb + start, end - start) != 0) ++h;
    }
    return h;
}

// For each sampled synthetic row: the number of true rows at Hamming
// distance (in questions) no greater than the distance to its causal
// partner. The partner is always counted, so the minimum is 1; a scan of
// a candidate row bails out once its mismatch count exceeds the partner's.
inline std::vector<int64_t> hamming_causal_rank(const ResponseMatrix& true_m,
                                                const SynthesisResult& synth,
                                                const std::vector<size_t>& sample) {
    if (true_m.cols != synth.rows.cols || true_m.block_starts != synth.rows.block_starts)
        throw ValidationError("hamming_causal_rank: block structure mismatch");
    const size_t nq = true_m.question_count();
    std::vector<int64_t> out;
    out.reserve(sample.size());
    for (size_t s : sample) {
        if (s >= synth.rows.rows) throw ValidationError("hamming_causal_rank: sample out of range");
        const size_t t = synth.source_row[s];
        if (t >= true_m.rows) throw ValidationError("hamming_causal_rank: causal row out of range");
        const size_t h_causal = hamming_questions(synth.rows, s, true_m, t);
        int64_t count = 0;
        const uint8_t* ps = synth.rows.cells.data() + s * synth.rows.cols;
        for (size_t x = 0; x < true_m.rows; ++x) {
            const uint8_t* px = true_m.cells.data() + x * true_m.cols;
            size_t h = 0;
            for (size_t q = 0; q < nq; ++q) {
                const size_t start = true_m.block_starts[q], end = true_m.block_starts[q + 1];
                if (std::memcmp(ps + start, px + start, end - start) != 0 && ++h > h_causal) break;
            }
            if (h <= h_causal) ++count;
        }
        out.push_back(count);
    }
    return out;
}

struct PrivacyRow {
    size_t row = 0;               // synthetic row index
    size_t source_row = 0;        // causal partner in the true data
    double entropy_bits = 0;
    int64_t multiplicity = 1;     // of the causal partner among true rows
    double effective = 1;
    int64_t causal_rank_count = 1;
};

struct PrivacyReport {
    size_t n_true = 0;
    size_t n_synth = 0;
    uint64_t seed = 0;
    std::vector<PrivacyRow> rows;  // sampled synthetic rows
};

// Deterministic sample of `sample_size` distinct synthetic rows (all rows
// when sample_size >= N), then every measure for each sampled row.
inline PrivacyReport privacy_report(const ResponseMatrix& true_m, const SynthesisResult& synth,
                                    size_t sample_size, uint64_t seed) {
    PrivacyReport rep;
    rep.n_true = true_m.rows;
    rep.n_synth = synth.rows.rows;
    rep.seed = seed;

    std::vector<size_t> sample(synth.rows.rows);
    for (size_t i = 0; i < sample.size(); ++i) sample[i] = i;
    if (sample_size < sample.size()) {
        Rng rng = substream(seed, StreamTag::row_sample);
        rng.shuffle(sample);
        sample.resize(sample_size);
        std::sort(sample.begin(), sample.end());
    }
    if (sample.empty()) return rep;

    const auto mult = true_multiplicity(true_m);
    const auto ranks = hamming_causal_rank(true_m, synth, sample);
    rep.rows.reserve(sample.size());
    for (size_t k = 0; k < sample.size(); ++k) {
        PrivacyRow pr;
        pr.row = sample[k];
        pr.source_row = synth.source_row[pr.row];
        pr.entropy_bits = synth.entropy_bits[pr.row];
        pr.multiplicity = mult[pr.source_row];
        pr.effective = static_cast<double>(pr.multiplicity) * std::exp2(pr.entropy_bits);
        pr.causal_rank_count = ranks[k];
        rep.rows.push_back(pr);
    }
    return rep;
}

inline std::string serialize_privacy(const PrivacyReport& rep) {
    std::string out = "# modp-privacy v1\n";
    out += "# N_true " + std::to_string(rep.n_true) + "\n";
    out += "# N_synth " + std::to_string(rep.n_synth) + "\n";
    out += "# seed " + std::to_string(rep.seed) + "\n";
    out += "# row\tsource_row\tentropy_bits\tmultiplicity\teffective_multiplicity\tcausal_rank_count\n";
    for (const auto& r : rep.rows)
        out += std::to_string(r.row) + "\t" + std::to_string(r.source_row) + "\t" +
               fmt_double(r.entropy_bits) + "\t" + std::to_string(r.multiplicity) + "\t" +
               fmt_double(r.effective) + "\t" + std::to_string(r.causal_rank_count) + "\n";
    return out;
}

struct PrivacyPlotData {
    std::string entropy_histogram;
    std::string entropy_multiplicity_scatter;
    std::string effective_histogram;   // log10 bins
    std::string rank_cdf;
};

inline PrivacyPlotData export_privacy_plots(const PrivacyReport& rep) {
    PrivacyPlotData pd;

    constexpr int nbins = 50;
    double emax = 0;
    for (const auto& r : rep.rows) emax = std::max(emax, r.entropy_bits);
    const double width = emax > 0 ? emax / nbins : 1.0;
    std::vector<int64_t> hist(nbins, 0);
    for (const auto& r : rep.rows) {
        int b = static_cast<int>(r.entropy_bits / width);
        if (b >= nbins) b = nbins - 1;
        if (b < 0) b = 0;
        hist[static_cast<size_t>(b)] += 1;
    }
    pd.entropy_histogram = "# modp-plot-entropy-histogram v1\n# bin_low\tbin_high\tcount\n";
    for (int b = 0; b < nbins; ++b)
        pd.entropy_histogram += fmt_double(b * width) + "\t" + fmt_double((b + 1) * width) + "\t" +
                                std::to_string(hist[static_cast<size_t>(b)]) + "\n";

    pd.entropy_multiplicity_scatter =
        "# modp-plot-entropy-multiplicity v1\n# entropy_bits\tmultiplicity\n";
    for (const auto& r : rep.rows)
        pd.entropy_multiplicity_scatter +=
            fmt_double(r.entropy_bits) + "\t" + std::to_string(r.multiplicity) + "\n";

    double lmax = 0;
    for (const auto& r : rep.rows) lmax = std::max(lmax, std::log10(std::max(r.effective, 1.0)));
    const double lwidth = lmax > 0 ? lmax / nbins : 1.0;
    std::vector<int64_t> lhist(nbins, 0);
    for (const auto& r : rep.rows) {
        int b = static_cast<int>(std::log10(std::max(r.effective, 1.0)) / lwidth);
        if (b >= nbins) b = nbins - 1;
        if (b < 0) b = 0;
        lhist[static_cast<size_t>(b)] += 1;
    }
    pd.effective_histogram =
        "# modp-plot-effective-multiplicity v1\n# log10_low\tlog10_high\tcount\n";
    for (int b = 0; b < nbins; ++b)
        pd.effective_histogram += fmt_double(b * lwidth) + "\t" + fmt_double((b + 1) * lwidth) +
                                  "\t" + std::to_string(lhist[static_cast<size_t>(b)]) + "\n";

    std::vector<int64_t> ranks;
    ranks.reserve(rep.rows.size());
    for (const auto& r : rep.rows) ranks.push_back(r.causal_rank_count);
    std::sort(ranks.begin(), ranks.end());
    pd.rank_cdf = "# modp-plot-causal-rank-cdf v1\n# rank\tfraction_le\n";
    const double n = static_cast<double>(ranks.size());
    for (size_t k = 0; k < ranks.size(); ++k) {
        if (k + 1 < ranks.size() && ranks[k + 1] == ranks[k]) continue;  // last of each value
        pd.rank_cdf += std::to_string(ranks[k]) + "\t" +
                       fmt_double(static_cast<double>(k + 1) / n) + "\n";
    }
    return pd;
}

} // namespace modp
