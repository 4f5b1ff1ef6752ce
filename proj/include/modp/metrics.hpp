#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "modp/dataset.hpp"
#include "modp/error.hpp"
#include "modp/text.hpp"

namespace modp {

struct MetricsConfig {
    double pseudocount = 0.5;      // added to both counts in the log deviation
    double d0 = 0.1;
    double z0 = 1.0;
    double variance_floor = 1e-5;  // floor on the pooled variance inside z
};

// Two-proportion z with pooled variance. The denominator is floored at
// sqrt(variance_floor) so degenerate proportions stay finite.
inline double zvalue_cell(double n1, double N1, double n2, double N2,
                          double variance_floor = 1e-5) {
    if (N1 < 1 || N2 < 1) throw ValidationError("zvalue_cell: sample sizes must be >= 1");
    const double p1 = n1 / N1, p2 = n2 / N2;
    const double pooled = (n1 + n2) / (N1 + N2);
    double var = pooled * (1.0 - pooled) * (1.0 / N1 + 1.0 / N2);
    if (var < variance_floor) var = variance_floor;
    return (p1 - p2) / std::sqrt(var);
}

// Absolute log deviation between two counts, pseudocount-smoothed.
inline double logdev_cell(double c_syn, double c_true, double pseudocount = 0.5) {
    return std::abs(std::log((c_syn + pseudocount) / (c_true + pseudocount)));
}

// Blend of d and z behaving like a harmonic mean of |d|/d0 and |z|/z0;
// 0 when either input is 0 (the limiting value).
inline double blended_fm(double d, double z, double d0 = 0.1, double z0 = 1.0) {
    const double ad = std::abs(d), az = std::abs(z);
    if (ad == 0.0 || az == 0.0) return 0.0;
    return 2.0 / (d0 / ad + z0 / az);
}

struct CellMetrics {
    size_t i = 0, j = 0;
    int64_t true_count = 0;
    int64_t synth_count = 0;
    double z = 0, d = 0, fm = 0;
};

struct AggregateAccuracy {
    double median = 0;
    double mean_absolute = 0;
    double rms = 0;
};

struct EvaluationResult {
    int64_t n_true = 0;
    int64_t n_synth = 0;
    MetricsConfig config;
    std::vector<CellMetrics> cells;  // upper triangle including diagonal
    AggregateAccuracy aggregate;
};

inline AggregateAccuracy aggregate_d(const std::vector<CellMetrics>& cells) {
    AggregateAccuracy agg;
    if (cells.empty()) return agg;
    std::vector<double> ds(cells.size());
    double sum = 0, sumsq = 0;
    for (size_t k = 0; k < cells.size(); ++k) {
        ds[k] = cells[k].d;
        sum += ds[k];
        sumsq += ds[k] * ds[k];
    }
    std::sort(ds.begin(), ds.end());
    const size_t n = ds.size();
    agg.median = (n % 2 == 1) ? ds[n / 2] : 0.5 * (ds[n / 2 - 1] + ds[n / 2]);
    agg.mean_absolute = sum / static_cast<double>(n);
    agg.rms = std::sqrt(sumsq / static_cast<double>(n));
    return agg;
}

// All three cell measures over every upper-triangle cell (diagonal included:
// those are the univariate counts). N_true and N_synth may differ.
inline EvaluationResult evaluate(const Crosstab& true_ct, const Crosstab& synth_ct,
                                 const MetricsConfig& config = {}) {
    if (true_ct.ncols != synth_ct.ncols || true_ct.block_starts != synth_ct.block_starts)
        throw ValidationError("evaluate: crosstab block structure mismatch");
    if (true_ct.n_rows < 1 || synth_ct.n_rows < 1)
        throw ValidationError("evaluate: empty crosstab");
    EvaluationResult res;
    res.n_true = true_ct.n_rows;
    res.n_synth = synth_ct.n_rows;
    res.config = config;
    const size_t ncols = true_ct.ncols;
    res.cells.reserve(ncols * (ncols + 1) / 2);
    const double N1 = static_cast<double>(true_ct.n_rows);
    const double N2 = static_cast<double>(synth_ct.n_rows);
    for (size_t i = 0; i < ncols; ++i)
        for (size_t j = i; j < ncols; ++j) {
            CellMetrics cm;
            cm.i = i;
            cm.j = j;
            cm.true_count = true_ct.at(i, j);
            cm.synth_count = synth_ct.at(i, j);
            cm.z = zvalue_cell(static_cast<double>(cm.true_count), N1,
                               static_cast<double>(cm.synth_count), N2, config.variance_floor);
            cm.d = logdev_cell(static_cast<double>(cm.synth_count),
                               static_cast<double>(cm.true_count), config.pseudocount);
            cm.fm = blended_fm(cm.d, cm.z, config.d0, config.z0);
            res.cells.push_back(cm);
        }
    res.aggregate = aggregate_d(res.cells);
    return res;
}

inline std::string serialize_metrics(const EvaluationResult& res) {
    std::string out = "# modp-metrics v1\n";
    out += "# N_true " + std::to_string(res.n_true) + "\n";
    out += "# N_synth " + std::to_string(res.n_synth) + "\n";
    out += "# c " + fmt_double(res.config.pseudocount) + "\n";
    out += "# d0 " + fmt_double(res.config.d0) + "\n";
    out += "# z0 " + fmt_double(res.config.z0) + "\n";
    out += "# variance_floor " + fmt_double(res.config.variance_floor) + "\n";
    out += "# i\tj\ttrue\tsynth\tz\td\tfm\n";
    for (const auto& c : res.cells)
        out += std::to_string(c.i) + "\t" + std::to_string(c.j) + "\t" +
               std::to_string(c.true_count) + "\t" + std::to_string(c.synth_count) + "\t" +
               fmt_double(c.z) + "\t" + fmt_double(c.d) + "\t" + fmt_double(c.fm) + "\n";
    out += "aggregate median " + fmt_double(res.aggregate.median) + "\n";
    out += "aggregate mean_absolute " + fmt_double(res.aggregate.mean_absolute) + "\n";
    out += "aggregate rms " + fmt_double(res.aggregate.rms) + "\n";
    return out;
}

// Plot-data exports, one delimited text file per figure style.
struct PlotData {
    std::string count_scatter;   // true vs synthetic count per cell (zeros drawn as 1)
    std::string dz_scatter;      // |d| vs |z| with a true-count decile color index
    std::string fm_histogram;
    std::string fm_heatmap;      // ncols x ncols grid
};

inline PlotData export_plot_data(const EvaluationResult& res, size_t ncols) {
    PlotData pd;

    pd.count_scatter = "# modp-plot-count-scatter v1\n# true\tsynth\n";
    for (const auto& c : res.cells) {
        const int64_t t = c.true_count == 0 ? 1 : c.true_count;
        const int64_t s = c.synth_count == 0 ? 1 : c.synth_count;
        pd.count_scatter += std::to_string(t) + "\t" + std::to_string(s) + "\n";
    }

    // decile index 0..9 by true count rank
    std::vector<size_t> order(res.cells.size());
    for (size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return res.cells[a].true_count < res.cells[b].true_count;
    });
    std::vector<int> decile(res.cells.size(), 0);
    for (size_t rank = 0; rank < order.size(); ++rank)
        decile[order[rank]] = static_cast<int>(rank * 10 / std::max<size_t>(order.size(), 1));
    pd.dz_scatter = "# modp-plot-dz-scatter v1\n# d\tz\tdecile\n";
    for (size_t k = 0; k < res.cells.size(); ++k)
        pd.dz_scatter += fmt_double(res.cells[k].d) + "\t" + fmt_double(std::abs(res.cells[k].z)) +
                         "\t" + std::to_string(decile[k]) + "\n";

    constexpr int nbins = 50;
    double fm_max = 0;
    for (const auto& c : res.cells) fm_max = std::max(fm_max, c.fm);
    const double width = fm_max > 0 ? fm_max / nbins : 1.0;
    std::vector<int64_t> hist(nbins, 0);
    for (const auto& c : res.cells) {
        int b = static_cast<int>(c.fm / width);
        if (b >= nbins) b = nbins - 1;
        hist[static_cast<size_t>(b)] += 1;
    }
    pd.fm_histogram = "# modp-plot-fm-histogram v1\n# bin_low\tbin_high\tcount\n";
    for (int b = 0; b < nbins; ++b)
        pd.fm_histogram += fmt_double(b * width) + "\t" + fmt_double((b + 1) * width) + "\t" +
                           std::to_string(hist[static_cast<size_t>(b)]) + "\n";

    std::vector<double> grid(ncols * ncols, 0.0);
    for (const auto& c : res.cells) {
        grid[c.i * ncols + c.j] = c.fm;
        grid[c.j * ncols + c.i] = c.fm;
    }
    pd.fm_heatmap = "# modp-plot-fm-heatmap v1\n# ncols " + std::to_string(ncols) + "\n";
    for (size_t i = 0; i < ncols; ++i) {
        std::string line;
        for (size_t j = 0; j < ncols; ++j) {
            if (j) line += "\t";
            line += fmt_double(grid[i * ncols + j]);
        }
        pd.fm_heatmap += line + "\n";
    }
    return pd;
}

} // namespace modp
