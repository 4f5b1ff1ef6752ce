// Acceptance gate for the modp library and CLI. Each check prints exactly
// one line (PASS / FAIL / SKIP) and the process exits nonzero if anything
// failed. Checks cover gradient exactness, the masking invariant, loss and
// metric oracles, sampling statistics, end-to-end accuracy on a generated
// population, post-processing guarantees, privacy measures, determinism,
// and an optional externally supplied survey table.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "modp/dataset.hpp"
#include "modp/metrics.hpp"
#include "modp/model.hpp"
#include "modp/privacy.hpp"
#include "modp/rng.hpp"
#include "modp/synthesis.hpp"
#include "modp/testbed.hpp"
#include "modp/training.hpp"

using namespace modp;
namespace fs = std::filesystem;

namespace {

const std::string kCli = MODP_CLI_PATH;
const std::string kData = MODP_DATA_DIR;
fs::path g_root;

int failures = 0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

void check(int index, const std::string& title, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s %s (%s; %.1fs)\n", index, o.pass ? "PASS" : "FAIL",
                title.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

void skip(int index, const std::string& title, const std::string& why) {
    std::printf("criterion %2d SKIP %s (%s)\n", index, title.c_str(), why.c_str());
    std::fflush(stdout);
}

int run_cli(const std::string& args) {
    const std::string log = (g_root / "cli.log").string();
    const std::string cmd = kCli + " " + args + " > " + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

double parse_aggregate_median(const fs::path& path) {
    const std::string text = read_file(path);
    const std::string key = "aggregate median ";
    const size_t pos = text.find(key);
    if (pos == std::string::npos) throw ValidationError("no aggregate median in " + path.string());
    return std::strtod(text.c_str() + pos + key.size(), nullptr);
}

// random one-hot rows over the given block structure
ResponseMatrix random_matrix(const std::vector<size_t>& starts, size_t rows, uint64_t seed) {
    ResponseMatrix m;
    m.rows = rows;
    m.cols = starts.back();
    m.block_starts = starts;
    m.cells.assign(rows * m.cols, 0);
    Rng rng(seed);
    for (size_t r = 0; r < rows; ++r)
        for (size_t q = 0; q + 1 < starts.size(); ++q) {
            const size_t len = starts[q + 1] - starts[q];
            m.cells[r * m.cols + starts[q] + rng.next_below(len)] = 1;
        }
    return m;
}

ResponseMatrix matrix_from_categories(const std::vector<size_t>& starts,
                                      const std::vector<std::vector<size_t>>& rows) {
    ResponseMatrix m;
    m.rows = rows.size();
    m.cols = starts.back();
    m.block_starts = starts;
    m.cells.assign(m.rows * m.cols, 0);
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t q = 0; q + 1 < starts.size(); ++q)
            m.cells[r * m.cols + starts[q] + rows[r][q]] = 1;
    return m;
}

bool same_block(const std::vector<size_t>& starts, size_t i, size_t j) {
    for (size_t q = 0; q + 1 < starts.size(); ++q)
        if (i >= starts[q] && i < starts[q + 1]) return j >= starts[q] && j < starts[q + 1];
    return false;
}

double loss_of(const MultiBladeModel& model, const Matrix& x, LossKind kind) {
    const Matrix out = model_forward(model, x);
    return kind == LossKind::mse ? mse_loss(out, x)
                                 : zval_loss(out, x, model.block_starts, 0.01, 1e-5);
}

// identity-aligned synthesis wrapper around a plain matrix, zero entropy
SynthesisResult as_synthesis(const ResponseMatrix& rows) {
    SynthesisResult s;
    s.rows = rows;
    s.block_entropy.assign(rows.rows * rows.question_count(), 0.0);
    s.source_row.resize(rows.rows);
    std::iota(s.source_row.begin(), s.source_row.end(), size_t{0});
    s.instance.assign(rows.rows, 0);
    s.recompute_totals();
    return s;
}

// ---------------------------------------------------------------------------
// 1. analytic gradients vs central finite differences
// ---------------------------------------------------------------------------

Outcome check_gradients() {
    constexpr double kStep = 1e-5;
    constexpr double kRelTol = 1e-4;
    double worst = 0;

    struct Case {
        std::vector<size_t> starts;
        size_t blades, features, rows;
        uint64_t seed;
    };
    const std::vector<Case> cases = {
        {{0, 3, 7, 12}, 3, 4, 40, 11},
        {{0, 2, 4}, 1, 2, 20, 5},
    };

    for (const auto& c : cases) {
        MultiBladeModel model = init_model(c.starts, c.blades, c.features, c.seed);
        const Matrix x = to_dense(random_matrix(c.starts, c.rows, c.seed + 1));

        for (LossKind kind : {LossKind::mse, LossKind::zval}) {
            const BackwardResult bw = backward(model, x, kind, 0.01, 1e-5);

            // gather (parameter ref, analytic value, masked?) triples
            struct Param {
                double* value;
                double analytic;
                bool masked;
            };
            std::vector<Param> params;
            for (size_t b = 0; b < model.num_blades(); ++b) {
                auto& w = model.blades[b].weight;
                for (Eigen::Index i = 0; i < w.rows(); ++i)
                    for (Eigen::Index j = 0; j < w.cols(); ++j)
                        params.push_back({&w(i, j), bw.grads.blade_weight[b](i, j),
                                          same_block(c.starts, static_cast<size_t>(i),
                                                     static_cast<size_t>(j))});
                auto& bias = model.blades[b].bias;
                for (Eigen::Index i = 0; i < bias.size(); ++i)
                    params.push_back({&bias(i), bw.grads.blade_bias[b](i), false});
            }
            auto add_matrix = [&](Matrix& m, const Matrix& g) {
                for (Eigen::Index i = 0; i < m.rows(); ++i)
                    for (Eigen::Index j = 0; j < m.cols(); ++j)
                        params.push_back({&m(i, j), g(i, j), false});
            };
            auto add_vector = [&](Vector& v, const Vector& g) {
                for (Eigen::Index i = 0; i < v.size(); ++i)
                    params.push_back({&v(i), g(i), false});
            };
            add_matrix(model.gating.w1, bw.grads.gating_w1);
            add_vector(model.gating.b1, bw.grads.gating_b1);
            add_matrix(model.gating.w2, bw.grads.gating_w2);
            add_vector(model.gating.b2, bw.grads.gating_b2);

            for (const Param& p : params) {
                if (p.masked) {
                    if (p.analytic != 0.0)
                        return {false, "within-block gradient not exactly zero"};
                    continue;
                }
                const double keep = *p.value;
                *p.value = keep + kStep;
                const double up = loss_of(model, x, kind);
                *p.value = keep - kStep;
                const double down = loss_of(model, x, kind);
                *p.value = keep;
                const double fd = (up - down) / (2.0 * kStep);
                const double scale = std::max({std::abs(p.analytic), std::abs(fd), 1e-6});
                const double rel = std::abs(p.analytic - fd) / scale;
                worst = std::max(worst, rel);
                if (rel > kRelTol)
                    return {false, "gradient mismatch: analytic " + fmt(p.analytic) + " vs fd " +
                                       fmt(fd) + " (" + loss_name(kind) + ")"};
            }
        }
    }
    return {true, "both losses, every parameter; max rel err " + fmt(worst)};
}

// ---------------------------------------------------------------------------
// 2. the non-self-prediction mask survives real optimization
// ---------------------------------------------------------------------------

Outcome check_mask_invariant() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<size_t> starts = {0, 3, 6, 10};
    const ResponseMatrix data = random_matrix(starts, 256, 77);

    MultiBladeModel model = init_model(starts, 2, 4, 31);
    TrainConfig cfg;
    cfg.batch_size = 64;   // 4 steps per epoch
    cfg.mse_epochs = 63;
    cfg.zval_epochs = 62;  // (63 + 62) * 4 = 500 steps
    cfg.seed = 31;
    const TrainResult result = train(model, data, cfg);
    if (result.history.size() != 500)
        return {false, "expected 500 steps, got " + std::to_string(result.history.size())};

    for (const auto& blade : model.blades)
        for (size_t q = 0; q + 1 < starts.size(); ++q)
            for (size_t i = starts[q]; i < starts[q + 1]; ++i)
                for (size_t j = starts[q]; j < starts[q + 1]; ++j)
                    if (blade.weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0.0)
                        return {false, "within-block weight nonzero after 500 steps"};

    // flip row 0's category inside block 1; its block-1 outputs must not move
    Matrix x1 = to_dense(data);
    Matrix x2 = x1;
    x2(0, 3) = 1.0 - x1(0, 3);
    x2(0, 4) = 1.0 - x1(0, 4);
    for (const auto& blade : model.blades) {
        const Matrix p1 = blade_forward(blade, x1);
        const Matrix p2 = blade_forward(blade, x2);
        for (Eigen::Index c = 3; c < 6; ++c)
            if (p1(0, c) != p2(0, c))
                return {false, "block output moved under a within-block perturbation"};
        bool outside_responds = false;
        for (Eigen::Index c = 0; c < p1.cols() && !outside_responds; ++c)
            if ((c < 3 || c >= 6) && p1(0, c) != p2(0, c)) outside_responds = true;
        if (!outside_responds) return {false, "blade ignored its visible inputs"};
    }

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= 30.0) return {false, "took " + fmt(secs) + "s, budget 30s"};
    return {true, "500 steps, all within-block weights exactly 0, outputs pinned"};
}

// ---------------------------------------------------------------------------
// 3. losses agree with cell-by-cell scalar recomputation
// ---------------------------------------------------------------------------

Outcome check_loss_oracles() {
    constexpr double kTol = 1e-10;
    const std::vector<size_t> starts = {0, 2, 5};
    const size_t ncols = starts.back();
    const ResponseMatrix data = random_matrix(starts, 17, 3);
    const Matrix target = to_dense(data);

    Matrix output(target.rows(), target.cols());
    Rng rng(99);
    for (Eigen::Index r = 0; r < output.rows(); ++r)
        for (Eigen::Index c = 0; c < output.cols(); ++c)
            output(r, c) = 0.05 + 0.9 * rng.next_double();

    double mse_ref = 0;
    for (Eigen::Index r = 0; r < output.rows(); ++r)
        for (Eigen::Index c = 0; c < output.cols(); ++c) {
            const double d = output(r, c) - target(r, c);
            mse_ref += d * d;
        }
    mse_ref /= static_cast<double>(output.size());
    const double mse_got = mse_loss(output, target);
    if (std::abs(mse_got - mse_ref) > kTol)
        return {false, "mse " + fmt(mse_got) + " vs scalar " + fmt(mse_ref)};

    const double pseudo = 0.01, floor = 1e-5;
    const double nt = static_cast<double>(target.rows());
    const double no = static_cast<double>(output.rows());
    double zref = 0;
    for (size_t i = 0; i < ncols; ++i)
        for (size_t j = 0; j < ncols; ++j) {
            if (same_block(starts, i, j)) continue;
            double ct = pseudo, co = pseudo;
            for (Eigen::Index r = 0; r < output.rows(); ++r) {
                ct += target(r, static_cast<Eigen::Index>(i)) * target(r, static_cast<Eigen::Index>(j));
                co += output(r, static_cast<Eigen::Index>(i)) * output(r, static_cast<Eigen::Index>(j));
            }
            const double pt = ct / nt, po = co / no;
            const double pooled = (ct + co) / (nt + no);
            const double var = pooled * (1.0 - pooled) * (1.0 / nt + 1.0 / no) + floor;
            zref += (pt - po) * (pt - po) / var;
        }
    zref /= static_cast<double>(ncols * ncols);
    const double zgot = zval_loss(output, target, starts, pseudo, floor);
    if (std::abs(zgot - zref) > kTol)
        return {false, "zval " + fmt(zgot) + " vs scalar " + fmt(zref)};
    return {true, "mse and zval match scalar recomputation within 1e-10"};
}

// ---------------------------------------------------------------------------
// 4. metric cell oracles
// ---------------------------------------------------------------------------

Outcome check_metric_oracles() {
    const double z = zvalue_cell(30, 100, 50, 100);
    if (std::abs(z - (-2.887)) > 1e-3) return {false, "z(30,100,50,100) = " + fmt(z)};
    const double d = logdev_cell(110, 100, 0.5);
    if (std::abs(d - 0.0949) > 1e-4) return {false, "d(110,100) = " + fmt(d)};
    const double f = blended_fm(0.1, 1.0);
    if (f != 1.0) return {false, "fm(0.1,1) = " + fmt(f)};
    return {true, "z " + fmt(z) + ", d " + fmt(d) + ", fm exactly 1"};
}

// ---------------------------------------------------------------------------
// 5. sampling statistics
// ---------------------------------------------------------------------------

Outcome check_sampling() {
    constexpr double kChi2Crit = 13.8155;  // p = 0.001 at 2 degrees of freedom
    const size_t n = 100000;
    Matrix probs(static_cast<Eigen::Index>(n), 3);
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        probs(r, 0) = 0.2;
        probs(r, 1) = 0.3;
        probs(r, 2) = 0.5;
    }
    const SynthesisResult draws = instantiate(probs, {0, 3}, 2024);
    double counts[3] = {0, 0, 0};
    for (size_t r = 0; r < n; ++r)
        for (size_t c = 0; c < 3; ++c)
            if (draws.rows.at(r, c)) counts[c] += 1;
    const double expected[3] = {0.2 * n, 0.3 * n, 0.5 * n};
    double chi2 = 0;
    for (size_t c = 0; c < 3; ++c) {
        const double diff = counts[c] - expected[c];
        chi2 += diff * diff / expected[c];
    }
    if (chi2 >= kChi2Crit) return {false, "chi-squared " + fmt(chi2) + " >= " + fmt(kChi2Crit)};

    Matrix uniform(1, 4);
    uniform.setConstant(0.25);
    const SynthesisResult u = instantiate(uniform, {0, 4}, 7);
    const double bits = u.block_bits(0, 0);
    if (std::abs(bits - 2.0) > 1e-6) return {false, "uniform entropy " + fmt(bits)};
    return {true, "chi-squared " + fmt(chi2) + " < " + fmt(kChi2Crit) + ", entropy " + fmt(bits)};
}

// ---------------------------------------------------------------------------
// 6. end-to-end accuracy on a generated mixture population (via the CLI)
// ---------------------------------------------------------------------------

struct SharedRun {
    bool ok = false;
    fs::path dir;
    double median = 0;
    double boot_median = 0;
};
SharedRun g_run;

Outcome check_end_to_end() {
    const auto t0 = std::chrono::steady_clock::now();
    g_run.dir = g_root / "population";
    fs::create_directories(g_run.dir);
    const std::string d = g_run.dir.string();

    if (run_cli("testbed --spec " + kData + "/testbed_accuracy.txt --seed 101 --outdir " + d +
                " --out table.tsv --truth-out truth.txt --labels-out labels.txt") != 0)
        return {false, "testbed generation failed"};
    if (run_cli("schema --table " + d + "/table.tsv --outdir " + d + " --out schema.txt") != 0)
        return {false, "schema inference failed"};
    if (run_cli("encode --table " + d + "/table.tsv --schema " + d + "/schema.txt --outdir " + d +
                " --out matrix.bin") != 0)
        return {false, "encoding failed"};
    if (run_cli("train --matrix " + d + "/matrix.bin --outdir " + d +
                " --out model.ckpt --losses-out losses.txt --seed 1") != 0)
        return {false, "training failed"};
    if (run_cli("synthesize --matrix " + d + "/matrix.bin --checkpoint " + d +
                "/model.ckpt --outdir " + d + " --out synthetic.bin --sidecar-out sidecar.txt"
                " --seed 7") != 0)
        return {false, "synthesis failed"};
    if (run_cli("evaluate --true " + d + "/matrix.bin --synth " + d + "/synthetic.bin --outdir " +
                d + " --out metrics.txt") != 0)
        return {false, "evaluation failed"};
    if (run_cli("bootstrap --matrix " + d + "/matrix.bin --outdir " + d +
                " --out bootstrap.txt --seed 5") != 0)
        return {false, "bootstrap failed"};

    g_run.median = parse_aggregate_median(g_run.dir / "metrics.txt");
    g_run.boot_median = parse_aggregate_median(g_run.dir / "bootstrap.txt");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (g_run.median > 0.10)
        return {false, "median log deviation " + fmt(g_run.median) + " > 0.10"};
    if (g_run.boot_median <= 0 || g_run.median > 5.0 * g_run.boot_median)
        return {false, "median " + fmt(g_run.median) + " exceeds 5x bootstrap floor " +
                           fmt(g_run.boot_median)};
    if (secs > 900.0) return {false, "took " + fmt(secs) + "s, budget 900s"};
    g_run.ok = true;
    return {true, "median d " + fmt(g_run.median) + " <= 0.10 and " +
                      fmt(g_run.median / g_run.boot_median) + "x bootstrap floor " +
                      fmt(g_run.boot_median)};
}

// ---------------------------------------------------------------------------
// 7. post-processing guarantees
// ---------------------------------------------------------------------------

Outcome check_post_processing() {
    // structural-zero removal leaves every true-zero cell at zero, exactly
    {
        const std::vector<size_t> starts = {0, 2, 4, 6};
        const ResponseMatrix truth = random_matrix(starts, 100, 8);
        const ResponseMatrix synth = random_matrix(starts, 200, 9);
        const Crosstab true_ct = crosstab(truth);
        const RemovalResult rr = remove_structural_zero_rows(true_ct, as_synthesis(synth));
        const Crosstab kept_ct = crosstab(rr.kept.rows);
        for (size_t i = 0; i < true_ct.ncols; ++i)
            for (size_t j = i + 1; j < true_ct.ncols; ++j) {
                if (same_block(starts, i, j)) continue;
                if (true_ct.at(i, j) == 0 && kept_ct.at(i, j) != 0)
                    return {false, "a synthetic row still hits a structurally zero cell"};
            }
    }

    if (!g_run.ok) return {false, "no trained population run to measure against"};
    const ResponseMatrix m = read_matrix((g_run.dir / "matrix.bin").string());
    const SynthesisResult synth = as_synthesis(read_matrix((g_run.dir / "synthetic.bin").string()));

    // full pass-through reproduces the true matrix bitwise
    const SynthesisResult copied = randomized_response(m, synth, 1.0, 7);
    if (copied.rows.cells != m.cells) return {false, "p=1 pass-through is not the true matrix"};

    // half pass-through strictly improves the median log deviation
    const Crosstab true_ct = crosstab(m);
    const double med_p0 = evaluate(true_ct, crosstab(synth.rows)).aggregate.median;
    const SynthesisResult half = randomized_response(m, synth, 0.5, 7);
    const double med_p05 = evaluate(true_ct, crosstab(half.rows)).aggregate.median;
    if (!(med_p05 < med_p0))
        return {false, "median with p=0.5 " + fmt(med_p05) + " not below p=0 " + fmt(med_p0)};

    // threshold extremes hand back exactly one instance or the other
    {
        const std::vector<size_t> starts = {0, 2, 5};
        Matrix probs(30, 5);
        Rng rng(12);
        for (Eigen::Index r = 0; r < probs.rows(); ++r)
            for (Eigen::Index c = 0; c < probs.cols(); ++c) probs(r, c) = 0.1 + rng.next_double();
        const SynthesisResult i1 = instantiate(probs, starts, 55, 0);
        const SynthesisResult i2 = instantiate(probs, starts, 55, 1);
        const Crosstab ct = crosstab(random_matrix(starts, 50, 1));
        const double inf = std::numeric_limits<double>::infinity();
        if (two_instance_select(ct, i1, i2, inf).rows.cells != i1.rows.cells)
            return {false, "+inf threshold did not return the first instance"};
        const SynthesisResult all2 = two_instance_select(ct, i1, i2, -inf);
        if (all2.rows.cells != i2.rows.cells)
            return {false, "-inf threshold did not return the second instance"};
        for (int inst : all2.instance)
            if (inst != 1) return {false, "-inf threshold left an instance-0 row"};
    }
    return {true, "zero cells stay zero; p=1 bitwise copy; p=0.5 median " + fmt(med_p05) +
                      " < p=0 median " + fmt(med_p0) + "; threshold extremes exact"};
}

// ---------------------------------------------------------------------------
// 8. privacy measures against brute force
// ---------------------------------------------------------------------------

std::vector<int64_t> brute_multiplicity(const ResponseMatrix& m) {
    std::vector<int64_t> out(m.rows, 0);
    for (size_t r = 0; r < m.rows; ++r)
        for (size_t x = 0; x < m.rows; ++x) {
            bool eq = true;
            for (size_t c = 0; c < m.cols && eq; ++c) eq = m.at(r, c) == m.at(x, c);
            out[r] += eq;
        }
    return out;
}

size_t brute_hamming(const ResponseMatrix& a, size_t ra, const ResponseMatrix& b, size_t rb) {
    size_t h = 0;
    for (size_t q = 0; q + 1 < a.block_starts.size(); ++q) {
        bool eq = true;
        for (size_t c = a.block_starts[q]; c < a.block_starts[q + 1] && eq; ++c)
            eq = a.at(ra, c) == b.at(rb, c);
        h += !eq;
    }
    return h;
}

std::vector<int64_t> brute_rank(const ResponseMatrix& truth, const SynthesisResult& synth) {
    std::vector<int64_t> out;
    for (size_t s = 0; s < synth.rows.rows; ++s) {
        const size_t causal = brute_hamming(synth.rows, s, truth, synth.source_row[s]);
        int64_t count = 0;
        for (size_t x = 0; x < truth.rows; ++x)
            count += brute_hamming(synth.rows, s, truth, x) <= causal;
        out.push_back(count);
    }
    return out;
}

Outcome check_privacy() {
    const std::vector<size_t> starts = {0, 2, 4, 6};
    const ResponseMatrix truth = matrix_from_categories(
        starts, {{0, 0, 0}, {0, 0, 0}, {1, 0, 0}, {0, 1, 1}, {1, 1, 0}});

    SynthesisResult synth = as_synthesis(matrix_from_categories(
        starts, {{0, 0, 0}, {1, 0, 1}, {1, 0, 0}, {0, 0, 1}, {1, 1, 1}}));
    synth.block_entropy.assign({0.5, 0, 0, 1, 1, 0, 0, 0, 0, 2, 0, 0, 1, 1, 1});
    synth.recompute_totals();

    const auto mult = true_multiplicity(truth);
    if (mult != brute_multiplicity(truth)) return {false, "multiplicity disagrees with brute force"};

    const auto eff = effective_multiplicity(mult, synth.entropy_bits);
    for (size_t r = 0; r < truth.rows; ++r) {
        const double want = static_cast<double>(mult[r]) * std::exp2(synth.entropy_bits[r]);
        if (eff[r] != want) return {false, "effective multiplicity disagrees"};
    }

    std::vector<size_t> sample(truth.rows);
    std::iota(sample.begin(), sample.end(), size_t{0});
    if (hamming_causal_rank(truth, synth, sample) != brute_rank(truth, synth))
        return {false, "causal rank disagrees with brute force"};

    // a larger random instance, same brute-force comparison
    const std::vector<size_t> big_starts = {0, 3, 5, 8, 10};
    const ResponseMatrix big_truth = random_matrix(big_starts, 64, 21);
    SynthesisResult big_synth = as_synthesis(random_matrix(big_starts, 64, 22));
    std::vector<size_t> big_sample(64);
    std::iota(big_sample.begin(), big_sample.end(), size_t{0});
    if (hamming_causal_rank(big_truth, big_synth, big_sample) != brute_rank(big_truth, big_synth))
        return {false, "causal rank disagrees with brute force on random rows"};

    // duplicating the dataset doubles every multiplicity
    ResponseMatrix doubled = truth;
    doubled.rows *= 2;
    doubled.cells.insert(doubled.cells.end(), truth.cells.begin(), truth.cells.end());
    const auto mult2 = true_multiplicity(doubled);
    for (size_t r = 0; r < truth.rows; ++r)
        if (mult2[r] != 2 * mult[r] || mult2[r + truth.rows] != 2 * mult[r])
            return {false, "duplicated dataset did not double multiplicity"};

    // zero-entropy exact copies: causal rank equals multiplicity on every row
    for (const ResponseMatrix* m : {&truth, &big_truth}) {
        const SynthesisResult copies = as_synthesis(*m);
        std::vector<size_t> all(m->rows);
        std::iota(all.begin(), all.end(), size_t{0});
        const auto ranks = hamming_causal_rank(*m, copies, all);
        const auto mm = true_multiplicity(*m);
        for (size_t r = 0; r < m->rows; ++r)
            if (ranks[r] != mm[r]) return {false, "exact copy rank differs from multiplicity"};
    }
    return {true, "multiplicity, effective multiplicity and causal rank match brute force"};
}

// ---------------------------------------------------------------------------
// 9. end-to-end determinism through the CLI
// ---------------------------------------------------------------------------

Outcome check_determinism() {
    const fs::path spec_path = g_root / "determinism_spec.txt";
    std::ofstream(spec_path) << "rows 400\n"
                             << "question A 3\nquestion B 3\nquestion C 2\nquestion D 4\n"
                             << "subpop one 0.6\n"
                             << "given A : 0.5 0.3 0.2\n"
                             << "given B A : 0.6 0.3 0.1 / 0.2 0.5 0.3 / 0.1 0.2 0.7\n"
                             << "subpop two 0.4\n"
                             << "given A : 0.1 0.3 0.6\n"
                             << "given D C : 0.4 0.3 0.2 0.1 / 0.1 0.2 0.3 0.4\n";

    auto run_once = [&](const fs::path& dir) -> bool {
        fs::create_directories(dir);
        const std::string d = dir.string();
        return run_cli("testbed --spec " + spec_path.string() + " --seed 3 --outdir " + d +
                       " --out table.tsv --truth-out truth.txt --labels-out labels.txt") == 0 &&
               run_cli("schema --table " + d + "/table.tsv --outdir " + d + " --out schema.txt") == 0 &&
               run_cli("encode --table " + d + "/table.tsv --schema " + d + "/schema.txt --outdir " +
                       d + " --out matrix.bin") == 0 &&
               run_cli("train --matrix " + d + "/matrix.bin --outdir " + d +
                       " --out model.ckpt --losses-out losses.txt --blades 2 --reduced-features 4"
                       " --mse-epochs 5 --zval-epochs 5 --batch-size 128 --seed 12") == 0 &&
               run_cli("synthesize --matrix " + d + "/matrix.bin --checkpoint " + d +
                       "/model.ckpt --outdir " + d + " --out synthetic.bin --sidecar-out sidecar.txt"
                       " --seed 9 --instances 2 --rr-p 0.25") == 0 &&
               run_cli("evaluate --true " + d + "/matrix.bin --synth " + d +
                       "/synthetic.bin --outdir " + d + " --out metrics.txt") == 0 &&
               run_cli("privacy --true " + d + "/matrix.bin --synth " + d +
                       "/synthetic.bin --sidecar " + d + "/sidecar.txt --outdir " + d +
                       " --out privacy.txt --sample 50 --seed 4") == 0 &&
               run_cli("bootstrap --matrix " + d + "/matrix.bin --outdir " + d +
                       " --out bootstrap.txt --seed 6") == 0;
    };

    const fs::path a = g_root / "det_a", b = g_root / "det_b";
    if (!run_once(a) || !run_once(b)) return {false, "pipeline run failed"};
    for (const char* name : {"table.tsv", "schema.txt", "matrix.bin", "model.ckpt", "losses.txt",
                             "synthetic.bin", "sidecar.txt", "metrics.txt", "privacy.txt",
                             "bootstrap.txt"})
        if (read_file(a / name) != read_file(b / name))
            return {false, std::string(name) + " differs between identical runs"};
    return {true, "checkpoints, matrices and reports byte-identical across two runs"};
}

// ---------------------------------------------------------------------------
// 10. optional externally supplied survey table
// ---------------------------------------------------------------------------

Outcome check_external_survey(const std::string& table, const std::string& directives) {
    const fs::path dir = g_root / "external";
    fs::create_directories(dir);
    const std::string d = dir.string();

    std::string schema_args = "schema --table " + table + " --outdir " + d + " --out schema.txt";
    if (!directives.empty()) schema_args += " --directives " + directives;
    if (run_cli(schema_args) != 0) return {false, "schema inference failed"};
    if (run_cli("encode --table " + table + " --schema " + d + "/schema.txt --outdir " + d +
                " --out matrix.bin") != 0)
        return {false, "encoding failed"};
    if (run_cli("train --matrix " + d + "/matrix.bin --outdir " + d +
                " --out model.ckpt --losses-out losses.txt --seed 1") != 0)
        return {false, "training failed"};
    if (run_cli("synthesize --matrix " + d + "/matrix.bin --checkpoint " + d +
                "/model.ckpt --outdir " + d + " --out synthetic.bin --sidecar-out sidecar.txt"
                " --seed 1") != 0)
        return {false, "synthesis failed"};
    if (run_cli("evaluate --true " + d + "/matrix.bin --synth " + d + "/synthetic.bin --outdir " +
                d + " --out metrics.txt") != 0)
        return {false, "evaluation failed"};
    if (run_cli("bootstrap --matrix " + d + "/matrix.bin --outdir " + d +
                " --out bootstrap.txt --seed 1") != 0)
        return {false, "bootstrap failed"};

    const double median = parse_aggregate_median(dir / "metrics.txt");
    const double boot = parse_aggregate_median(dir / "bootstrap.txt");
    if (median > 0.10) return {false, "median log deviation " + fmt(median) + " > 0.10"};
    if (std::abs(boot - 0.012) > 0.003)
        return {false, "bootstrap floor " + fmt(boot) + " not within 0.012 +- 0.003"};
    return {true, "median d " + fmt(median) + ", bootstrap floor " + fmt(boot)};
}

} // namespace

int main() {
    g_root = fs::temp_directory_path() / "modp_acceptance";
    std::error_code ec;
    fs::remove_all(g_root, ec);
    fs::create_directories(g_root);

    check(1, "analytic gradients match central finite differences", check_gradients);
    check(2, "non-self-prediction mask survives 500 optimizer steps", check_mask_invariant);
    check(3, "losses match scalar cell-by-cell recomputation", check_loss_oracles);
    check(4, "metric cells match hand-computed values", check_metric_oracles);
    check(5, "sampling matches its distribution and entropy", check_sampling);
    check(6, "end-to-end accuracy on a generated population", check_end_to_end);
    check(7, "post-processing guarantees", check_post_processing);
    check(8, "privacy measures match brute force", check_privacy);
    check(9, "identical runs are byte-identical", check_determinism);

    const char* table = std::getenv("MODP_PUMS_TABLE");
    const char* directives = std::getenv("MODP_PUMS_DIRECTIVES");
    if (table && *table) {
        const std::string t = table, dv = directives ? directives : "";
        check(10, "externally supplied survey table", [&] { return check_external_survey(t, dv); });
    } else {
        skip(10, "externally supplied survey table",
             "set MODP_PUMS_TABLE (and optionally MODP_PUMS_DIRECTIVES) to enable");
    }

    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
