// modp: synthesize categorical survey microdata by minus-one data
// prediction, then measure how accurate and how private the result is.
//
// Pipeline:
//   testbed -> schema -> encode -> train -> synthesize -> evaluate / privacy
//                                     \-> bootstrap (accuracy floor)

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "modp/dataset.hpp"
#include "modp/error.hpp"
#include "modp/metrics.hpp"
#include "modp/model.hpp"
#include "modp/privacy.hpp"
#include "modp/rng.hpp"
#include "modp/schema.hpp"
#include "modp/synthesis.hpp"
#include "modp/testbed.hpp"
#include "modp/text.hpp"
#include "modp/training.hpp"

namespace fs = std::filesystem;
using namespace modp;

namespace {

std::string resolve(const std::string& outdir, const std::string& path) {
    fs::path p(path);
    if (p.is_absolute()) return path;
    return (fs::path(outdir) / p).string();
}

void write_artifact(const std::string& outdir, const std::string& path, const std::string& text) {
    const std::string full = resolve(outdir, path);
    if (const fs::path parent = fs::path(full).parent_path(); !parent.empty())
        fs::create_directories(parent);
    write_text_file(full, text);
}

void add_outdir(CLI::App* cmd, std::string& outdir) {
    cmd->add_option("--outdir", outdir, "directory for output artifacts")
        ->envname("MODP_OUT_DIR")
        ->capture_default_str();
}

// prints one line per finished epoch as training goes
struct EpochPrinter {
    int epoch = -1;
    LossKind kind = LossKind::mse;
    double sum = 0;
    int count = 0;

    void operator()(const LossRecord& rec) {
        if (count > 0 && (rec.epoch != epoch || rec.kind != kind)) flush();
        epoch = rec.epoch;
        kind = rec.kind;
        sum += rec.loss;
        count += 1;
    }

    void flush() {
        if (count == 0) return;
        std::cerr << "epoch " << epoch << " " << loss_name(kind) << " mean loss "
                  << fmt_double(sum / count) << "\n";
        sum = 0;
        count = 0;
    }
};

ResponseMatrix read_matrix_checked(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("no such matrix file: " + path);
    return read_matrix(path);
}

SynthesisResult sample_instance(const MultiBladeModel& model, const ResponseMatrix& m,
                                uint64_t seed, int instance) {
    SynthesisResult acc;
    constexpr size_t chunk = 8192;
    std::vector<size_t> idx;
    for (size_t r0 = 0; r0 < m.rows; r0 += chunk) {
        const size_t r1 = std::min(m.rows, r0 + chunk);
        idx.resize(r1 - r0);
        std::iota(idx.begin(), idx.end(), r0);
        const Matrix probs = model_forward(model, to_dense(m, idx));
        append_rows(acc, instantiate(probs, m.block_starts, seed, instance, r0));
    }
    return acc;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic categorical microdata via minus-one data prediction"};
    app.require_subcommand(1);
    app.set_config("--config", "", "text config file (key=value, [command] sections)");

    // ---- testbed ----------------------------------------------------------
    struct {
        std::string spec, outdir = ".", out = "testbed.tsv", truth = "testbed_truth.txt",
                    labels = "testbed_labels.txt";
        uint64_t seed = 1;
    } tb;
    auto* cmd_tb = app.add_subcommand("testbed", "generate a mixture-population table with known ground truth");
    cmd_tb->add_option("--spec", tb.spec, "population spec file")->required();
    cmd_tb->add_option("--seed", tb.seed, "master seed")->capture_default_str();
    cmd_tb->add_option("--out", tb.out, "raw table output")->capture_default_str();
    cmd_tb->add_option("--truth-out", tb.truth, "ground-truth output")->capture_default_str();
    cmd_tb->add_option("--labels-out", tb.labels, "subpopulation labels output")->capture_default_str();
    add_outdir(cmd_tb, tb.outdir);
    cmd_tb->callback([&] {
        const auto spec = parse_population_spec(read_text_file(tb.spec));
        const auto data = generate_testbed(spec, tb.seed);
        write_artifact(tb.outdir, tb.out, serialize_table(data.table));
        write_artifact(tb.outdir, tb.truth, serialize_ground_truth(spec, tb.seed));
        write_artifact(tb.outdir, tb.labels, serialize_subpop_labels(data, tb.seed));
        std::cout << "testbed: " << data.table.rows.size() << " rows, "
                  << spec.question_names.size() << " questions -> " << resolve(tb.outdir, tb.out)
                  << "\n";
    });

    // ---- schema -----------------------------------------------------------
    struct {
        std::string table, directives, outdir = ".", out = "schema.txt";
    } sc;
    auto* cmd_sc = app.add_subcommand("schema", "infer a question schema from a raw table");
    cmd_sc->add_option("--table", sc.table, "raw delimited table")->required();
    cmd_sc->add_option("--directives", sc.directives, "per-column directives file");
    cmd_sc->add_option("--out", sc.out, "schema output")->capture_default_str();
    add_outdir(cmd_sc, sc.outdir);
    cmd_sc->callback([&] {
        const auto table = parse_table(read_text_file(sc.table));
        std::map<std::string, ColumnDirective> dirs;
        if (!sc.directives.empty()) dirs = parse_directives(read_text_file(sc.directives));
        const auto schema = infer_schema(table, dirs);
        write_artifact(sc.outdir, sc.out, serialize_schema(schema));
        std::cout << "schema: " << schema.questions.size() << " questions, "
                  << schema.block_starts.back() << " columns -> " << resolve(sc.outdir, sc.out)
                  << "\n";
    });

    // ---- encode -----------------------------------------------------------
    struct {
        std::string table, schema, outdir = ".", out = "matrix.bin";
    } en;
    auto* cmd_en = app.add_subcommand("encode", "encode a raw table into a one-hot response matrix");
    cmd_en->add_option("--table", en.table, "raw delimited table")->required();
    cmd_en->add_option("--schema", en.schema, "schema file")->required();
    cmd_en->add_option("--out", en.out, "matrix output")->capture_default_str();
    add_outdir(cmd_en, en.outdir);
    cmd_en->callback([&] {
        const auto schema = parse_schema(read_text_file(en.schema));
        const auto table = parse_table(read_text_file(en.table));
        std::vector<std::vector<uint8_t>> rows;
        rows.reserve(table.rows.size());
        for (const auto& row : table.rows) rows.push_back(encode_row(schema, row));
        const auto m = load_matrix(schema, rows);
        fs::create_directories(en.outdir);
        write_matrix(resolve(en.outdir, en.out), m);
        std::cout << "encoded " << m.rows << " rows x " << m.cols << " columns -> "
                  << resolve(en.outdir, en.out) << "\n";
    });

    // ---- train ------------------------------------------------------------
    struct {
        std::string matrix, outdir = ".", out = "model.ckpt", losses = "losses.txt";
        size_t blades = 5, reduced = 15;
        TrainConfig cfg;
    } tr;
    auto* cmd_tr = app.add_subcommand("train", "train a multi-blade model on an encoded matrix");
    cmd_tr->add_option("--matrix", tr.matrix, "encoded matrix")->required();
    cmd_tr->add_option("--out", tr.out, "checkpoint output")->capture_default_str();
    cmd_tr->add_option("--losses-out", tr.losses, "loss history output")->capture_default_str();
    cmd_tr->add_option("--blades", tr.blades, "number of blades")->capture_default_str();
    cmd_tr->add_option("--reduced-features", tr.reduced, "gating hidden width")->capture_default_str();
    cmd_tr->add_option("--mse-epochs", tr.cfg.mse_epochs, "epochs of squared-error warmup")->capture_default_str();
    cmd_tr->add_option("--zval-epochs", tr.cfg.zval_epochs, "epochs of z-value loss")->capture_default_str();
    cmd_tr->add_option("--batch-size", tr.cfg.batch_size, "rows per step")->capture_default_str();
    cmd_tr->add_option("--lr", tr.cfg.learning_rate, "Adam learning rate")->capture_default_str();
    cmd_tr->add_option("--seed", tr.cfg.seed, "master seed")->capture_default_str();
    add_outdir(cmd_tr, tr.outdir);
    cmd_tr->callback([&] {
        const auto m = read_matrix_checked(tr.matrix);
        auto model = init_model(m.block_starts, tr.blades, tr.reduced, tr.cfg.seed);
        EpochPrinter printer;
        const auto result = train(model, m, tr.cfg, [&printer](const LossRecord& r) { printer(r); });
        printer.flush();
        fs::create_directories(tr.outdir);
        save_checkpoint(resolve(tr.outdir, tr.out), model);
        write_artifact(tr.outdir, tr.losses, serialize_loss_history(result.history, tr.cfg.seed));
        std::cout << "trained " << model.name << ": z-value loss "
                  << fmt_double(result.initial_zval_loss) << " -> "
                  << fmt_double(result.final_zval_loss) << " -> " << resolve(tr.outdir, tr.out)
                  << "\n";
    });

    // ---- synthesize -------------------------------------------------------
    struct {
        std::string matrix, checkpoint, outdir = ".", out = "synthetic.bin",
                    sidecar = "sidecar.txt";
        uint64_t seed = 1;
        int instances = 1;
        double rr_p = 0.0, threshold_quantile = 0.75, pseudocount = 0.5;
        bool fix_zeros = false;
    } sy;
    auto* cmd_sy = app.add_subcommand("synthesize", "sample synthetic rows from a trained model");
    cmd_sy->add_option("--matrix", sy.matrix, "true encoded matrix")->required();
    cmd_sy->add_option("--checkpoint", sy.checkpoint, "trained model")->required();
    cmd_sy->add_option("--out", sy.out, "synthetic matrix output")->capture_default_str();
    cmd_sy->add_option("--sidecar-out", sy.sidecar, "per-row sidecar output")->capture_default_str();
    cmd_sy->add_option("--seed", sy.seed, "master seed")->capture_default_str();
    cmd_sy->add_option("--instances", sy.instances, "instances per row (1 or 2)")
        ->check(CLI::Range(1, 2))
        ->capture_default_str();
    cmd_sy->add_option("--rr-p", sy.rr_p, "randomized-response pass-through probability")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd_sy->add_flag("--fix-structural-zeros", sy.fix_zeros,
                     "drop rows hitting a zero true crosstab cell");
    cmd_sy->add_option("--threshold-quantile", sy.threshold_quantile,
                       "row-loss quantile above which the second instance is used")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd_sy->add_option("--pseudocount", sy.pseudocount, "pseudocount for row-loss log deviations")
        ->capture_default_str();
    add_outdir(cmd_sy, sy.outdir);
    cmd_sy->callback([&] {
        const auto m = read_matrix_checked(sy.matrix);
        const auto model = load_checkpoint(sy.checkpoint);
        if (model.block_starts != m.block_starts)
            throw ValidationError("checkpoint and matrix block structures differ");

        SynthesisResult result = sample_instance(model, m, sy.seed, 0);
        const Crosstab true_ct = crosstab(m);
        if (sy.instances == 2) {
            const SynthesisResult second = sample_instance(model, m, sy.seed, 1);
            const auto losses = two_instance_row_losses(true_ct, result, sy.pseudocount);
            const double threshold = loss_quantile(losses, sy.threshold_quantile);
            result = two_instance_select(true_ct, result, second, threshold, sy.pseudocount);
        }
        if (sy.rr_p > 0.0) result = randomized_response(m, result, sy.rr_p, sy.seed);
        size_t removed = 0;
        if (sy.fix_zeros) {
            auto filtered = remove_structural_zero_rows(true_ct, result);
            removed = filtered.removed.size();
            result = std::move(filtered.kept);
        }

        fs::create_directories(sy.outdir);
        write_matrix(resolve(sy.outdir, sy.out), result.rows);
        write_artifact(sy.outdir, sy.sidecar, serialize_sidecar(m.rows, result, sy.seed));
        std::cout << "synthesized " << result.rows.rows << " rows (" << removed
                  << " removed) -> " << resolve(sy.outdir, sy.out) << "\n";
    });

    // ---- evaluate ---------------------------------------------------------
    struct {
        std::string true_path, synth_path, outdir = ".", out = "metrics.txt";
        MetricsConfig cfg;
    } ev;
    auto* cmd_ev = app.add_subcommand("evaluate", "compare synthetic and true crosstabs");
    cmd_ev->add_option("--true", ev.true_path, "true encoded matrix")->required();
    cmd_ev->add_option("--synth", ev.synth_path, "synthetic encoded matrix")->required();
    cmd_ev->add_option("--out", ev.out, "metrics report output")->capture_default_str();
    cmd_ev->add_option("--pseudocount", ev.cfg.pseudocount, "log-deviation pseudocount")->capture_default_str();
    cmd_ev->add_option("--d0", ev.cfg.d0, "log-deviation scale in the blended figure")->capture_default_str();
    cmd_ev->add_option("--z0", ev.cfg.z0, "z-value scale in the blended figure")->capture_default_str();
    add_outdir(cmd_ev, ev.outdir);
    cmd_ev->callback([&] {
        const auto mt = read_matrix_checked(ev.true_path);
        const auto ms = read_matrix_checked(ev.synth_path);
        const auto res = evaluate(crosstab(mt), crosstab(ms), ev.cfg);
        write_artifact(ev.outdir, ev.out, serialize_metrics(res));
        const auto plots = export_plot_data(res, mt.cols);
        write_artifact(ev.outdir, "plot_count_scatter.txt", plots.count_scatter);
        write_artifact(ev.outdir, "plot_dz_scatter.txt", plots.dz_scatter);
        write_artifact(ev.outdir, "plot_fm_histogram.txt", plots.fm_histogram);
        write_artifact(ev.outdir, "plot_fm_heatmap.txt", plots.fm_heatmap);
        std::cout << "accuracy: median d " << fmt_double(res.aggregate.median) << ", mean |d| "
                  << fmt_double(res.aggregate.mean_absolute) << ", rms "
                  << fmt_double(res.aggregate.rms) << " -> " << resolve(ev.outdir, ev.out) << "\n";
    });

    // ---- privacy ----------------------------------------------------------
    struct {
        std::string true_path, synth_path, sidecar, outdir = ".", out = "privacy.txt";
        size_t sample = 10000;
        uint64_t seed = 1;
    } pv;
    auto* cmd_pv = app.add_subcommand("privacy", "audit per-row privacy of a synthetic matrix");
    cmd_pv->add_option("--true", pv.true_path, "true encoded matrix")->required();
    cmd_pv->add_option("--synth", pv.synth_path, "synthetic encoded matrix")->required();
    cmd_pv->add_option("--sidecar", pv.sidecar, "synthesis sidecar file")->required();
    cmd_pv->add_option("--out", pv.out, "privacy report output")->capture_default_str();
    cmd_pv->add_option("--sample", pv.sample, "synthetic rows to audit")->capture_default_str();
    cmd_pv->add_option("--seed", pv.seed, "master seed for row sampling")->capture_default_str();
    add_outdir(cmd_pv, pv.outdir);
    cmd_pv->callback([&] {
        const auto mt = read_matrix_checked(pv.true_path);
        SynthesisResult synth;
        synth.rows = read_matrix_checked(pv.synth_path);
        const auto sc = parse_sidecar(read_text_file(pv.sidecar));
        if (sc.removed.size() != mt.rows)
            throw ValidationError("sidecar row count does not match the true matrix");
        for (size_t r = 0; r < sc.removed.size(); ++r)
            if (!sc.removed[r]) {
                synth.source_row.push_back(r);
                synth.entropy_bits.push_back(sc.entropy_bits[r]);
                synth.instance.push_back(sc.instance[r] - 1);
            }
        if (synth.source_row.size() != synth.rows.rows)
            throw ValidationError("sidecar kept-row count does not match the synthetic matrix");
        const auto rep = privacy_report(mt, synth, pv.sample, pv.seed);
        write_artifact(pv.outdir, pv.out, serialize_privacy(rep));
        const auto plots = export_privacy_plots(rep);
        write_artifact(pv.outdir, "privacy_entropy_histogram.txt", plots.entropy_histogram);
        write_artifact(pv.outdir, "privacy_entropy_multiplicity.txt",
                       plots.entropy_multiplicity_scatter);
        write_artifact(pv.outdir, "privacy_effective_histogram.txt", plots.effective_histogram);
        write_artifact(pv.outdir, "privacy_rank_cdf.txt", plots.rank_cdf);
        size_t unique_nearest = 0;
        for (const auto& r : rep.rows) unique_nearest += r.causal_rank_count == 1;
        std::cout << "privacy: audited " << rep.rows.size() << " rows, causal row uniquely nearest for "
                  << unique_nearest << " -> " << resolve(pv.outdir, pv.out) << "\n";
    });

    // ---- bootstrap --------------------------------------------------------
    struct {
        std::string matrix, outdir = ".", out = "bootstrap.txt";
        uint64_t seed = 1;
        MetricsConfig cfg;
    } bs;
    auto* cmd_bs = app.add_subcommand("bootstrap",
                                      "accuracy of a bootstrap resample against its source (the floor any synthesizer can reach)");
    cmd_bs->add_option("--matrix", bs.matrix, "encoded matrix")->required();
    cmd_bs->add_option("--out", bs.out, "aggregate output")->capture_default_str();
    cmd_bs->add_option("--seed", bs.seed, "master seed")->capture_default_str();
    cmd_bs->add_option("--pseudocount", bs.cfg.pseudocount, "log-deviation pseudocount")->capture_default_str();
    add_outdir(cmd_bs, bs.outdir);
    cmd_bs->callback([&] {
        const auto m = read_matrix_checked(bs.matrix);
        const auto resampled = bootstrap_resample(m, bs.seed);
        const auto res = evaluate(crosstab(m), crosstab(resampled), bs.cfg);
        std::string out = "# modp-bootstrap v1\n";
        out += "# seed " + std::to_string(bs.seed) + "\n";
        out += "# N_true " + std::to_string(m.rows) + "\n";
        out += "# N_synth " + std::to_string(resampled.rows) + "\n";
        out += "aggregate median " + fmt_double(res.aggregate.median) + "\n";
        out += "aggregate mean_absolute " + fmt_double(res.aggregate.mean_absolute) + "\n";
        out += "aggregate rms " + fmt_double(res.aggregate.rms) + "\n";
        write_artifact(bs.outdir, bs.out, out);
        std::cout << "bootstrap floor: median d " << fmt_double(res.aggregate.median)
                  << ", mean |d| " << fmt_double(res.aggregate.mean_absolute) << ", rms "
                  << fmt_double(res.aggregate.rms) << " -> " << resolve(bs.outdir, bs.out) << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
