#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "modp/dataset.hpp"
#include "modp/error.hpp"
#include "modp/model.hpp"
#include "modp/rng.hpp"

namespace modp {

enum class LossKind { mse, zval };

inline const char* loss_name(LossKind k) { return k == LossKind::mse ? "mse" : "zval"; }

struct TrainConfig {
    size_t batch_size = 4096;
    int mse_epochs = 30;
    int zval_epochs = 100;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    double pseudocount_loss = 0.01;
    double variance_floor = 1e-5;

    void validate() const {
        if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
        if (mse_epochs < 0 || zval_epochs < 0) throw ValidationError("epoch counts must be >= 0");
        if (pseudocount_loss <= 0) throw ValidationError("pseudocount_loss must be > 0");
        if (variance_floor <= 0) throw ValidationError("variance_floor must be > 0");
    }
};

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

inline double mse_loss(const Matrix& output, const Matrix& target) {
    if (output.rows() != target.rows() || output.cols() != target.cols())
        throw ValidationError("mse_loss: shape mismatch");
    return (output - target).squaredNorm() / static_cast<double>(output.size());
}

// Pooled two-proportion z^2 on batch crosstabs. Pseudocounts are added to
// the raw products, within-question diagonal blocks are zeroed, and the
// variance gets an additive floor; the result is the mean over all
// ncols^2 cells.
inline double zval_loss(const Matrix& output, const Matrix& target,
                        const std::vector<size_t>& block_starts,
                        double pseudocount = 0.01, double variance_floor = 1e-5) {
    if (output.rows() != target.rows() || output.cols() != target.cols())
        throw ValidationError("zval_loss: shape mismatch");
    const double nt = static_cast<double>(target.rows());
    const double no = static_cast<double>(output.rows());
    Matrix cross_output = (output.transpose() * output).array() + pseudocount;
    Matrix cross_target = (target.transpose() * target).array() + pseudocount;
    Matrix pt = cross_target / nt;
    Matrix po = cross_output / no;
    Matrix pooled = (cross_target + cross_output) / (nt + no);
    Matrix var = pooled.array() * (1.0 - pooled.array()) * (1.0 / nt + 1.0 / no);
    Matrix zsq = (pt - po).array().square() / (var.array() + variance_floor);
    mask_blocks(zsq, block_starts);
    return zsq.sum() / static_cast<double>(zsq.size());
}

// ---------------------------------------------------------------------------
// analytic gradients
// ---------------------------------------------------------------------------

struct GradientSet {
    std::vector<Matrix> blade_weight;
    std::vector<Vector> blade_bias;
    Matrix gating_w1;
    Vector gating_b1;
    Matrix gating_w2;
    Vector gating_b2;
};

namespace detail {

// d(mean zsq)/d(output) via the chain through cross_output = output^T output
inline Matrix zval_loss_output_grad(const Matrix& output, const Matrix& target,
                                    const std::vector<size_t>& block_starts,
                                    double pseudocount, double variance_floor) {
    const double nt = static_cast<double>(target.rows());
    const double no = static_cast<double>(output.rows());
    const double cells = static_cast<double>(output.cols()) * static_cast<double>(output.cols());
    const Matrix cross_output_raw = output.transpose() * output;
    const Matrix cross_target_raw = target.transpose() * target;
    Matrix u = ((cross_target_raw.array() + pseudocount) / nt) -
               ((cross_output_raw.array() + pseudocount) / no);  // Pt - Po
    Matrix pooled = (cross_target_raw.array() + cross_output_raw.array() + 2.0 * pseudocount) / (nt + no);
    Matrix v = pooled.array() * (1.0 - pooled.array()) * (1.0 / nt + 1.0 / no) + variance_floor;
    // dzsq/dCO = -2u/(v*No) - u^2 (1-2*pooled)(1/Nt+1/No) / ((Nt+No) v^2)
    Matrix g = (-2.0 * u.array() / (v.array() * no)) -
               (u.array().square() * (1.0 - 2.0 * pooled.array()) * (1.0 / nt + 1.0 / no) /
                ((nt + no) * v.array().square()));
    mask_blocks(g, block_starts);
    g /= cells;
    return output * (g + g.transpose());
}

} // namespace detail

struct BackwardResult {
    double loss = 0;
    GradientSet grads;
};

// Exact gradient of the chosen loss for the fixed architecture; inputs and
// targets are the same batch. Within-block blade-weight gradients come out
// exactly zero, mirroring the forward mask.
inline BackwardResult backward(const MultiBladeModel& model, const Matrix& batch, LossKind kind,
                               double pseudocount = 0.01, double variance_floor = 1e-5) {
    const ForwardCache fc = model_forward_cached(model, batch);
    const Matrix& x = batch;
    const Matrix& out = fc.output;

    BackwardResult res;
    Matrix dout;
    if (kind == LossKind::mse) {
        res.loss = mse_loss(out, batch);
        dout = 2.0 * (out - batch) / static_cast<double>(out.size());
    } else {
        res.loss = zval_loss(out, batch, model.block_starts, pseudocount, variance_floor);
        dout = detail::zval_loss_output_grad(out, batch, model.block_starts, pseudocount, variance_floor);
    }

    const size_t nb = model.num_blades();
    res.grads.blade_weight.resize(nb);
    res.grads.blade_bias.resize(nb);
    Matrix dweights(x.rows(), static_cast<Eigen::Index>(nb));  // dL/d(gating weights)
    for (size_t b = 0; b < nb; ++b) {
        const Matrix& p = fc.blade_probs[b];
        const auto wcol = fc.gating.weights.col(static_cast<Eigen::Index>(b));
        dweights.col(static_cast<Eigen::Index>(b)) = (dout.array() * p.array()).rowwise().sum();
        // dL/dZ_b = dout * w_b (per row) * sigmoid'
        Matrix dz = (dout.array().colwise() * wcol.array()) * p.array() * (1.0 - p.array());
        res.grads.blade_weight[b].noalias() = x.transpose() * dz;
        mask_blocks(res.grads.blade_weight[b], model.block_starts);
        res.grads.blade_bias[b] = dz.colwise().sum();
    }

    // softmax backward: dy_b = w_b (dw_b - sum_b' w_b' dw_b')
    const Matrix& w = fc.gating.weights;
    Vector rowdot = (dweights.array() * w.array()).rowwise().sum();
    Matrix dlogits = w.array() * (dweights.array().colwise() - rowdot.array());
    res.grads.gating_w2.noalias() = fc.gating.hidden.transpose() * dlogits;
    res.grads.gating_b2 = dlogits.colwise().sum();
    Matrix dhidden = dlogits * model.gating.w2.transpose();
    Matrix dpre = (fc.gating.pre_relu.array() > 0.0).cast<double>() * dhidden.array();
    res.grads.gating_w1.noalias() = x.transpose() * dpre;
    res.grads.gating_b1 = dpre.colwise().sum();
    return res;
}

inline BackwardResult backward(const MultiBladeModel& model, const ResponseMatrix& batch,
                               LossKind kind, double pseudocount = 0.01,
                               double variance_floor = 1e-5) {
    return backward(model, to_dense(batch), kind, pseudocount, variance_floor);
}

// ---------------------------------------------------------------------------
// Adam optimizer and the two-phase schedule
// ---------------------------------------------------------------------------

struct LossRecord {
    int64_t step;
    int epoch;
    LossKind kind;
    double loss;
};

using ProgressSink = std::function<void(const LossRecord&)>;

namespace detail {

struct AdamState {
    std::vector<Matrix> mw, vw;
    std::vector<Vector> mc, vc;
    Matrix mw1, vw1, mw2, vw2;
    Vector mb1, vb1, mb2, vb2;
    int64_t t = 0;

    explicit AdamState(const MultiBladeModel& model) {
        for (const auto& b : model.blades) {
            mw.push_back(Matrix::Zero(b.weight.rows(), b.weight.cols()));
            vw.push_back(Matrix::Zero(b.weight.rows(), b.weight.cols()));
            mc.push_back(Vector::Zero(b.bias.size()));
            vc.push_back(Vector::Zero(b.bias.size()));
        }
        mw1 = Matrix::Zero(model.gating.w1.rows(), model.gating.w1.cols());
        vw1 = mw1;
        mw2 = Matrix::Zero(model.gating.w2.rows(), model.gating.w2.cols());
        vw2 = mw2;
        mb1 = Vector::Zero(model.gating.b1.size());
        vb1 = mb1;
        mb2 = Vector::Zero(model.gating.b2.size());
        vb2 = mb2;
    }

    template <typename T>
    void update_one(T& param, const T& grad, T& m, T& v, const TrainConfig& cfg) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = (cfg.beta2 * v.array() + (1.0 - cfg.beta2) * grad.array().square()).matrix();
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        param.array() -=
            cfg.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_eps);
    }

    void step(MultiBladeModel& model, const GradientSet& g, const TrainConfig& cfg) {
        ++t;
        for (size_t b = 0; b < model.blades.size(); ++b) {
            update_one(model.blades[b].weight, g.blade_weight[b], mw[b], vw[b], cfg);
            update_one(model.blades[b].bias, g.blade_bias[b], mc[b], vc[b], cfg);
            apply_mask(model.blades[b], model.block_starts);
        }
        update_one(model.gating.w1, g.gating_w1, mw1, vw1, cfg);
        update_one(model.gating.b1, g.gating_b1, mb1, vb1, cfg);
        update_one(model.gating.w2, g.gating_w2, mw2, vw2, cfg);
        update_one(model.gating.b2, g.gating_b2, mb2, vb2, cfg);
    }
};

} // namespace detail

struct TrainResult {
    std::vector<LossRecord> history;
    double initial_zval_loss = 0;  // over the full data, fixed batch partition
    double final_zval_loss = 0;
};

// Minibatch descent: mse_epochs on the row-prediction loss, then zval_epochs
// on the batch-crosstab loss. Input and target are the same batch. The mask
// is reapplied after every update, and everything is deterministic for a
// fixed (seed, data, config).
inline TrainResult train(MultiBladeModel& model, const ResponseMatrix& data, const TrainConfig& cfg,
                         const ProgressSink& sink = {}) {
    cfg.validate();
    if (data.rows == 0) throw ValidationError("train: empty data");
    if (data.cols != model.cols()) throw ValidationError("train: data/model column mismatch");

    TrainResult result;
    detail::AdamState adam(model);
    std::vector<size_t> order(data.rows);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle_rng = substream(cfg.seed, StreamTag::shuffle);

    auto full_zval = [&]() {
        double total = 0;
        size_t batches = 0;
        for (size_t start = 0; start < data.rows; start += cfg.batch_size) {
            const size_t end = std::min(data.rows, start + cfg.batch_size);
            std::vector<size_t> idx(end - start);
            std::iota(idx.begin(), idx.end(), start);
            const Matrix x = to_dense(data, idx);
            total += zval_loss(model_forward(model, x), x, model.block_starts, cfg.pseudocount_loss,
                               cfg.variance_floor);
            ++batches;
        }
        return total / static_cast<double>(batches);
    };
    result.initial_zval_loss = full_zval();

    int64_t step = 0;
    auto run_phase = [&](LossKind kind, int epochs, int epoch_offset) {
        for (int e = 0; e < epochs; ++e) {
            shuffle_rng.shuffle(order);
            for (size_t start = 0; start < data.rows; start += cfg.batch_size) {
                const size_t end = std::min(data.rows, start + cfg.batch_size);
                const std::vector<size_t> idx(order.begin() + static_cast<ptrdiff_t>(start),
                                              order.begin() + static_cast<ptrdiff_t>(end));
                const Matrix x = to_dense(data, idx);
                BackwardResult bw = backward(model, x, kind, cfg.pseudocount_loss, cfg.variance_floor);
                if (!std::isfinite(bw.loss))
                    throw NumericalError("non-finite " + std::string(loss_name(kind)) +
                                         " loss at step " + std::to_string(step));
                adam.step(model, bw.grads, cfg);
                const LossRecord rec{step, epoch_offset + e, kind, bw.loss};
                result.history.push_back(rec);
                if (sink) sink(rec);
                ++step;
            }
        }
    };
    run_phase(LossKind::mse, cfg.mse_epochs, 0);
    run_phase(LossKind::zval, cfg.zval_epochs, cfg.mse_epochs);

    result.final_zval_loss = full_zval();
    return result;
}

// (step, epoch, loss_kind, loss) as tab-separated text
inline std::string serialize_loss_history(const std::vector<LossRecord>& history, uint64_t seed) {
    std::string out = "# modp-losses v1\n# seed " + std::to_string(seed) + "\n";
    out += "# step\tepoch\tkind\tloss\n";
    for (const auto& r : history)
        out += std::to_string(r.step) + "\t" + std::to_string(r.epoch) + "\t" + loss_name(r.kind) +
               "\t" + fmt_double(r.loss) + "\n";
    return out;
}

} // namespace modp
