#pragma once

#include <cmath>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "dagsynth/discriminator.hpp"
#include "dagsynth/encoding.hpp"
#include "dagsynth/generator.hpp"
#include "dagsynth/losses.hpp"
#include "dagsynth/optim.hpp"
#include "dagsynth/table.hpp"

namespace dagsynth {

struct TrainConfig {
    LossKind loss = LossKind::wgan;
    std::size_t epochs = 100;
    std::size_t batch = 500;
    double lr = 0.0;               // 0 = regime default
    double lambda = 10.0;          // gradient-penalty weight (wggp)
    double clip = 0.01;            // weight clip (wgan)
    std::size_t critic_steps = 0;  // 0 = regime default
    Smoothing smoothing = Smoothing::TS;
    double gamma = 0.2;
    double kl_weight = 1.0;
    std::uint64_t seed = 1;

    double resolved_lr() const {
        if (lr > 0.0) return lr;
        switch (loss) {
            case LossKind::sgan: return 1e-3;
            case LossKind::wgan: return 2e-4;
            default: return 1e-4;
        }
    }

    std::size_t resolved_critic_steps() const {
        if (critic_steps > 0) return critic_steps;
        return loss == LossKind::sgan ? 1 : 5;
    }

    void check() const {
        if (epochs < 1) throw ValidationError("epochs must be >= 1");
        if (batch < 2) throw ValidationError("batch size must be >= 2");
        if (lambda < 0.0) throw ValidationError("lambda must be >= 0");
        if (gamma < 0.0) throw ValidationError("gamma must be >= 0");
        if (kl_weight < 0.0) throw ValidationError("kl weight must be >= 0");
        if (loss == LossKind::wgan && clip <= 0.0)
            throw ValidationError("wgan clip must be > 0");
        if (lr < 0.0) throw ValidationError("learning rate must be >= 0");
    }
};

struct HistoryRow {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double g_loss = 0.0;
    double d_loss = 0.0;
    double kl = 0.0;
    double gp = 0.0;
};

inline void write_history(const std::vector<HistoryRow>& rows, std::ostream& out) {
    out << "step,epoch,g_loss,d_loss,kl,gp\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%.12g,%.12g,%.12g,%.12g\n", r.step, r.epoch,
                      r.g_loss, r.d_loss, r.kl, r.gp);
        out << buf;
    }
}

class Trainer {
   public:
    TrainConfig cfg;
    std::vector<ColumnMeta> metas;
    GeneratorNet gen;
    DiscriminatorNet disc;
    std::unique_ptr<Optimizer> opt_g, opt_d;
    Rng rng;
    std::size_t epoch_done = 0;
    std::size_t step_count = 0;

    Trainer(const Table& table, const Dag& dag, std::vector<ColumnMeta> metas_in, TrainConfig config,
            GeneratorSizes gen_sizes = {}, DiscriminatorSpec disc_spec = {})
        : cfg(config), metas(std::move(metas_in)), rng(config.seed) {
        cfg.check();
        real_ = encode_table(table, metas);
        if (real_.n_rows < cfg.batch)
            throw ValidationError("batch size " + std::to_string(cfg.batch) + " exceeds the " +
                                  std::to_string(real_.n_rows) + " table rows");
        gen = GeneratorNet::build(dag, metas, gen_sizes, rng.fork_seed());
        disc_spec.norm = cfg.loss == LossKind::wggp ? Normalization::layer : Normalization::batch;
        disc_spec.gamma = cfg.gamma;
        disc = DiscriminatorNet::build(real_.total_width(), disc_spec, rng.fork_seed());
        double lr = cfg.resolved_lr();
        if (cfg.loss == LossKind::wgan) {
            opt_g = std::make_unique<RmsProp>(lr);
            opt_d = std::make_unique<RmsProp>(lr);
        } else {
            opt_g = std::make_unique<Adam>(lr);
            opt_d = std::make_unique<Adam>(lr);
        }
    }

    const std::vector<HistoryRow>& history() const { return history_; }
    const EncodedTable& encoded() const { return real_; }

    void train_epoch() {
        std::vector<std::size_t> idx(real_.n_rows);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx);
        std::size_t n_batches = real_.n_rows / cfg.batch;  // last partial batch dropped
        for (std::size_t b = 0; b < n_batches; ++b) {
            std::vector<std::size_t> batch(idx.begin() + b * cfg.batch,
                                           idx.begin() + (b + 1) * cfg.batch);
            train_step(batch);
        }
        ++epoch_done;
    }

    void run() {
        while (epoch_done < cfg.epochs) train_epoch();
    }

    struct CriticVals {
        double d = 0.0, gp = 0.0;
    };

    struct GenVals {
        double g = 0.0, kl = 0.0;
    };

    // The two halves of a training step, exposed for stepwise drivers. idx
    // selects the real rows of the batch.
    CriticVals critic_update(const std::vector<std::size_t>& idx) {
        Tape t;
        Var real_in = assemble_input(t, batch_consts(t, idx), true, cfg.smoothing, cfg.gamma, rng);
        GenPass gen_pass = gen.forward(t, idx.size(), rng, false);
        Var syn_in = assemble_input(t, gen_pass.by_col, false, cfg.smoothing, cfg.gamma, rng);

        std::vector<std::pair<std::string, Var>> leaves;
        detail::Binder db{t, true, leaves};
        bool penalized = cfg.loss == LossKind::wggp && cfg.lambda > 0.0;
        Var s_real = disc.score(t, real_in, db, penalized);
        Var s_syn = disc.score(t, syn_in, db, penalized);

        Var loss = cfg.loss == LossKind::sgan ? sgan_d_loss(t, s_real, s_syn)
                                              : wgan_d_loss(t, s_real, s_syn);
        CriticVals vals;
        if (penalized) {
            const Tensor& R = t.val(real_in);
            const Tensor& S = t.val(syn_in);
            Tensor interp(R.rows, R.cols);
            for (std::size_t r = 0; r < R.rows; ++r) {
                double u = rng.uniform();
                for (std::size_t c = 0; c < R.cols; ++c)
                    interp.at(r, c) = u * R.at(r, c) + (1.0 - u) * S.at(r, c);
            }
            Var pen = gradient_penalty(t, t.param(std::move(interp)), [&](Tape& tt, Var x) {
                return disc.score(tt, x, db, true);
            });
            vals.gp = t.val(pen).item();
            loss = t.add(loss, t.scale(pen, cfg.lambda));
        }
        vals.d = t.val(loss).item();

        auto grads = t.backward(loss);
        apply(*opt_d, disc.params(), t, leaves, grads);
        if (cfg.loss == LossKind::wgan) clip_weights(disc.params(), cfg.clip);
        return vals;
    }

    GenVals generator_update(const std::vector<std::size_t>& idx) {
        Tape t;
        GenPass gen_pass = gen.forward(t, idx.size(), rng, true);
        Var syn_in = assemble_input(t, gen_pass.by_col, false, cfg.smoothing, cfg.gamma, rng);
        std::vector<std::pair<std::string, Var>> disc_leaves;
        detail::Binder db{t, false, disc_leaves};
        Var s = disc.score(t, syn_in, db, false);
        Var adv = cfg.loss == LossKind::sgan ? sgan_g_loss(t, s) : wgan_g_loss(t, s);
        Var kl = kl_term(t, batch_consts(t, idx), gen_pass.by_col);
        Var loss = t.add(adv, t.scale(kl, cfg.kl_weight));

        GenVals vals;
        vals.g = t.val(adv).item();
        vals.kl = t.val(kl).item();
        auto grads = t.backward(loss);
        apply(*opt_g, gen.params(), t, gen_pass.leaves, grads);
        return vals;
    }

   private:
    EncodedTable real_;
    std::vector<HistoryRow> history_;

    static Tensor gather(const Tensor& src, const std::vector<std::size_t>& idx) {
        Tensor out(idx.size(), src.cols);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < src.cols; ++c) out.at(r, c) = src.at(idx[r], c);
        return out;
    }

    std::vector<CellVars> batch_consts(Tape& t, const std::vector<std::size_t>& idx) const {
        std::vector<CellVars> out;
        for (const auto& col : real_.cols) {
            CellVars cv;
            cv.categorical = col.categorical;
            if (col.categorical) {
                cv.o = t.constant(gather(col.p, idx));
            } else {
                cv.w = t.constant(gather(col.w, idx));
                cv.p = t.constant(gather(col.p, idx));
            }
            out.push_back(cv);
        }
        return out;
    }

    // Optimizer update in canonical params() order; leaves bound during the
    // pass supply the gradients, unreached parameters get zeros.
    void apply(Optimizer& opt, std::vector<ParamRef> refs, Tape& t,
               const std::vector<std::pair<std::string, Var>>& leaves, const Tape::Grads& grads) {
        std::map<std::string, Var> by_name(leaves.begin(), leaves.end());
        std::vector<Tensor> gs;
        gs.reserve(refs.size());
        for (const auto& ref : refs) {
            auto it = by_name.find(ref.name);
            if (it == by_name.end())
                throw TensorError("no leaf bound for parameter " + ref.name);
            gs.push_back(t.grad_tensor(grads, it->second));
        }
        opt.step(refs, gs);
    }

    void train_step(const std::vector<std::size_t>& idx) {
        CriticVals cv;
        for (std::size_t k = 0; k < cfg.resolved_critic_steps(); ++k) cv = critic_update(idx);
        GenVals gv = generator_update(idx);
        ++step_count;
        HistoryRow row{step_count, epoch_done + 1, gv.g, cv.d, gv.kl, cv.gp};
        if (!std::isfinite(row.g_loss) || !std::isfinite(row.d_loss) || !std::isfinite(row.kl) ||
            !std::isfinite(row.gp))
            throw NumericError("training diverged at step " + std::to_string(step_count) +
                               ": g=" + std::to_string(row.g_loss) + " d=" + std::to_string(row.d_loss) +
                               " kl=" + std::to_string(row.kl) + " gp=" + std::to_string(row.gp));
        history_.push_back(row);
    }
};

}  // namespace dagsynth
