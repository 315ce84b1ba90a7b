#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "dagsynth/checkpoint.hpp"

using namespace dagsynth;

namespace {

Table toy_table(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Table t;
    t.names = {"x", "flag", "label"};
    t.columns.resize(3);
    char buf[32];
    for (std::size_t i = 0; i < n; ++i) {
        double x = rng.normal();
        std::snprintf(buf, sizeof buf, "%.6f", x);
        t.columns[0].push_back(buf);
        bool f = rng.uniform() < 1.0 / (1.0 + std::exp(-2.0 * x));
        t.columns[1].push_back(f ? "yes" : "no");
        std::vector<double> w = f ? std::vector<double>{0.1, 0.2, 0.7}
                                  : std::vector<double>{0.7, 0.2, 0.1};
        t.columns[2].push_back(std::vector<std::string>{"u", "v", "w"}[rng.categorical(w)]);
    }
    return t;
}

Dag toy_dag() {
    Dag d;
    d.add_node("x");
    d.add_node("flag");
    d.add_node("label");
    d.add_edge("x", "flag");
    d.add_edge("flag", "label");
    return d;
}

Trainer make_trainer(TrainConfig cfg, const Table& t) {
    auto metas = infer_meta(t);
    fit_metas(t, metas, 11);
    GeneratorSizes gs{6, 5, 6};
    DiscriminatorSpec ds;
    ds.n_layers = 2;
    ds.layer_width = 12;
    ds.mbd_kernels = 3;
    ds.mbd_dims = 2;
    return Trainer(t, toy_dag(), metas, cfg, gs, ds);
}

TrainConfig small_cfg(LossKind loss) {
    TrainConfig cfg;
    cfg.loss = loss;
    cfg.epochs = 1;
    cfg.batch = 20;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST_CASE("checkpoint bytes round-trip bit-exactly") {
    Table t = toy_table(60, 7);
    Trainer tr = make_trainer(small_cfg(LossKind::wgan), t);
    tr.train_epoch();
    Checkpoint ck = checkpoint_of(tr, toy_dag());

    std::string b1 = checkpoint_bytes(ck);
    Checkpoint back = parse_checkpoint(b1);
    std::string b2 = checkpoint_bytes(back);
    REQUIRE(b1 == b2);

    // and through a file
    std::string path = "ck_roundtrip.bin";
    save_checkpoint_file(back, path);
    Checkpoint from_file = load_checkpoint_file(path);
    REQUIRE(checkpoint_bytes(from_file) == b1);
    std::remove(path.c_str());
}

TEST_CASE("untrained trainer checkpoints cleanly (no optimizer slots yet)") {
    Table t = toy_table(60, 7);
    Trainer tr = make_trainer(small_cfg(LossKind::wgan), t);
    Checkpoint ck = checkpoint_of(tr, toy_dag());
    REQUIRE(ck.opt_g.empty());
    REQUIRE(ck.opt_d.empty());
    REQUIRE(ck.step == 0);
    std::string b = checkpoint_bytes(ck);
    REQUIRE(checkpoint_bytes(parse_checkpoint(b)) == b);
}

TEST_CASE("checkpoint restores every scalar field") {
    Table t = toy_table(60, 7);
    TrainConfig cfg = small_cfg(LossKind::wggp);
    cfg.lambda = 3.5;
    cfg.gamma = 0.15;
    cfg.kl_weight = 0.75;
    Trainer tr = make_trainer(cfg, t);
    tr.train_epoch();
    Checkpoint ck = parse_checkpoint(checkpoint_bytes(checkpoint_of(tr, toy_dag())));

    REQUIRE(ck.cfg.loss == LossKind::wggp);
    REQUIRE(ck.cfg.lambda == 3.5);
    REQUIRE(ck.cfg.gamma == 0.15);
    REQUIRE(ck.cfg.kl_weight == 0.75);
    REQUIRE(ck.cfg.seed == 5);
    REQUIRE(ck.epoch == 1);
    REQUIRE(ck.step == tr.step_count);
    REQUIRE(ck.rng_state == tr.rng.serialize());
    REQUIRE(ck.gen_sizes.n_hidden == 6);
    REQUIRE(ck.disc_spec.norm == Normalization::layer);
    REQUIRE(ck.metas.size() == 3);
    REQUIRE_FALSE(ck.metas[0].categorical);
    REQUIRE(ck.metas[0].mixture.n_components >= 1);
    REQUIRE(ck.metas[1].categories == std::vector<std::string>{"no", "yes"});
    REQUIRE(ck.dag.edges.size() == 2);
}

TEST_CASE("optimizer slots survive the trip for both optimizer families") {
    Table t = toy_table(60, 7);

    // wgan -> RmsProp: running square average only, no first moment
    Trainer w = make_trainer(small_cfg(LossKind::wgan), t);
    w.train_epoch();
    Checkpoint cw = parse_checkpoint(checkpoint_bytes(checkpoint_of(w, toy_dag())));
    REQUIRE_FALSE(cw.opt_d.empty());
    for (const auto& [name, slot] : cw.opt_d) {
        REQUIRE(slot.m.size() == 0);
        REQUIRE(slot.v.size() > 0);
        REQUIRE(slot.t > 0);
    }

    // sgan -> Adam: both moments present
    Trainer s = make_trainer(small_cfg(LossKind::sgan), t);
    s.train_epoch();
    Checkpoint cs = parse_checkpoint(checkpoint_bytes(checkpoint_of(s, toy_dag())));
    for (const auto& [name, slot] : cs.opt_g) {
        REQUIRE(slot.m.size() == slot.v.size());
        REQUIRE(slot.v.size() > 0);
    }

    // the originals must match what was stored, element for element
    for (const auto& [name, slot] : s.opt_g->slots()) {
        REQUIRE(cs.opt_g.at(name).t == slot.t);
        REQUIRE(cs.opt_g.at(name).m.data == slot.m.data);
        REQUIRE(cs.opt_g.at(name).v.data == slot.v.data);
    }
}

TEST_CASE("resumed training matches uninterrupted training step for step") {
    Table t = toy_table(60, 7);
    TrainConfig cfg = small_cfg(LossKind::wgan);
    cfg.epochs = 5;  // 3 steps per epoch at 60 rows / batch 20

    Trainer ref = make_trainer(cfg, t);
    ref.run();
    REQUIRE(ref.history().size() == 15);

    Trainer head = make_trainer(cfg, t);
    head.train_epoch();
    Checkpoint ck = parse_checkpoint(checkpoint_bytes(checkpoint_of(head, toy_dag())));

    Trainer resumed = restore_trainer(ck, t);
    REQUIRE(resumed.epoch_done == 1);
    REQUIRE(resumed.step_count == 3);
    resumed.run();

    REQUIRE(resumed.history().size() == 12);
    for (std::size_t i = 0; i < 10; ++i) {
        const HistoryRow& a = ref.history()[3 + i];
        const HistoryRow& b = resumed.history()[i];
        REQUIRE(a.step == b.step);
        REQUIRE(a.epoch == b.epoch);
        REQUIRE(a.g_loss == b.g_loss);
        REQUIRE(a.d_loss == b.d_loss);
        REQUIRE(a.kl == b.kl);
        REQUIRE(a.gp == b.gp);
    }

    // end-of-run parameters agree exactly too
    Checkpoint end_ref = checkpoint_of(ref, toy_dag());
    Checkpoint end_res = checkpoint_of(resumed, toy_dag());
    REQUIRE(checkpoint_bytes(end_ref) == checkpoint_bytes(end_res));
}

TEST_CASE("sampling from a restored generator matches the live one") {
    Table t = toy_table(60, 7);
    Trainer tr = make_trainer(small_cfg(LossKind::sgan), t);
    tr.train_epoch();
    Checkpoint ck = parse_checkpoint(checkpoint_bytes(checkpoint_of(tr, toy_dag())));

    GeneratorNet gen = generator_of(ck);
    EncodedTable a = gen.sample(16, 42);
    EncodedTable b = tr.gen.sample(16, 42);
    REQUIRE(a.cols.size() == b.cols.size());
    for (std::size_t c = 0; c < a.cols.size(); ++c) {
        REQUIRE(a.cols[c].p.data == b.cols[c].p.data);
        REQUIRE(a.cols[c].w.data == b.cols[c].w.data);
    }
}

TEST_CASE("malformed checkpoints are rejected with validation errors") {
    Table t = toy_table(60, 7);
    Trainer tr = make_trainer(small_cfg(LossKind::wgan), t);
    tr.train_epoch();
    std::string good = checkpoint_bytes(checkpoint_of(tr, toy_dag()));

    SECTION("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        REQUIRE_THROWS_AS(parse_checkpoint(bad), ValidationError);
    }
    SECTION("too short to hold a header") {
        REQUIRE_THROWS_AS(parse_checkpoint(good.substr(0, 6)), ValidationError);
    }
    SECTION("truncated payload") {
        REQUIRE_THROWS_AS(parse_checkpoint(good.substr(0, good.size() - 9)), ValidationError);
    }
    SECTION("trailing bytes") {
        REQUIRE_THROWS_AS(parse_checkpoint(good + "junk"), ValidationError);
    }
    SECTION("header is not JSON") {
        std::string bad = good;
        bad[12] = '?';
        REQUIRE_THROWS_AS(parse_checkpoint(bad), ValidationError);
    }
}

TEST_CASE("parameter overwrite is strict about names and shapes") {
    Table t = toy_table(60, 7);
    Trainer tr = make_trainer(small_cfg(LossKind::wgan), t);
    Checkpoint ck = checkpoint_of(tr, toy_dag());

    SECTION("missing parameter") {
        Checkpoint bad = ck;
        bad.gen_params.erase(bad.gen_params.begin());
        REQUIRE_THROWS_AS(generator_of(bad), ValidationError);
    }
    SECTION("renamed parameter") {
        Checkpoint bad = ck;
        auto node = bad.gen_params.extract(bad.gen_params.begin());
        node.key() = "nonsense";
        bad.gen_params.insert(std::move(node));
        REQUIRE_THROWS_AS(generator_of(bad), ValidationError);
    }
    SECTION("wrong shape") {
        Checkpoint bad = ck;
        bad.gen_params.begin()->second = Tensor(1, 1);
        REQUIRE_THROWS_AS(generator_of(bad), ValidationError);
    }
}
