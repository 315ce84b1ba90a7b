#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dagsynth/generator.hpp"

using namespace dagsynth;

namespace {

ColumnMeta cont_meta(const std::string& name, std::size_t k) {
    ColumnMeta m;
    m.name = name;
    for (std::size_t i = 0; i < k; ++i) {
        m.mixture.means.push_back(static_cast<double>(i) * 2.0);
        m.mixture.sigmas.push_back(1.0);
        m.mixture.weights.push_back(1.0 / static_cast<double>(k));
    }
    m.mixture.n_components = k;
    return m;
}

ColumnMeta cat_meta(const std::string& name, std::vector<std::string> cats) {
    ColumnMeta m;
    m.name = name;
    m.categorical = true;
    m.categories = std::move(cats);
    return m;
}

GeneratorSizes tiny() {
    GeneratorSizes s;
    s.n_hidden = 3;
    s.n_noise = 2;
    s.n_conv = 4;
    return s;
}

// straight-line re-implementation of the gate equations, scalar loops only
void lstm_oracle(const Tensor& i_t, const Tensor& C_prev, const Tensor& W, const Tensor& b,
                 std::size_t n_h, Tensor& h_out, Tensor& C_out) {
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    std::size_t n = i_t.rows;
    h_out = Tensor(n, n_h);
    C_out = Tensor(n, n_h);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < n_h; ++k) {
            double g[4];
            for (int q = 0; q < 4; ++q) {
                double acc = b.at(0, q * n_h + k);
                for (std::size_t m = 0; m < i_t.cols; ++m)
                    acc += i_t.at(r, m) * W.at(m, q * n_h + k);
                g[q] = acc;
            }
            double C = sig(g[0]) * C_prev.at(r, k) + sig(g[1]) * std::tanh(g[2]);
            C_out.at(r, k) = C;
            h_out.at(r, k) = sig(g[3]) * std::tanh(C);
        }
    }
}

Dag mobility_dag() {
    Dag d;
    for (const char* n : {"cars", "age", "license", "purpose", "mode"}) d.add_node(n);
    d.add_edge("cars", "license");
    d.add_edge("age", "license");
    d.add_edge("age", "purpose");
    d.add_edge("license", "mode");
    d.add_edge("purpose", "mode");
    return d;
}

std::vector<ColumnMeta> mobility_metas() {
    return {cont_meta("cars", 2), cont_meta("age", 3), cat_meta("license", {"no", "yes"}),
            cat_meta("purpose", {"leisure", "work"}), cat_meta("mode", {"bike", "car", "walk"})};
}

}  // namespace

TEST_CASE("lstm step matches a straight-line oracle") {
    Rng rng(17);
    std::size_t n = 6, n_h = 4, in_w = 11;
    Tensor i_t = Tensor::randn(n, in_w, rng);
    Tensor C_prev = Tensor::randn(n, n_h, rng);
    Tensor W = Tensor::glorot(in_w, 4 * n_h, rng);
    Tensor b = Tensor::randn(1, 4 * n_h, rng);

    Tape t;
    auto [h, C] = lstm_step(t, t.constant(i_t), t.constant(C_prev), t.constant(W), t.constant(b), n_h);
    Tensor h_ref, C_ref;
    lstm_oracle(i_t, C_prev, W, b, n_h, h_ref, C_ref);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < n_h; ++k) {
            CHECK(t.val(h).at(r, k) == Catch::Approx(h_ref.at(r, k)).margin(1e-12));
            CHECK(t.val(C).at(r, k) == Catch::Approx(C_ref.at(r, k)).margin(1e-12));
        }
}

TEST_CASE("lstm step edge behaviour") {
    std::size_t n_h = 3, in_w = 2 * n_h + 2;
    Tape t;
    SECTION("all-zero parameters and inputs give zero state") {
        auto [h, C] = lstm_step(t, t.constant(Tensor(2, in_w)), t.constant(Tensor(2, n_h)),
                                t.constant(Tensor(in_w, 4 * n_h)), t.constant(Tensor(1, 4 * n_h)), n_h);
        for (double v : t.val(h).data) CHECK(v == 0.0);
        for (double v : t.val(C).data) CHECK(v == 0.0);
    }
    SECTION("saturated forget gate carries the cell state through") {
        Rng rng(3);
        Tensor C_prev = Tensor::randn(2, n_h, rng);
        Tensor b(1, 4 * n_h);
        for (std::size_t k = 0; k < n_h; ++k) b.at(0, k) = 20.0;  // forget slice
        auto [h, C] = lstm_step(t, t.constant(Tensor(2, in_w)), t.constant(C_prev),
                                t.constant(Tensor(in_w, 4 * n_h)), t.constant(b), n_h);
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t k = 0; k < n_h; ++k)
                CHECK(t.val(C).at(r, k) == Catch::Approx(C_prev.at(r, k)).margin(1e-8));
    }
}

TEST_CASE("attention mixing") {
    Rng rng(5);
    Tape t;
    Var h1 = t.constant(Tensor::randn(4, 3, rng));
    Var h2 = t.constant(Tensor::randn(4, 3, rng));

    SECTION("single ancestor passes through") {
        Var a = attention_mix(t, {h1}, t.constant(Tensor(1, 1)));
        for (std::size_t i = 0; i < 12; ++i)
            CHECK(t.val(a).data[i] == Catch::Approx(t.val(h1).data[i]).margin(1e-15));
    }
    SECTION("zero logits average the ancestors") {
        Var a = attention_mix(t, {h1, h2}, t.constant(Tensor(1, 2)));
        for (std::size_t i = 0; i < 12; ++i)
            CHECK(t.val(a).data[i] ==
                  Catch::Approx(0.5 * (t.val(h1).data[i] + t.val(h2).data[i])).margin(1e-12));
    }
    SECTION("saturated logits select one ancestor") {
        Var a = attention_mix(t, {h1, h2}, t.constant(Tensor::from_rows(1, 2, {10.0, -10.0})));
        for (std::size_t i = 0; i < 12; ++i) {
            double ref = t.val(h1).data[i];
            CHECK(std::fabs(t.val(a).data[i] - ref) <= 1e-4 * std::max(1.0, std::fabs(ref)));
        }
    }
    SECTION("weight count must match ancestor count") {
        CHECK_THROWS_AS(attention_mix(t, {h1, h2}, t.constant(Tensor(1, 3))), ValidationError);
    }
}

TEST_CASE("cell structure follows the graph") {
    auto net = GeneratorNet::build(mobility_dag(), mobility_metas(), tiny(), 11);
    REQUIRE(net.cells.size() == 5);
    auto cell = [&](const std::string& n) -> const GeneratorCell& {
        for (const auto& c : net.cells)
            if (c.name == n) return c;
        FAIL("no cell " + n);
        return net.cells[0];
    };

    const auto& mode = cell("mode");
    CHECK(mode.ancestors.size() == 4);
    CHECK(mode.direct == std::vector<std::string>{"license", "purpose"});
    CHECK(mode.alpha.cols == 4);
    CHECK(mode.merge_C.W.rows == 2 * net.sizes.n_hidden);
    CHECK(mode.merge_f.W.rows == 2 * net.sizes.n_hidden);
    CHECK(mode.sources == std::vector<std::string>{"age", "cars"});

    // single direct ancestor: no merge layers at all
    const auto& purpose = cell("purpose");
    CHECK(purpose.ancestors == std::vector<std::string>{"age"});
    CHECK(purpose.alpha.cols == 1);
    CHECK(purpose.merge_C.W.rows == 0);

    // sources: learned initial f, no attention
    const auto& age = cell("age");
    CHECK(age.ancestors.empty());
    CHECK(age.f_init.cols == net.sizes.n_hidden);
    CHECK(age.alpha.cols == 0);

    // license and mode share the same source set, hence one noise route
    REQUIRE(net.noise_fc.size() == 2);  // {age} for purpose, {age,cars} for license+mode
    CHECK(net.noise_fc.at({"age", "cars"}).W.rows == 2 * net.sizes.n_noise);
    CHECK(net.noise_fc.at({"age", "cars"}).W.cols == net.sizes.n_noise);
    CHECK(net.noise_fc.at({"age"}).W.rows == net.sizes.n_noise);

    // zero-initialized attention logits
    for (double v : mode.alpha.data) CHECK(v == 0.0);
}

TEST_CASE("shared noise routes are bound once per pass") {
    auto net = GeneratorNet::build(mobility_dag(), mobility_metas(), tiny(), 11);
    Tape t;
    Rng rng(2);
    GenPass pass = net.forward(t, 5, rng, true);
    std::size_t shared_w = 0;
    for (const auto& [name, var] : pass.leaves) shared_w += name == "gen.noise(age,cars).W";
    CHECK(shared_w == 1);

    // bound leaves and the canonical parameter list agree exactly
    std::set<std::string> bound, canon;
    for (const auto& [name, var] : pass.leaves) CHECK(bound.insert(name).second);
    for (const auto& ref : net.params()) CHECK(canon.insert(ref.name).second);
    CHECK(bound == canon);
}

TEST_CASE("no_links cells are independent, chained cells are not") {
    Dag d;
    d.add_node("x");
    d.add_node("y");
    std::vector<ColumnMeta> metas = {cont_meta("x", 2), cat_meta("y", {"a", "b", "c"})};
    auto net = GeneratorNet::build(d, metas, tiny(), 7);
    CHECK(net.noise_fc.empty());

    // perturb a candidate-gate weight: forget-gate weights are inert on
    // sources because their previous cell state is zero
    EncodedTable before = net.sample(8, 99);
    net.cells[0].gates.W.at(0, 2 * net.sizes.n_hidden) += 0.25;  // cells[0] is x
    EncodedTable after = net.sample(8, 99);
    CHECK(before.cols[1].p.data == after.cols[1].p.data);
    CHECK(before.cols[0].w.data != after.cols[0].w.data);

    Dag chain;
    chain.add_node("x");
    chain.add_node("y");
    chain.add_edge("x", "y");
    auto net2 = GeneratorNet::build(chain, metas, tiny(), 7);
    EncodedTable b2 = net2.sample(8, 99);
    for (auto& c : net2.cells)
        if (c.name == "x") c.gates.W.at(0, 2 * net2.sizes.n_hidden) += 0.25;
    EncodedTable a2 = net2.sample(8, 99);
    CHECK(b2.cols[1].p.data != a2.cols[1].p.data);
}

TEST_CASE("sampling is a pure function of parameters and seed") {
    auto net = GeneratorNet::build(mobility_dag(), mobility_metas(), tiny(), 4);
    EncodedTable a = net.sample(16, 31);
    EncodedTable b = net.sample(16, 31);
    EncodedTable c = net.sample(16, 32);
    REQUIRE(a.cols.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(a.cols[i].p.data == b.cols[i].p.data);
        CHECK(a.cols[i].w.data == b.cols[i].w.data);
    }
    CHECK(a.cols[0].w.data != c.cols[0].w.data);

    // 2 + 3 mixture components and 2 + 2 + 3 categories
    CHECK(a.total_width() == 2 * (2 + 3) + 7);
    for (const auto& col : a.cols) {
        for (double v : col.w.data) {
            CHECK(v > -1.0);
            CHECK(v < 1.0);
        }
        for (std::size_t r = 0; r < col.p.rows; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < col.p.cols; ++j) s += col.p.at(r, j);
            CHECK(s == Catch::Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("every parameter gets gradient flow on a connected graph") {
    // every non-source node has >= 2 ancestors so even attention logits
    // receive nonzero gradient signal
    Dag d;
    for (const char* n : {"x", "y", "z", "w"}) d.add_node(n);
    d.add_edge("x", "z");
    d.add_edge("y", "z");
    d.add_edge("x", "w");
    d.add_edge("z", "w");
    std::vector<ColumnMeta> metas = {cont_meta("x", 2), cont_meta("y", 2),
                                     cat_meta("z", {"a", "b"}), cat_meta("w", {"p", "q", "r"})};
    auto net = GeneratorNet::build(d, metas, tiny(), 23);

    Tape t;
    Rng rng(41);
    GenPass pass = net.forward(t, 6, rng, true);
    std::vector<Var> blocks;
    for (const auto& cv : pass.by_col) blocks.push_back(cv.encoded(t));
    Var all = t.concat_cols(blocks);
    Var probe = t.constant(Tensor::randn(t.val(all).rows, t.val(all).cols, rng));
    Var loss = mean_all(t, t.mul(all, probe));
    auto grads = t.backward(loss);

    for (const auto& [name, var] : pass.leaves) {
        // w is the sink: its input transformer feeds descendants that do not
        // exist, so those parameters are structurally gradient-free
        if (name.rfind("gen.w.in_f", 0) == 0) continue;
        INFO(name);
        REQUIRE(grads.has(var));
        Tensor g = t.grad_tensor(grads, var);
        double mx = 0.0;
        for (double v : g.data) mx = std::max(mx, std::fabs(v));
        CHECK(mx > 1e-14);
    }
}

TEST_CASE("build rejects bad inputs") {
    std::vector<ColumnMeta> metas = {cont_meta("x", 2), cont_meta("y", 2)};
    Dag cyc;
    cyc.add_node("x");
    cyc.add_node("y");
    cyc.add_edge("x", "y");
    cyc.add_edge("y", "x");
    CHECK_THROWS_AS(GeneratorNet::build(cyc, metas, tiny(), 1), ValidationError);

    Dag ok;
    ok.add_node("x");
    ok.add_node("y");
    GeneratorSizes bad = tiny();
    bad.n_hidden = 0;
    CHECK_THROWS_AS(GeneratorNet::build(ok, metas, bad, 1), ValidationError);

    std::vector<ColumnMeta> unfitted = {cont_meta("x", 2), ColumnMeta{"y"}};
    CHECK_THROWS_AS(GeneratorNet::build(ok, unfitted, tiny(), 1), ValidationError);
}
