#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "dagsynth/encoding.hpp"

using namespace dagsynth;

namespace {

Table parse(const std::string& csv) {
    std::istringstream in(csv);
    return read_csv(in);
}

MixtureModel single(double mean, double sigma) {
    MixtureModel m;
    m.n_components = 1;
    m.means = {mean};
    m.sigmas = {sigma};
    m.weights = {1.0};
    return m;
}

}  // namespace

TEST_CASE("infer_meta splits continuous and categorical") {
    Table t = parse("age,mode,income\n23,car,1000\n45,walk,2000\n31,car,1500\n");
    auto metas = infer_meta(t);
    REQUIRE(metas.size() == 3);
    CHECK_FALSE(metas[0].categorical);
    CHECK(metas[1].categorical);
    CHECK_FALSE(metas[2].categorical);
    CHECK(metas[1].categories == std::vector<std::string>{"car", "walk"});
}

TEST_CASE("infer_meta override sorts numeric categories by value") {
    Table t = parse("n\n10\n2\n10\n1\n");
    auto metas = infer_meta(t, {"n"});
    REQUIRE(metas[0].categorical);
    CHECK(metas[0].categories == std::vector<std::string>{"1", "2", "10"});
}

TEST_CASE("infer_meta rejects empty tables") {
    Table header_only = parse("a,b\n");
    CHECK_THROWS_AS(infer_meta(header_only), ValidationError);
}

TEST_CASE("continuous encoding matches hand values") {
    MixtureModel m = single(10.0, 2.0);
    auto [w, p] = encode_continuous({10.0, 12.0, 10.0 + 2.0 * 2.0 * 2.0, -100.0}, m);
    // w = (c - mean) / (delta * sigma), clipped to [-0.99, 0.99]
    CHECK(w.at(0, 0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(w.at(1, 0) == Catch::Approx(0.5));
    CHECK(w.at(2, 0) == Catch::Approx(0.99));   // two sigma-widths out clips
    CHECK(w.at(3, 0) == Catch::Approx(-0.99));  // far left clips
    for (std::size_t r = 0; r < 4; ++r) CHECK(p.at(r, 0) == Catch::Approx(1.0));
}

TEST_CASE("continuous encoding rejects non-finite values") {
    MixtureModel m = single(0.0, 1.0);
    try {
        encode_continuous({1.0, std::nan("")}, m);
        FAIL("expected throw");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }
    CHECK_THROWS_AS(encode_continuous({1.0}, MixtureModel{}), ValidationError);
}

TEST_CASE("categorical encoding is one hot and rejects unseen levels") {
    ColumnMeta meta;
    meta.name = "mode";
    meta.categorical = true;
    meta.categories = {"bike", "car", "walk"};
    Tensor o = encode_categorical({"car", "bike", "walk", "car"}, meta);
    REQUIRE(o.rows == 4);
    REQUIRE(o.cols == 3);
    CHECK(o.at(0, 1) == 1.0);
    CHECK(o.at(1, 0) == 1.0);
    CHECK(o.at(2, 2) == 1.0);
    CHECK(o.at(0, 0) + o.at(0, 2) == 0.0);
    CHECK_THROWS_AS(encode_categorical({"plane"}, meta), ValidationError);
}

TEST_CASE("decode hand value") {
    // w = 0.5 with sigma 2, mean 10 decodes to 2 * 0.5 * 2 + 10 = 12
    std::vector<ColumnMeta> metas(1);
    metas[0].name = "x";
    metas[0].mixture = single(10.0, 2.0);
    EncodedTable enc;
    enc.n_rows = 1;
    EncodedColumn col;
    col.w = Tensor(1, 1);
    col.w.at(0, 0) = 0.5;
    col.p = Tensor(1, 1);
    col.p.at(0, 0) = 1.0;
    enc.cols.push_back(col);
    Table out = decode_table(enc, metas, SampleStrategy::AA, 0);
    double v;
    REQUIRE(parse_double(out.columns[0][0], v));
    CHECK(v == Catch::Approx(12.0).margin(1e-12));
}

TEST_CASE("synthetic w outside the clip range decodes without re-clipping") {
    std::vector<ColumnMeta> metas(1);
    metas[0].name = "x";
    metas[0].mixture = single(0.0, 1.0);
    EncodedTable enc;
    enc.n_rows = 1;
    EncodedColumn col;
    col.w = Tensor(1, 1);
    col.w.at(0, 0) = 1.5;  // generator output is tanh-bounded but not clip-bounded
    col.p = Tensor(1, 1);
    col.p.at(0, 0) = 1.0;
    enc.cols.push_back(col);
    Table out = decode_table(enc, metas, SampleStrategy::AA, 0);
    double v;
    REQUIRE(parse_double(out.columns[0][0], v));
    CHECK(v == Catch::Approx(3.0));
}

TEST_CASE("encode decode round trip recovers unclipped values") {
    Rng rng(11);
    Table t;
    t.names = {"x", "grp"};
    t.columns.resize(2);
    for (int i = 0; i < 400; ++i) {
        double v = (i % 2 ? 6.0 : -6.0) + rng.normal();
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        t.columns[0].push_back(buf);
        t.columns[1].push_back(i % 3 == 0 ? "a" : (i % 3 == 1 ? "b" : "c"));
    }
    auto metas = infer_meta(t);
    fit_metas(t, metas, 99);
    EncodedTable enc = encode_table(t, metas);
    CHECK(enc.n_rows == 400);
    CHECK(enc.total_width() == 2 * metas[0].mixture.n_components + 3);

    Table back = decode_table(enc, metas, SampleStrategy::AA, 1);
    REQUIRE(back.n_rows() == 400);
    CHECK(back.columns[1] == t.columns[1]);  // one-hot argmax is exact

    auto orig = numeric_column(t, 0);
    auto rec = numeric_column(back, 0);
    std::size_t checked = 0;
    for (std::size_t r = 0; r < orig.size(); ++r) {
        // rows whose argmax-component w is clipped cannot round trip; skip them
        std::size_t k = 0;
        for (std::size_t j = 1; j < enc.cols[0].p.cols; ++j)
            if (enc.cols[0].p.at(r, j) > enc.cols[0].p.at(r, k)) k = j;
        if (std::fabs(enc.cols[0].w.at(r, k)) >= 0.989) continue;
        CHECK(rec[r] == Catch::Approx(orig[r]).margin(1e-9));
        ++checked;
    }
    CHECK(checked > 300);
}

TEST_CASE("sampled categorical decoding tracks the probabilities") {
    std::vector<ColumnMeta> metas(1);
    metas[0].name = "d";
    metas[0].categorical = true;
    metas[0].categories = {"no", "yes"};
    const std::size_t n = 100000;
    EncodedTable enc;
    enc.n_rows = n;
    EncodedColumn col;
    col.categorical = true;
    col.p = Tensor(n, 2);
    for (std::size_t r = 0; r < n; ++r) {
        col.p.at(r, 0) = 0.7;
        col.p.at(r, 1) = 0.3;
    }
    enc.cols.push_back(col);

    Table out = decode_table(enc, metas, SampleStrategy::AS, 12345);
    std::size_t yes = 0;
    for (const auto& v : out.columns[0]) yes += v == "yes";
    CHECK(std::fabs(static_cast<double>(yes) / n - 0.3) < 0.01);

    // argmax strategy always picks the 0.7 level
    Table all_no = decode_table(enc, metas, SampleStrategy::AA, 12345);
    for (const auto& v : all_no.columns[0]) REQUIRE(v == "no");

    // same seed, same strategy: identical output
    Table again = decode_table(enc, metas, SampleStrategy::AS, 12345);
    CHECK(again.columns[0] == out.columns[0]);
}

TEST_CASE("decoding validates probability rows") {
    std::vector<ColumnMeta> metas(1);
    metas[0].name = "d";
    metas[0].categorical = true;
    metas[0].categories = {"a", "b"};
    EncodedTable enc;
    enc.n_rows = 1;
    EncodedColumn col;
    col.categorical = true;
    col.p = Tensor(1, 2);

    col.p.at(0, 0) = 0.4;
    col.p.at(0, 1) = 0.4;  // sums to 0.8
    enc.cols = {col};
    CHECK_THROWS_AS(decode_table(enc, metas, SampleStrategy::AA, 0), NumericError);

    col.p.at(0, 0) = 1.1;
    col.p.at(0, 1) = -0.1;  // negative entry
    enc.cols = {col};
    CHECK_THROWS_AS(decode_table(enc, metas, SampleStrategy::AA, 0), NumericError);

    // tiny float noise is tolerated
    col.p.at(0, 0) = 1.0 + 5e-7;
    col.p.at(0, 1) = -5e-7;
    enc.cols = {col};
    CHECK_NOTHROW(decode_table(enc, metas, SampleStrategy::AA, 0));
}

TEST_CASE("strategy parsing") {
    CHECK(parse_strategy("AA") == SampleStrategy::AA);
    CHECK(parse_strategy("SA") == SampleStrategy::SA);
    CHECK(parse_strategy("AS") == SampleStrategy::AS);
    CHECK(parse_strategy("SS") == SampleStrategy::SS);
    CHECK_THROWS_AS(parse_strategy("XX"), ValidationError);
}

TEST_CASE("binning clamps to original range") {
    auto bins = bin_continuous({0.0, 0.05, 0.95, 1.0, -3.0, 7.0, 0.5}, 0.0, 1.0, 10);
    CHECK(bins == std::vector<int>{0, 0, 9, 9, 0, 9, 5});
    // each integer lands in its own bin over [0, 9]
    std::vector<double> ints;
    for (int i = 0; i < 10; ++i) ints.push_back(i);
    auto ib = bin_continuous(ints, 0.0, 9.0, 10);
    for (int i = 0; i < 10; ++i) CHECK(ib[i] == i);
    // degenerate range: everything in bin 0
    auto deg = bin_continuous({2.0, 2.0, 5.0}, 2.0, 2.0, 10);
    CHECK(deg == std::vector<int>{0, 0, 0});
}
