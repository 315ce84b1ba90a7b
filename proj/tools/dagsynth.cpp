// Command-line front end: fit / sample / evaluate / dag. Exit codes: 0 on
// success, 2 for validation problems (bad flags, bad inputs), 3 for runtime
// or numeric failures.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dagsynth/checkpoint.hpp"
#include "dagsynth/efficacy.hpp"
#include "dagsynth/hash.hpp"
#include "dagsynth/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dagsynth;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Manifest record for one input file: path plus a content hash, so a run can
// be traced back to the exact bytes it consumed.
json input_record(const std::string& path) {
    return {{"path", path}, {"sha256", sha256_hex(slurp(path))}};
}

fs::path ensure_out_dir(const std::string& dir) {
    fs::path p = dir.empty() ? fs::path(".") : fs::path(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw ValidationError("cannot create output directory " + p.string() + ": " + ec.message());
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
}

// Every command that consumes randomness records the seed it actually used;
// an omitted --seed draws one so reruns stay explainable.
std::uint64_t resolve_seed(bool given, std::uint64_t seed) {
    if (given) return seed;
    std::random_device rd;
    return (std::uint64_t(rd()) << 32) ^ rd();
}

std::set<std::string> load_overrides(const std::string& path, const Table& t) {
    std::set<std::string> out;
    if (path.empty()) return out;
    json j;
    try {
        j = json::parse(slurp(path));
    } catch (const json::exception& e) {
        throw ValidationError("metadata overrides " + path + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("categorical") || !j["categorical"].is_array())
        throw ValidationError("metadata overrides " + path +
                              ": expected {\"categorical\": [column, ...]}");
    for (const auto& c : j["categorical"]) {
        std::string name = c.get<std::string>();
        if (std::find(t.names.begin(), t.names.end(), name) == t.names.end())
            throw ValidationError("metadata overrides: no column named " + name);
        out.insert(name);
    }
    return out;
}

// Name the differing columns instead of a bare mismatch verdict.
void check_schema(const Table& original, const Table& synthetic, const std::string& label) {
    if (original.names == synthetic.names) return;
    std::set<std::string> o(original.names.begin(), original.names.end());
    std::set<std::string> s(synthetic.names.begin(), synthetic.names.end());
    std::string msg = "schema mismatch for " + label + ":";
    for (const auto& n : original.names)
        if (!s.count(n)) msg += " missing " + n + ";";
    for (const auto& n : synthetic.names)
        if (!o.count(n)) msg += " unexpected " + n + ";";
    if (o == s) msg += " same columns in a different order";
    throw ValidationError(msg);
}

json sizes_json(const GeneratorSizes& g) {
    return {{"n_hidden", g.n_hidden}, {"n_noise", g.n_noise}, {"n_conv", g.n_conv}};
}

json disc_json(const DiscriminatorSpec& d) {
    return {{"n_layers", d.n_layers},
            {"layer_width", d.layer_width},
            {"mbd_kernels", d.mbd_kernels},
            {"mbd_dims", d.mbd_dims}};
}

json stats_json(const StatReport& rep) {
    json orders = json::array();
    for (const auto& o : rep.orders)
        orders.push_back({{"order", o.order},
                          {"n_combos", o.n_combos},
                          {"mae", o.mae},
                          {"rmse", o.rmse},
                          {"srmse", o.srmse},
                          {"r2", o.r2},
                          {"pearson", o.pearson},
                          {"r2_excluded", o.r2_excluded},
                          {"pearson_excluded", o.pearson_excluded}});
    return {{"orders", orders}};
}

json efficacy_json(const std::vector<EfficacyScore>& scores) {
    json arr = json::array();
    for (const auto& s : scores)
        arr.push_back({{"column", s.column}, {"categorical", s.categorical}, {"score", s.score}});
    return arr;
}

struct FitArgs {
    std::string data, meta, dag, variant = "full", sink, resume, out;
    std::string loss = "wgan", smoothing = "TS", strategy = "SS";
    TrainConfig cfg;
    GeneratorSizes gen_sizes;
    DiscriminatorSpec disc_spec;
    bool seed_given = false, epochs_given = false;
};

int cmd_fit(FitArgs& a) {
    Table table = read_csv_file(a.data);
    a.cfg.loss = parse_loss_kind(a.loss);
    a.cfg.smoothing = parse_smoothing(a.smoothing);
    parse_strategy(a.strategy);  // recorded in the manifest; sampling happens later
    a.cfg.seed = resolve_seed(a.seed_given, a.cfg.seed);
    fs::path dir = ensure_out_dir(a.out);

    json manifest;
    manifest["command"] = "fit";
    manifest["inputs"] = {{"data", input_record(a.data)}};
    if (!a.meta.empty()) manifest["inputs"]["meta"] = input_record(a.meta);

    Dag dag;
    Checkpoint ck;
    std::vector<HistoryRow> history;
    if (!a.resume.empty()) {
        Checkpoint prev = load_checkpoint_file(a.resume);
        manifest["inputs"]["resume"] = input_record(a.resume);
        manifest["resumed_at_epoch"] = prev.epoch;
        if (a.epochs_given) prev.cfg.epochs = a.cfg.epochs;
        if (prev.cfg.epochs <= prev.epoch)
            throw ValidationError("checkpoint has already finished epoch " +
                                  std::to_string(prev.epoch) + "; raise --epochs to continue");
        dag = prev.dag;
        Trainer tr = restore_trainer(prev, table);
        tr.run();
        ck = checkpoint_of(tr, dag);
        history = tr.history();
        manifest["config"] = ck_detail::config_json(tr.cfg);
        manifest["gen_sizes"] = sizes_json(tr.gen.sizes);
        manifest["disc_spec"] = disc_json(tr.disc.spec);
        manifest["seed"] = tr.cfg.seed;
    } else {
        std::vector<ColumnMeta> metas = infer_meta(table, load_overrides(a.meta, table));
        fit_metas(table, metas, a.cfg.seed);
        DagVariant kind = parse_variant(a.variant);
        if (!a.dag.empty()) {
            dag = load_dag_file(a.dag);
            manifest["inputs"]["dag"] = input_record(a.dag);
        } else if (kind == DagVariant::full || kind == DagVariant::trans_red) {
            throw ValidationError("no DAG given: pass --dag, or a --variant that builds one "
                                  "(linear, prediction, no_links)");
        }
        if (kind != DagVariant::full) dag = make_variant(dag, kind, table.names, a.sink);
        manifest["variant"] = a.variant;
        validate_or_throw(dag, table.names);
        Trainer tr(table, dag, metas, a.cfg, a.gen_sizes, a.disc_spec);
        tr.run();
        ck = checkpoint_of(tr, dag);
        history = tr.history();
        manifest["config"] = ck_detail::config_json(tr.cfg);
        manifest["gen_sizes"] = sizes_json(tr.gen.sizes);
        manifest["disc_spec"] = disc_json(tr.disc.spec);
        manifest["seed"] = tr.cfg.seed;
    }
    manifest["strategy"] = a.strategy;

    save_checkpoint_file(ck, (dir / "checkpoint.bin").string());
    std::ofstream csv(dir / "loss_history.csv");
    if (!csv) throw ValidationError("cannot write " + (dir / "loss_history.csv").string());
    write_history(history, csv);
    manifest["outputs"] = {{"checkpoint", "checkpoint.bin"}, {"loss_history", "loss_history.csv"}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "trained " << ck.epoch << " epoch(s), " << ck.step << " steps -> "
              << (dir / "checkpoint.bin").string() << "\n";
    return 0;
}

struct SampleArgs {
    std::string checkpoint, strategy = "SS", out;
    std::size_t rows = 0;
    std::uint64_t seed = 1;
    bool seed_given = false;
};

int cmd_sample(SampleArgs& a) {
    Checkpoint ck = load_checkpoint_file(a.checkpoint);
    SampleStrategy strat = parse_strategy(a.strategy);
    std::uint64_t seed = resolve_seed(a.seed_given, a.seed);
    fs::path dir = ensure_out_dir(a.out);

    // One seed, two forked streams: the generator pass and the decode draws.
    // Strategies share the generator stream, so AA/SS on the same seed see
    // identical probabilities and differ only in how values are realized.
    Rng master(seed);
    std::uint64_t gen_seed = master.fork_seed();
    std::uint64_t decode_seed = master.fork_seed();

    Table out;
    if (a.rows == 0) {
        for (const auto& m : ck.metas) out.names.push_back(m.name);
        out.columns.resize(out.names.size());
    } else {
        GeneratorNet gen = generator_of(ck);
        EncodedTable enc = gen.sample(a.rows, gen_seed);
        out = decode_table(enc, ck.metas, strat, decode_seed);
    }
    write_csv_file(out, (dir / "synthetic.csv").string());

    json manifest = {{"command", "sample"},
                     {"inputs", {{"checkpoint", input_record(a.checkpoint)}}},
                     {"rows", a.rows},
                     {"strategy", a.strategy},
                     {"seed", seed},
                     {"outputs", {{"synthetic", "synthetic.csv"}}}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "sampled " << a.rows << " row(s) -> " << (dir / "synthetic.csv").string() << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string original, meta, out;
    std::vector<std::string> synthetic;
    std::uint64_t seed = 1;
    bool seed_given = false, crossed = false, stats_only = false;
};

int cmd_evaluate(EvaluateArgs& a) {
    Table orig = read_csv_file(a.original);
    std::vector<ColumnMeta> metas = infer_meta(orig, load_overrides(a.meta, orig));
    std::uint64_t seed = resolve_seed(a.seed_given, a.seed);
    fs::path dir = ensure_out_dir(a.out);
    Rng master(seed);

    json tables = json::array();
    std::vector<StatReport> reports;
    std::vector<std::vector<EfficacyScore>> effs;
    for (const auto& path : a.synthetic) {
        Table synth = read_csv_file(path);
        check_schema(orig, synth, path);
        StatReport rep = statistical_report(orig, synth, metas);
        json entry = {{"path", path}, {"stats", stats_json(rep)}};
        reports.push_back(rep);
        if (!a.stats_only) {
            auto eff = ml_efficacy(orig, synth, metas, master.fork_seed(),
                                   a.crossed ? EfficacyMode::crossed : EfficacyMode::prose);
            entry["efficacy"] = efficacy_json(eff);
            effs.push_back(eff);
        }
        tables.push_back(entry);
    }

    // Averages across synthetic tables, mirroring the per-table blocks.
    json average;
    StatReport mean_rep = reports.front();
    for (std::size_t o = 0; o < mean_rep.orders.size(); ++o) {
        for (std::size_t i = 1; i < reports.size(); ++i) {
            mean_rep.orders[o].mae += reports[i].orders[o].mae;
            mean_rep.orders[o].rmse += reports[i].orders[o].rmse;
            mean_rep.orders[o].srmse += reports[i].orders[o].srmse;
            mean_rep.orders[o].r2 += reports[i].orders[o].r2;
            mean_rep.orders[o].pearson += reports[i].orders[o].pearson;
            mean_rep.orders[o].r2_excluded += reports[i].orders[o].r2_excluded;
            mean_rep.orders[o].pearson_excluded += reports[i].orders[o].pearson_excluded;
        }
        double n = static_cast<double>(reports.size());
        mean_rep.orders[o].mae /= n;
        mean_rep.orders[o].rmse /= n;
        mean_rep.orders[o].srmse /= n;
        mean_rep.orders[o].r2 /= n;
        mean_rep.orders[o].pearson /= n;
    }
    average["stats"] = stats_json(mean_rep);
    if (!a.stats_only) {
        std::vector<EfficacyScore> mean_eff = effs.front();
        for (std::size_t i = 1; i < effs.size(); ++i)
            for (std::size_t c = 0; c < mean_eff.size(); ++c) mean_eff[c].score += effs[i][c].score;
        for (auto& s : mean_eff) s.score /= static_cast<double>(effs.size());
        average["efficacy"] = efficacy_json(mean_eff);
    }

    json report = {{"original", a.original}, {"tables", tables}, {"average", average}};
    write_text(dir / "evaluation.json", report.dump(2) + "\n");

    json inputs = {{"original", input_record(a.original)}};
    json synth_records = json::array();
    for (const auto& p : a.synthetic) synth_records.push_back(input_record(p));
    inputs["synthetic"] = synth_records;
    if (!a.meta.empty()) inputs["meta"] = input_record(a.meta);
    json manifest = {{"command", "evaluate"}, {"inputs", inputs},         {"seed", seed},
                     {"crossed", a.crossed},  {"stats_only", a.stats_only},
                     {"outputs", {{"evaluation", "evaluation.json"}}}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "evaluated " << a.synthetic.size() << " table(s) -> "
              << (dir / "evaluation.json").string() << "\n";
    return 0;
}

std::string joined(const std::set<std::string>& s) {
    std::string out;
    for (const auto& x : s) out += (out.empty() ? "" : ", ") + x;
    return out.empty() ? "(none)" : out;
}

int cmd_dag_check(const std::string& dag_path, const std::string& data_path) {
    Dag d = load_dag_file(dag_path);
    std::vector<std::string> cols = data_path.empty() ? d.nodes : read_csv_file(data_path).names;
    std::vector<DagViolation> problems = validate(d, cols);
    if (!problems.empty()) {
        for (const auto& p : problems) std::cerr << p.kind << ": " << p.detail << "\n";
        throw ValidationError("DAG failed validation with " + std::to_string(problems.size()) +
                              " problem(s)");
    }
    DerivedSets sets = derive_sets(d);
    std::vector<std::string> order = topo_order(d, cols);
    std::cout << "construction order:";
    for (const auto& n : order) std::cout << " " << n;
    std::cout << "\n";
    for (const auto& n : order) {
        std::cout << n << "\n";
        std::cout << "  ancestors: " << joined(sets.ancestors[n]) << "\n";
        std::cout << "  direct ancestors: " << joined(sets.direct_ancestors[n]) << "\n";
        std::cout << "  sources: " << joined(sets.sources[n]) << "\n";
        std::cout << "  in edges:";
        if (sets.in_edges[n].empty()) std::cout << " (none)";
        for (const auto& [u, v] : sets.in_edges[n]) std::cout << " " << u << " -> " << v << ";";
        std::cout << "\n";
    }
    return 0;
}

void emit_dag(const Dag& d, const std::string& out) {
    if (out.empty()) std::cout << dag_to_json(d).dump(2) << "\n";
    else save_dag_file(d, out);
}

int cmd_dag_reduce(const std::string& dag_path, const std::string& out) {
    Dag d = load_dag_file(dag_path);
    validate_or_throw(d, d.nodes);
    Dag r = transitive_reduction(d);
    emit_dag(r, out);
    std::cerr << "reduced " << d.edges.size() << " edge(s) to " << r.edges.size() << "\n";
    return 0;
}

int cmd_dag_variant(const std::string& dag_path, const std::string& data_path,
                    const std::string& kind_name, const std::string& sink, const std::string& out) {
    DagVariant kind = parse_variant(kind_name);
    if (dag_path.empty() && data_path.empty())
        throw ValidationError("dag variant needs --dag or --data to establish the column order");
    Dag base;
    if (!dag_path.empty()) base = load_dag_file(dag_path);
    std::vector<std::string> cols = data_path.empty() ? base.nodes : read_csv_file(data_path).names;
    if (base.nodes.empty()) base.nodes = cols;
    if (kind == DagVariant::full || kind == DagVariant::trans_red) validate_or_throw(base, base.nodes);
    emit_dag(make_variant(base, kind, cols, sink), out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DAG-structured tabular data synthesizer"};
    app.require_subcommand(1);

    FitArgs fa;
    CLI::App* fit = app.add_subcommand("fit", "train a generator on a CSV dataset");
    fit->add_option("--data", fa.data, "training table (CSV with header)")->required();
    fit->add_option("--meta", fa.meta, "metadata overrides JSON ({\"categorical\": [...]})");
    fit->add_option("--dag", fa.dag, "variable graph (JSON or DOT)");
    fit->add_option("--variant", fa.variant,
                    "graph variant: full, trans_red, linear, prediction, no_links");
    fit->add_option("--sink", fa.sink, "sink column for --variant prediction");
    fit->add_option("--loss", fa.loss, "loss regime: sgan, wgan, wggp");
    fit->add_option("--epochs", fa.cfg.epochs, "training epochs");
    fit->add_option("--batch", fa.cfg.batch, "batch size");
    fit->add_option("--lr", fa.cfg.lr, "learning rate (0 = regime default)");
    fit->add_option("--lambda", fa.cfg.lambda, "gradient penalty weight (wggp)");
    fit->add_option("--clip", fa.cfg.clip, "weight clip bound (wgan)");
    fit->add_option("--critic-steps", fa.cfg.critic_steps,
                    "critic updates per generator update (0 = regime default)");
    fit->add_option("--smoothing", fa.smoothing, "label smoothing: NO, OS, TS");
    fit->add_option("--gamma", fa.cfg.gamma, "label smoothing magnitude");
    fit->add_option("--kl-weight", fa.cfg.kl_weight, "KL regularization weight");
    fit->add_option("--seed", fa.cfg.seed, "run seed (omitted: drawn and recorded)");
    fit->add_option("--strategy", fa.strategy, "sampling strategy recorded for the run");
    fit->add_option("--n-hidden", fa.gen_sizes.n_hidden, "LSTM state width");
    fit->add_option("--n-noise", fa.gen_sizes.n_noise, "per-node noise width");
    fit->add_option("--n-conv", fa.gen_sizes.n_conv, "output transformer width");
    fit->add_option("--d-layers", fa.disc_spec.n_layers, "discriminator layers");
    fit->add_option("--d-width", fa.disc_spec.layer_width, "discriminator layer width");
    fit->add_option("--mbd-kernels", fa.disc_spec.mbd_kernels, "diversity kernels per layer");
    fit->add_option("--mbd-dims", fa.disc_spec.mbd_dims, "channels per diversity kernel");
    fit->add_option("--resume", fa.resume, "checkpoint to continue training from");
    fit->add_option("--out", fa.out, "output directory")->envname("DAGSYNTH_OUT");

    SampleArgs sa;
    CLI::App* sample = app.add_subcommand("sample", "draw synthetic rows from a checkpoint");
    sample->add_option("--checkpoint", sa.checkpoint, "trained checkpoint")->required();
    sample->add_option("--rows", sa.rows, "rows to draw")->required();
    sample->add_option("--strategy", sa.strategy, "sampling strategy: AA, SA, AS, SS");
    sample->add_option("--seed", sa.seed, "sampling seed (omitted: drawn and recorded)");
    sample->add_option("--out", sa.out, "output directory")->envname("DAGSYNTH_OUT");

    EvaluateArgs ea;
    CLI::App* eval = app.add_subcommand("evaluate", "score synthetic tables against the original");
    eval->add_option("--original", ea.original, "original table (CSV)")->required();
    eval->add_option("--synthetic", ea.synthetic, "synthetic tables (CSV, repeatable)")
        ->required()
        ->expected(-1);
    eval->add_option("--meta", ea.meta, "metadata overrides JSON");
    eval->add_option("--seed", ea.seed, "evaluation seed (omitted: drawn and recorded)");
    eval->add_flag("--crossed", ea.crossed, "score each model on the other table's holdout");
    eval->add_flag("--stats-only", ea.stats_only, "skip the ML efficacy pass");
    eval->add_option("--out", ea.out, "output directory")->envname("DAGSYNTH_OUT");

    CLI::App* dag = app.add_subcommand("dag", "inspect and derive variable graphs");
    dag->require_subcommand(1);
    std::string dg_dag, dg_data, dg_out, dg_kind = "no_links", dg_sink;
    CLI::App* check = dag->add_subcommand("check", "validate and print derived sets");
    check->add_option("--dag", dg_dag, "graph file (JSON or DOT)")->required();
    check->add_option("--data", dg_data, "CSV whose columns the graph must cover");
    CLI::App* reduce = dag->add_subcommand("reduce", "write the transitive reduction");
    reduce->add_option("--dag", dg_dag, "graph file (JSON or DOT)")->required();
    reduce->add_option("--out", dg_out, "output file (stdout when omitted)");
    CLI::App* variant = dag->add_subcommand("variant", "derive a standard graph variant");
    variant->add_option("--kind", dg_kind, "full, trans_red, linear, prediction, no_links")
        ->required();
    variant->add_option("--dag", dg_dag, "base graph (JSON or DOT)");
    variant->add_option("--data", dg_data, "CSV giving the column order");
    variant->add_option("--sink", dg_sink, "sink column for kind=prediction");
    variant->add_option("--out", dg_out, "output file (stdout when omitted)");

    try {
        app.parse(argc, argv);
        fa.seed_given = fit->count("--seed") > 0;
        fa.epochs_given = fit->count("--epochs") > 0;
        sa.seed_given = sample->count("--seed") > 0;
        ea.seed_given = eval->count("--seed") > 0;
        if (*fit) return cmd_fit(fa);
        if (*sample) return cmd_sample(sa);
        if (*eval) return cmd_evaluate(ea);
        if (*check) return cmd_dag_check(dg_dag, dg_data);
        if (*reduce) return cmd_dag_reduce(dg_dag, dg_out);
        if (*variant) return cmd_dag_variant(dg_dag, dg_data, dg_kind, dg_sink, dg_out);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
