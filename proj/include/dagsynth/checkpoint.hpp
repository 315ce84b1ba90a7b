#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dagsynth/dag_io.hpp"
#include "dagsynth/trainer.hpp"

namespace dagsynth {

// Self-describing training snapshot. On disk: an 8-byte magic, a u32
// little-endian header length, a compact JSON header (every scalar plus a
// tensor directory with shapes), then the tensors as raw little-endian
// float64 in directory order. Round trips are bit-exact: the header maps are
// sorted, doubles print in shortest round-trip form, and payload bytes are
// copied verbatim.
struct Checkpoint {
    TrainConfig cfg;
    std::vector<ColumnMeta> metas;
    Dag dag;
    GeneratorSizes gen_sizes;
    DiscriminatorSpec disc_spec;
    std::map<std::string, Tensor> gen_params, disc_params;
    std::map<std::string, Optimizer::Slot> opt_g, opt_d;
    std::string rng_state;
    std::size_t epoch = 0;
    std::size_t step = 0;
};

namespace ck_detail {

inline constexpr char kMagic[9] = "DAGSYNTH";
inline constexpr int kVersion = 1;

inline void append_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline std::uint32_t read_u32(const std::string& in, std::size_t off) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b)
        v |= std::uint32_t(static_cast<unsigned char>(in[off + b])) << (8 * b);
    return v;
}

inline void append_tensor(std::string& out, const Tensor& t) {
    if constexpr (std::endian::native == std::endian::little) {
        out.append(reinterpret_cast<const char*>(t.data.data()), t.size() * sizeof(double));
    } else {
        for (std::size_t i = 0; i < t.size(); ++i) {
            std::uint64_t u = std::bit_cast<std::uint64_t>(t.data[i]);
            for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
        }
    }
}

inline void read_tensor(const std::string& in, std::size_t off, Tensor& t) {
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(t.data.data(), in.data() + off, t.size() * sizeof(double));
    } else {
        for (std::size_t i = 0; i < t.size(); ++i) {
            std::uint64_t u = 0;
            for (int b = 0; b < 8; ++b)
                u |= std::uint64_t(static_cast<unsigned char>(in[off + 8 * i + b])) << (8 * b);
            t.data[i] = std::bit_cast<double>(u);
        }
    }
}

inline nlohmann::json config_json(const TrainConfig& c) {
    return {{"loss", loss_kind_name(c.loss)}, {"epochs", c.epochs},
            {"batch", c.batch},               {"lr", c.lr},
            {"lambda", c.lambda},             {"clip", c.clip},
            {"critic_steps", c.critic_steps}, {"smoothing", smoothing_name(c.smoothing)},
            {"gamma", c.gamma},               {"kl_weight", c.kl_weight},
            {"seed", c.seed}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.loss = parse_loss_kind(j.at("loss").get<std::string>());
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch = j.at("batch").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.lambda = j.at("lambda").get<double>();
    c.clip = j.at("clip").get<double>();
    c.critic_steps = j.at("critic_steps").get<std::size_t>();
    c.smoothing = parse_smoothing(j.at("smoothing").get<std::string>());
    c.gamma = j.at("gamma").get<double>();
    c.kl_weight = j.at("kl_weight").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline nlohmann::json meta_json(const ColumnMeta& m) {
    nlohmann::json j{{"name", m.name}, {"categorical", m.categorical}};
    if (m.categorical) {
        j["categories"] = m.categories;
    } else {
        j["mixture"] = {{"n_components", m.mixture.n_components},
                        {"means", m.mixture.means},
                        {"sigmas", m.mixture.sigmas},
                        {"weights", m.mixture.weights},
                        {"delta", m.mixture.delta}};
    }
    return j;
}

inline ColumnMeta meta_from_json(const nlohmann::json& j) {
    ColumnMeta m;
    m.name = j.at("name").get<std::string>();
    m.categorical = j.at("categorical").get<bool>();
    if (m.categorical) {
        m.categories = j.at("categories").get<std::vector<std::string>>();
    } else {
        const auto& mix = j.at("mixture");
        m.mixture.n_components = mix.at("n_components").get<std::size_t>();
        m.mixture.means = mix.at("means").get<std::vector<double>>();
        m.mixture.sigmas = mix.at("sigmas").get<std::vector<double>>();
        m.mixture.weights = mix.at("weights").get<std::vector<double>>();
        m.mixture.delta = mix.at("delta").get<double>();
    }
    return m;
}

inline nlohmann::json slot_steps_json(const std::map<std::string, Optimizer::Slot>& slots) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, slot] : slots) j[name] = slot.t;
    return j;
}

// Directory entries give the payload order; empty tensors (an unused Adam
// moment under RmsProp, say) are simply never listed.
inline void list_tensors(nlohmann::json& dir, std::string& payload, const char* sec,
                         const std::map<std::string, Tensor>& ts) {
    for (const auto& [name, t] : ts) {
        if (t.size() == 0) continue;
        dir.push_back({{"sec", sec}, {"name", name}, {"rows", t.rows}, {"cols", t.cols}});
        append_tensor(payload, t);
    }
}

}  // namespace ck_detail

inline std::string checkpoint_bytes(const Checkpoint& ck) {
    using nlohmann::json;
    json header;
    header["version"] = ck_detail::kVersion;
    header["config"] = ck_detail::config_json(ck.cfg);
    json metas = json::array();
    for (const auto& m : ck.metas) metas.push_back(ck_detail::meta_json(m));
    header["metas"] = metas;
    header["dag"] = dag_to_json(ck.dag);
    header["gen_sizes"] = {{"n_hidden", ck.gen_sizes.n_hidden},
                           {"n_noise", ck.gen_sizes.n_noise},
                           {"n_conv", ck.gen_sizes.n_conv}};
    header["disc_spec"] = {{"n_layers", ck.disc_spec.n_layers},
                           {"layer_width", ck.disc_spec.layer_width},
                           {"norm", ck.disc_spec.norm == Normalization::layer ? "layer" : "batch"},
                           {"mbd_kernels", ck.disc_spec.mbd_kernels},
                           {"mbd_dims", ck.disc_spec.mbd_dims},
                           {"gamma", ck.disc_spec.gamma}};
    header["rng"] = ck.rng_state;
    header["epoch"] = ck.epoch;
    header["step"] = ck.step;
    header["opt_steps"] = {{"g", ck_detail::slot_steps_json(ck.opt_g)},
                           {"d", ck_detail::slot_steps_json(ck.opt_d)}};

    json dir = json::array();
    std::string payload;
    ck_detail::list_tensors(dir, payload, "gen", ck.gen_params);
    ck_detail::list_tensors(dir, payload, "disc", ck.disc_params);
    std::map<std::string, Tensor> m_g, v_g, m_d, v_d;
    for (const auto& [name, slot] : ck.opt_g) { m_g[name] = slot.m; v_g[name] = slot.v; }
    for (const auto& [name, slot] : ck.opt_d) { m_d[name] = slot.m; v_d[name] = slot.v; }
    ck_detail::list_tensors(dir, payload, "opt_g.m", m_g);
    ck_detail::list_tensors(dir, payload, "opt_g.v", v_g);
    ck_detail::list_tensors(dir, payload, "opt_d.m", m_d);
    ck_detail::list_tensors(dir, payload, "opt_d.v", v_d);
    header["tensors"] = dir;

    std::string head = header.dump();
    std::string out(ck_detail::kMagic, 8);
    ck_detail::append_u32(out, static_cast<std::uint32_t>(head.size()));
    out += head;
    out += payload;
    return out;
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
    using nlohmann::json;
    if (bytes.size() < 12 || bytes.compare(0, 8, ck_detail::kMagic, 8) != 0)
        throw ValidationError("not a checkpoint file (bad magic)");
    std::size_t head_len = ck_detail::read_u32(bytes, 8);
    if (12 + head_len > bytes.size()) throw ValidationError("checkpoint header truncated");
    json header;
    try {
        header = json::parse(bytes.substr(12, head_len));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }

    Checkpoint ck;
    try {
        if (header.at("version").get<int>() != ck_detail::kVersion)
            throw ValidationError("unsupported checkpoint version " +
                                  header.at("version").dump());
        ck.cfg = ck_detail::config_from_json(header.at("config"));
        for (const auto& j : header.at("metas")) ck.metas.push_back(ck_detail::meta_from_json(j));
        ck.dag = dag_from_json(header.at("dag"));
        const auto& gs = header.at("gen_sizes");
        ck.gen_sizes.n_hidden = gs.at("n_hidden").get<std::size_t>();
        ck.gen_sizes.n_noise = gs.at("n_noise").get<std::size_t>();
        ck.gen_sizes.n_conv = gs.at("n_conv").get<std::size_t>();
        const auto& ds = header.at("disc_spec");
        ck.disc_spec.n_layers = ds.at("n_layers").get<std::size_t>();
        ck.disc_spec.layer_width = ds.at("layer_width").get<std::size_t>();
        ck.disc_spec.norm = ds.at("norm").get<std::string>() == "layer" ? Normalization::layer
                                                                        : Normalization::batch;
        ck.disc_spec.mbd_kernels = ds.at("mbd_kernels").get<std::size_t>();
        ck.disc_spec.mbd_dims = ds.at("mbd_dims").get<std::size_t>();
        ck.disc_spec.gamma = ds.at("gamma").get<double>();
        ck.rng_state = header.at("rng").get<std::string>();
        ck.epoch = header.at("epoch").get<std::size_t>();
        ck.step = header.at("step").get<std::size_t>();
        for (const auto& [name, t] : header.at("opt_steps").at("g").items())
            ck.opt_g[name].t = t.get<long>();
        for (const auto& [name, t] : header.at("opt_steps").at("d").items())
            ck.opt_d[name].t = t.get<long>();

        std::size_t off = 12 + head_len;
        for (const auto& e : header.at("tensors")) {
            std::string sec = e.at("sec").get<std::string>();
            std::string name = e.at("name").get<std::string>();
            Tensor t(e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>());
            if (off + t.size() * sizeof(double) > bytes.size())
                throw ValidationError("checkpoint payload truncated at tensor " + sec + "/" + name);
            ck_detail::read_tensor(bytes, off, t);
            off += t.size() * sizeof(double);
            if (sec == "gen") ck.gen_params[name] = std::move(t);
            else if (sec == "disc") ck.disc_params[name] = std::move(t);
            else if (sec == "opt_g.m") ck.opt_g[name].m = std::move(t);
            else if (sec == "opt_g.v") ck.opt_g[name].v = std::move(t);
            else if (sec == "opt_d.m") ck.opt_d[name].m = std::move(t);
            else if (sec == "opt_d.v") ck.opt_d[name].v = std::move(t);
            else throw ValidationError("checkpoint: unknown tensor section " + sec);
        }
        if (off != bytes.size())
            throw ValidationError("checkpoint payload has " + std::to_string(bytes.size() - off) +
                                  " trailing bytes");
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed checkpoint header: ") + e.what());
    }
    return ck;
}

inline void save_checkpoint_file(const Checkpoint& ck, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write checkpoint file: " + path);
    std::string bytes = checkpoint_bytes(ck);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("short write on checkpoint file: " + path);
}

inline Checkpoint load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_checkpoint(ss.str());
}

namespace ck_detail {

// Strict overwrite: the stored and rebuilt parameter sets must agree exactly.
inline void load_params(std::vector<ParamRef> refs, const std::map<std::string, Tensor>& stored,
                        const char* what) {
    if (refs.size() != stored.size())
        throw ValidationError(std::string(what) + ": checkpoint stores " +
                              std::to_string(stored.size()) + " parameters, network has " +
                              std::to_string(refs.size()));
    for (ParamRef& p : refs) {
        auto it = stored.find(p.name);
        if (it == stored.end())
            throw ValidationError(std::string(what) + ": checkpoint is missing parameter " + p.name);
        if (!p.tensor->same_shape(it->second))
            throw ValidationError(std::string(what) + ": parameter " + p.name + " has shape " +
                                  it->second.shape_str() + " in the checkpoint, expected " +
                                  p.tensor->shape_str());
        *p.tensor = it->second;
    }
}

}  // namespace ck_detail

inline Checkpoint checkpoint_of(Trainer& tr, const Dag& dag) {
    Checkpoint ck;
    ck.cfg = tr.cfg;
    ck.metas = tr.metas;
    ck.dag = dag;
    ck.gen_sizes = tr.gen.sizes;
    ck.disc_spec = tr.disc.spec;
    for (ParamRef& p : tr.gen.params()) ck.gen_params[p.name] = *p.tensor;
    for (ParamRef& p : tr.disc.params()) ck.disc_params[p.name] = *p.tensor;
    for (const auto& [name, slot] : tr.opt_g->slots()) ck.opt_g[name] = slot;
    for (const auto& [name, slot] : tr.opt_d->slots()) ck.opt_d[name] = slot;
    ck.rng_state = tr.rng.serialize();
    ck.epoch = tr.epoch_done;
    ck.step = tr.step_count;
    return ck;
}

// Sampling needs only the generator; no training table required.
inline GeneratorNet generator_of(const Checkpoint& ck) {
    GeneratorNet gen = GeneratorNet::build(ck.dag, ck.metas, ck.gen_sizes, 0);
    ck_detail::load_params(gen.params(), ck.gen_params, "generator");
    return gen;
}

// Rebuild a trainer mid-run. The constructor initializes fresh networks and
// forks the seed stream exactly as the original run did; every piece of
// mutable state is then overwritten from the snapshot, so subsequent steps
// reproduce the uninterrupted run bit for bit.
inline Trainer restore_trainer(const Checkpoint& ck, const Table& table) {
    Trainer tr(table, ck.dag, ck.metas, ck.cfg, ck.gen_sizes, ck.disc_spec);
    ck_detail::load_params(tr.gen.params(), ck.gen_params, "generator");
    ck_detail::load_params(tr.disc.params(), ck.disc_params, "discriminator");
    tr.opt_g->slots() = {ck.opt_g.begin(), ck.opt_g.end()};
    tr.opt_d->slots() = {ck.opt_d.begin(), ck.opt_d.end()};
    tr.rng.deserialize(ck.rng_state);
    tr.epoch_done = ck.epoch;
    tr.step_count = ck.step;
    return tr;
}

}  // namespace dagsynth
