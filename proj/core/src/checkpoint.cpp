#include "adq/checkpoint.hpp"

#include "adq/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

using nlohmann::json;

namespace adq {

namespace {

constexpr char magic[] = "ADQCKPT1\n";
constexpr std::size_t magic_len = sizeof(magic) - 1;

template <class T>
void put_le(std::string& out, T v)
{
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(const char* p)
{
    unsigned char b[sizeof(T)];
    std::memcpy(b, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

// Tensors of one layer in file order; the names tag the header index.
std::vector<std::pair<std::string, Tensor*>> layer_tensors(LayerState& s)
{
    return {{"weight", &s.weight.value}, {"weight_m", &s.weight.m}, {"weight_v", &s.weight.v},
            {"bias", &s.bias.value},     {"bias_m", &s.bias.m},     {"bias_v", &s.bias.v},
            {"running_mean", &s.running_mean}, {"running_var", &s.running_var}};
}

json quant_json(const QuantParams& q)
{
    return {{"k", q.bits}, {"x_min", q.x_min}, {"x_max", q.x_max}};
}

json int_map(const std::map<int, int>& m)
{
    json j = json::object();
    for (const auto& [k, v] : m) j[std::to_string(k)] = v;
    return j;
}

std::map<int, int> int_map(const json& j)
{
    std::map<int, int> m;
    for (const auto& [k, v] : j.items()) m[std::stoi(k)] = v.get<int>();
    return m;
}

std::string hex64(std::uint64_t v)
{
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

} // namespace

std::string checkpoint_to_bytes(const Checkpoint& ckpt)
{
    Checkpoint c = ckpt; // layer_tensors needs mutable access
    json h;
    h["arch"] = json::parse(arch_to_json(c.arch));
    h["arch_hash"] = hex64(arch_hash(c.arch));
    h["epoch"] = c.state.epoch;
    h["step"] = c.state.step;
    h["version"] = c.state.version;
    h["rng_seed"] = c.state.rng_seed;
    h["iter"] = c.assignment.iter;
    h["bits"] = int_map(c.assignment.k);
    h["exempt"] = c.assignment.exempt;
    h["channels"] = int_map(c.prune.channels);
    h["initial_channels"] = int_map(c.prune.initial_channels);

    json wq = json::object();
    for (const auto& [id, k] : c.plan.weight_bits) {
        const auto& w = c.state.layers.at(static_cast<std::size_t>(id)).weight.value;
        wq[std::to_string(id)] = quant_json(w.empty() ? QuantParams{k, 0.0, 0.0} : QuantPlan::weight_params(w, k));
    }
    json aq = json::object();
    for (const auto& [id, a] : c.plan.activations) {
        json e = quant_json(a.range.params(a.bits));
        e["initialized"] = a.range.initialized();
        e["mode"] = a.range.mode() == RangeTracker::Mode::ema ? "ema" : "minmax";
        e["decay"] = a.range.decay();
        aq[std::to_string(id)] = e;
    }
    h["quant"] = {{"weight", wq}, {"activation", aq}, {"update_ranges", c.plan.update_ranges}};

    json ad = json::array();
    for (const auto& r : c.history.all_records()) ad.push_back({r.layer_id, r.epoch, r.nonzero, r.total});
    h["ad_history"] = ad;

    std::string blob;
    json index = json::array();
    for (std::size_t l = 0; l < c.state.layers.size(); ++l) {
        for (auto& [name, t] : layer_tensors(c.state.layers[l])) {
            if (t->empty()) continue;
            index.push_back({{"layer", l}, {"name", name}, {"shape", t->shape()}});
            for (double v : t->values()) put_le<double>(blob, v);
        }
    }
    h["tensors"] = index;

    const std::string header = h.dump();
    std::string out(magic, magic_len);
    put_le<std::uint64_t>(out, header.size());
    out += header;
    out += blob;
    return out;
}

Checkpoint checkpoint_from_bytes(const std::string& bytes)
{
    if (bytes.size() < magic_len + 8 || bytes.compare(0, magic_len, magic) != 0)
        throw InputError("not a checkpoint (bad magic)");
    const auto header_len = get_le<std::uint64_t>(bytes.data() + magic_len);
    const std::size_t data_start = magic_len + 8;
    if (header_len > bytes.size() - data_start) throw InputError("checkpoint truncated inside the header");

    json h;
    try {
        h = json::parse(bytes.substr(data_start, header_len));
    } catch (const json::parse_error& e) {
        throw InputError(std::string("checkpoint header: ") + e.what());
    }

    Checkpoint c;
    try {
        c.arch = arch_from_json(h.at("arch").dump());
        if (h.at("arch_hash").get<std::string>() != hex64(arch_hash(c.arch)))
            throw InputError("checkpoint architecture hash mismatch");
        c.state.epoch = h.at("epoch").get<int>();
        c.state.step = h.at("step").get<std::int64_t>();
        c.state.version = h.at("version").get<std::uint64_t>();
        c.state.rng_seed = h.at("rng_seed").get<std::uint64_t>();
        c.assignment.iter = h.at("iter").get<int>();
        c.assignment.k = int_map(h.at("bits"));
        c.assignment.exempt = h.at("exempt").get<std::set<int>>();
        c.prune.channels = int_map(h.at("channels"));
        c.prune.initial_channels = int_map(h.at("initial_channels"));

        const auto& q = h.at("quant");
        for (const auto& [id, e] : q.at("weight").items()) c.plan.weight_bits[std::stoi(id)] = e.at("k").get<int>();
        for (const auto& [id, e] : q.at("activation").items()) {
            ActivationQuant a;
            a.bits = e.at("k").get<int>();
            a.range = RangeTracker(e.at("mode").get<std::string>() == "ema" ? RangeTracker::Mode::ema
                                                                             : RangeTracker::Mode::minmax,
                                   e.at("decay").get<double>());
            if (e.at("initialized").get<bool>()) a.range.restore(e.at("x_min").get<double>(), e.at("x_max").get<double>());
            c.plan.activations[std::stoi(id)] = a;
        }
        c.plan.update_ranges = q.at("update_ranges").get<bool>();

        for (const auto& r : h.at("ad_history"))
            c.history.record_counts(r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<std::uint64_t>(),
                                    r.at(3).get<std::uint64_t>());

        c.state.layers.resize(c.arch.layers.size());
        std::size_t pos = data_start + header_len;
        for (const auto& t : h.at("tensors")) {
            const auto l = t.at("layer").get<std::size_t>();
            if (l >= c.state.layers.size()) throw InputError("checkpoint tensor refers to layer " + std::to_string(l));
            const auto name = t.at("name").get<std::string>();
            Tensor* dst = nullptr;
            for (auto& [n, p] : layer_tensors(c.state.layers[l]))
                if (n == name) dst = p;
            if (!dst) throw InputError("checkpoint tensor has unknown name '" + name + "'");
            const auto shape = t.at("shape").get<Shape>();
            const std::size_t n = shape_size(shape);
            if (n > (bytes.size() - pos) / 8) throw InputError("checkpoint truncated in tensor data");
            std::vector<double> v(n);
            for (std::size_t i = 0; i < n; ++i) v[i] = get_le<double>(bytes.data() + pos + 8 * i);
            pos += 8 * n;
            *dst = Tensor(shape, std::move(v));
        }
        if (pos != bytes.size()) throw InputError("checkpoint has trailing bytes");
    } catch (const json::exception& e) {
        throw InputError(std::string("checkpoint header: ") + e.what());
    }
    try {
        check_state(c.arch, c.state);
    } catch (const ConfigError& e) {
        throw InputError(std::string("checkpoint tensors disagree with the architecture: ") + e.what());
    }
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path)
{
    const std::string bytes = checkpoint_to_bytes(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return checkpoint_from_bytes(bytes);
}

Checkpoint make_checkpoint(const ScheduleResult& r)
{
    return {r.arch, r.state, r.assignment, r.prune, r.plan, r.history};
}

} // namespace adq
