#include "adq/energy.hpp"

#include "adq/error.hpp"

#include <json.hpp>

#include <cstdio>
#include <sstream>

namespace adq {

std::int64_t mem_accesses(const LayerShape& s)
{
    return s.N * s.N * s.I + s.p * s.p * s.I * s.O;
}

std::int64_t mac_count(const LayerShape& s)
{
    return s.M * s.M * s.I * s.p * s.p * s.O;
}

double analytical_layer_energy(const LayerShape& s, int k, const AnalyticalEnergyTable& table)
{
    if (k < 1 || k > 32) throw InputError("analytical energy needs 1 <= k <= 32, got " + std::to_string(k));
    return static_cast<double>(mem_accesses(s)) * table.mem(k) + static_cast<double>(mac_count(s)) * table.mac(k);
}

void PimEnergyTable::validate() const
{
    if (fj_per_mac.empty()) throw ConfigError("PIM energy table is empty");
    double prev = 0.0;
    for (const auto& [k, e] : fj_per_mac) {
        if (k < 1) throw ConfigError("PIM precision must be positive");
        if (!(e > prev)) throw ConfigError("PIM energies must be positive and increase with precision");
        prev = e;
    }
}

int pim_round_bits(int k, const PimEnergyTable& table)
{
    if (k < 1) throw InputError("bit-width must be >= 1, got " + std::to_string(k));
    auto it = table.fj_per_mac.lower_bound(k);
    if (it == table.fj_per_mac.end())
        throw InputError("bit-width " + std::to_string(k) + " exceeds the largest PIM precision " +
                         std::to_string(table.fj_per_mac.rbegin()->first));
    return it->first;
}

std::map<int, LayerShape> layer_shapes(const NetworkArch& arch, const std::map<int, int>& channels)
{
    // Spatial sizes do not depend on channel counts, so they come from the
    // unpruned arch; channel counts come from the re-derived one.
    const auto outs = infer_shapes(arch);
    const NetworkArch pruned = channels.empty() ? arch : with_channels(arch, channels);
    std::map<int, LayerShape> shapes;
    for (const auto& l : pruned.layers) {
        if (!l.is_weighted()) continue;
        LayerShape s;
        s.kind = l.kind;
        s.I = l.in_channels;
        s.O = l.out_channels;
        if (l.kind == LayerKind::conv2d) {
            const auto in = input_shape_of(arch, outs, l.id);
            const auto& out = outs[static_cast<std::size_t>(l.id)];
            if (in[1] != in[2] || out[1] != out[2])
                throw ConfigError("layer " + std::to_string(l.id) + ": energy model needs square feature maps");
            s.N = in[1];
            s.M = out[1];
            s.p = l.kernel;
        }
        if (s.I < 1 || s.O < 1) throw ConfigError("layer " + std::to_string(l.id) + ": unresolvable channel counts");
        shapes[l.id] = s;
    }
    return shapes;
}

std::string to_string(EnergyModel m)
{
    return m == EnergyModel::pim ? "pim" : "analytical";
}

EnergyModel parse_energy_model(const std::string& name)
{
    if (name == "analytical") return EnergyModel::analytical;
    if (name == "pim") return EnergyModel::pim;
    throw ConfigError("unknown energy model '" + name + "' (expected analytical or pim)");
}

namespace {

template <class CostFn>
EnergyReport cost_network(EnergyModel model, const NetworkArch& arch, const NetworkConfig& config, CostFn cost)
{
    EnergyReport r;
    r.model = model;
    for (const auto& [id, s] : layer_shapes(arch, config.channels)) {
        LayerEnergy e;
        e.layer_id = id;
        e.kind = s.kind;
        e.channels = static_cast<int>(s.O);
        if (config.removed.count(id)) {
            e.removed = true;
            r.layers.push_back(e);
            continue;
        }
        auto it = config.bits.find(id);
        if (it == config.bits.end()) throw ConfigError("layer " + std::to_string(id) + " has no bit-width");
        e.k = it->second;
        e.binary = e.k == 1;
        e.n_mem = mem_accesses(s);
        e.n_mac = mac_count(s);
        cost(s, e);
        r.n_mem_total += e.n_mem;
        r.n_mac_total += e.n_mac;
        r.total_pj += e.energy_pj;
        r.layers.push_back(e);
    }
    return r;
}

std::string num(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

} // namespace

EnergyReport analytical_network_energy(const NetworkArch& arch, const NetworkConfig& config,
                                       const AnalyticalEnergyTable& table)
{
    return cost_network(EnergyModel::analytical, arch, config, [&](const LayerShape& s, LayerEnergy& e) {
        try {
            e.energy_pj = analytical_layer_energy(s, e.k, table);
        } catch (const InputError& err) {
            throw ConfigError("layer " + std::to_string(e.layer_id) + ": " + err.what());
        }
    });
}

EnergyReport pim_network_energy(const NetworkArch& arch, const NetworkConfig& config, const PimEnergyTable& table)
{
    table.validate();
    return cost_network(EnergyModel::pim, arch, config, [&](const LayerShape&, LayerEnergy& e) {
        try {
            e.pim_k = pim_round_bits(e.k, table);
        } catch (const InputError& err) {
            throw ConfigError("layer " + std::to_string(e.layer_id) + ": " + err.what());
        }
        // fJ -> pJ
        e.energy_pj = static_cast<double>(e.n_mac) * table.fj_per_mac.at(e.pim_k) * 1e-3;
    });
}

EnergyReport network_energy(EnergyModel model, const NetworkArch& arch, const NetworkConfig& config, int baseline_bits)
{
    NetworkConfig base;
    for (int id : weighted_layers(arch)) base.bits[id] = baseline_bits;
    const auto run = [&](const NetworkConfig& c) {
        return model == EnergyModel::pim ? pim_network_energy(arch, c) : analytical_network_energy(arch, c);
    };
    EnergyReport r = run(config);
    r.baseline_pj = run(base).total_pj;
    r.ratio = efficiency_ratio(r.baseline_pj, r.total_pj);
    return r;
}

double efficiency_ratio(double baseline_total, double total)
{
    if (total == 0.0) throw InternalError("efficiency ratio with zero model energy");
    return baseline_total / total;
}

double training_complexity(const std::vector<std::pair<double, int>>& iterations, double baseline_epoch_total)
{
    if (iterations.empty()) throw InputError("training complexity needs at least one iteration");
    if (!(baseline_epoch_total > 0.0)) throw InputError("baseline epoch total must be positive");
    double sum = 0.0;
    for (const auto& [reduction, epochs] : iterations) {
        if (!(reduction >= 1.0)) throw InputError("MAC reduction below 1: " + num(reduction));
        if (epochs < 0) throw InputError("negative epoch count");
        sum += static_cast<double>(epochs) / reduction;
    }
    return sum / baseline_epoch_total;
}

std::string EnergyReport::to_json() const
{
    nlohmann::ordered_json j;
    j["model"] = to_string(model);
    j["layers"] = nlohmann::ordered_json::array();
    for (const auto& e : layers) {
        nlohmann::ordered_json l;
        l["layer_id"] = e.layer_id;
        l["kind"] = std::string(adq::to_string(e.kind));
        l["k"] = e.k;
        if (model == EnergyModel::pim) l["pim_k"] = e.pim_k;
        l["channels"] = e.channels;
        l["N_Mem"] = e.n_mem;
        l["N_MAC"] = e.n_mac;
        l["E_pJ"] = e.energy_pj;
        if (e.removed) l["removed"] = true;
        if (e.binary) l["binary"] = true;
        j["layers"].push_back(l);
    }
    j["N_Mem_total"] = n_mem_total;
    j["N_MAC_total"] = n_mac_total;
    j["total_pJ"] = total_pj;
    j["total_uJ"] = total_uj();
    j["baseline_pJ"] = baseline_pj;
    j["baseline_uJ"] = baseline_uj();
    j["ratio"] = ratio;
    return j.dump(2) + "\n";
}

std::string EnergyReport::to_csv() const
{
    std::ostringstream os;
    os << "layer_id,kind,k,pim_k,channels,N_Mem,N_MAC,E_pJ\n";
    for (const auto& e : layers) {
        os << e.layer_id << ',' << adq::to_string(e.kind) << ',' << (e.removed ? std::string("removed") : std::to_string(e.k))
           << ',' << e.pim_k << ',' << e.channels << ',' << e.n_mem << ',' << e.n_mac << ',' << num(e.energy_pj)
           << '\n';
    }
    os << "total,,,,," << n_mem_total << ',' << n_mac_total << ',' << num(total_pj) << '\n';
    os << "baseline,,,,,,," << num(baseline_pj) << '\n';
    os << "ratio,,,,,,," << num(ratio) << '\n';
    return os.str();
}

} // namespace adq
