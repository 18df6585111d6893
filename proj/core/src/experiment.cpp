#include "adq/experiment.hpp"

#include "adq/checkpoint.hpp"
#include "adq/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace adq {

namespace {

// Strict reader over one JSON object: every key must be consumed.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) throw ConfigError(where() + "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key)
    {
        seen_.insert(key);
        return j_.at(key);
    }

    template <class T>
    void get(const std::string& key, T& out)
    {
        if (!has(key)) return;
        const json& v = raw(key);
        try {
            out = v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError(field(key) + ": unexpected value " + v.dump());
        }
    }

    void finish() const
    {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(field(k) + ": unknown field");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string where() const { return path_.empty() ? "" : path_ + ": "; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::string line_col(const std::string& text, std::size_t byte)
{
    int line = 1;
    int col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

std::string resolve(const std::string& base, const std::string& p)
{
    fs::path path(p);
    return (path.is_relative() ? fs::path(base) / path : path).lexically_normal().string();
}

void write_file(const fs::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << content;
    if (!out) throw InputError("failed writing " + path.string());
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("missing run artifact " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void parse_schedule(Fields& f, ScheduleConfig& s)
{
    f.get("initial_bits", s.initial_bits);
    f.get("max_iters", s.max_iters);
    if (f.has("epoch_budget")) {
        const json& b = f.raw("epoch_budget");
        if (b.is_number_integer())
            s.epoch_budget = {b.get<int>()};
        else if (b.is_array() && std::all_of(b.begin(), b.end(), [](const json& e) { return e.is_number_integer(); }))
            s.epoch_budget = b.get<std::vector<int>>();
        else
            throw ConfigError(f.field("epoch_budget") + ": expected an integer or a list of integers");
    }
    f.get("saturation_epsilon", s.saturation_epsilon);
    f.get("saturation_window", s.saturation_window);
    f.get("stop_at_saturation", s.stop_at_saturation);
    f.get("pruning", s.pruning_enabled);
    f.get("prune_from_current", s.prune_from_current);
    f.get("final_convergence_epochs", s.final_convergence_epochs);
    f.get("remove_layers", s.remove_layers);
    f.get("remove_after_iteration", s.remove_after_iteration);
    f.get("batch_size", s.batch_size);
    f.get("learning_rate", s.adam.lr);
    f.get("weight_decay", s.adam.weight_decay);
    f.get("ema_decay", s.ema_decay);
    if (f.has("ad_mode")) {
        const json& m = f.raw("ad_mode");
        if (m == "pooled")
            s.ad_mode = NetworkADMode::pooled;
        else if (m == "layer_mean")
            s.ad_mode = NetworkADMode::layer_mean;
        else
            throw ConfigError(f.field("ad_mode") + ": expected \"pooled\" or \"layer_mean\"");
    }
    f.finish();
}

} // namespace

NetworkArch ExperimentConfig::build_arch() const
{
    if (!arch_path.empty()) return load_arch(arch_path);
    if (arch_builtin == "toy4conv" && toy_widths) return make_toy_cnn(input_shape, num_classes, *toy_widths);
    return make_builtin(arch_builtin, input_shape, num_classes);
}

DataSplit ExperimentConfig::build_data() const
{
    if (dataset.kind == DatasetConfig::Kind::directory) return load_image_split(dataset.path, build_arch().input_shape);
    SyntheticSpec s = dataset.synthetic;
    if (!dataset.synthetic_seed_set) s.seed = seed;
    return make_synthetic(s);
}

std::string ExperimentConfig::to_json() const
{
    ordered_json j;
    j["name"] = name;
    if (!arch_path.empty()) {
        j["arch"] = arch_path;
    } else {
        ordered_json a{{"builtin", arch_builtin}, {"input_shape", input_shape}, {"num_classes", num_classes}};
        if (toy_widths) a["widths"] = *toy_widths;
        j["arch"] = a;
    }
    if (dataset.kind == DatasetConfig::Kind::directory) {
        j["dataset"] = {{"kind", "directory"}, {"path", dataset.path}};
    } else {
        const auto& s = dataset.synthetic;
        ordered_json d{{"kind", "synthetic"},         {"shape", s.shape},
                       {"num_classes", s.num_classes}, {"train_per_class", s.train_per_class},
                       {"test_per_class", s.test_per_class}, {"noise", s.noise}};
        if (dataset.synthetic_seed_set) d["seed"] = s.seed;
        j["dataset"] = d;
    }
    const auto& s = schedule;
    j["schedule"] = {{"initial_bits", s.initial_bits},
                     {"max_iters", s.max_iters},
                     {"epoch_budget", s.epoch_budget},
                     {"saturation_epsilon", s.saturation_epsilon},
                     {"saturation_window", s.saturation_window},
                     {"stop_at_saturation", s.stop_at_saturation},
                     {"pruning", s.pruning_enabled},
                     {"prune_from_current", s.prune_from_current},
                     {"final_convergence_epochs", s.final_convergence_epochs},
                     {"remove_layers", s.remove_layers},
                     {"remove_after_iteration", s.remove_after_iteration},
                     {"batch_size", s.batch_size},
                     {"learning_rate", s.adam.lr},
                     {"weight_decay", s.adam.weight_decay},
                     {"ema_decay", s.ema_decay},
                     {"ad_mode", s.ad_mode == NetworkADMode::pooled ? "pooled" : "layer_mean"}};
    j["energy_model"] = adq::to_string(energy_model);
    j["baseline_bits"] = baseline_bits;
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    return j.dump(2) + "\n";
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& base_dir)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error at " + line_col(text, e.byte) + ": " + e.what());
    }

    ExperimentConfig c;
    Fields top(j, "");
    top.get("name", c.name);
    top.get("seed", c.seed);
    top.get("output_dir", c.output_dir);
    top.get("baseline_bits", c.baseline_bits);
    if (top.has("energy_model")) {
        const json& m = top.raw("energy_model");
        if (!m.is_string()) throw ConfigError("energy_model: expected a string");
        c.energy_model = parse_energy_model(m.get<std::string>());
    }

    if (!top.has("arch")) throw ConfigError("arch: required");
    const json& a = top.raw("arch");
    if (a.is_string()) {
        c.arch_path = resolve(base_dir, a.get<std::string>());
        if (!fs::is_regular_file(c.arch_path)) throw ConfigError("arch: file not found: " + c.arch_path);
    } else {
        Fields fa(a, "arch");
        fa.get("builtin", c.arch_builtin);
        fa.get("input_shape", c.input_shape);
        fa.get("num_classes", c.num_classes);
        if (fa.has("widths")) {
            std::array<int, 4> w{};
            fa.get("widths", w);
            c.toy_widths = w;
        }
        fa.finish();
        if (c.arch_builtin.empty()) throw ConfigError("arch.builtin: required when arch is not a file path");
    }

    if (top.has("dataset")) {
        Fields fd(top.raw("dataset"), "dataset");
        std::string kind = "synthetic";
        fd.get("kind", kind);
        if (kind == "synthetic") {
            auto& s = c.dataset.synthetic;
            s.shape = c.input_shape;
            fd.get("shape", s.shape);
            s.num_classes = c.num_classes;
            fd.get("num_classes", s.num_classes);
            fd.get("train_per_class", s.train_per_class);
            fd.get("test_per_class", s.test_per_class);
            fd.get("noise", s.noise);
            if (fd.has("seed")) {
                fd.get("seed", s.seed);
                c.dataset.synthetic_seed_set = true;
            }
        } else if (kind == "directory") {
            c.dataset.kind = DatasetConfig::Kind::directory;
            fd.get("path", c.dataset.path);
            if (c.dataset.path.empty()) throw ConfigError("dataset.path: required for directory datasets");
            c.dataset.path = resolve(base_dir, c.dataset.path);
            if (!fs::is_directory(c.dataset.path)) throw ConfigError("dataset.path: directory not found: " + c.dataset.path);
        } else {
            throw ConfigError("dataset.kind: expected \"synthetic\" or \"directory\"");
        }
        fd.finish();
    } else {
        c.dataset.synthetic.shape = c.input_shape;
        c.dataset.synthetic.num_classes = c.num_classes;
    }

    if (top.has("schedule")) {
        Fields fs_(top.raw("schedule"), "schedule");
        parse_schedule(fs_, c.schedule);
    }
    top.finish();

    c.schedule.seed = c.seed;
    c.schedule.validate();
    if (c.baseline_bits < 1 || c.baseline_bits > 32) throw ConfigError("baseline_bits: must be in [1, 32]");
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_experiment_config(ss.str(), fs::path(path).parent_path().string().empty()
                                                     ? "."
                                                     : fs::path(path).parent_path().string());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string resolve_output_dir(const std::string& output_dir)
{
    fs::path p(output_dir);
    if (p.is_absolute()) return p.lexically_normal().string();
    if (const char* base = std::getenv("ADQ_OUTPUT_DIR"); base && *base) return (fs::path(base) / p).lexically_normal().string();
    return p.lexically_normal().string();
}

EnergyReport run_energy(EnergyModel model, const NetworkArch& original, const NetworkArch& current,
                        const std::map<int, int>& bits, int baseline_bits)
{
    NetworkConfig cfg;
    cfg.bits = bits;
    NetworkConfig base;
    for (int id : weighted_layers(original)) base.bits[id] = baseline_bits;
    EnergyReport r = model == EnergyModel::pim ? pim_network_energy(current, cfg) : analytical_network_energy(current, cfg);
    const EnergyReport b =
        model == EnergyModel::pim ? pim_network_energy(original, base) : analytical_network_energy(original, base);
    r.baseline_pj = b.total_pj;
    r.ratio = efficiency_ratio(b.total_pj, r.total_pj);
    return r;
}

TrainSummary cmd_train(const ExperimentConfig& config)
{
    const fs::path out = resolve_output_dir(config.output_dir);
    fs::create_directories(out);
    const NetworkArch arch = config.build_arch();
    const DataSplit data = config.build_data();
    write_file(out / "config.json", config.to_json());
    write_file(out / "arch.json", arch_to_json(arch) + "\n");

    auto hook = [&](const ScheduleResult& r, const IterationRecord& rec) {
        const std::string tag = "iter" + std::to_string(rec.iter);
        save_checkpoint(make_checkpoint(r), (out / (tag + ".ckpt")).string());
        const auto e = run_energy(config.energy_model, arch, r.arch, rec.bits, config.baseline_bits);
        write_file(out / ("energy_" + tag + ".json"), e.to_json());
        write_file(out / ("energy_" + tag + ".csv"), e.to_csv());
    };

    ScheduleResult r;
    try {
        r = run_schedule(arch, data, config.schedule, hook);
    } catch (const DivergenceError& e) {
        save_checkpoint(make_checkpoint(e.snapshot()), (out / "diverged.ckpt").string());
        throw;
    }

    write_file(out / "schedule_log.json", r.log.to_json());
    write_file(out / "schedule_log.csv", r.log.to_csv());
    write_file(out / "ad_history.csv", r.history.to_csv());
    std::ostringstream ep;
    ep << "iter,epoch,train_loss,test_accuracy,network_ad\n";
    for (const auto& e : r.log.epochs)
        ep << e.iter << ',' << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.test_accuracy) << ','
           << fmt(e.network_ad) << '\n';
    write_file(out / "epochs.csv", ep.str());
    save_checkpoint(make_checkpoint(r), (out / "final.ckpt").string());

    const auto final_bits = propagate_skip_bitwidths(r.arch, r.assignment).layer_bits;
    TrainSummary s{out.string(), r.log, run_energy(config.energy_model, arch, r.arch, final_bits, config.baseline_bits)};
    write_file(out / "energy_final.json", s.energy.to_json());
    write_file(out / "energy_final.csv", s.energy.to_csv());

    ordered_json sum;
    sum["name"] = config.name;
    sum["iterations"] = r.log.iterations.size();
    sum["total_epochs"] = r.log.epochs.size();
    sum["final_accuracy"] = r.log.final_accuracy;
    sum["final_network_ad"] = r.log.iterations.back().network_ad;
    sum["energy_model"] = adq::to_string(config.energy_model);
    sum["energy_ratio"] = s.energy.ratio;
    write_file(out / "summary.json", sum.dump(2) + "\n");
    return s;
}

std::vector<std::string> cmd_plotdata(const std::string& run_dir)
{
    const fs::path dir(run_dir);
    if (!fs::is_directory(dir)) throw InputError("run directory not found: " + run_dir);
    const ADHistory history = ADHistory::from_csv(read_file(dir / "ad_history.csv"));
    const std::string epochs = read_file(dir / "epochs.csv");
    if (history.empty()) throw InputError("ad_history.csv has no records");

    const fs::path plot = dir / "plot";
    fs::create_directories(plot);
    std::vector<std::string> written;
    for (int id : history.layers()) {
        std::ostringstream os;
        os << "epoch,ad\n";
        // Values pass through unchanged from the history file.
        for (const auto& r : history.series(id)) os << r.epoch << ',' << fmt(r.ad()) << '\n';
        const fs::path p = plot / ("ad_layer_" + std::to_string(id) + ".csv");
        write_file(p, os.str());
        written.push_back(p.string());
    }

    std::istringstream in(epochs);
    std::string line;
    std::getline(in, line);
    if (line != "iter,epoch,train_loss,test_accuracy,network_ad") throw InputError("epochs.csv: unexpected header");
    std::ostringstream acc;
    acc << "epoch,iter,test_accuracy,network_ad\n";
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        if (cells.size() != 5) throw InputError("epochs.csv row " + std::to_string(row) + ": expected 5 fields");
        acc << cells[1] << ',' << cells[0] << ',' << cells[3] << ',' << cells[4] << '\n';
    }
    const fs::path p = plot / "accuracy.csv";
    write_file(p, acc.str());
    written.push_back(p.string());
    return written;
}

} // namespace adq
