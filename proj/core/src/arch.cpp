#include "adq/arch.hpp"

#include "adq/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace adq {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 8> kKindNames{{
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::linear, "linear"},
    {LayerKind::relu, "relu"},
    {LayerKind::maxpool, "maxpool"},
    {LayerKind::avgpool, "avgpool"},
    {LayerKind::flatten, "flatten"},
    {LayerKind::residual_add, "residual-add"},
    {LayerKind::batchnorm, "batchnorm"},
}};

std::string layer_label(const LayerSpec& l)
{
    return "layer " + std::to_string(l.id) + " (" + std::string(to_string(l.kind)) + ")";
}

std::string act_string(const ActShape& s)
{
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

int pool_stride(const LayerSpec& l)
{
    return l.stride > 0 ? l.stride : l.kernel;
}

// Shape propagation shared by infer_shapes (strict) and with_channels
// (lenient, rewriting channel fields as it goes).
std::vector<ActShape> propagate(NetworkArch& arch, bool strict)
{
    std::vector<ActShape> outs;
    outs.reserve(arch.layers.size());
    const ActShape input{arch.input_shape[0], arch.input_shape[1], arch.input_shape[2]};

    auto fail = [](const LayerSpec& l, const std::string& what) {
        throw ConfigError(layer_label(l) + ": " + what);
    };

    for (auto& l : arch.layers) {
        const int src = input_of(arch, l.id);
        const ActShape in = src < 0 ? input : outs.at(static_cast<std::size_t>(src));
        ActShape out;
        switch (l.kind) {
        case LayerKind::conv2d: {
            if (in.size() != 3) fail(l, "conv2d needs a (C, H, W) input, got " + act_string(in));
            if (strict && l.in_channels != in[0])
                fail(l, "declares in_channels " + std::to_string(l.in_channels) + " but receives " +
                            std::to_string(in[0]));
            l.in_channels = in[0];
            if (l.kernel < 1 || l.stride < 1 || l.padding < 0) fail(l, "invalid kernel/stride/padding");
            const int h = (in[1] + 2 * l.padding - l.kernel) / l.stride + 1;
            const int w = (in[2] + 2 * l.padding - l.kernel) / l.stride + 1;
            if (in[1] + 2 * l.padding < l.kernel || h < 1 || w < 1) fail(l, "kernel larger than padded input");
            out = {l.out_channels, h, w};
            break;
        }
        case LayerKind::linear:
            if (in.size() != 1) fail(l, "linear needs a flattened input, got " + act_string(in));
            if (strict && l.in_channels != in[0])
                fail(l, "declares in_channels " + std::to_string(l.in_channels) + " but receives " +
                            std::to_string(in[0]));
            l.in_channels = in[0];
            out = {l.out_channels};
            break;
        case LayerKind::batchnorm:
            if (strict && (l.in_channels != in[0] || l.out_channels != in[0]))
                fail(l, "declares " + std::to_string(l.in_channels) + " channels but receives " +
                            std::to_string(in[0]));
            l.in_channels = l.out_channels = in[0];
            out = in;
            break;
        case LayerKind::relu:
            out = in;
            break;
        case LayerKind::maxpool:
        case LayerKind::avgpool: {
            if (in.size() != 3) fail(l, "pooling needs a (C, H, W) input");
            const int s = pool_stride(l);
            if (l.kernel < 1 || l.kernel > in[1] || l.kernel > in[2]) fail(l, "pool kernel does not fit input");
            out = {in[0], (in[1] - l.kernel) / s + 1, (in[2] - l.kernel) / s + 1};
            break;
        }
        case LayerKind::flatten: {
            int f = 1;
            for (int d : in) f *= d;
            out = {f};
            break;
        }
        case LayerKind::residual_add: {
            const ActShape& skip = outs.at(static_cast<std::size_t>(*l.skip_source));
            if (skip.size() != in.size() || (strict && skip != in))
                fail(l, "skip operand " + act_string(skip) + " does not match main operand " + act_string(in));
            out = in;
            break;
        }
        }
        outs.push_back(std::move(out));
    }
    return outs;
}

} // namespace

std::string_view to_string(LayerKind kind)
{
    for (const auto& [k, n] : kKindNames)
        if (k == kind) return n;
    return "?";
}

LayerKind parse_layer_kind(std::string_view name)
{
    for (const auto& [k, n] : kKindNames)
        if (n == name) return k;
    if (name == "residual_add") return LayerKind::residual_add;
    throw ConfigError("unknown layer kind '" + std::string(name) + "'");
}

int input_of(const NetworkArch& arch, int id)
{
    const auto& l = arch.layer(id);
    if (l.kind != LayerKind::residual_add && l.skip_source) return *l.skip_source;
    return id - 1;
}

int consumer_count(const NetworkArch& arch, int id)
{
    int n = id == arch.size() - 1 ? 1 : 0;
    for (const auto& l : arch.layers) {
        if (input_of(arch, l.id) == id) ++n;
        if (l.kind == LayerKind::residual_add && l.skip_source && *l.skip_source == id) ++n;
    }
    return n;
}

std::vector<int> weighted_layers(const NetworkArch& arch)
{
    std::vector<int> ids;
    for (const auto& l : arch.layers)
        if (l.is_weighted()) ids.push_back(l.id);
    return ids;
}

std::vector<int> skip_branch_layers(const NetworkArch& arch, int add_id)
{
    const auto& add = arch.layer(add_id);
    if (add.kind != LayerKind::residual_add || !add.skip_source)
        throw ConfigError(layer_label(add) + " is not a residual-add with a skip source");
    std::vector<int> branch;
    int s = *add.skip_source;
    while (s >= 0 && consumer_count(arch, s) == 1 && arch.layer(s).kind != LayerKind::residual_add) {
        branch.push_back(s);
        s = input_of(arch, s);
    }
    return branch;
}

std::vector<int> skip_weighted_layers(const NetworkArch& arch)
{
    std::set<int> ids;
    for (const auto& l : arch.layers) {
        if (l.kind != LayerKind::residual_add) continue;
        for (int b : skip_branch_layers(arch, l.id))
            if (arch.layer(b).is_weighted()) ids.insert(b);
    }
    return {ids.begin(), ids.end()};
}

std::vector<int> main_weighted_layers(const NetworkArch& arch)
{
    const auto skip = skip_weighted_layers(arch);
    std::vector<int> ids;
    for (int id : weighted_layers(arch))
        if (!std::binary_search(skip.begin(), skip.end(), id)) ids.push_back(id);
    return ids;
}

std::optional<int> owner_of(const NetworkArch& arch, int id)
{
    int s = id;
    while (s >= 0) {
        if (arch.layer(s).is_weighted()) return s;
        s = input_of(arch, s);
    }
    return std::nullopt;
}

int skip_destination(const NetworkArch& arch, int add_id)
{
    const auto owner = owner_of(arch, add_id);
    if (!owner) throw ConfigError("residual-add " + std::to_string(add_id) + " has no weighted main-path layer");
    return *owner;
}

std::vector<int> default_exempt_layers(const NetworkArch& arch)
{
    const auto w = weighted_layers(arch);
    std::vector<int> out;
    if (w.empty()) return out;
    out.push_back(w.front());
    for (auto it = w.rbegin(); it != w.rend(); ++it) {
        if (arch.layer(*it).kind == LayerKind::linear) {
            if (*it != w.front()) out.push_back(*it);
            break;
        }
    }
    return out;
}

std::vector<ActShape> infer_shapes(const NetworkArch& arch)
{
    NetworkArch copy = arch;
    return propagate(copy, true);
}

ActShape input_shape_of(const NetworkArch& arch, const std::vector<ActShape>& outs, int id)
{
    const int src = input_of(arch, id);
    if (src < 0) return {arch.input_shape[0], arch.input_shape[1], arch.input_shape[2]};
    return outs.at(static_cast<std::size_t>(src));
}

void validate(const NetworkArch& arch)
{
    if (arch.num_classes < 1) throw ConfigError("num_classes must be positive");
    for (int d : arch.input_shape)
        if (d < 1) throw ConfigError("input_shape entries must be positive");
    if (arch.layers.empty()) throw ConfigError("architecture has no layers");
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const auto& l = arch.layers[i];
        if (l.id != static_cast<int>(i))
            throw ConfigError("layer ids must be 0..n-1 in order; found id " + std::to_string(l.id) +
                              " at position " + std::to_string(i));
        if (l.is_weighted() && (l.in_channels < 1 || l.out_channels < 1))
            throw ConfigError(layer_label(l) + ": in/out channels must be >= 1");
        if (l.kind == LayerKind::conv2d && l.kernel < 1) throw ConfigError(layer_label(l) + ": kernel must be >= 1");
        if (l.kind == LayerKind::residual_add && !l.skip_source)
            throw ConfigError(layer_label(l) + ": residual-add requires skip_source");
        if (l.skip_source && (*l.skip_source < 0 || *l.skip_source >= l.id))
            throw ConfigError(layer_label(l) + ": skip_source " + std::to_string(*l.skip_source) +
                              " must refer to an earlier layer");
    }
    const auto outs = infer_shapes(arch);
    const ActShape& last = outs.back();
    if (last.size() != 1 || last[0] != arch.num_classes)
        throw ConfigError("network output " + act_string(last) + " does not match num_classes " +
                          std::to_string(arch.num_classes));
}

NetworkArch with_channels(const NetworkArch& arch, const std::map<int, int>& conv_out_channels)
{
    NetworkArch out = arch;
    for (const auto& [id, c] : conv_out_channels) {
        if (id < 0 || id >= out.size() || out.layer(id).kind != LayerKind::conv2d)
            throw ConfigError("channel override for non-conv layer " + std::to_string(id));
        if (c < 1) throw ConfigError("channel count must be >= 1 for layer " + std::to_string(id));
        out.layers[static_cast<std::size_t>(id)].out_channels = c;
    }
    propagate(out, false);
    return out;
}

std::pair<NetworkArch, std::map<int, int>> remove_layers(const NetworkArch& arch, const std::vector<int>& ids)
{
    const auto shapes = infer_shapes(arch);
    std::set<int> drop(ids.begin(), ids.end());
    for (int id : drop) {
        if (id < 0 || id >= arch.size()) throw ConfigError("cannot remove unknown layer " + std::to_string(id));
        const auto& l = arch.layer(id);
        if (l.kind == LayerKind::residual_add || l.kind == LayerKind::flatten || l.kind == LayerKind::linear ||
            input_shape_of(arch, shapes, id) != shapes[static_cast<std::size_t>(id)])
            throw ConfigError(layer_label(l) + " cannot be removed: it changes the activation shape");
    }
    // A dropped layer forwards its own input.
    std::map<int, int> remap;
    std::vector<int> forward(static_cast<std::size_t>(arch.size()));
    int next = 0;
    for (const auto& l : arch.layers) {
        if (drop.count(l.id)) {
            const int src = input_of(arch, l.id);
            forward[static_cast<std::size_t>(l.id)] = src < 0 ? -1 : forward[static_cast<std::size_t>(src)];
        } else {
            remap[l.id] = next;
            forward[static_cast<std::size_t>(l.id)] = next++;
        }
    }
    NetworkArch out = arch;
    out.layers.clear();
    for (const auto& l : arch.layers) {
        if (drop.count(l.id)) continue;
        LayerSpec n = l;
        n.id = remap[l.id];
        const int src = input_of(arch, l.id);
        if (l.kind == LayerKind::residual_add) {
            n.skip_source = forward[static_cast<std::size_t>(*l.skip_source)];
        } else if (l.skip_source) {
            n.skip_source = forward[static_cast<std::size_t>(*l.skip_source)];
            if (*n.skip_source == n.id - 1) n.skip_source.reset();
        } else if (src >= 0 && forward[static_cast<std::size_t>(src)] != n.id - 1) {
            n.skip_source = forward[static_cast<std::size_t>(src)];
        }
        out.layers.push_back(n);
    }
    validate(out);
    return {std::move(out), std::move(remap)};
}

// ---- JSON -----------------------------------------------------------------

namespace {

json layer_to_json(const LayerSpec& l)
{
    json j;
    j["id"] = l.id;
    j["kind"] = std::string(to_string(l.kind));
    j["in_channels"] = l.in_channels;
    j["out_channels"] = l.out_channels;
    j["kernel"] = l.kernel;
    j["stride"] = l.stride;
    j["padding"] = l.padding;
    j["skip_source"] = l.skip_source ? json(*l.skip_source) : json(nullptr);
    return j;
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& where)
{
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": field '" + key + "' has the wrong type");
    }
}

} // namespace

std::string arch_to_json(const NetworkArch& arch)
{
    json j;
    j["name"] = arch.name;
    j["input_shape"] = arch.input_shape;
    j["num_classes"] = arch.num_classes;
    j["layers"] = json::array();
    for (const auto& l : arch.layers) j["layers"].push_back(layer_to_json(l));
    return j.dump(2);
}

NetworkArch arch_from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("architecture JSON parse error: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("architecture JSON must be an object");
    NetworkArch arch;
    arch.name = field_or<std::string>(j, "name", "", "architecture");
    if (!j.contains("input_shape") || !j["input_shape"].is_array() || j["input_shape"].size() != 3)
        throw ConfigError("architecture: field 'input_shape' must be [channels, height, width]");
    for (std::size_t i = 0; i < 3; ++i) arch.input_shape[i] = j["input_shape"][i].get<int>();
    if (!j.contains("num_classes")) throw ConfigError("architecture: missing field 'num_classes'");
    arch.num_classes = field_or<int>(j, "num_classes", 0, "architecture");
    if (!j.contains("layers") || !j["layers"].is_array()) throw ConfigError("architecture: missing 'layers' array");
    for (std::size_t i = 0; i < j["layers"].size(); ++i) {
        const json& r = j["layers"][i];
        const std::string where = "architecture layer record " + std::to_string(i);
        if (!r.contains("kind")) throw ConfigError(where + ": missing field 'kind'");
        LayerSpec l;
        l.id = field_or<int>(r, "id", static_cast<int>(i), where);
        l.kind = parse_layer_kind(r["kind"].get<std::string>());
        l.in_channels = field_or<int>(r, "in_channels", 0, where);
        l.out_channels = field_or<int>(r, "out_channels", 0, where);
        l.kernel = field_or<int>(r, "kernel", 0, where);
        l.stride = field_or<int>(r, "stride", 1, where);
        l.padding = field_or<int>(r, "padding", 0, where);
        if (r.contains("skip_source") && !r["skip_source"].is_null()) l.skip_source = r["skip_source"].get<int>();
        arch.layers.push_back(l);
    }
    validate(arch);
    return arch;
}

NetworkArch load_arch(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open architecture file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return arch_from_json(ss.str());
}

void save_arch(const NetworkArch& arch, const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write architecture file '" + path + "'");
    out << arch_to_json(arch) << '\n';
}

std::uint64_t arch_hash(const NetworkArch& arch)
{
    NetworkArch unnamed = arch;
    unnamed.name.clear();
    const std::string text = arch_to_json(unnamed);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---- builders -------------------------------------------------------------

namespace {

class Builder {
public:
    explicit Builder(NetworkArch& a) : arch(a) {}

    int conv(int in, int out, int k, int stride, int pad, std::optional<int> src = std::nullopt)
    {
        return push({0, LayerKind::conv2d, in, out, k, stride, pad, src});
    }
    int bn(int c) { return push({0, LayerKind::batchnorm, c, c, 0, 1, 0, std::nullopt}); }
    int relu() { return push({0, LayerKind::relu, 0, 0, 0, 1, 0, std::nullopt}); }
    int maxpool(int k) { return push({0, LayerKind::maxpool, 0, 0, k, k, 0, std::nullopt}); }
    int avgpool(int k) { return push({0, LayerKind::avgpool, 0, 0, k, k, 0, std::nullopt}); }
    int flatten() { return push({0, LayerKind::flatten, 0, 0, 0, 1, 0, std::nullopt}); }
    int linear(int in, int out) { return push({0, LayerKind::linear, in, out, 1, 1, 0, std::nullopt}); }
    int add(int skip) { return push({0, LayerKind::residual_add, 0, 0, 0, 1, 0, skip}); }
    int last() const { return arch.size() - 1; }

private:
    int push(LayerSpec l)
    {
        l.id = arch.size();
        arch.layers.push_back(l);
        return l.id;
    }
    NetworkArch& arch;
};

} // namespace

NetworkArch make_vgg19(std::array<int, 3> input_shape, int num_classes)
{
    NetworkArch arch;
    arch.name = "vgg19";
    arch.input_shape = input_shape;
    arch.num_classes = num_classes;
    Builder b(arch);
    const int cfg[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0};
    int c = input_shape[0];
    int side_h = input_shape[1];
    int side_w = input_shape[2];
    for (int v : cfg) {
        if (v == 0) {
            b.maxpool(2);
            side_h /= 2;
            side_w /= 2;
            continue;
        }
        b.conv(c, v, 3, 1, 1);
        b.bn(v);
        b.relu();
        c = v;
    }
    b.flatten();
    b.linear(c * side_h * side_w, num_classes);
    validate(arch);
    return arch;
}

NetworkArch make_resnet18(std::array<int, 3> input_shape, int num_classes)
{
    NetworkArch arch;
    arch.name = "resnet18";
    arch.input_shape = input_shape;
    arch.num_classes = num_classes;
    Builder b(arch);
    b.conv(input_shape[0], 64, 3, 1, 1);
    b.bn(64);
    int block_in = b.relu();
    int c = 64;
    int side = input_shape[1];
    const int widths[] = {64, 128, 256, 512};
    for (int stage = 0; stage < 4; ++stage) {
        for (int blk = 0; blk < 2; ++blk) {
            const int w = widths[stage];
            const int stride = (stage > 0 && blk == 0) ? 2 : 1;
            int skip = block_in;
            std::optional<int> c1_src;
            if (stride != 1 || c != w) {
                b.conv(c, w, 1, stride, 0, block_in);
                skip = b.bn(w);
                c1_src = block_in;
            }
            b.conv(c, w, 3, stride, 1, c1_src);
            b.bn(w);
            b.relu();
            b.conv(w, w, 3, 1, 1);
            b.bn(w);
            b.add(skip);
            block_in = b.relu();
            c = w;
            side = (side - 1) / stride + 1;
        }
    }
    b.avgpool(side);
    b.flatten();
    b.linear(c, num_classes);
    validate(arch);
    return arch;
}

NetworkArch make_toy_cnn(std::array<int, 3> input_shape, int num_classes, std::array<int, 4> widths)
{
    NetworkArch arch;
    arch.name = "toy4conv";
    arch.input_shape = input_shape;
    arch.num_classes = num_classes;
    Builder b(arch);
    int c = input_shape[0];
    for (int i = 0; i < 4; ++i) {
        b.conv(c, widths[static_cast<std::size_t>(i)], 3, 1, 1);
        b.bn(widths[static_cast<std::size_t>(i)]);
        b.relu();
        c = widths[static_cast<std::size_t>(i)];
        if (i == 1 || i == 3) b.maxpool(2);
    }
    b.flatten();
    b.linear(c * (input_shape[1] / 4) * (input_shape[2] / 4), num_classes);
    validate(arch);
    return arch;
}

NetworkArch make_builtin(std::string_view name, std::array<int, 3> input_shape, int num_classes)
{
    if (name == "vgg19") return make_vgg19(input_shape, num_classes);
    if (name == "resnet18") return make_resnet18(input_shape, num_classes);
    if (name == "toy4conv") return make_toy_cnn(input_shape, num_classes);
    throw ConfigError("unknown builtin architecture '" + std::string(name) + "'");
}

} // namespace adq
