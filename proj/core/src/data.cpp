#include "adq/data.hpp"

#include "adq/error.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

namespace fs = std::filesystem;

namespace adq {

namespace {

Dataset draw(const std::vector<Tensor>& prototypes, int per_class, double noise, std::mt19937_64& rng)
{
    const auto& proto_shape = prototypes.front().shape();
    const std::size_t n = prototypes.size() * static_cast<std::size_t>(per_class);
    const std::size_t sample = prototypes.front().size();
    Dataset d;
    d.num_classes = static_cast<int>(prototypes.size());
    d.images = Tensor({n, proto_shape[0], proto_shape[1], proto_shape[2]});
    d.labels.resize(n);
    std::normal_distribution<double> gauss(0.0, noise);
    // Classes interleaved so any prefix is roughly balanced.
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % prototypes.size();
        d.labels[i] = static_cast<int>(c);
        for (std::size_t j = 0; j < sample; ++j) d.images[i * sample + j] = prototypes[c][j] + gauss(rng);
    }
    return d;
}

template <class T>
std::vector<double> read_raw(const fs::path& path, std::size_t count)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() != count * sizeof(T))
        throw InputError(path.string() + ": expected " + std::to_string(count * sizeof(T)) + " bytes, found " +
                         std::to_string(bytes.size()));
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, bytes.data() + i * sizeof(T), sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
        T v;
        std::memcpy(&v, b, sizeof(T));
        out[i] = static_cast<double>(v);
    }
    return out;
}

} // namespace

DataSplit make_synthetic(const SyntheticSpec& spec)
{
    if (spec.num_classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
    if (spec.train_per_class < 1 || spec.test_per_class < 1) throw ConfigError("synthetic dataset needs samples per class");
    if (!(spec.noise >= 0.0)) throw ConfigError("synthetic noise must be non-negative");
    for (int d : spec.shape)
        if (d < 1) throw ConfigError("synthetic image shape must be positive");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Shape s{static_cast<std::size_t>(spec.shape[0]), static_cast<std::size_t>(spec.shape[1]),
                  static_cast<std::size_t>(spec.shape[2])};
    std::vector<Tensor> prototypes;
    for (int c = 0; c < spec.num_classes; ++c) {
        Tensor p(s);
        for (auto& v : p.values()) v = gauss(rng);
        prototypes.push_back(std::move(p));
    }
    DataSplit out;
    out.train = draw(prototypes, spec.train_per_class, spec.noise, rng);
    out.test = draw(prototypes, spec.test_per_class, spec.noise, rng);
    return out;
}

Dataset load_image_directory(const std::string& dir, std::array<int, 3> shape)
{
    if (!fs::is_directory(dir)) throw InputError("dataset directory not found: " + dir);
    const std::size_t sample = static_cast<std::size_t>(shape[0]) * static_cast<std::size_t>(shape[1]) *
                               static_cast<std::size_t>(shape[2]);
    std::vector<std::pair<int, fs::path>> files;
    int max_label = -1;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.empty() || !std::all_of(name.begin(), name.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
            throw InputError("class directory name is not a label: " + entry.path().string());
        const int label = std::stoi(name);
        max_label = std::max(max_label, label);
        for (const auto& f : fs::directory_iterator(entry.path())) {
            const auto ext = f.path().extension();
            if (f.is_regular_file() && (ext == ".f64" || ext == ".f32")) files.emplace_back(label, f.path());
        }
    }
    if (files.empty()) throw InputError("no .f64/.f32 images under " + dir);
    std::sort(files.begin(), files.end());
    Dataset d;
    d.num_classes = max_label + 1;
    d.images = Tensor({files.size(), static_cast<std::size_t>(shape[0]), static_cast<std::size_t>(shape[1]),
                       static_cast<std::size_t>(shape[2])});
    for (std::size_t i = 0; i < files.size(); ++i) {
        const auto& [label, path] = files[i];
        const auto px = path.extension() == ".f64" ? read_raw<double>(path, sample) : read_raw<float>(path, sample);
        std::copy(px.begin(), px.end(), d.images.values().begin() + static_cast<std::ptrdiff_t>(i * sample));
        d.labels.push_back(label);
    }
    return d;
}

DataSplit load_image_split(const std::string& root, std::array<int, 3> shape)
{
    DataSplit s{load_image_directory((fs::path(root) / "train").string(), shape),
                load_image_directory((fs::path(root) / "test").string(), shape)};
    const int classes = std::max(s.train.num_classes, s.test.num_classes);
    s.train.num_classes = s.test.num_classes = classes;
    return s;
}

} // namespace adq
