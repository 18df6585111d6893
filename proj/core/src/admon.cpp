#include "adq/admon.hpp"

#include "adq/error.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace adq {

std::uint64_t count_positive(const Tensor& activations)
{
    return static_cast<std::uint64_t>(
        std::count_if(activations.values().begin(), activations.values().end(), [](double v) { return v > 0.0; }));
}

void ADHistory::record(int layer_id, int epoch, const Tensor& activations)
{
    record_counts(layer_id, epoch, count_positive(activations), activations.size());
}

void ADHistory::record_counts(int layer_id, int epoch, std::uint64_t nonzero, std::uint64_t total)
{
    if (nonzero > total) throw InputError("nonzero count exceeds total");
    auto& s = series_[layer_id];
    if (!s.empty() && s.back().epoch == epoch) {
        s.back().nonzero += nonzero;
        s.back().total += total;
        return;
    }
    if (!s.empty() && s.back().epoch > epoch)
        throw InputError("AD record for layer " + std::to_string(layer_id) + " epoch " + std::to_string(epoch) +
                         " arrives after epoch " + std::to_string(s.back().epoch));
    s.push_back({layer_id, epoch, nonzero, total});
}

const ADRecord& ADHistory::at(int layer_id, int epoch) const
{
    auto it = series_.find(layer_id);
    if (it != series_.end()) {
        auto r = std::find_if(it->second.begin(), it->second.end(), [&](const ADRecord& x) { return x.epoch == epoch; });
        if (r != it->second.end()) return *r;
    }
    throw LookupError("no AD record for layer " + std::to_string(layer_id) + " at epoch " + std::to_string(epoch));
}

bool ADHistory::has(int layer_id, int epoch) const
{
    auto it = series_.find(layer_id);
    if (it == series_.end()) return false;
    return std::any_of(it->second.begin(), it->second.end(), [&](const ADRecord& x) { return x.epoch == epoch; });
}

double ADHistory::layer_ad(int layer_id, int epoch) const
{
    const auto& r = at(layer_id, epoch);
    if (r.total == 0) throw LookupError("AD record for layer " + std::to_string(layer_id) + " has no activations");
    return r.ad();
}

double ADHistory::network_ad(int epoch, NetworkADMode mode) const
{
    if (series_.empty()) throw LookupError("AD history is empty");
    std::uint64_t nz = 0, tot = 0;
    double mean = 0.0;
    for (const auto& [id, s] : series_) {
        const auto& r = at(id, epoch);
        nz += r.nonzero;
        tot += r.total;
        mean += r.ad();
    }
    if (mode == NetworkADMode::layer_mean) return mean / static_cast<double>(series_.size());
    if (tot == 0) throw LookupError("no activations recorded at epoch " + std::to_string(epoch));
    return static_cast<double>(nz) / static_cast<double>(tot);
}

bool ADHistory::layer_saturated(int layer_id, double epsilon, int window, int first_epoch) const
{
    if (window < 2) throw InputError("saturation window must be at least 2 epochs");
    auto it = series_.find(layer_id);
    if (it == series_.end()) return false;
    const auto& s = it->second;
    std::vector<double> tail;
    for (auto r = s.rbegin(); r != s.rend() && static_cast<int>(tail.size()) < window; ++r) {
        if (r->epoch < first_epoch) break;
        tail.push_back(r->ad());
    }
    if (static_cast<int>(tail.size()) < window) return false;
    const auto [lo, hi] = std::minmax_element(tail.begin(), tail.end());
    return *hi - *lo < epsilon;
}

Saturation ADHistory::saturation(double epsilon, int window, int first_epoch) const
{
    Saturation out;
    out.all = !series_.empty();
    for (const auto& [id, s] : series_) {
        const bool sat = layer_saturated(id, epsilon, window, first_epoch);
        out.per_layer[id] = sat;
        out.all = out.all && sat;
    }
    return out;
}

std::vector<int> ADHistory::layers() const
{
    std::vector<int> ids;
    for (const auto& [id, s] : series_) ids.push_back(id);
    return ids;
}

const std::vector<ADRecord>& ADHistory::series(int layer_id) const
{
    auto it = series_.find(layer_id);
    if (it == series_.end()) throw LookupError("no AD history for layer " + std::to_string(layer_id));
    return it->second;
}

std::vector<ADRecord> ADHistory::all_records() const
{
    std::vector<ADRecord> out;
    for (const auto& [id, s] : series_) out.insert(out.end(), s.begin(), s.end());
    return out;
}

std::string ADHistory::to_csv() const
{
    std::ostringstream os;
    os << "layer_id,epoch,nonzero,total,ad\n";
    char buf[64];
    for (const auto& [id, s] : series_)
        for (const auto& r : s) {
            std::snprintf(buf, sizeof buf, "%.17g", r.ad());
            os << r.layer_id << ',' << r.epoch << ',' << r.nonzero << ',' << r.total << ',' << buf << '\n';
        }
    return os.str();
}

ADHistory ADHistory::from_csv(const std::string& text)
{
    ADHistory h;
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("layer_id,epoch,nonzero,total", 0) != 0)
        throw InputError("AD history CSV: missing header");
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        int id = 0, epoch = 0;
        unsigned long long nz = 0, tot = 0;
        if (std::sscanf(line.c_str(), "%d,%d,%llu,%llu", &id, &epoch, &nz, &tot) != 4)
            throw InputError("AD history CSV: malformed line " + std::to_string(lineno));
        h.record_counts(id, epoch, nz, tot);
    }
    return h;
}

} // namespace adq
