#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace adq {

enum class LayerKind { conv2d, linear, relu, maxpool, avgpool, flatten, residual_add, batchnorm };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

/// One record of an architecture file.
///
/// Data flows from the previous layer in list order. Two exceptions:
///  - residual_add sums the previous layer's output with the output of
///    `skip_source`;
///  - any other layer with `skip_source` set reads its input from that layer
///    instead of the previous one (this is how a branch such as a ResNet
///    downsample shortcut is expressed in a flat list).
struct LayerSpec {
    int id = 0;
    LayerKind kind = LayerKind::relu;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int padding = 0;
    std::optional<int> skip_source;

    bool is_weighted() const noexcept { return kind == LayerKind::conv2d || kind == LayerKind::linear; }
    bool operator==(const LayerSpec&) const = default;
};

/// Per-sample activation shape: {C, H, W} for feature maps, {F} after flatten.
using ActShape = std::vector<int>;

struct NetworkArch {
    std::string name;
    std::vector<LayerSpec> layers;
    std::array<int, 3> input_shape{1, 1, 1};
    int num_classes = 1;

    const LayerSpec& layer(int id) const { return layers.at(static_cast<std::size_t>(id)); }
    int size() const noexcept { return static_cast<int>(layers.size()); }
    bool operator==(const NetworkArch&) const = default;
};

// ---- topology -------------------------------------------------------------

/// Producer of a non-add layer's input (-1 is the network input). For
/// residual_add this is the main-path operand.
int input_of(const NetworkArch& arch, int id);

/// Number of layers reading the output of `id` (the network output counts once).
int consumer_count(const NetworkArch& arch, int id);

/// conv2d and linear layers in list order.
std::vector<int> weighted_layers(const NetworkArch& arch);

/// Layers lying strictly inside the skip branch of a residual_add, from the
/// add backwards (e.g. a shortcut conv and its batchnorm). Empty for identity skips.
std::vector<int> skip_branch_layers(const NetworkArch& arch, int add_id);

/// Weighted layers that sit on some skip branch.
std::vector<int> skip_weighted_layers(const NetworkArch& arch);

/// Weighted layers not on any skip branch, in order. These are the layers the
/// published per-layer lists enumerate.
std::vector<int> main_weighted_layers(const NetworkArch& arch);

/// The weighted layer whose output reaches `id` along the main path, or
/// nullopt if there is none (e.g. a pool directly on the input).
std::optional<int> owner_of(const NetworkArch& arch, int id);

/// Destination layer of a residual_add: the main-path weighted layer whose
/// output it merges with the skip branch.
int skip_destination(const NetworkArch& arch, int add_id);

/// First weighted layer and final linear layer.
std::vector<int> default_exempt_layers(const NetworkArch& arch);

// ---- shapes ---------------------------------------------------------------

/// Output shape of every layer. Throws ConfigError naming the first layer whose
/// declared channels or geometry disagree with its input.
std::vector<ActShape> infer_shapes(const NetworkArch& arch);

/// Input shape of layer `id` given the inferred outputs.
ActShape input_shape_of(const NetworkArch& arch, const std::vector<ActShape>& outs, int id);

/// Validate ids, kinds, skip edges and shapes.
void validate(const NetworkArch& arch);

/// Copy of `arch` with conv output channels replaced and every downstream
/// in_channels / batchnorm width re-derived. Keys are conv layer ids.
NetworkArch with_channels(const NetworkArch& arch, const std::map<int, int>& conv_out_channels);

/// Copy of `arch` with the given layers erased and ids renumbered. Removed
/// layers must preserve shape (a same-padded stride-1 conv with I == O, or a
/// batchnorm/relu). Returns the new arch and the old->new id map.
std::pair<NetworkArch, std::map<int, int>> remove_layers(const NetworkArch& arch, const std::vector<int>& ids);

/// Stable 64-bit FNV-1a digest of the canonical JSON form.
std::uint64_t arch_hash(const NetworkArch& arch);

// ---- serialization ---------------------------------------------------------

std::string arch_to_json(const NetworkArch& arch);
NetworkArch arch_from_json(const std::string& text);
NetworkArch load_arch(const std::string& path);
void save_arch(const NetworkArch& arch, const std::string& path);

// ---- builders -------------------------------------------------------------

/// VGG19 with batchnorm: 16 3x3 convs in the 64-64-M-128-128-M-256x4-M-512x4-M-512x4-M
/// pattern and a single linear classifier.
NetworkArch make_vgg19(std::array<int, 3> input_shape, int num_classes);

/// ResNet18 (basic blocks, 3x3 stem without max-pool, 1x1 downsample shortcuts,
/// global average pool, linear classifier).
NetworkArch make_resnet18(std::array<int, 3> input_shape, int num_classes);

/// Four conv-bn-relu stages with two max-pools and a linear head.
NetworkArch make_toy_cnn(std::array<int, 3> input_shape, int num_classes, std::array<int, 4> widths = {8, 16, 16, 16});

/// Builder lookup by name ("vgg19", "resnet18", "toy4conv").
NetworkArch make_builtin(std::string_view name, std::array<int, 3> input_shape, int num_classes);

} // namespace adq
