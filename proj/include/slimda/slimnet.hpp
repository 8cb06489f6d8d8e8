#pragma once

// Width-slimmable MLP backbone plus three classifier heads.
//
// Every sub-network is a view over one full-width ParamStore: block b runs
// `layers_per_block` Linear -> BatchNorm -> ReLU layers at width widths[b],
// and each layer uses the leading (in x out) corner of the shared weight
// matrix and the leading entries of bias / gamma / beta. The classifier heads
// read the leading feature_width rows of their full-width weight matrices.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slimda/autodiff.hpp"
#include "slimda/tensor.hpp"

namespace slimda {

struct Architecture {
    std::size_t input_dim = 16;
    std::vector<std::size_t> block_max_widths{64, 128, 256, 512};
    std::size_t layers_per_block = 1;
    std::size_t class_count = 4;

    /// Throws ConfigError on zero sizes or an empty block list.
    void validate() const;
    std::size_t block_count() const noexcept { return block_max_widths.size(); }
    std::size_t layer_count() const noexcept { return block_max_widths.size() * layers_per_block; }
    /// ceil(max / 8): the 1/8x-channel width of a block.
    std::size_t min_width(std::size_t block) const;
    std::size_t feature_max() const { return block_max_widths.back(); }

    bool operator==(const Architecture&) const = default;
};

/// Deployment FLOPs: 2 per multiply-add over every Linear layer at the active
/// widths, plus the auxiliary head (2 * K * feature_width). Bias, BN and ReLU
/// are not counted.
double flops(const Architecture& arch, std::span<const std::size_t> widths);

class WidthConfig {
public:
    /// Throws ConfigError unless every width lies in [min_width(b), max_width(b)].
    WidthConfig(const Architecture& arch, std::vector<std::size_t> widths);

    static WidthConfig largest(const Architecture& arch);
    static WidthConfig smallest(const Architecture& arch);

    const std::vector<std::size_t>& widths() const noexcept { return widths_; }
    std::size_t width(std::size_t block) const { return widths_.at(block); }
    std::size_t feature_width() const noexcept { return widths_.back(); }
    double flops() const noexcept { return flops_; }
    /// Semicolon-separated widths, e.g. "8;16;32;64".
    std::string to_string() const;
    static WidthConfig parse(const Architecture& arch, const std::string& text);

    bool operator==(const WidthConfig& o) const noexcept { return widths_ == o.widths_; }
    auto operator<=>(const WidthConfig& o) const noexcept { return widths_ <=> o.widths_; }

private:
    std::vector<std::size_t> widths_;
    double flops_ = 0.0;
};

enum class Head { Source, Target, Auxiliary };

/// Output heads of classify(): the three K-way heads and the 2K-way
/// domain/category head that softmaxes [source logits, target logits].
enum class ClassifyHead { Source, Target, Auxiliary, SourceTarget };

/// Which classifier produces deployment predictions.
enum class DeployHead { Auxiliary, BiAverage };

struct LayerSlots {
    ad::ParamId weight;
    ad::ParamId bias;
    ad::ParamId gamma;
    ad::ParamId beta;
    std::size_t block;
    /// Index of the block feeding this layer's input, or npos for the network input.
    std::size_t input_block;

    bool operator==(const LayerSlots&) const = default;
};

struct HeadSlots {
    ad::ParamId weight;
    ad::ParamId bias;

    bool operator==(const HeadSlots&) const = default;
};

class ParamStore {
public:
    /// He-normal weights at full fan-in, zero biases, unit gamma, zero beta.
    static ParamStore initialize(const Architecture& arch, std::uint64_t seed);
    /// Empty store with the right layout and shapes (all zeros).
    static ParamStore zeros(const Architecture& arch);

    const Architecture& architecture() const noexcept { return arch_; }
    std::vector<Tensor>& values() noexcept { return values_; }
    const std::vector<Tensor>& values() const noexcept { return values_; }
    const Tensor& value(ad::ParamId id) const { return values_.at(id); }
    Tensor& value(ad::ParamId id) { return values_.at(id); }
    const std::string& name(ad::ParamId id) const { return names_.at(id); }
    std::size_t size() const noexcept { return values_.size(); }

    const std::vector<LayerSlots>& layers() const noexcept { return layers_; }
    const HeadSlots& head(Head h) const noexcept { return heads_[static_cast<std::size_t>(h)]; }

    std::vector<ad::ParamId> extractor_ids() const;
    std::vector<ad::ParamId> head_ids(Head h) const;
    /// Source and target heads together.
    std::vector<ad::ParamId> bi_classifier_ids() const;

    bool operator==(const ParamStore&) const = default;

private:
    explicit ParamStore(const Architecture& arch);
    ad::ParamId add(std::string name, Tensor value);

    Architecture arch_;
    std::vector<Tensor> values_;
    std::vector<std::string> names_;
    std::vector<LayerSlots> layers_;
    HeadSlots heads_[3]{};
};

/// Per-layer BN running statistics at the active widths, for one WidthConfig.
struct BnStats {
    std::vector<Tensor> mean;
    std::vector<Tensor> var;
    std::size_t sample_count = 0;

    bool operator==(const BnStats&) const = default;
};

/// (config, store, optional BN statistics). Holds a reference to the store.
class SlimModel {
public:
    SlimModel(const ParamStore& store, WidthConfig config);

    const ParamStore& store() const noexcept { return *store_; }
    const Architecture& architecture() const noexcept { return store_->architecture(); }
    const WidthConfig& config() const noexcept { return config_; }
    const std::optional<BnStats>& bn() const noexcept { return bn_; }
    bool eval_ready() const noexcept { return bn_.has_value(); }
    void set_bn(BnStats stats) { bn_ = std::move(stats); }

    /// Active (in, out) widths of a layer.
    std::pair<std::size_t, std::size_t> layer_dims(std::size_t layer) const;

private:
    const ParamStore* store_;
    WidthConfig config_;
    std::optional<BnStats> bn_;
};

/// Throws ConfigError if the config was built for a different architecture.
SlimModel slice(const ParamStore& store, const WidthConfig& config);

/// Parameter groups that receive gradients inside a ModelGraph; everything
/// else is bound as a constant (stop-gradient).
struct TrainableSet {
    bool extractor = false;
    bool bi_classifier = false;
    bool auxiliary = false;

    static TrainableSet none() { return {}; }
    static TrainableSet all() { return {true, true, true}; }
};

/// Builds the forward pass of one SlimModel inside an autodiff graph.
class ModelGraph {
public:
    ModelGraph(ad::Graph& graph, const SlimModel& model, TrainableSet trainable);

    ad::Graph& graph() noexcept { return *graph_; }
    ad::Var features(ad::Var x, ad::BnMode mode);
    ad::Var logits(ad::Var features, Head head);
    /// Softmax probabilities; SourceTarget is the 2K-way head.
    ad::Var probabilities(ad::Var features, ClassifyHead head);

private:
    ad::Var bind(ad::ParamId id, bool trainable);

    ad::Graph* graph_;
    const SlimModel* model_;
    TrainableSet trainable_;
    std::vector<ad::Var> bound_;
};

/// Feature extractor output for a batch (no gradients).
Tensor forward_features(const SlimModel& model, const Tensor& x, ad::BnMode mode);
/// Head probabilities for given features (no gradients).
Tensor classify(const SlimModel& model, const Tensor& features, ClassifyHead head);
/// EVAL-mode deployment prediction: C^a softmax, or the mean of the source and target heads.
Tensor predict(const SlimModel& model, const Tensor& x, DeployHead head);

/// Recomputes BN statistics of every layer at the model's widths from
/// `data`, layer by layer, aggregating exactly over all rows (population
/// variance). Stores the result on the model and returns it.
BnStats adabn_recalibrate(SlimModel& model, const Tensor& data, std::size_t batch_size = 256);

/// Fraction of rows whose argmax matches `labels`.
double accuracy(const Tensor& probabilities, std::span<const int> labels);

} // namespace slimda
