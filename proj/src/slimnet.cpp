#include "slimda/slimnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "slimda/error.hpp"
#include "slimda/kernels.hpp"
#include "slimda/rng.hpp"

namespace slimda {

namespace {

constexpr std::size_t kNetworkInput = std::numeric_limits<std::size_t>::max();

std::size_t layer_input_width(const Architecture& arch, std::span<const std::size_t> widths,
                              std::size_t block, std::size_t index_in_block) {
    if (index_in_block > 0) return widths[block];
    return block == 0 ? arch.input_dim : widths[block - 1];
}

} // namespace

void Architecture::validate() const {
    if (input_dim == 0) throw ConfigError("architecture: input_dim must be >= 1");
    if (block_max_widths.empty()) throw ConfigError("architecture: block_max_widths is empty");
    for (std::size_t w : block_max_widths) {
        if (w == 0) throw ConfigError("architecture: block widths must be >= 1");
    }
    if (layers_per_block == 0) throw ConfigError("architecture: layers_per_block must be >= 1");
    if (class_count < 2) throw ConfigError("architecture: class_count must be >= 2");
}

std::size_t Architecture::min_width(std::size_t block) const {
    const std::size_t w = block_max_widths.at(block);
    return (w + 7) / 8;
}

double flops(const Architecture& arch, std::span<const std::size_t> widths) {
    if (widths.size() != arch.block_count()) {
        throw ConfigError("flops: expected " + std::to_string(arch.block_count()) + " widths");
    }
    double total = 0.0;
    for (std::size_t b = 0; b < arch.block_count(); ++b) {
        for (std::size_t l = 0; l < arch.layers_per_block; ++l) {
            const double in = static_cast<double>(layer_input_width(arch, widths, b, l));
            total += 2.0 * in * static_cast<double>(widths[b]);
        }
    }
    total += 2.0 * static_cast<double>(arch.class_count) * static_cast<double>(widths.back());
    return total;
}

WidthConfig::WidthConfig(const Architecture& arch, std::vector<std::size_t> widths)
    : widths_(std::move(widths)) {
    if (widths_.size() != arch.block_count()) {
        throw ConfigError("width config has " + std::to_string(widths_.size()) +
                          " blocks, architecture has " + std::to_string(arch.block_count()));
    }
    for (std::size_t b = 0; b < widths_.size(); ++b) {
        if (widths_[b] < arch.min_width(b) || widths_[b] > arch.block_max_widths[b]) {
            throw ConfigError("block " + std::to_string(b) + " width " + std::to_string(widths_[b]) +
                              " outside [" + std::to_string(arch.min_width(b)) + ", " +
                              std::to_string(arch.block_max_widths[b]) + "]");
        }
    }
    flops_ = slimda::flops(arch, widths_);
}

WidthConfig WidthConfig::largest(const Architecture& arch) {
    return WidthConfig(arch, arch.block_max_widths);
}

WidthConfig WidthConfig::smallest(const Architecture& arch) {
    std::vector<std::size_t> w(arch.block_count());
    for (std::size_t b = 0; b < w.size(); ++b) w[b] = arch.min_width(b);
    return WidthConfig(arch, std::move(w));
}

std::string WidthConfig::to_string() const {
    std::string s;
    for (std::size_t b = 0; b < widths_.size(); ++b) {
        if (b) s += ';';
        s += std::to_string(widths_[b]);
    }
    return s;
}

WidthConfig WidthConfig::parse(const Architecture& arch, const std::string& text) {
    std::vector<std::size_t> w;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        try {
            std::size_t used = 0;
            const long v = std::stol(item, &used);
            if (used != item.size() || v <= 0) throw std::invalid_argument(item);
            w.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ConfigError("bad width '" + item + "' in '" + text + "'");
        }
    }
    return WidthConfig(arch, std::move(w));
}

ParamStore::ParamStore(const Architecture& arch) : arch_(arch) {
    arch_.validate();
    for (std::size_t b = 0; b < arch_.block_count(); ++b) {
        for (std::size_t l = 0; l < arch_.layers_per_block; ++l) {
            const std::size_t in = l > 0 ? arch_.block_max_widths[b]
                                         : (b == 0 ? arch_.input_dim : arch_.block_max_widths[b - 1]);
            const std::size_t out = arch_.block_max_widths[b];
            const std::string prefix = "block" + std::to_string(b) + ".layer" + std::to_string(l) + ".";
            LayerSlots slots{};
            slots.weight = add(prefix + "weight", Tensor::matrix(in, out));
            slots.bias = add(prefix + "bias", Tensor({out}));
            slots.gamma = add(prefix + "bn_gamma", Tensor({out}));
            slots.beta = add(prefix + "bn_beta", Tensor({out}));
            slots.block = b;
            slots.input_block = l > 0 ? b : (b == 0 ? kNetworkInput : b - 1);
            layers_.push_back(slots);
        }
    }
    const char* head_names[] = {"head_source.", "head_target.", "head_aux."};
    for (std::size_t h = 0; h < 3; ++h) {
        heads_[h].weight = add(std::string(head_names[h]) + "weight",
                               Tensor::matrix(arch_.feature_max(), arch_.class_count));
        heads_[h].bias = add(std::string(head_names[h]) + "bias", Tensor({arch_.class_count}));
    }
}

ad::ParamId ParamStore::add(std::string name, Tensor value) {
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return values_.size() - 1;
}

ParamStore ParamStore::zeros(const Architecture& arch) { return ParamStore(arch); }

ParamStore ParamStore::initialize(const Architecture& arch, std::uint64_t seed) {
    ParamStore store(arch);
    Rng rng = make_stream(seed, "init");
    for (const LayerSlots& l : store.layers_) {
        Tensor& w = store.values_[l.weight];
        const double std_dev = std::sqrt(2.0 / static_cast<double>(w.rows()));
        for (auto& v : w.data()) v = std_dev * standard_normal(rng);
        store.values_[l.gamma].fill(1.0);
    }
    for (const HeadSlots& h : store.heads_) {
        Tensor& w = store.values_[h.weight];
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(w.rows()));
        for (auto& v : w.data()) v = std_dev * standard_normal(rng);
    }
    return store;
}

std::vector<ad::ParamId> ParamStore::extractor_ids() const {
    std::vector<ad::ParamId> ids;
    for (const LayerSlots& l : layers_) ids.insert(ids.end(), {l.weight, l.bias, l.gamma, l.beta});
    return ids;
}

std::vector<ad::ParamId> ParamStore::head_ids(Head h) const {
    const HeadSlots& s = head(h);
    return {s.weight, s.bias};
}

std::vector<ad::ParamId> ParamStore::bi_classifier_ids() const {
    auto ids = head_ids(Head::Source);
    auto t = head_ids(Head::Target);
    ids.insert(ids.end(), t.begin(), t.end());
    return ids;
}

SlimModel::SlimModel(const ParamStore& store, WidthConfig config)
    : store_(&store), config_(std::move(config)) {}

std::pair<std::size_t, std::size_t> SlimModel::layer_dims(std::size_t layer) const {
    const Architecture& arch = architecture();
    const std::size_t b = layer / arch.layers_per_block;
    const std::size_t l = layer % arch.layers_per_block;
    return {layer_input_width(arch, config_.widths(), b, l), config_.width(b)};
}

SlimModel slice(const ParamStore& store, const WidthConfig& config) {
    // Re-validate against this store's architecture.
    WidthConfig checked(store.architecture(), config.widths());
    return SlimModel(store, std::move(checked));
}

ModelGraph::ModelGraph(ad::Graph& graph, const SlimModel& model, TrainableSet trainable)
    : graph_(&graph), model_(&model), trainable_(trainable), bound_(model.store().size()) {}

ad::Var ModelGraph::bind(ad::ParamId id, bool trainable) {
    ad::Var& v = bound_.at(id);
    if (!v.valid()) {
        const Tensor& t = model_->store().value(id);
        v = trainable ? graph_->parameter(id, t) : graph_->constant_ref(t);
    }
    return v;
}

namespace {

ad::Var leading(ad::Graph& g, ad::Var full, std::size_t rows, std::size_t cols) {
    const Tensor& t = g.value(full);
    if (t.rows() == rows && t.cols() == cols) return full;
    return g.slice(full, 0, rows, 0, cols);
}

} // namespace

ad::Var ModelGraph::features(ad::Var x, ad::BnMode mode) {
    const Architecture& arch = model_->architecture();
    if (graph_->value(x).cols() != arch.input_dim) {
        throw ConfigError("input has " + std::to_string(graph_->value(x).cols()) +
                          " columns, architecture expects " + std::to_string(arch.input_dim));
    }
    if (mode == ad::BnMode::Eval && !model_->eval_ready()) {
        throw UsageError("EVAL forward requires BN statistics; run adabn_recalibrate first");
    }
    const auto& layers = model_->store().layers();
    ad::Var h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSlots& s = layers[i];
        const auto [in, out] = model_->layer_dims(i);
        const bool tr = trainable_.extractor;
        ad::Var w = leading(*graph_, bind(s.weight, tr), in, out);
        ad::Var b = leading(*graph_, bind(s.bias, tr), 1, out);
        ad::Var gamma = leading(*graph_, bind(s.gamma, tr), 1, out);
        ad::Var beta = leading(*graph_, bind(s.beta, tr), 1, out);
        ad::Var pre = graph_->add(graph_->matmul(h, w), b);
        const Tensor* rm = mode == ad::BnMode::Eval ? &model_->bn()->mean.at(i) : nullptr;
        const Tensor* rv = mode == ad::BnMode::Eval ? &model_->bn()->var.at(i) : nullptr;
        h = graph_->relu(graph_->batchnorm(pre, gamma, beta, mode, rm, rv));
    }
    return h;
}

ad::Var ModelGraph::logits(ad::Var features, Head head) {
    const std::size_t fw = model_->config().feature_width();
    if (graph_->value(features).cols() != fw) {
        throw ConfigError("feature width " + std::to_string(graph_->value(features).cols()) +
                          " differs from config feature width " + std::to_string(fw));
    }
    const bool tr = head == Head::Auxiliary ? trainable_.auxiliary : trainable_.bi_classifier;
    const HeadSlots& s = model_->store().head(head);
    const std::size_t k = model_->architecture().class_count;
    ad::Var w = leading(*graph_, bind(s.weight, tr), fw, k);
    ad::Var b = bind(s.bias, tr);
    return graph_->add(graph_->matmul(features, w), b);
}

ad::Var ModelGraph::probabilities(ad::Var features, ClassifyHead head) {
    switch (head) {
        case ClassifyHead::Source: return graph_->softmax(logits(features, Head::Source));
        case ClassifyHead::Target: return graph_->softmax(logits(features, Head::Target));
        case ClassifyHead::Auxiliary: return graph_->softmax(logits(features, Head::Auxiliary));
        case ClassifyHead::SourceTarget: {
            const ad::Var parts[] = {logits(features, Head::Source), logits(features, Head::Target)};
            return graph_->softmax(graph_->concat(parts, 1));
        }
    }
    throw ConfigError("unknown classifier head");
}

Tensor forward_features(const SlimModel& model, const Tensor& x, ad::BnMode mode) {
    ad::Graph g;
    ModelGraph mg(g, model, TrainableSet::none());
    return g.value(mg.features(g.constant_ref(x), mode));
}

Tensor classify(const SlimModel& model, const Tensor& features, ClassifyHead head) {
    ad::Graph g;
    ModelGraph mg(g, model, TrainableSet::none());
    return g.value(mg.probabilities(g.constant_ref(features), head));
}

Tensor predict(const SlimModel& model, const Tensor& x, DeployHead head) {
    ad::Graph g;
    ModelGraph mg(g, model, TrainableSet::none());
    ad::Var f = mg.features(g.constant_ref(x), ad::BnMode::Eval);
    if (head == DeployHead::Auxiliary) return g.value(mg.probabilities(f, ClassifyHead::Auxiliary));
    Tensor ps = g.value(mg.probabilities(f, ClassifyHead::Source));
    const Tensor& pt = g.value(mg.probabilities(f, ClassifyHead::Target));
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i] = 0.5 * (ps[i] + pt[i]);
    return ps;
}

BnStats adabn_recalibrate(SlimModel& model, const Tensor& data, std::size_t batch_size) {
    if (data.empty() || data.rank() != 2) throw UsageError("adabn_recalibrate needs non-empty target data");
    if (batch_size == 0) throw UsageError("adabn_recalibrate batch_size must be >= 1");
    const Architecture& arch = model.architecture();
    if (data.cols() != arch.input_dim) throw ConfigError("adabn_recalibrate: input width mismatch");
    const ParamStore& store = model.store();
    const std::size_t n = data.rows();
    BnStats stats;
    stats.sample_count = n;
    Tensor h = data;
    for (std::size_t i = 0; i < store.layers().size(); ++i) {
        const LayerSlots& s = store.layers()[i];
        const auto [in, out] = model.layer_dims(i);
        const Tensor w = store.value(s.weight).block(0, in, 0, out);
        const Tensor& bias = store.value(s.bias);
        Tensor pre = Tensor::matrix(n, out);
        for (std::size_t r0 = 0; r0 < n; r0 += batch_size) {
            const std::size_t r1 = std::min(n, r0 + batch_size);
            auto src = h.data().subspan(r0 * in, (r1 - r0) * in);
            auto dst = pre.data().subspan(r0 * out, (r1 - r0) * out);
            kernels::gemm_nn(r1 - r0, in, out, src, w.data(), dst);
        }
        Tensor mean({out}), var({out});
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < out; ++j) {
                pre.at(r, j) += bias[j];
                mean[j] += pre.at(r, j);
            }
        }
        for (auto& v : mean.data()) v /= static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < out; ++j) {
                const double d = pre.at(r, j) - mean[j];
                var[j] += d * d;
            }
        }
        for (auto& v : var.data()) v /= static_cast<double>(n);
        const Tensor& gamma = store.value(s.gamma);
        const Tensor& beta = store.value(s.beta);
        for (std::size_t j = 0; j < out; ++j) {
            const double inv_std = 1.0 / std::sqrt(var[j] + ad::Graph::kBnEpsilon);
            for (std::size_t r = 0; r < n; ++r) {
                const double y = gamma[j] * ((pre.at(r, j) - mean[j]) * inv_std) + beta[j];
                pre.at(r, j) = y > 0.0 ? y : 0.0;
            }
        }
        stats.mean.push_back(std::move(mean));
        stats.var.push_back(std::move(var));
        h = std::move(pre);
    }
    model.set_bn(stats);
    return stats;
}

double accuracy(const Tensor& probabilities, std::span<const int> labels) {
    if (probabilities.rows() != labels.size()) throw ConfigError("accuracy: label count mismatch");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        auto row = probabilities.row(r);
        const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        if (best == labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

} // namespace slimda
