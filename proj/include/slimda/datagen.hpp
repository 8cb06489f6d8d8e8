#pragma once

// Procedural two-domain classification data with a controllable covariate shift.
//
// Source samples come from a class-conditional Gaussian mixture whose
// cluster centres live in a low-dimensional signal subspace of R^d (or from
// two interleaved moons when generator == Moons, K = 2). Target samples are
// drawn from the same class-conditional process and then transformed by the
// shift: a rotation inside the signal plane, a translation, a scaling, or all
// three. Magnitude 0 leaves the target distribution equal to the source.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slimda/rng.hpp"
#include "slimda/tensor.hpp"

namespace slimda {

enum class ShiftKind { Rotation, Translation, Scaling, Mixed };
enum class Generator { Gaussian, Moons };

struct ShiftSpec {
    ShiftKind kind = ShiftKind::Mixed;
    /// Rotation angle in radians; translation length in units of the
    /// cluster spread; relative scale change.
    double magnitude = 0.6;
    double noise_std = 0.4;
};

struct DatasetSpec {
    Generator generator = Generator::Gaussian;
    ShiftSpec shift;
    std::size_t class_count = 4;
    std::size_t dim = 16;
    std::size_t n_source = 2000;
    std::size_t n_target = 2000;
    std::uint64_t seed = 0;
};

std::string to_string(ShiftKind k);
std::string to_string(Generator g);
/// Throw ConfigError on unknown names.
ShiftKind parse_shift_kind(const std::string& s);
Generator parse_generator(const std::string& s);

enum class LabelAccess { Training, Evaluation };

struct DomainBatch {
    Tensor xs;
    std::vector<int> ys;
    Tensor xt;
};

class DomainDataset {
public:
    DomainDataset(DatasetSpec spec, Tensor xs, std::vector<int> ys, Tensor xt,
                  std::optional<std::vector<int>> yt_hidden, LabelAccess access);

    const DatasetSpec& spec() const noexcept { return spec_; }
    const Tensor& xs() const noexcept { return xs_; }
    const std::vector<int>& ys() const noexcept { return ys_; }
    const Tensor& xt() const noexcept { return xt_; }
    std::size_t class_count() const noexcept { return spec_.class_count; }
    std::size_t dim() const noexcept { return spec_.dim; }
    std::size_t n_source() const noexcept { return ys_.size(); }
    std::size_t n_target() const noexcept { return xt_.rows(); }

    LabelAccess access() const noexcept { return access_; }
    bool has_hidden_labels() const noexcept { return yt_hidden_.has_value(); }
    /// Held-out target labels. Throws UsageError on a training view.
    const std::vector<int>& target_labels_for_evaluation() const;
    /// Copy without the hidden labels; safe to hand to training code.
    DomainDataset training_view() const;

private:
    DatasetSpec spec_;
    Tensor xs_;
    std::vector<int> ys_;
    Tensor xt_;
    std::optional<std::vector<int>> yt_hidden_;
    LabelAccess access_;
};

/// Deterministic under spec.seed. Throws ConfigError on infeasible parameters.
DomainDataset make_dataset(const DatasetSpec& spec);

struct BatchIndices {
    std::vector<std::size_t> source;
    std::vector<std::size_t> target;
};

/// One epoch: ceil(max(n_s, n_t) / batch_size) fixed-size batches over
/// independent permutations of each domain, wrapping around the shorter
/// permutation so every source and every target index appears at least once.
std::vector<BatchIndices> epoch_plan(std::size_t n_source, std::size_t n_target,
                                     std::size_t batch_size, Rng& rng);
DomainBatch gather(const DomainDataset& data, const BatchIndices& idx);
std::vector<DomainBatch> batches(const DomainDataset& data, std::size_t batch_size, Rng& rng);

/// JSON {format, spec, seed, K, d, xs, ys, xt, yt_hidden}.
std::string dataset_to_string(const DomainDataset& data);
void save_dataset(const std::filesystem::path& path, const DomainDataset& data);
/// In Training mode the yt_hidden section is never read.
DomainDataset load_dataset(const std::filesystem::path& path, LabelAccess access);

} // namespace slimda
