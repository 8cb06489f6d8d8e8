#include "slimda/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "slimda/checkpoint.hpp"
#include "slimda/error.hpp"

namespace slimda {

namespace {

constexpr const char* kFormat = "slimda-dataset-v1";

// Gaussian generator layout.
constexpr std::size_t kSignalDim = 3;
constexpr std::size_t kClustersPerClass = 3;
constexpr double kCenterSpread = 3.0;
// Moons are scaled so the arcs have radius kMoonScale.
constexpr double kMoonScale = 2.0;

// Columns of a random orthonormal d x d basis (modified Gram-Schmidt).
std::vector<std::vector<double>> random_basis(std::size_t d, Rng& rng) {
    std::vector<std::vector<double>> q;
    while (q.size() < d) {
        std::vector<double> v(d);
        for (auto& x : v) x = standard_normal(rng);
        for (const auto& u : q) {
            const double p = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
            for (std::size_t i = 0; i < d; ++i) v[i] -= p * u[i];
        }
        const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (norm < 1e-8) continue;
        for (auto& x : v) x /= norm;
        q.push_back(std::move(v));
    }
    return q;
}

struct Structure {
    std::vector<std::vector<double>> basis;
    // centres[class][cluster] in latent coordinates (kSignalDim entries).
    std::vector<std::vector<std::vector<double>>> centres;
    std::vector<double> shift_direction;  // unit vector in data space
};

Structure make_structure(const DatasetSpec& spec) {
    Rng rng = make_stream(spec.seed, "structure");
    Structure s;
    s.basis = random_basis(spec.dim, rng);
    if (spec.generator == Generator::Gaussian) {
        const std::size_t latent = std::min(kSignalDim, spec.dim);
        s.centres.resize(spec.class_count);
        for (auto& cls : s.centres) {
            cls.resize(kClustersPerClass);
            for (auto& c : cls) {
                c.resize(latent);
                for (auto& x : c) x = kCenterSpread * (2.0 * uniform01(rng) - 1.0);
            }
        }
    }
    // Translation direction: a random unit vector in the signal plane.
    const double phi = 2.0 * std::numbers::pi * uniform01(rng);
    s.shift_direction.assign(spec.dim, 0.0);
    for (std::size_t i = 0; i < spec.dim; ++i) {
        s.shift_direction[i] = std::cos(phi) * s.basis[0][i] + std::sin(phi) * s.basis[1][i];
    }
    return s;
}

// Balanced labels: exact round-robin counts, then shuffled.
std::vector<int> balanced_labels(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % k);
    std::shuffle(y.begin(), y.end(), rng);
    return y;
}

Tensor sample_domain(const DatasetSpec& spec, const Structure& s, const std::vector<int>& labels,
                     Rng& rng) {
    const std::size_t d = spec.dim;
    const double sigma = spec.shift.noise_std;
    Tensor x = Tensor::matrix(labels.size(), d);
    std::vector<double> latent(d);
    for (std::size_t r = 0; r < labels.size(); ++r) {
        std::fill(latent.begin(), latent.end(), 0.0);
        const auto cls = static_cast<std::size_t>(labels[r]);
        if (spec.generator == Generator::Gaussian) {
            const auto& c = s.centres[cls][uniform_index(rng, 0, kClustersPerClass - 1)];
            std::copy(c.begin(), c.end(), latent.begin());
        } else {
            const double t = std::numbers::pi * uniform01(rng);
            if (cls == 0) {
                latent[0] = std::cos(t) - 0.5;
                latent[1] = std::sin(t) - 0.25;
            } else {
                latent[0] = 0.5 - std::cos(t);
                latent[1] = 0.25 - std::sin(t);
            }
            latent[0] *= kMoonScale;
            latent[1] *= kMoonScale;
        }
        for (auto& v : latent) v += sigma * standard_normal(rng);
        auto row = x.row(r);
        for (std::size_t j = 0; j < d; ++j) {
            const auto& q = s.basis[j];
            for (std::size_t i = 0; i < d; ++i) row[i] += latent[j] * q[i];
        }
    }
    return x;
}

void rotate_in_signal_plane(Tensor& x, const Structure& s, double angle) {
    const auto& q0 = s.basis[0];
    const auto& q1 = s.basis[1];
    const double c = std::cos(angle), sn = std::sin(angle);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        const double a = std::inner_product(row.begin(), row.end(), q0.begin(), 0.0);
        const double b = std::inner_product(row.begin(), row.end(), q1.begin(), 0.0);
        const double da = (c * a - sn * b) - a;
        const double db = (sn * a + c * b) - b;
        for (std::size_t i = 0; i < row.size(); ++i) row[i] += da * q0[i] + db * q1[i];
    }
}

void translate(Tensor& x, const Structure& s, double length) {
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        for (std::size_t i = 0; i < row.size(); ++i) row[i] += length * s.shift_direction[i];
    }
}

void scale(Tensor& x, double factor) {
    for (auto& v : x.data()) v *= factor;
}

void apply_shift(Tensor& x, const DatasetSpec& spec, const Structure& s) {
    const double m = spec.shift.magnitude;
    const double spread = std::max(spec.shift.noise_std, 1e-3);
    switch (spec.shift.kind) {
        case ShiftKind::Rotation: rotate_in_signal_plane(x, s, m); break;
        case ShiftKind::Translation: translate(x, s, m * spread); break;
        case ShiftKind::Scaling: scale(x, 1.0 + m); break;
        case ShiftKind::Mixed:
            rotate_in_signal_plane(x, s, 0.5 * m);
            scale(x, 1.0 + 0.25 * m);
            translate(x, s, m * spread);
            break;
    }
}

void validate(const DatasetSpec& spec) {
    if (spec.class_count < 2) throw ConfigError("dataset: K must be >= 2");
    if (spec.dim < 2) throw ConfigError("dataset: d must be >= 2");
    if (spec.n_source < spec.class_count || spec.n_target < spec.class_count) {
        throw ConfigError("dataset: each domain needs at least K samples");
    }
    if (!(spec.shift.magnitude >= 0.0) || !std::isfinite(spec.shift.magnitude)) {
        throw ConfigError("dataset: shift magnitude must be finite and >= 0");
    }
    if (!(spec.shift.noise_std >= 0.0) || !std::isfinite(spec.shift.noise_std)) {
        throw ConfigError("dataset: noise_std must be finite and >= 0");
    }
    if (spec.shift.kind == ShiftKind::Scaling && spec.shift.magnitude <= -1.0) {
        throw ConfigError("dataset: scaling magnitude must exceed -1");
    }
    if (spec.generator == Generator::Moons && spec.class_count != 2) {
        throw ConfigError("dataset: the moons generator needs K = 2");
    }
}

const nlohmann::json& field(const nlohmann::json& j, const char* name) {
    if (!j.is_object() || !j.contains(name)) {
        throw ConfigError("dataset file is missing field '" + std::string(name) + "'");
    }
    return j.at(name);
}

std::vector<int> labels_from_json(const nlohmann::json& j, std::size_t k, const char* what) {
    if (!j.is_array()) throw IoError(std::string(what) + " must be a list");
    std::vector<int> y;
    y.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number_integer()) throw IoError(std::string(what) + " must hold integers");
        const int label = v.get<int>();
        if (label < 0 || static_cast<std::size_t>(label) >= k) {
            throw IoError(std::string(what) + " label out of range");
        }
        y.push_back(label);
    }
    return y;
}

} // namespace

std::string to_string(ShiftKind k) {
    switch (k) {
        case ShiftKind::Rotation: return "rotation";
        case ShiftKind::Translation: return "translation";
        case ShiftKind::Scaling: return "scaling";
        case ShiftKind::Mixed: return "mixed";
    }
    return "unknown";
}

std::string to_string(Generator g) { return g == Generator::Gaussian ? "gaussian" : "moons"; }

ShiftKind parse_shift_kind(const std::string& s) {
    if (s == "rotation") return ShiftKind::Rotation;
    if (s == "translation") return ShiftKind::Translation;
    if (s == "scaling") return ShiftKind::Scaling;
    if (s == "mixed") return ShiftKind::Mixed;
    throw ConfigError("unknown shift kind '" + s + "'");
}

Generator parse_generator(const std::string& s) {
    if (s == "gaussian") return Generator::Gaussian;
    if (s == "moons") return Generator::Moons;
    throw ConfigError("unknown generator '" + s + "'");
}

DomainDataset::DomainDataset(DatasetSpec spec, Tensor xs, std::vector<int> ys, Tensor xt,
                             std::optional<std::vector<int>> yt_hidden, LabelAccess access)
    : spec_(std::move(spec)),
      xs_(std::move(xs)),
      ys_(std::move(ys)),
      xt_(std::move(xt)),
      yt_hidden_(std::move(yt_hidden)),
      access_(access) {
    if (xs_.rows() != ys_.size()) throw ConfigError("dataset: source rows and labels differ");
    if (xs_.cols() != spec_.dim || xt_.cols() != spec_.dim) throw ConfigError("dataset: dimension mismatch");
    if (yt_hidden_ && yt_hidden_->size() != xt_.rows()) {
        throw ConfigError("dataset: target rows and hidden labels differ");
    }
    spec_.n_source = xs_.rows();
    spec_.n_target = xt_.rows();
}

const std::vector<int>& DomainDataset::target_labels_for_evaluation() const {
    if (access_ != LabelAccess::Evaluation) {
        throw UsageError("hidden target labels requested through a training view");
    }
    if (!yt_hidden_) throw UsageError("dataset carries no hidden target labels");
    return *yt_hidden_;
}

DomainDataset DomainDataset::training_view() const {
    return DomainDataset(spec_, xs_, ys_, xt_, std::nullopt, LabelAccess::Training);
}

DomainDataset make_dataset(const DatasetSpec& spec) {
    validate(spec);
    const Structure s = make_structure(spec);
    Rng src_rng = make_stream(spec.seed, "source");
    Rng tgt_rng = make_stream(spec.seed, "target");
    std::vector<int> ys = balanced_labels(spec.n_source, spec.class_count, src_rng);
    std::vector<int> yt = balanced_labels(spec.n_target, spec.class_count, tgt_rng);
    Tensor xs = sample_domain(spec, s, ys, src_rng);
    Tensor xt = sample_domain(spec, s, yt, tgt_rng);
    apply_shift(xt, spec, s);
    return DomainDataset(spec, std::move(xs), std::move(ys), std::move(xt), std::move(yt),
                         LabelAccess::Evaluation);
}

std::vector<BatchIndices> epoch_plan(std::size_t n_source, std::size_t n_target,
                                     std::size_t batch_size, Rng& rng) {
    if (batch_size < 2) throw UsageError("batch_size must be >= 2");
    if (batch_size > n_source || batch_size > n_target) {
        throw UsageError("batch_size exceeds the size of a domain");
    }
    std::vector<std::size_t> ps(n_source), pt(n_target);
    std::iota(ps.begin(), ps.end(), std::size_t{0});
    std::iota(pt.begin(), pt.end(), std::size_t{0});
    std::shuffle(ps.begin(), ps.end(), rng);
    std::shuffle(pt.begin(), pt.end(), rng);
    const std::size_t count = (std::max(n_source, n_target) + batch_size - 1) / batch_size;
    std::vector<BatchIndices> plan(count);
    for (std::size_t b = 0; b < count; ++b) {
        plan[b].source.resize(batch_size);
        plan[b].target.resize(batch_size);
        for (std::size_t i = 0; i < batch_size; ++i) {
            const std::size_t pos = b * batch_size + i;
            plan[b].source[i] = ps[pos % n_source];
            plan[b].target[i] = pt[pos % n_target];
        }
    }
    return plan;
}

DomainBatch gather(const DomainDataset& data, const BatchIndices& idx) {
    DomainBatch b{data.xs().gather_rows(idx.source), {}, data.xt().gather_rows(idx.target)};
    b.ys.reserve(idx.source.size());
    for (std::size_t i : idx.source) b.ys.push_back(data.ys()[i]);
    return b;
}

std::vector<DomainBatch> batches(const DomainDataset& data, std::size_t batch_size, Rng& rng) {
    std::vector<DomainBatch> out;
    for (const auto& idx : epoch_plan(data.n_source(), data.n_target(), batch_size, rng)) {
        out.push_back(gather(data, idx));
    }
    return out;
}

std::string dataset_to_string(const DomainDataset& data) {
    const DatasetSpec& s = data.spec();
    std::ostringstream os;
    os << "{\"format\":\"" << kFormat << "\",\n\"spec\":{\"generator\":\"" << to_string(s.generator)
       << "\",\"kind\":\"" << to_string(s.shift.kind) << "\",\"magnitude\":" << format_real(s.shift.magnitude)
       << ",\"noise_std\":" << format_real(s.shift.noise_std) << "},\n";
    os << "\"seed\":" << s.seed << ",\n\"K\":" << s.class_count << ",\n\"d\":" << s.dim << ",\n";
    os << "\"xs\":";
    write_tensor_json(os, data.xs());
    os << ",\n\"ys\":" << nlohmann::json(data.ys()).dump() << ",\n\"xt\":";
    write_tensor_json(os, data.xt());
    if (data.has_hidden_labels()) {
        os << ",\n\"yt_hidden\":" << nlohmann::json(data.target_labels_for_evaluation()).dump();
    }
    os << "}\n";
    return os.str();
}

void save_dataset(const std::filesystem::path& path, const DomainDataset& data) {
    write_file_atomic(path, dataset_to_string(data));
}

DomainDataset load_dataset(const std::filesystem::path& path, LabelAccess access) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("dataset " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != kFormat) {
        throw IoError("dataset " + path.string() + " has an unknown format");
    }
    DatasetSpec spec;
    try {
        const auto& sj = field(doc, "spec");
        spec.generator = parse_generator(field(sj, "generator").get<std::string>());
        spec.shift.kind = parse_shift_kind(field(sj, "kind").get<std::string>());
        spec.shift.magnitude = field(sj, "magnitude").get<double>();
        spec.shift.noise_std = field(sj, "noise_std").get<double>();
        spec.seed = field(doc, "seed").get<std::uint64_t>();
        spec.class_count = field(doc, "K").get<std::size_t>();
        spec.dim = field(doc, "d").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("dataset " + path.string() + ": " + e.what());
    }
    Tensor xs = tensor_from_json(field(doc, "xs"), "xs");
    Tensor xt = tensor_from_json(field(doc, "xt"), "xt");
    std::vector<int> ys = labels_from_json(field(doc, "ys"), spec.class_count, "ys");
    std::optional<std::vector<int>> yt;
    if (access == LabelAccess::Evaluation && doc.contains("yt_hidden")) {
        yt = labels_from_json(doc.at("yt_hidden"), spec.class_count, "yt_hidden");
    }
    return DomainDataset(spec, std::move(xs), std::move(ys), std::move(xt), std::move(yt), access);
}

} // namespace slimda
