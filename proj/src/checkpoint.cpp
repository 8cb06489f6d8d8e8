#include "slimda/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "slimda/error.hpp"

namespace slimda {

namespace {

constexpr const char* kFormat = "slimda-checkpoint-v1";

const nlohmann::json& field(const nlohmann::json& j, const char* name, const std::string& where) {
    if (!j.is_object() || !j.contains(name)) {
        throw ConfigError("missing field '" + std::string(name) + "' in " + where);
    }
    return j.at(name);
}

std::size_t positive_size(const nlohmann::json& j, const char* name, const std::string& where) {
    const auto& v = field(j, name, where);
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0) {
        throw ConfigError("field '" + std::string(name) + "' in " + where + " must be a positive integer");
    }
    return v.get<std::size_t>();
}

} // namespace

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_tensor_json(std::ostream& os, const Tensor& t) {
    auto write_row = [&](std::span<const double> row) {
        os << '[';
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) os << ',';
            os << format_real(row[i]);
        }
        os << ']';
    };
    if (t.rank() == 1) {
        write_row(t.data());
        return;
    }
    os << '[';
    for (std::size_t r = 0; r < t.rows(); ++r) {
        if (r) os << ',';
        write_row(t.row(r));
    }
    os << ']';
}

Tensor tensor_from_json(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw IoError(what + ": expected a non-empty array");
    try {
        if (j.front().is_array()) {
            const std::size_t rows = j.size();
            const std::size_t cols = j.front().size();
            std::vector<double> data;
            data.reserve(rows * cols);
            for (const auto& row : j) {
                if (!row.is_array() || row.size() != cols) throw IoError(what + ": ragged matrix");
                for (const auto& v : row) data.push_back(v.get<double>());
            }
            return Tensor({rows, cols}, std::move(data));
        }
        std::vector<double> data;
        data.reserve(j.size());
        for (const auto& v : j) data.push_back(v.get<double>());
        const std::size_t n = data.size();
        return Tensor({n}, std::move(data));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(what + ": " + e.what());
    } catch (const ConfigError& e) {
        throw IoError(what + ": " + e.what());
    }
}

nlohmann::json architecture_to_json(const Architecture& arch) {
    return {{"input_dim", arch.input_dim},
            {"block_max_widths", arch.block_max_widths},
            {"layers_per_block", arch.layers_per_block},
            {"class_count", arch.class_count}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
    const std::string where = "architecture";
    Architecture a;
    a.input_dim = positive_size(j, "input_dim", where);
    a.layers_per_block = positive_size(j, "layers_per_block", where);
    a.class_count = positive_size(j, "class_count", where);
    const auto& widths = field(j, "block_max_widths", where);
    if (!widths.is_array() || widths.empty()) {
        throw ConfigError("field 'block_max_widths' in architecture must be a non-empty list");
    }
    a.block_max_widths.clear();
    for (const auto& w : widths) {
        if (!w.is_number_unsigned() || w.get<std::uint64_t>() == 0) {
            throw ConfigError("field 'block_max_widths' in architecture must hold positive integers");
        }
        a.block_max_widths.push_back(w.get<std::size_t>());
    }
    a.validate();
    return a;
}

std::string checkpoint_to_string(const ParamStore& store, const CheckpointMeta& meta) {
    std::ostringstream os;
    os << "{\"format\":\"" << kFormat << "\",\n";
    os << "\"architecture\":" << architecture_to_json(store.architecture()).dump() << ",\n";
    os << "\"seed\":" << meta.seed << ",\n\"step\":" << meta.step << ",\n";
    os << "\"mode\":" << nlohmann::json(meta.mode).dump() << ",\n";
    os << "\"deploy_head\":\""
       << (meta.deploy_head == DeployHead::Auxiliary ? "auxiliary" : "bi_average") << "\",\n";
    os << "\"parameters\":{";
    for (std::size_t id = 0; id < store.size(); ++id) {
        os << (id ? ",\n" : "\n") << nlohmann::json(store.name(id)).dump() << ':';
        write_tensor_json(os, store.value(id));
    }
    os << "}}\n";
    return os.str();
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const CheckpointMeta& meta) {
    write_file_atomic(path, checkpoint_to_string(store, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != kFormat) {
        throw IoError("checkpoint " + path.string() + " has an unknown format");
    }
    Architecture arch;
    try {
        arch = architecture_from_json(doc.at("architecture"));
    } catch (const std::exception& e) {
        throw IoError("checkpoint " + path.string() + ": " + e.what());
    }
    Checkpoint ck{ParamStore::zeros(arch), {}};
    try {
        ck.meta.seed = doc.at("seed").get<std::uint64_t>();
        ck.meta.step = doc.at("step").get<std::uint64_t>();
        ck.meta.mode = doc.at("mode").get<std::string>();
        ck.meta.deploy_head = doc.at("deploy_head").get<std::string>() == "auxiliary"
                                  ? DeployHead::Auxiliary
                                  : DeployHead::BiAverage;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint " + path.string() + ": " + e.what());
    }
    if (!doc.contains("parameters") || !doc["parameters"].is_object()) {
        throw IoError("checkpoint " + path.string() + " has no parameter table");
    }
    const auto& params = doc["parameters"];
    for (std::size_t id = 0; id < ck.store.size(); ++id) {
        const std::string& name = ck.store.name(id);
        if (!params.contains(name)) throw IoError("checkpoint is missing parameter '" + name + "'");
        Tensor t = tensor_from_json(params.at(name), name);
        if (t.shape() != ck.store.value(id).shape()) {
            throw IoError("checkpoint parameter '" + name + "' has shape " + shape_string(t.shape()) +
                          ", expected " + shape_string(ck.store.value(id).shape()));
        }
        ck.store.value(id) = std::move(t);
    }
    return ck;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    const std::filesystem::path tmp = path.string() + ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << contents;
        if (!out.flush()) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " to " + path.string());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace slimda
