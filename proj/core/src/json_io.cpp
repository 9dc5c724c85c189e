#include "mcuq/json_io.hpp"

#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "mcuq/errors.hpp"

namespace mcuq {

namespace {

using nlohmann::json;

Matrix matrix_from_json(const json& rows, const char* what) {
    if (!rows.is_array() || rows.empty())
        throw InvalidModel(std::string(what) + " must be a nonempty array of rows");
    const size_t n_cols = rows.front().is_array() ? rows.front().size() : 0;
    if (n_cols == 0) throw InvalidModel(std::string(what) + " rows must be nonempty arrays");
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n_cols));
    for (size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].is_array() || rows[i].size() != n_cols)
            throw InvalidModel(std::string(what) + " rows must have equal lengths");
        for (size_t j = 0; j < n_cols; ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rows[i][j].get<double>();
    }
    return out;
}

Vector vector_from_json(const json& entries, const char* what) {
    if (!entries.is_array() || entries.empty())
        throw InvalidModel(std::string(what) + " must be a nonempty array");
    Vector out(static_cast<Eigen::Index>(entries.size()));
    for (size_t i = 0; i < entries.size(); ++i)
        out[static_cast<Eigen::Index>(i)] = entries[i].get<double>();
    return out;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_to_json(const Vector& v) {
    json entries = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) entries.push_back(v[i]);
    return entries;
}

ChainModel chain_from_parsed(const json& doc) {
    if (!doc.contains("kernel")) throw InvalidModel("chain spec needs a \"kernel\" field");
    const Matrix kernel = matrix_from_json(doc.at("kernel"), "kernel");
    double density_p = 0.0;
    bool density_p_inf = true;
    if (doc.contains("density_p") && !doc.at("density_p").is_null()) {
        const json& p = doc.at("density_p");
        if (p.is_string()) {
            if (p.get<std::string>() != "inf")
                throw InvalidModel("density_p must be a number > 1 or \"inf\"");
        } else {
            density_p = p.get<double>();
            density_p_inf = false;
        }
    }
    if (doc.contains("initial") && !doc.at("initial").is_null()) {
        const Vector initial = vector_from_json(doc.at("initial"), "initial");
        return build_chain(kernel, initial, density_p, density_p_inf);
    }
    return build_chain(kernel, density_p, density_p_inf);
}

json parse_document(const std::string& text) {
    json doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    if (!doc.is_object()) throw InvalidModel("top-level JSON must be an object");
    return doc;
}

} // namespace

ChainModel chain_from_json(const std::string& json_text) {
    return chain_from_parsed(parse_document(json_text));
}

ChainModel chain_from_file(const std::string& path) {
    return chain_from_json(read_text_file(path));
}

MrpModel mrp_from_json(const std::string& json_text) {
    const json doc = parse_document(json_text);
    if (!doc.contains("chain")) throw InvalidModel("MRP spec needs a \"chain\" field");
    const ChainModel chain = chain_from_parsed(doc.at("chain"));
    const Matrix features = matrix_from_json(doc.at("features"), "features");
    const Vector rewards = vector_from_json(doc.at("rewards"), "rewards");
    const double gamma = doc.at("gamma").get<double>();
    return build_mrp(chain, features, rewards, gamma);
}

MrpModel mrp_from_file(const std::string& path) {
    return mrp_from_json(read_text_file(path));
}

std::string chain_analysis_json(const ChainModel& model,
                                const std::vector<double>& tmix_eps) {
    json doc;
    doc["schema"] = 1;
    doc["stationary"] = vector_to_json(model.stationary);
    doc["lambda"] = model.lambda;
    doc["m"] = model.mixing.coeff;
    doc["rho"] = model.mixing.rate;
    doc["density_norm"] = model.density_norm;
    json tmix = json::object();
    for (double eps : tmix_eps) tmix[fmt::format("{}", eps)] = mixing_time(model, eps);
    doc["tmix"] = std::move(tmix);
    return doc.dump(2) + "\n";
}

std::string covariance_set_json(const CovarianceSet& set) {
    json doc;
    doc["schema"] = 1;
    doc["gamma_tilde"] = matrix_to_json(set.gamma.gamma);
    doc["lambda_star"] = matrix_to_json(set.lambda_star_mat);
    doc["lyap_X"] = matrix_to_json(set.lyap_x);
    doc["truncation_K"] = set.gamma.truncation_k;
    doc["eta0"] = set.eta0;
    doc["alpha"] = set.alpha;
    json lambda_t = json::object();
    for (size_t i = 0; i < set.horizons.size(); ++i)
        lambda_t[std::to_string(set.horizons[i])] = matrix_to_json(set.lambda_T[i]);
    doc["lambda_T"] = std::move(lambda_t);
    return doc.dump(2) + "\n";
}

uint64_t config_hash(const std::string& json_text) {
    // nlohmann objects keep keys sorted, so parse + dump canonicalizes the
    // document before hashing (FNV-1a, 64-bit).
    const std::string canonical = json::parse(json_text).dump();
    uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical) {
        hash ^= static_cast<uint64_t>(c);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

void atomic_write_text(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path temp = target;
    temp += ".tmp";
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open temp file for " + path);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("short write to temp file for " + path);
    }
    fs::rename(temp, target);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_double(double x) { return fmt::format("{}", x); }

} // namespace mcuq
