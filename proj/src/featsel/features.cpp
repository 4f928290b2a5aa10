#include "lvdiag/featsel.hpp"

#include <json.hpp>

#include <fstream>

namespace lvdiag::featsel {

std::string method_name(Method m) {
    switch (m) {
    case Method::none: return "NONE";
    case Method::fsr: return "FSR";
    case Method::fsl: return "FSL";
    }
    return "?";
}

Method parse_method(const std::string& s) {
    if (s == "NONE" || s == "none") return Method::none;
    if (s == "FSR" || s == "fsr") return Method::fsr;
    if (s == "FSL" || s == "fsl") return Method::fsl;
    throw std::invalid_argument("unknown selection method '" + s + "' (expected NONE, FSR or FSL)");
}

std::string pooling_name(Pooling p) { return p == Pooling::none ? "none" : "temporal-mean"; }

Pooling parse_pooling(const std::string& s) {
    if (s == "none") return Pooling::none;
    if (s == "temporal-mean") return Pooling::temporal_mean;
    throw std::invalid_argument("unknown pooling '" + s + "' (expected none or temporal-mean)");
}

std::vector<double> flatten_features(const Tensor& features, Pooling pooling) {
    if (features.rank() != 4) throw ShapeError("flatten_features: expected (C,T,H,W), got " + shape_str(features.shape()));
    if (pooling == Pooling::none) return {features.data().begin(), features.data().end()};
    const std::size_t C = features.dim(0), T = features.dim(1), HW = features.dim(2) * features.dim(3);
    std::vector<double> out(C * HW, 0.0);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < HW; ++i) out[c * HW + i] += features[(c * T + t) * HW + i];
    for (double& v : out) v /= double(T);
    return out;
}

std::vector<std::size_t> kernel_feature_indices(const std::vector<std::size_t>& kernels, std::size_t per_kernel) {
    std::vector<std::size_t> out;
    out.reserve(kernels.size() * per_kernel);
    for (std::size_t k : kernels)
        for (std::size_t i = 0; i < per_kernel; ++i) out.push_back(k * per_kernel + i);
    return out;
}

Tensor select_columns(const Tensor& X, const std::vector<std::size_t>& columns) {
    if (X.rank() != 2) throw ShapeError("select_columns: expected (n,p), got " + shape_str(X.shape()));
    if (columns.empty()) throw std::invalid_argument("select_columns: no columns selected");
    const std::size_t n = X.dim(0), p = X.dim(1);
    Tensor out({n, columns.size()});
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (columns[j] >= p)
            throw std::out_of_range("select_columns: column " + std::to_string(columns[j]) + " of " + std::to_string(p));
        for (std::size_t i = 0; i < n; ++i) out[i * columns.size() + j] = X[i * p + columns[j]];
    }
    return out;
}

void write_selection(const std::filesystem::path& path, const SelectionResult& s) {
    nlohmann::ordered_json j;
    j["method"] = method_name(s.method);
    j["fold"] = s.fold;
    j["universe"] = s.universe;
    j["indices"] = s.indices;
    j["alpha"] = s.alpha ? nlohmann::ordered_json(*s.alpha) : nlohmann::ordered_json(nullptr);
    j["reduction_ratio"] = s.reduction_ratio;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("selection: cannot write " + path.string());
    os << j.dump(2) << '\n';
}

SelectionResult read_selection(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("selection: cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(is);
        SelectionResult s;
        s.method = parse_method(j.at("method").get<std::string>());
        s.fold = j.value("fold", "");
        s.universe = j.at("universe").get<std::size_t>();
        s.indices = j.at("indices").get<std::vector<std::size_t>>();
        if (!j.at("alpha").is_null()) s.alpha = j.at("alpha").get<double>();
        s.reduction_ratio = j.at("reduction_ratio").get<double>();
        for (std::size_t i : s.indices)
            if (i >= s.universe) throw std::runtime_error("selection: index " + std::to_string(i) + " out of range");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("selection: malformed " + path.string() + ": " + e.what());
    }
}

} // namespace lvdiag::featsel
