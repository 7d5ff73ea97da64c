#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "catseq/numcore.hpp"

namespace catseq {

inline nlohmann::json params_to_json(const ParamStore& params) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : params)
        arr.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"data", p.value.values()}});
    return arr;
}

/// Loads values into an already-built store; names, order and shapes must match.
inline void params_from_json(ParamStore& params, const nlohmann::json& arr) {
    if (!arr.is_array() || arr.size() != params.size())
        throw std::runtime_error("params: expected " + std::to_string(params.size()) + " tensors");
    for (ParamId id = 0; id < params.size(); ++id) {
        const auto& entry = arr[id];
        const auto name = entry.at("name").get<std::string>();
        if (name != params[id].name)
            throw std::runtime_error("params: expected '" + params[id].name + "', found '" + name + "'");
        Tensor t(entry.at("shape").get<std::vector<std::size_t>>(), entry.at("data").get<std::vector<double>>());
        if (!t.same_shape(params[id].value))
            throw std::runtime_error("params: shape mismatch for '" + name + "': file has " + t.shape_string() +
                                     ", model expects " + params[id].value.shape_string());
        if (!t.all_finite()) throw std::runtime_error("params: non-finite values in '" + name + "'");
        params.assign(id, t);
    }
}

inline void save_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << j.dump() << '\n';
}

inline nlohmann::json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

}  // namespace catseq
