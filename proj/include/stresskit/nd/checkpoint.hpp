#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "stresskit/errors.hpp"
#include "stresskit/nd/tape.hpp"

namespace stresskit::nd {

// Self-describing JSON checkpoint: named tensors with shapes plus whatever
// metadata (seed, config hash, config) the caller attaches.

template <typename T>
nlohmann::json tensor_to_json(const Tensor<T>& t) {
    nlohmann::json j;
    j["shape"] = t.shape;
    j["data"] = t.data;
    return j;
}

template <typename T>
Tensor<T> tensor_from_json(const nlohmann::json& j) {
    std::vector<int> shape = j.at("shape").get<std::vector<int>>();
    std::vector<T> data = j.at("data").get<std::vector<T>>();
    return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
nlohmann::json params_to_json(const std::vector<Parameter<T>*>& params) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto* p : params) j[p->name] = tensor_to_json(p->value);
    return j;
}

template <typename T>
void params_from_json(const nlohmann::json& j, std::vector<Parameter<T>*>& params) {
    for (auto* p : params) {
        if (!j.contains(p->name)) throw IoError("checkpoint missing tensor " + p->name);
        Tensor<T> t = tensor_from_json<T>(j.at(p->name));
        if (t.shape != p->value.shape)
            throw ShapeError("checkpoint tensor " + p->name + " has shape " + t.shape_str() +
                             ", expected " + p->value.shape_str());
        p->value = std::move(t);
    }
}

}  // namespace stresskit::nd
