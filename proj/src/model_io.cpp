#include "badvfl/model_io.hpp"

#include <fstream>

#include "badvfl/common.hpp"

namespace badvfl {

namespace {

std::string act_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
  }
  throw InternalError("unknown activation");
}

Activation act_from(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  throw FormatError("unknown activation '" + s + "' in model file");
}

}  // namespace

nlohmann::json mlp_to_json(const Mlp& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& L : m.layers) {
    layers.push_back({{"out", L.weights.rows},
                      {"in", L.weights.cols},
                      {"act", act_name(L.act)},
                      {"weights", L.weights.data},
                      {"bias", L.bias}});
  }
  return {{"layers", layers}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp m;
  for (const auto& lj : j.at("layers")) {
    DenseLayer L;
    int out = lj.at("out").get<int>();
    int in = lj.at("in").get<int>();
    L.weights = Matrix(out, in);
    auto w = lj.at("weights").get<std::vector<double>>();
    if (w.size() != L.weights.data.size())
      throw FormatError("model layer has " + std::to_string(w.size()) + " weights, expected " +
                        std::to_string(L.weights.data.size()));
    L.weights.data = std::move(w);
    L.bias = lj.at("bias").get<std::vector<double>>();
    if (static_cast<int>(L.bias.size()) != out)
      throw FormatError("model layer bias length mismatch");
    L.act = act_from(lj.at("act").get<std::string>());
    m.layers.push_back(std::move(L));
  }
  if (m.layers.empty()) throw FormatError("model file holds no layers");
  return m;
}

void save_models(const std::string& path, const ActiveParty& active,
                 const std::vector<PassiveParty>& parties, const nlohmann::json& meta) {
  nlohmann::json j;
  j["top"] = mlp_to_json(active.top);
  j["class_count"] = active.class_count;
  nlohmann::json bottoms = nlohmann::json::array();
  for (const auto& p : parties) bottoms.push_back(mlp_to_json(p.bottom));
  j["bottoms"] = std::move(bottoms);
  j["meta"] = meta;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  f << j.dump(1) << "\n";
}

SavedModels load_models(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read " + path);
  SavedModels out;
  try {
    nlohmann::json j;
    f >> j;
    out.top = mlp_from_json(j.at("top"));
    for (const auto& bj : j.at("bottoms")) out.bottoms.push_back(mlp_from_json(bj));
    out.meta = j.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return out;
}

}  // namespace badvfl
