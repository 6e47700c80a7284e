#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "badvfl/nn.hpp"
#include "badvfl/protocol.hpp"

namespace badvfl {

// JSON round trip for trained models. nlohmann serializes doubles with a
// shortest-round-trip algorithm, so save -> load -> evaluate reproduces
// metrics bit-exactly.
nlohmann::json mlp_to_json(const Mlp& m);
Mlp mlp_from_json(const nlohmann::json& j);

void save_models(const std::string& path, const ActiveParty& active,
                 const std::vector<PassiveParty>& parties, const nlohmann::json& meta);

struct SavedModels {
  Mlp top;
  std::vector<Mlp> bottoms;
  nlohmann::json meta;
};

SavedModels load_models(const std::string& path);

}  // namespace badvfl
