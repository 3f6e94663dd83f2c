#pragma once

#include <string>

#include "csqr/density_network.hpp"

namespace csqr {

inline constexpr const char* kModelFormatTag = "csqr-v1";

// JSON text of the model under the "csqr-v1" tag.  All floating-point
// fields use shortest round-trip formatting, so serialize/deserialize is
// bit-exact and byte-stable across reruns.
std::string serialize_model(const QuantileModel& model);
QuantileModel deserialize_model(const std::string& text);

void save_model(const QuantileModel& model, const std::string& path);
QuantileModel load_model(const std::string& path);

}  // namespace csqr
