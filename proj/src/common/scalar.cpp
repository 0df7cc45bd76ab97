#include "dtaas/common/scalar.hpp"

#include "dtaas/common/error.hpp"

namespace dtaas {

nlohmann::json scalar_to_json(const Scalar& value) {
  return std::visit([](const auto& v) { return nlohmann::json(v); }, value);
}

Scalar scalar_from_json(const nlohmann::json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw Error(Errc::InvalidArgument, "expected a scalar, got " + j.dump());
}

std::string scalar_to_string(const Scalar& value) {
  if (const auto* s = std::get_if<std::string>(&value)) return *s;
  return scalar_to_json(value).dump();
}

nlohmann::json params_to_json(const ParamMap& params) {
  auto out = nlohmann::json::object();
  for (const auto& [name, value] : params) out[name] = scalar_to_json(value);
  return out;
}

ParamMap params_from_json(const nlohmann::json& j) {
  ParamMap out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw Error(Errc::InvalidArgument, "params must be an object");
  for (const auto& [name, value] : j.items()) out.emplace(name, scalar_from_json(value));
  return out;
}

}  // namespace dtaas
