#ifndef SIAMPROG_SRC_SERIALIZE_HPP_
#define SIAMPROG_SRC_SERIALIZE_HPP_

// JSON converters shared by checkpoint headers and the pipeline config.
// Parsing is strict: unknown keys are rejected.

#include <json.hpp>

#include "siamprog/encoder.hpp"

namespace siamprog {

nlohmann::json encoder_config_to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const nlohmann::json& j, const std::string& context);

}  // namespace siamprog

#endif  // SIAMPROG_SRC_SERIALIZE_HPP_
