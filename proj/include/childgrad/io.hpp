#pragma once

#include <string>

#include <json.hpp>

#include "childgrad/model.hpp"

namespace childgrad {

using Json = nlohmann::json;

// Writes to a temporary sibling and renames it over `path`.
void write_text_atomic(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

Json read_json(const std::string& path);
void write_json(const std::string& path, const Json& value);

// Checks the "format"/"version" header of a versioned file.
void expect_format(const Json& doc, const std::string& format, int version, const std::string& path);

Json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const Json& j);

Json params_to_json(const ParamVector& params);
ParamVector params_from_json(const Json& j, const ModelSpec& spec);

}  // namespace childgrad
