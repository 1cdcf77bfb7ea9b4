// SPDX-License-Identifier: MIT
#pragma once

#include <string>

#include "json.hpp"
#include "segplan/error.hpp"
#include "segplan/fingerprint.hpp"
#include "segplan/io.hpp"

namespace segplan {

using json = nlohmann::json;

/// Parses text and checks schema_version. Throws InvalidArgument or SchemaVersionMismatch.
inline json parse_versioned(const std::string& text, const std::string& what) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, "malformed " + what + " document: " + e.what());
    }
    if (!j.is_object() || j.value("schema_version", -1) != kSchemaVersion)
        throw Error(ErrorCode::SchemaVersionMismatch, "unsupported " + what + " schema_version");
    return j;
}

void to_json(json& j, const ForegroundStats& s);
void from_json(const json& j, ForegroundStats& s);
void to_json(json& j, const DatasetFingerprint& fp);
void from_json(const json& j, DatasetFingerprint& fp);

}  // namespace segplan
