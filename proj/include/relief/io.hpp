#ifndef RELIEF_IO_HPP_
#define RELIEF_IO_HPP_

#include <filesystem>
#include <string>

#include <json.hpp>

#include "relief/gridworld.hpp"

namespace relief {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
Json read_json_file(const std::filesystem::path& path);
Json parse_json(const std::string& text, const std::string& origin);

// Rejects documents whose schema_version is present and differs from ours.
void check_schema_version(const Json& doc, const std::string& origin);

// Scenario document: {width, height, obstacles:[cell], tasks:[cell],
// uavs:[{loc,radius,csp}], workers:[{loc,radius}], cars:[{loc,radius}],
// time_limit}. UAVs may carry an optional "pow" (defaults to 1).
Json scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const Json& doc);
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

Json trace_to_json(const EpisodeTrace& trace);
EpisodeTrace trace_from_json(const Json& doc);

}  // namespace relief

#endif  // RELIEF_IO_HPP_
