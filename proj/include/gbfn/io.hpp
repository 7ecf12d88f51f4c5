#pragma once

#include <string>
#include <vector>

#include "gbfn/bfn.hpp"

namespace gbfn {

// One JSON object per line, stable key order; identical records serialize to
// identical bytes.
std::string trajectory_record_to_json(const TrajectoryRecord& rec);
std::string trajectory_to_jsonl(const std::vector<TrajectoryRecord>& trajectory);
std::vector<TrajectoryRecord> trajectory_from_jsonl(const std::string& text);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace gbfn
