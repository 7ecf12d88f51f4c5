#include "gbfn/io.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace gbfn {

namespace {
using ordered_json = nlohmann::ordered_json;
}

std::string trajectory_record_to_json(const TrajectoryRecord& rec) {
    ordered_json j;
    j["step"] = rec.step;
    j["t"] = rec.t;
    if (rec.rho) j["rho"] = *rec.rho;
    if (rec.guidance_score) j["guidance_score"] = *rec.guidance_score;
    if (rec.predicted_mean) j["predicted_mean"] = *rec.predicted_mean;
    if (rec.total_variance) j["total_variance"] = *rec.total_variance;
    if (rec.grad_coords_norm) j["grad_coords_norm"] = *rec.grad_coords_norm;
    if (rec.grad_types_norm) j["grad_types_norm"] = *rec.grad_types_norm;
    j["theta_x_norm"] = rec.theta_x_norm;
    j["theta_v_entropy"] = rec.theta_v_entropy;
    j["rng_counter"] = rec.rng_counter;
    if (rec.variant) j["variant"] = *rec.variant;
    return j.dump();
}

std::string trajectory_to_jsonl(const std::vector<TrajectoryRecord>& trajectory) {
    std::string out;
    for (const auto& rec : trajectory) {
        out += trajectory_record_to_json(rec);
        out += '\n';
    }
    return out;
}

std::vector<TrajectoryRecord> trajectory_from_jsonl(const std::string& text) {
    std::vector<TrajectoryRecord> out;
    std::istringstream stream(text);
    std::string line;
    while (std::getline(stream, line)) {
        if (line.empty()) continue;
        TrajectoryRecord rec;
        try {
            ordered_json j = ordered_json::parse(line);
            rec.step = j.at("step").get<int>();
            rec.t = j.at("t").get<double>();
            if (j.contains("rho")) rec.rho = j["rho"].get<double>();
            if (j.contains("guidance_score"))
                rec.guidance_score = j["guidance_score"].get<double>();
            if (j.contains("predicted_mean"))
                rec.predicted_mean = j["predicted_mean"].get<double>();
            if (j.contains("total_variance"))
                rec.total_variance = j["total_variance"].get<double>();
            if (j.contains("grad_coords_norm"))
                rec.grad_coords_norm = j["grad_coords_norm"].get<double>();
            if (j.contains("grad_types_norm"))
                rec.grad_types_norm = j["grad_types_norm"].get<double>();
            rec.theta_x_norm = j.at("theta_x_norm").get<double>();
            rec.theta_v_entropy = j.at("theta_v_entropy").get<double>();
            rec.rng_counter = j.at("rng_counter").get<std::uint64_t>();
            if (j.contains("variant")) rec.variant = j["variant"].get<std::string>();
        } catch (const ordered_json::exception& e) {
            throw IoError(std::string("bad trajectory line: ") + e.what());
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace gbfn
