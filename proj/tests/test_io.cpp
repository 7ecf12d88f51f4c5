#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "gbfn/io.hpp"

using namespace gbfn;

namespace {

TrajectoryRecord full_record() {
    TrajectoryRecord rec;
    rec.step = 3;
    rec.t = 0.25;
    rec.rho = 17.5;
    rec.guidance_score = -1.25;
    rec.predicted_mean = 0.4;
    rec.total_variance = 0.01;
    rec.grad_coords_norm = 2.5;
    rec.grad_types_norm = 0.125;
    rec.theta_x_norm = 3.75;
    rec.theta_v_entropy = 1.0986122886681098;
    rec.rng_counter = 12345;
    rec.variant = "xt";
    return rec;
}

TrajectoryRecord sparse_record() {
    TrajectoryRecord rec;
    rec.step = 1;
    rec.t = 0.0;
    rec.theta_x_norm = 0.5;
    rec.theta_v_entropy = 0.25;
    rec.rng_counter = 7;
    return rec;
}

}  // namespace

TEST_CASE("records round-trip through jsonl with optionals preserved") {
    std::vector<TrajectoryRecord> traj = {full_record(), sparse_record()};
    std::string text = trajectory_to_jsonl(traj);
    std::vector<TrajectoryRecord> back = trajectory_from_jsonl(text);
    REQUIRE(back.size() == 2);

    CHECK(back[0].step == 3);
    CHECK(back[0].t == 0.25);
    CHECK(back[0].rho == 17.5);
    CHECK(back[0].guidance_score == -1.25);
    CHECK(back[0].predicted_mean == 0.4);
    CHECK(back[0].total_variance == 0.01);
    CHECK(back[0].grad_coords_norm == 2.5);
    CHECK(back[0].grad_types_norm == 0.125);
    CHECK(back[0].theta_x_norm == 3.75);
    CHECK(back[0].theta_v_entropy == 1.0986122886681098);
    CHECK(back[0].rng_counter == 12345);
    CHECK(back[0].variant == "xt");

    CHECK(back[1].step == 1);
    CHECK_FALSE(back[1].rho.has_value());
    CHECK_FALSE(back[1].guidance_score.has_value());
    CHECK_FALSE(back[1].predicted_mean.has_value());
    CHECK_FALSE(back[1].total_variance.has_value());
    CHECK_FALSE(back[1].grad_coords_norm.has_value());
    CHECK_FALSE(back[1].grad_types_norm.has_value());
    CHECK_FALSE(back[1].variant.has_value());
    CHECK(back[1].rng_counter == 7);

    // Serialization is a pure function of the record.
    CHECK(trajectory_record_to_json(full_record()) ==
          trajectory_record_to_json(full_record()));
    CHECK(trajectory_to_jsonl(back) == text);
}

TEST_CASE("jsonl lines start with the step key and omit absent fields") {
    std::string line = trajectory_record_to_json(sparse_record());
    CHECK(line.substr(0, 9) == "{\"step\":1");
    CHECK(line.find("rho") == std::string::npos);
    CHECK(line.find("guidance_score") == std::string::npos);
    CHECK(line.find("variant") == std::string::npos);

    std::string guided_line = trajectory_record_to_json(full_record());
    CHECK(guided_line.find("\"guidance_score\":-1.25") != std::string::npos);
    CHECK(guided_line.find("\"variant\":\"xt\"") != std::string::npos);
}

TEST_CASE("malformed jsonl input raises io errors") {
    CHECK_THROWS_AS(trajectory_from_jsonl("not json\n"), IoError);
    CHECK_THROWS_AS(trajectory_from_jsonl("[1,2,3]\n"), IoError);
    CHECK_THROWS_AS(trajectory_from_jsonl("{\"t\":0.0}\n"), IoError);
    CHECK(trajectory_from_jsonl("").empty());
}

TEST_CASE("text files round-trip byte for byte") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "gbfn_io_test";
    fs::create_directories(dir);
    fs::path file = dir / "sample.jsonl";

    std::string text = trajectory_to_jsonl({full_record(), sparse_record()});
    write_text_file(file.string(), text);
    CHECK(read_text_file(file.string()) == text);

    CHECK_THROWS_AS(read_text_file((dir / "missing.txt").string()), IoError);
    CHECK_THROWS_AS(write_text_file((dir / "no" / "such" / "dir.txt").string(), "x"),
                    IoError);
    fs::remove_all(dir);
}
