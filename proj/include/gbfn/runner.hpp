#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gbfn/guided.hpp"

namespace gbfn::runner {

enum class SamplerKind { Cbyg, BfnUnguided, TargetOptXt, TargetOptX0 };

std::string sampler_name(SamplerKind kind);
SamplerKind sampler_from_name(const std::string& name);

struct WorldConfig {
    std::uint64_t seed = 1;
    int n_atoms = 8;
    int n_classes = 4;
    int n_templates = 3;
    double pocket_size = 4.0;
};

struct ScheduleConfig {
    int n_steps = 100;
    double sigma1 = 0.03;
    double beta1 = 4.0;
    double rho_0 = 1.0;
};

struct DiffusionConfig {
    int n_steps = 100;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    double delta = 1e-8;
};

struct RunConfig {
    WorldConfig world;
    SamplerKind sampler = SamplerKind::Cbyg;
    ScheduleConfig schedule;
    DiffusionConfig diffusion;
    GuidanceConfig guidance;
    int n_chains = 2;
    std::uint64_t base_seed = 1000;
    std::string out_dir;

    void validate() const;  // throws ConfigError naming the offending key
};

// Parses the JSON config file. Unknown keys are hard errors.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

// Builds the world, runs n_chains seeded chains (concurrently up to `jobs`),
// and writes per-chain trajectory JSONL + molecule dumps, a run header JSON,
// and a stats CSV. On failure the directory gets a FAILED marker and no CSV.
void execute_run(const RunConfig& config, int jobs);

// Cross-run comparison: per-step mean/variance CSV per arm plus a summary
// JSON with improvement metrics for every guided/unguided pairing. Runs must
// share step count and world seed.
void execute_compare(const std::vector<std::string>& run_dirs, const std::string& out_dir);

struct VerifyResult {
    std::string name;
    bool pass;
    std::string detail;
};

// Budgeted oracle suite: gradient-form equivalences, enumeration tilts,
// conjugate closed forms, equivariance, variance decomposition,
// finite-difference checks.
std::vector<VerifyResult> run_verify();

}  // namespace gbfn::runner
