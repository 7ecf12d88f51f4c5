#include "gbfn/runner.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "gbfn/analysis.hpp"
#include "gbfn/diffusion.hpp"
#include "gbfn/io.hpp"
#include "gbfn/toy.hpp"

namespace gbfn::runner {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void reject_unknown_keys(const ordered_json& obj, const std::vector<std::string>& known,
                         const std::string& scope) {
    for (const auto& item : obj.items()) {
        if (std::find(known.begin(), known.end(), item.key()) == known.end())
            throw ConfigError("unknown config key: " + scope + item.key());
    }
}

std::string chain_stem(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "chain_%03d", index);
    return buf;
}

struct ChainArtifacts {
    SampleResult result;
    double terminal_score = 0.0;
};

// Fills guidance-score fields on a copy so unguided trajectories can feed the
// same stats pipeline; serialized records are untouched.
std::vector<TrajectoryRecord> scored_records(const SampleResult& result,
                                             const PropertyPredictor& predictor,
                                             const PocketContext& pocket, double target) {
    std::vector<TrajectoryRecord> recs = result.trajectory;
    for (size_t s = 0; s < recs.size(); ++s) {
        if (recs[s].guidance_score) continue;
        PropertyPrediction pred =
            variance_decompose(predictor.predict(result.step_predictions[s], pocket));
        recs[s].guidance_score = guidance_log_likelihood(pred, target);
        recs[s].predicted_mean = pred.mean;
        recs[s].total_variance = pred.total;
    }
    return recs;
}

struct LoadedRun {
    std::string dir;
    std::string arm;
    std::string sampler;
    int n_steps = 0;
    std::uint64_t world_seed = 0;
    bool guided = false;
    std::vector<double> terminal_scores;
    // Parsed stats.csv rows: step, t, mean_score, var_score, mean_mu.
    std::vector<std::array<double, 5>> stats;
};

LoadedRun load_run_dir(const std::string& dir) {
    if (fs::exists(fs::path(dir) / "FAILED"))
        throw ConfigError("run directory is marked FAILED: " + dir);
    LoadedRun run;
    run.dir = dir;
    ordered_json header;
    try {
        header = ordered_json::parse(read_text_file((fs::path(dir) / "run_header.json").string()));
    } catch (const ordered_json::parse_error& e) {
        throw ConfigError("bad run header in " + dir + ": " + e.what());
    }
    run.sampler = header.at("sampler").get<std::string>();
    run.n_steps = header.at("n_steps").get<int>();
    run.world_seed = header.at("world").at("seed").get<std::uint64_t>();
    double lx = header.at("lambda_x").get<double>();
    double lv = header.at("lambda_v").get<double>();
    run.guided = run.sampler != "bfn-unguided" && (lx > 0.0 || lv > 0.0);
    for (const auto& v : header.at("terminal_scores"))
        run.terminal_scores.push_back(v.get<double>());

    std::istringstream csv(read_text_file((fs::path(dir) / "stats.csv").string()));
    std::string line;
    std::getline(csv, line);  // column header
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::array<double, 5> row{};
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream fields(line);
        for (double& v : row)
            if (!(fields >> v)) throw ConfigError("bad stats.csv row in " + dir);
        run.stats.push_back(row);
    }
    return run;
}

bool verify_close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// A predictor that is deliberately not rotation-invariant: it adds the first
// atom's x coordinate to every member score. Guards the equivariance harness.
class BrokenPredictor final : public PropertyPredictor {
public:
    explicit BrokenPredictor(std::unique_ptr<PropertyPredictor> inner)
        : inner_(std::move(inner)) {}

    std::vector<MemberPrediction> predict(const HybridMolecule& m,
                                          const PocketContext& pocket) const override {
        auto out = inner_->predict(m, pocket);
        for (auto& p : out) p.mu += m.coords(0, 0);
        return out;
    }

    Matrix grad_coords(const HybridMolecule& m, const PocketContext& pocket,
                       double target) const override {
        Matrix g = inner_->grad_coords(m, pocket, target);
        g(0, 0) += 1.0;
        return g;
    }

    Matrix grad_types(const Matrix& relaxed_types, const Matrix& coords,
                      const PocketContext& pocket, double target) const override {
        return inner_->grad_types(relaxed_types, coords, pocket, target);
    }

private:
    std::unique_ptr<PropertyPredictor> inner_;
};

}  // namespace

std::string sampler_name(SamplerKind kind) {
    switch (kind) {
        case SamplerKind::Cbyg: return "cbyg";
        case SamplerKind::BfnUnguided: return "bfn-unguided";
        case SamplerKind::TargetOptXt: return "targetopt-xt";
        case SamplerKind::TargetOptX0: return "targetopt-x0";
    }
    throw ConfigError("sampler: unknown enum value");
}

SamplerKind sampler_from_name(const std::string& name) {
    if (name == "cbyg") return SamplerKind::Cbyg;
    if (name == "bfn-unguided") return SamplerKind::BfnUnguided;
    if (name == "targetopt-xt") return SamplerKind::TargetOptXt;
    if (name == "targetopt-x0") return SamplerKind::TargetOptX0;
    throw ConfigError("sampler: unknown name \"" + name + "\"");
}

void RunConfig::validate() const {
    if (world.n_atoms < 1) throw ConfigError("world.n_atoms must be >= 1");
    if (world.n_classes < 2) throw ConfigError("world.n_classes must be >= 2");
    if (world.n_templates < 1) throw ConfigError("world.n_templates must be >= 1");
    if (!(world.pocket_size > 0.0)) throw ConfigError("world.pocket_size must be positive");
    if (schedule.n_steps < 1) throw ConfigError("schedule.n_steps must be >= 1");
    if (!(schedule.sigma1 > 0.0 && schedule.sigma1 < 1.0))
        throw ConfigError("schedule.sigma1 must lie in (0, 1)");
    if (!(schedule.beta1 > 0.0)) throw ConfigError("schedule.beta1 must be positive");
    if (!(schedule.rho_0 > 0.0)) throw ConfigError("schedule.rho_0 must be positive");
    if (diffusion.n_steps < 1) throw ConfigError("diffusion.n_steps must be >= 1");
    if (!(diffusion.beta_min > 0.0 && diffusion.beta_max < 1.0 &&
          diffusion.beta_min <= diffusion.beta_max))
        throw ConfigError("diffusion.beta_min/beta_max must satisfy 0 < min <= max < 1");
    if (diffusion.delta < 0.0) throw ConfigError("diffusion.delta must be nonnegative");
    guidance.validate();
    if (n_chains < 1) throw ConfigError("n_chains must be >= 1");
    if (out_dir.empty()) throw ConfigError("out_dir must be set");
}

RunConfig parse_run_config(const std::string& json_text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(json_text);
    } catch (const ordered_json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    reject_unknown_keys(doc,
                        {"world", "sampler", "schedule", "diffusion", "guidance", "n_chains",
                         "base_seed", "out_dir"},
                        "");

    RunConfig cfg;
    if (doc.contains("world")) {
        const auto& w = doc["world"];
        reject_unknown_keys(w, {"seed", "n_atoms", "n_classes", "n_templates", "pocket_size"},
                            "world.");
        if (w.contains("seed")) cfg.world.seed = w["seed"].get<std::uint64_t>();
        if (w.contains("n_atoms")) cfg.world.n_atoms = w["n_atoms"].get<int>();
        if (w.contains("n_classes")) cfg.world.n_classes = w["n_classes"].get<int>();
        if (w.contains("n_templates")) cfg.world.n_templates = w["n_templates"].get<int>();
        if (w.contains("pocket_size")) cfg.world.pocket_size = w["pocket_size"].get<double>();
    }
    if (doc.contains("sampler")) cfg.sampler = sampler_from_name(doc["sampler"].get<std::string>());
    if (doc.contains("schedule")) {
        const auto& s = doc["schedule"];
        reject_unknown_keys(s, {"n_steps", "sigma1", "beta1", "rho_0"}, "schedule.");
        if (s.contains("n_steps")) cfg.schedule.n_steps = s["n_steps"].get<int>();
        if (s.contains("sigma1")) cfg.schedule.sigma1 = s["sigma1"].get<double>();
        if (s.contains("beta1")) cfg.schedule.beta1 = s["beta1"].get<double>();
        if (s.contains("rho_0")) cfg.schedule.rho_0 = s["rho_0"].get<double>();
    }
    if (doc.contains("diffusion")) {
        const auto& d = doc["diffusion"];
        reject_unknown_keys(d, {"n_steps", "beta_min", "beta_max", "delta"}, "diffusion.");
        if (d.contains("n_steps")) cfg.diffusion.n_steps = d["n_steps"].get<int>();
        if (d.contains("beta_min")) cfg.diffusion.beta_min = d["beta_min"].get<double>();
        if (d.contains("beta_max")) cfg.diffusion.beta_max = d["beta_max"].get<double>();
        if (d.contains("delta")) cfg.diffusion.delta = d["delta"].get<double>();
    }
    if (doc.contains("guidance")) {
        const auto& g = doc["guidance"];
        reject_unknown_keys(g,
                            {"lambda_coords", "lambda_types", "target_label",
                             "uncertainty_scaling", "uncertainty_component", "variance_cap",
                             "gumbel_temperature", "ensemble_size", "mode"},
                            "guidance.");
        if (g.contains("lambda_coords"))
            cfg.guidance.lambda_coords = g["lambda_coords"].get<double>();
        if (g.contains("lambda_types"))
            cfg.guidance.lambda_types = g["lambda_types"].get<double>();
        if (g.contains("target_label")) cfg.guidance.target_label = g["target_label"].get<double>();
        if (g.contains("uncertainty_scaling"))
            cfg.guidance.uncertainty_scaling = g["uncertainty_scaling"].get<bool>();
        if (g.contains("uncertainty_component")) {
            std::string c = g["uncertainty_component"].get<std::string>();
            if (c == "total")
                cfg.guidance.uncertainty_component = UncertaintyComponent::Total;
            else if (c == "epistemic")
                cfg.guidance.uncertainty_component = UncertaintyComponent::EpistemicOnly;
            else
                throw ConfigError("guidance.uncertainty_component must be total or epistemic");
        }
        if (g.contains("variance_cap") && !g["variance_cap"].is_null())
            cfg.guidance.variance_cap = g["variance_cap"].get<double>();
        if (g.contains("gumbel_temperature"))
            cfg.guidance.gumbel_temperature = g["gumbel_temperature"].get<double>();
        if (g.contains("ensemble_size")) cfg.guidance.ensemble_size = g["ensemble_size"].get<int>();
        if (g.contains("mode")) {
            std::string m = g["mode"].get<std::string>();
            if (m == "target-likelihood")
                cfg.guidance.mode = GuidanceMode::TargetLikelihood;
            else if (m == "maximize-mean")
                cfg.guidance.mode = GuidanceMode::MaximizeMean;
            else
                throw ConfigError("guidance.mode must be target-likelihood or maximize-mean");
        }
    }
    if (doc.contains("n_chains")) cfg.n_chains = doc["n_chains"].get<int>();
    if (doc.contains("base_seed")) cfg.base_seed = doc["base_seed"].get<std::uint64_t>();
    if (doc.contains("out_dir")) cfg.out_dir = doc["out_dir"].get<std::string>();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    return parse_run_config(text);
}

void execute_run(const RunConfig& config, int jobs) {
    config.validate();
    fs::create_directories(config.out_dir);
    fs::remove(fs::path(config.out_dir) / "FAILED");

    toy::ToyWorld world =
        toy::make_toy_world(config.world.seed, config.world.n_atoms, config.world.n_classes,
                            config.world.n_templates, config.world.pocket_size);
    auto model = toy::attractor_output_model(world);
    auto denoiser = toy::attractor_denoiser(world);
    auto predictor = toy::toy_ensemble_predictor(world, config.guidance.ensemble_size,
                                                 config.world.seed, config.guidance.mode,
                                                 config.guidance.target_label);

    bool diffusion_sampler = config.sampler == SamplerKind::TargetOptXt ||
                             config.sampler == SamplerKind::TargetOptX0;
    int n_steps = diffusion_sampler ? config.diffusion.n_steps : config.schedule.n_steps;
    AccuracySchedule schedule = build_schedule(config.schedule.n_steps, config.schedule.sigma1,
                                               config.schedule.beta1, config.schedule.rho_0);
    DiffusionSchedule diff_schedule = build_diffusion_schedule(
        config.diffusion.n_steps, config.diffusion.beta_min, config.diffusion.beta_max);

    auto run_chain = [&](int chain) -> ChainArtifacts {
        Rng rng = Rng::split(config.base_seed, static_cast<std::uint64_t>(chain));
        ChainArtifacts art{[&] {
            switch (config.sampler) {
                case SamplerKind::Cbyg:
                    return cbyg_sample(*model, *predictor, world.pocket, schedule,
                                       config.guidance, rng);
                case SamplerKind::BfnUnguided:
                    return unconditional_sample(*model, world.pocket, schedule, rng);
                case SamplerKind::TargetOptXt:
                case SamplerKind::TargetOptX0: {
                    TargetOptConfig topt;
                    topt.guidance = config.guidance;
                    topt.variant = config.sampler == SamplerKind::TargetOptXt
                                       ? GuidanceVariant::IntermediateState
                                       : GuidanceVariant::PredictedFinalState;
                    topt.delta = config.diffusion.delta;
                    return targetopt_sample(*denoiser, *predictor, world.pocket, diff_schedule,
                                            topt, rng);
                }
            }
            throw ConfigError("sampler: unknown enum value");
        }()};
        art.terminal_score =
            toy::combined_score(art.result.molecule, world.pocket, world.params).value;
        return art;
    };

    int n = config.n_chains;
    std::vector<std::optional<ChainArtifacts>> chains(static_cast<size_t>(n));
    std::vector<std::string> failures(static_cast<size_t>(n));
    int workers = std::max(1, std::min(jobs, n));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            int c = next.fetch_add(1);
            if (c >= n) return;
            try {
                chains[static_cast<size_t>(c)] = run_chain(c);
            } catch (const SamplerError& e) {
                failures[static_cast<size_t>(c)] =
                    "chain " + std::to_string(c) + ": " + e.what();
            } catch (const std::exception& e) {
                failures[static_cast<size_t>(c)] =
                    "chain " + std::to_string(c) + ": " + e.what();
            }
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (const auto& msg : failures) {
        if (!msg.empty()) {
            write_text_file((fs::path(config.out_dir) / "FAILED").string(), msg + "\n");
            throw SamplerError(msg, 0);
        }
    }

    // Single-writer emission keeps artifacts byte-identical for any jobs value.
    std::vector<std::vector<TrajectoryRecord>> scored;
    ordered_json terminal = ordered_json::array();
    for (int c = 0; c < n; ++c) {
        const ChainArtifacts& art = *chains[static_cast<size_t>(c)];
        std::string stem = (fs::path(config.out_dir) / chain_stem(c)).string();
        write_text_file(stem + ".jsonl", trajectory_to_jsonl(art.result.trajectory));
        write_text_file(stem + ".mol.txt", molecule_to_text(art.result.molecule));
        scored.push_back(scored_records(art.result, *predictor, world.pocket,
                                        config.guidance.target_label));
        terminal.push_back(art.terminal_score);
    }

    ordered_json header;
    header["seed"] = config.base_seed;
    header["n_steps"] = n_steps;
    header["lambda_x"] = config.guidance.lambda_coords;
    header["lambda_v"] = config.guidance.lambda_types;
    header["target_label"] = config.guidance.target_label;
    header["tau"] = config.guidance.gumbel_temperature;
    header["M"] = config.guidance.ensemble_size;
    header["uncertainty_scaling"] = config.guidance.uncertainty_scaling;
    header["sigma1"] = config.schedule.sigma1;
    header["beta1"] = config.schedule.beta1;
    header["rho_0"] = config.schedule.rho_0;
    header["sampler"] = sampler_name(config.sampler);
    header["n_chains"] = n;
    ordered_json world_json;
    world_json["seed"] = config.world.seed;
    world_json["n_atoms"] = config.world.n_atoms;
    world_json["n_classes"] = config.world.n_classes;
    world_json["n_templates"] = config.world.n_templates;
    world_json["pocket_size"] = config.world.pocket_size;
    header["world"] = std::move(world_json);
    header["terminal_scores"] = std::move(terminal);
    write_text_file((fs::path(config.out_dir) / "run_header.json").string(),
                    header.dump(2) + "\n");

    write_text_file((fs::path(config.out_dir) / "stats.csv").string(),
                    analysis::stats_to_csv(analysis::trajectory_stats(scored)));
}

void execute_compare(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    if (run_dirs.size() < 2) throw ConfigError("compare needs at least two run directories");
    std::vector<LoadedRun> runs;
    for (const auto& dir : run_dirs) runs.push_back(load_run_dir(dir));

    for (const auto& run : runs) {
        if (run.n_steps != runs.front().n_steps)
            throw ConfigError("runs disagree on n_steps: " + run.dir);
        if (run.world_seed != runs.front().world_seed)
            throw ConfigError("runs disagree on world seed: " + run.dir);
        if (run.stats.size() != runs.front().stats.size())
            throw ConfigError("runs disagree on stats length: " + run.dir);
    }

    // Arm labels: sampler name, suffixed on repeats.
    std::vector<std::string> arms;
    for (auto& run : runs) {
        std::string base = run.sampler;
        std::string label = base;
        int k = 2;
        while (std::find(arms.begin(), arms.end(), label) != arms.end())
            label = base + "-" + std::to_string(k++);
        run.arm = label;
        arms.push_back(label);
    }

    fs::create_directories(out_dir);

    std::ostringstream csv;
    csv.precision(17);
    csv << "step,t";
    for (const auto& run : runs) csv << ",mean_score_" << run.arm;
    for (const auto& run : runs) csv << ",var_score_" << run.arm;
    for (const auto& run : runs) csv << ",mean_mu_" << run.arm;
    csv << '\n';
    for (size_t row = 0; row < runs.front().stats.size(); ++row) {
        csv << runs.front().stats[row][0] << ',' << runs.front().stats[row][1];
        for (const auto& run : runs) csv << ',' << run.stats[row][2];
        for (const auto& run : runs) csv << ',' << run.stats[row][3];
        for (const auto& run : runs) csv << ',' << run.stats[row][4];
        csv << '\n';
    }
    write_text_file((fs::path(out_dir) / "comparison.csv").string(), csv.str());

    ordered_json summary;
    ordered_json arms_json = ordered_json::array();
    for (const auto& run : runs) {
        ordered_json a;
        a["arm"] = run.arm;
        a["sampler"] = run.sampler;
        a["guided"] = run.guided;
        a["dir"] = run.dir;
        a["n_chains"] = run.terminal_scores.size();
        arms_json.push_back(std::move(a));
    }
    summary["arms"] = std::move(arms_json);

    ordered_json pairings = ordered_json::array();
    for (size_t i = 0; i < runs.size(); ++i) {
        for (size_t j = 0; j < runs.size(); ++j) {
            if (i == j) continue;
            // Report every guided-over-other pairing plus same-size self pairs.
            bool guided_vs_unguided = runs[i].guided && !runs[j].guided;
            if (!guided_vs_unguided && !(i < j)) continue;
            if (runs[i].terminal_scores.size() != runs[j].terminal_scores.size())
                throw ConfigError("runs disagree on chain count: " + runs[i].dir + " vs " +
                                  runs[j].dir);
            auto [mean_delta, win_rate] =
                analysis::improvement_metric(runs[i].terminal_scores, runs[j].terminal_scores);
            ordered_json p;
            p["first"] = runs[i].arm;
            p["second"] = runs[j].arm;
            p["guided_vs_unguided"] = guided_vs_unguided;
            p["mean_delta"] = mean_delta;
            p["win_rate"] = win_rate;
            pairings.push_back(std::move(p));
        }
    }
    summary["pairings"] = std::move(pairings);
    write_text_file((fs::path(out_dir) / "summary.json").string(), summary.dump(2) + "\n");
}

std::vector<VerifyResult> run_verify() {
    std::vector<VerifyResult> results;
    auto record = [&](const std::string& name, bool pass, const std::string& detail) {
        results.push_back({name, pass, detail});
    };

    // Continuous update vs its score form under y = x + alpha^{-1/2} eps.
    {
        Rng rng(101);
        double worst = 0.0;
        for (int it = 0; it < 200; ++it) {
            int n_rows = 1 + static_cast<int>(rng.uniform() * 5);
            ContinuousParamState prev(rng.normal_matrix(n_rows, 3), 0.1 + 3.0 * rng.uniform());
            Matrix x = rng.normal_matrix(n_rows, 3);
            Matrix eps = rng.normal_matrix(n_rows, 3);
            double alpha = 0.05 + 2.0 * rng.uniform();
            Matrix y = x + eps / std::sqrt(alpha);
            ContinuousParamState a =
                continuous_update(prev, NoisyObservation(y, Channel::Coords, alpha), alpha);
            ContinuousParamState b =
                continuous_update_gradient_form(prev, x, std::sqrt(alpha) * eps, alpha);
            worst = std::max(worst, (a.mean - b.mean).cwiseAbs().maxCoeff());
            worst = std::max(worst, std::abs(a.precision - b.precision));
        }
        record("continuous gradient-form equivalence", worst < 1e-10,
               "max residual " + std::to_string(worst));
    }

    // Discrete update vs its score form under y = alpha (K e - 1) + sqrt(alpha K) eps.
    {
        Rng rng(102);
        double worst = 0.0;
        for (int it = 0; it < 200; ++it) {
            int n_rows = 1 + static_cast<int>(rng.uniform() * 3);
            int k = 2 + static_cast<int>(rng.uniform() * 3);
            Matrix probs(n_rows, k);
            for (int i = 0; i < n_rows; ++i) {
                for (int c = 0; c < k; ++c) probs(i, c) = 0.05 + rng.uniform();
                probs.row(i) /= probs.row(i).sum();
            }
            DiscreteParamState prev(probs);
            Matrix one_hot = Matrix::Zero(n_rows, k);
            for (int i = 0; i < n_rows; ++i)
                one_hot(i, static_cast<int>(rng.uniform() * k) % k) = 1.0;
            double alpha = 0.05 + 2.0 * rng.uniform();
            Matrix eps = rng.normal_matrix(n_rows, k);
            Matrix y = alpha * (k * one_hot - Matrix::Ones(n_rows, k)) +
                       std::sqrt(alpha * k) * eps;
            DiscreteParamState a =
                discrete_update(prev, NoisyObservation(y, Channel::Types, alpha));
            DiscreteParamState b = discrete_update_gradient_form(
                prev, one_hot, std::sqrt(alpha * k) * eps, alpha);
            worst = std::max(worst, (a.probs - b.probs).cwiseAbs().maxCoeff());
        }
        record("discrete gradient-form equivalence", worst < 1e-12,
               "max residual " + std::to_string(worst));
    }

    // Posterior mean of a Gaussian prior under Gaussian noise via the
    // score-form identity E[mu|z] = z + tau^2 d/dz log p(z).
    {
        Rng rng(103);
        double worst = 0.0;
        for (int it = 0; it < 200; ++it) {
            double m0 = 3.0 * rng.normal();
            double s0sq = 0.1 + 2.0 * rng.uniform();
            double tausq = 0.1 + 2.0 * rng.uniform();
            Matrix z(1, 3);
            z << rng.normal(), rng.normal(), rng.normal();
            Matrix score = (m0 - z.array()).matrix() / (s0sq + tausq);
            Matrix got = tweedie_mean(z, tausq, score);
            Matrix want = (s0sq * z.array() + tausq * m0).matrix() / (s0sq + tausq);
            worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
        }
        record("conjugate posterior-mean identity", worst < 1e-10,
               "max residual " + std::to_string(worst));
    }

    // Guided discrete kernel vs brute-force enumeration with a per-atom
    // linear log-likelihood h: the softmax tilt must be exact.
    {
        Rng rng(104);
        double worst = 0.0;
        for (int it = 0; it < 50; ++it) {
            int n_rows = 1 + static_cast<int>(rng.uniform() * 3);
            int k = 2 + static_cast<int>(rng.uniform() * 2);
            Matrix probs(n_rows, k);
            for (int i = 0; i < n_rows; ++i) {
                for (int c = 0; c < k; ++c) probs(i, c) = 0.05 + rng.uniform();
                probs.row(i) /= probs.row(i).sum();
            }
            DiscreteParamState prev(probs);
            Matrix y = rng.normal_matrix(n_rows, k);
            Matrix grad = rng.normal_matrix(n_rows, k);
            double scale = 0.2 + rng.uniform();
            double lambda = 0.5 + rng.uniform();
            DiscreteParamState got = guided_discrete_kernel(
                prev, NoisyObservation(y, Channel::Types, 1.0), grad, scale, lambda);

            // Prior after the unguided update, then an exact linear tilt.
            DiscreteParamState base =
                discrete_update(prev, NoisyObservation(y, Channel::Types, 1.0));
            Matrix h = scale * lambda * grad;
            auto log_lik = [&](const std::vector<int>& assignment) {
                double s = 0.0;
                for (size_t i = 0; i < assignment.size(); ++i)
                    s += h(static_cast<Eigen::Index>(i), assignment[i]);
                return s;
            };
            toy::EnumeratedPosterior want = toy::enumerate_discrete_posterior(base, log_lik);
            worst = std::max(worst, (got.probs - want.marginals).cwiseAbs().maxCoeff());
        }
        record("linear-tilt exactness", worst < 1e-10,
               "max residual " + std::to_string(worst));
    }

    // Guided continuous kernel fixed point vs the conjugate closed form for a
    // quadratic tilt exp(-c ||x - x*||^2) with gradient -2c(x - x*).
    {
        Rng rng(105);
        double worst = 0.0;
        for (int it = 0; it < 50; ++it) {
            int n_rows = 1 + static_cast<int>(rng.uniform() * 4);
            ContinuousParamState prev(rng.normal_matrix(n_rows, 3), 0.2 + 2.0 * rng.uniform());
            double alpha = 0.1 + rng.uniform();
            double c = 0.1 + rng.uniform();
            Matrix x_star = rng.normal_matrix(n_rows, 3);
            Matrix mu_p = toy::gaussian_tilt_closed_form(prev, alpha, c, x_star);
            Matrix grad = -2.0 * c * (mu_p - x_star);
            ContinuousParamState got = guided_continuous_kernel(
                prev, NoisyObservation(prev.mean, Channel::Coords, alpha), grad, 1.0, 1.0,
                alpha);
            worst = std::max(worst, (got.mean - mu_p).cwiseAbs().maxCoeff());
        }
        record("gaussian-tilt conjugacy", worst < 1e-10,
               "max residual " + std::to_string(worst));
    }

    toy::ToyWorld world = toy::make_toy_world(7, 6, 4, 3, 4.0);
    auto predictor =
        toy::toy_ensemble_predictor(world, 8, 7, GuidanceMode::TargetLikelihood, 0.6);
    Rng mol_rng(106);
    Matrix coords = 0.8 * mol_rng.normal_matrix(6, 3);
    Matrix types(6, 4);
    for (int i = 0; i < 6; ++i) {
        for (int c = 0; c < 4; ++c) types(i, c) = 0.1 + mol_rng.uniform();
        types.row(i) /= types.row(i).sum();
    }
    HybridMolecule mol(coords, types);

    // Rotation equivariance of the guidance value and coordinate gradient.
    {
        double worst_v = 0.0, worst_g = 0.0;
        for (int r = 0; r < 5; ++r) {
            auto report = analysis::check_equivariance(
                *predictor, mol, world.pocket, analysis::random_rotation(200 + r), 0.6);
            worst_v = std::max(worst_v, report.value_residual);
            worst_g = std::max(worst_g, report.grad_residual);
        }
        record("rotation equivariance", worst_v < 1e-10 && worst_g < 1e-8,
               "value " + std::to_string(worst_v) + ", grad " + std::to_string(worst_g));
    }

    // The harness must catch a predictor that leaks absolute coordinates.
    {
        BrokenPredictor broken(
            toy::toy_ensemble_predictor(world, 8, 7, GuidanceMode::TargetLikelihood, 0.6));
        auto report = analysis::check_equivariance(broken, mol, world.pocket,
                                                   analysis::random_rotation(300), 0.6);
        record("equivariance negative control", report.grad_residual > 0.01,
               "grad residual " + std::to_string(report.grad_residual));
    }

    // Law of total variance: the decomposition is exact by construction.
    {
        Rng rng(107);
        bool ok = true;
        for (int it = 0; it < 200 && ok; ++it) {
            std::vector<MemberPrediction> members;
            int m = 2 + static_cast<int>(rng.uniform() * 8);
            for (int i = 0; i < m; ++i)
                members.push_back({rng.normal(), 0.01 + rng.uniform()});
            PropertyPrediction p = variance_decompose(members);
            ok = verify_close(p.total, p.aleatoric + p.epistemic, 1e-15) && p.epistemic >= 0.0;
        }
        record("variance decomposition", ok, "total = aleatoric + epistemic");
    }

    // Analytic predictor gradients vs central differences of the guidance value.
    {
        auto value = [&](const Matrix& x) {
            return predictor->guidance_value(HybridMolecule(x, types), world.pocket, 0.6);
        };
        Matrix fd = analysis::finite_difference_gradient(value, coords, 1e-5);
        Matrix an = predictor->grad_coords(mol, world.pocket, 0.6);
        double rel = (fd - an).norm() / std::max(1e-12, an.norm());
        record("coordinate-gradient finite differences", rel < 1e-6,
               "relative residual " + std::to_string(rel));
    }

    // beta-NLL collapses to plain NLL at beta = 0.
    {
        Rng rng(108);
        double worst = 0.0;
        for (int it = 0; it < 200; ++it) {
            double y = rng.normal(), mu = rng.normal(), s2 = 0.05 + rng.uniform();
            worst = std::max(worst,
                             std::abs(beta_nll_loss(y, mu, s2, 0.0) - nll_loss(y, mu, s2)));
        }
        record("beta-weighted loss reduction", worst == 0.0,
               "max residual " + std::to_string(worst));
    }

    return results;
}

}  // namespace gbfn::runner
