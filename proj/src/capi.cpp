#include "guided_bfn.h"

#include <cstdio>
#include <string>
#include <vector>

#include "gbfn/runner.hpp"

namespace {

thread_local std::string g_last_error;

struct ConfigHandle {
    gbfn::runner::RunConfig config;
};

gbfn_status set_error(gbfn_status status, const std::string& msg) {
    g_last_error = msg;
    return status;
}

// Maps library exceptions onto the C status codes.
template <typename Fn>
gbfn_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const gbfn::ConfigError& e) {
        return set_error(GBFN_ERR_CONFIG, e.what());
    } catch (const gbfn::IoError& e) {
        return set_error(GBFN_ERR_IO, e.what());
    } catch (const gbfn::Error& e) {
        return set_error(GBFN_ERR_RUNTIME, e.what());
    } catch (const std::exception& e) {
        return set_error(GBFN_ERR_RUNTIME, e.what());
    }
}

}  // namespace

extern "C" {

struct gbfn_config : ConfigHandle {};

const char* gbfn_version(void) { return "1.0.0"; }

const char* gbfn_last_error(void) { return g_last_error.c_str(); }

gbfn_status gbfn_config_load(const char* path, gbfn_config** out_config) {
    if (!path || !out_config)
        return set_error(GBFN_ERR_INVALID_ARGUMENT, "null argument to gbfn_config_load");
    *out_config = nullptr;
    return guarded([&] {
        auto* handle = new gbfn_config;
        try {
            handle->config = gbfn::runner::load_run_config(path);
        } catch (...) {
            delete handle;
            throw;
        }
        *out_config = handle;
        return GBFN_OK;
    });
}

gbfn_status gbfn_config_parse(const char* json_text, gbfn_config** out_config) {
    if (!json_text || !out_config)
        return set_error(GBFN_ERR_INVALID_ARGUMENT, "null argument to gbfn_config_parse");
    *out_config = nullptr;
    return guarded([&] {
        auto* handle = new gbfn_config;
        try {
            handle->config = gbfn::runner::parse_run_config(json_text);
        } catch (...) {
            delete handle;
            throw;
        }
        *out_config = handle;
        return GBFN_OK;
    });
}

void gbfn_config_free(gbfn_config* config) { delete config; }

gbfn_status gbfn_config_set_out_dir(gbfn_config* config, const char* out_dir) {
    if (!config || !out_dir)
        return set_error(GBFN_ERR_INVALID_ARGUMENT, "null argument to gbfn_config_set_out_dir");
    config->config.out_dir = out_dir;
    return GBFN_OK;
}

gbfn_status gbfn_config_set_base_seed(gbfn_config* config, unsigned long long seed) {
    if (!config)
        return set_error(GBFN_ERR_INVALID_ARGUMENT, "null config in gbfn_config_set_base_seed");
    config->config.base_seed = seed;
    return GBFN_OK;
}

gbfn_status gbfn_run(const gbfn_config* config, int jobs) {
    if (!config) return set_error(GBFN_ERR_INVALID_ARGUMENT, "null config in gbfn_run");
    return guarded([&] {
        gbfn::runner::execute_run(config->config, jobs <= 0 ? 1 : jobs);
        return GBFN_OK;
    });
}

gbfn_status gbfn_compare(const char* const* run_dirs, int n_dirs, const char* out_dir) {
    if (!run_dirs || n_dirs < 1 || !out_dir)
        return set_error(GBFN_ERR_INVALID_ARGUMENT, "bad arguments to gbfn_compare");
    return guarded([&] {
        std::vector<std::string> dirs;
        dirs.reserve(static_cast<size_t>(n_dirs));
        for (int i = 0; i < n_dirs; ++i) {
            if (!run_dirs[i])
                throw gbfn::ConfigError("null run directory at index " + std::to_string(i));
            dirs.emplace_back(run_dirs[i]);
        }
        gbfn::runner::execute_compare(dirs, out_dir);
        return GBFN_OK;
    });
}

gbfn_status gbfn_verify(int* n_failed) {
    if (n_failed) *n_failed = 0;
    return guarded([&] {
        int failed = 0;
        for (const auto& result : gbfn::runner::run_verify()) {
            std::printf("%-42s %s  (%s)\n", result.name.c_str(),
                        result.pass ? "PASS" : "FAIL", result.detail.c_str());
            if (!result.pass) ++failed;
        }
        std::fflush(stdout);
        if (n_failed) *n_failed = failed;
        if (failed > 0)
            return set_error(GBFN_ERR_VERIFY_FAILED,
                             std::to_string(failed) + " verification properties failed");
        return GBFN_OK;
    });
}

}  // extern "C"
