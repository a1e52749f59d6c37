#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <openssl/opensslv.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>
#include <boost/version.hpp>
#include <Eigen/Core>

#include "CLI11.hpp"
#include "json.hpp"

#include "wavetomo/config.hpp"
#include "wavetomo/errors.hpp"
#include "wavetomo/experiments.hpp"

namespace fs = std::filesystem;
using namespace wavetomo;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        out += buf;
    }
    return out;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::shared_ptr<spdlog::logger> make_logger() {
    auto log = spdlog::stderr_color_mt("wavetomo");
    log->set_pattern("[%l] %v");
    const char* env = std::getenv("WAVETOMO_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") log->set_level(spdlog::level::err);
    else if (level == "debug") log->set_level(spdlog::level::debug);
    else log->set_level(spdlog::level::info);
    if (env && level != "error" && level != "info" && level != "debug")
        log->warn("WAVETOMO_LOG='{}' not recognized (error, info, debug); using info", level);
    return log;
}

nlohmann::json versions() {
    return {{"wavetomo", kVersion},
            {"compiler", __VERSION__},
            {"cxx_standard", __cplusplus},
            {"boost", BOOST_LIB_VERSION},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"cli11", CLI11_VERSION},
            {"openssl", OPENSSL_VERSION_TEXT}};
}

struct Options {
    std::string config;
    std::string output;
    int threads = 1;
};

int execute(const std::string& subcommand, const Options& opt, spdlog::logger& log) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig cfg;
    std::string config_text;
    try {
        config_text = read_file(opt.config);
        cfg = load_config(opt.config);
    } catch (const ConfigError& e) {
        log.error("invalid config: {}", e.what());
        return 2;
    } catch (const std::exception& e) {
        log.error("{}", e.what());
        return 2;
    }
    if (subcommand != "run" && to_string(cfg.kind) != subcommand) {
        log.error("invalid config: kind: config declares '{}' but subcommand is '{}'", to_string(cfg.kind), subcommand);
        return 2;
    }
    if (opt.threads < 1) {
        log.error("--threads must be at least 1");
        return 2;
    }

    RunContext ctx;
    ctx.output = opt.output;
    ctx.threads = opt.threads;
    ctx.hash = sha256_hex;
    ctx.log = [&log](LogLevel l, const std::string& m) {
        if (l == LogLevel::error) log.error("{}", m);
        else if (l == LogLevel::info) log.info("{}", m);
        else log.debug("{}", m);
    };

    RunOutcome outcome;
    try {
        fs::create_directories(ctx.output);
        outcome = run_experiment(cfg, ctx);
    } catch (const ConfigError& e) {
        log.error("invalid config: {}", e.what());
        return 2;
    } catch (const NumericalError& e) {
        log.error("numerical failure: {}", e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        log.error("invalid input: {}", e.what());
        return 2;
    } catch (const std::exception& e) {
        log.error("numerical failure: {}", e.what());
        return 3;
    }

    {
        std::ofstream out(ctx.output / "config.json", std::ios::binary);
        out << cfg.raw.dump(2) << '\n';
    }
    outcome.files.insert(outcome.files.begin(), "config.json");

    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : outcome.files) {
        const auto body = read_file(ctx.output / f);
        files.push_back({{"path", f}, {"sha256", sha256_hex(body)}, {"bytes", body.size()}});
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const nlohmann::json manifest{{"kind", to_string(cfg.kind)},
                                  {"config_file", fs::path(opt.config).filename().string()},
                                  {"config_hash", sha256_hex(config_text)},
                                  {"seed", cfg.seed},
                                  {"threads", opt.threads},
                                  {"versions", versions()},
                                  {"wall_time_seconds", wall},
                                  {"background", outcome.background},
                                  {"status", outcome.status},
                                  {"message", outcome.message},
                                  {"summary", outcome.summary},
                                  {"files", files}};
    {
        std::ofstream out(ctx.output / "manifest.json", std::ios::binary);
        out << manifest.dump(2) << '\n';
    }
    if (outcome.status != 0) {
        log.error("numerical failure: {}", outcome.message);
        return outcome.status;
    }
    log.info("wrote {} files to {}", outcome.files.size() + 1, ctx.output.string());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    auto log = make_logger();
    CLI::App app{"Plane-wave trace experiments for first-order perturbations of the wave operator"};
    app.require_subcommand(1);
    Options opt;
    std::vector<std::string> names;
    for (const auto& [kind, name] : kind_names()) names.push_back(name);
    names.push_back("run");
    for (const auto& name : names) {
        auto* sub = app.add_subcommand(name, name == "run" ? "run the experiment kind named in the config"
                                                          : "run a '" + name + "' experiment");
        sub->add_option("--config", opt.config, "experiment config (JSON)")->required();
        sub->add_option("--output", opt.output, "output directory")->required();
        sub->add_option("--threads", opt.threads, "worker threads")->default_val(1);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    for (auto* sub : app.get_subcommands()) return execute(sub->get_name(), opt, *log);
    return 2;
}
