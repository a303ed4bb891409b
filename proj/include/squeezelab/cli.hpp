#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>

namespace squeezelab
{
enum ExitCode : int
{
    kExitOk = 0,
    kExitConfig = 2,
    kExitUnstable = 3,
    kExitNumerical = 4,
};

struct CliOptions
{
    std::string command; // spectrum | phase-scan | sweep | optimize | oracle | stability
    std::filesystem::path config;
    std::filesystem::path out;          // empty: <command>.csv
    std::string feedback = "file";      // on | off | file
    bool force = false;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> grid;    // "N" or "policy:lo,hi,N"
    std::optional<std::pair<double, double>> band;
    unsigned threads = 0;
};

const char *version();

// Runs one subcommand; every engine error is mapped to an exit code and
// reported on `err`. Human-readable progress goes to `log`.
int run_command(const CliOptions &options, std::ostream &log, std::ostream &err);

int exit_code_for(const std::exception &e);

// Manifest path that accompanies a data file.
std::filesystem::path manifest_path(const std::filesystem::path &data);

} // namespace squeezelab
