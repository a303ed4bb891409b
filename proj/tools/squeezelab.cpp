#include "squeezelab/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char **argv)
{
    using namespace squeezelab;

    CLI::App app{"Ponderomotive squeezing spectra with homodyne feedback"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);

    CliOptions opt;
    std::string band;
    auto add_common = [&](CLI::App *sub) {
        sub->add_option("--config", opt.config, "YAML configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out, "data file (manifest goes alongside as <out>.manifest.json)");
        sub->add_option("--feedback", opt.feedback, "on (closed-form gains), off, or file (use the config)")
            ->check(CLI::IsMember({"on", "off", "file"}));
        sub->add_flag("--force", opt.force, "emit results even for unstable configurations");
        sub->add_option("--seed", opt.seed, "seed for the oracle and the optimizer's restarts");
        sub->add_option("--grid", opt.grid, "grid override: N or policy:lo,hi,N (rad/s)");
        sub->add_option("--band", band, "band override lo,hi in rad/s");
        sub->add_option("--threads", opt.threads, "worker threads (0 = all cores)");
    };
    for (const char *name : {"spectrum", "phase-scan", "sweep", "optimize", "oracle", "stability"})
    {
        add_common(app.add_subcommand(name));
    }

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    opt.command = app.get_subcommands().front()->get_name();
    if (!band.empty())
    {
        const auto comma = band.find(',');
        try
        {
            if (comma == std::string::npos)
            {
                throw std::invalid_argument("missing comma");
            }
            opt.band = std::make_pair(std::stod(band.substr(0, comma)), std::stod(band.substr(comma + 1)));
        }
        catch (const std::exception &)
        {
            std::cerr << "squeezelab: --band expects lo,hi in rad/s, got '" << band << "'\n";
            return kExitConfig;
        }
    }
    return run_command(opt, std::cout, std::cerr);
}
