// fracflow: fractional TV gradient flows on images and 1D signals.
//
// Exit codes: 0 ok, 1 a verification check or the solver failed, 2 usage/config error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

#include "fracflow/cli.hpp"
#include "fracflow/parallel.hpp"
#include "fracflow/selftest.hpp"

int main(int argc, char** argv)
{
    using namespace fracflow;
    CLI::App app{"Nonlocal (fractional) TV gradient flows: denoising, deblurring, WIDE minimizers, verification"};
    app.footer(std::string("\nConfig files are key=value lines ('#' starts a comment); unknown keys are errors.\n"
                           "Exit codes: 0 ok, 1 check or solver failure, 2 usage or config error.\n\n") +
               csv_schema_help());
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int threads = 1;
    bool inject_fault = false;
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    const auto add_run = [&](const char* name, const char* help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "run configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (default: the config's output key)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        return sub;
    };
    auto* denoise = add_run("denoise", "run a denoising flow; writes restored images, trace.csv, report.csv");
    auto* deblur = add_run("deblur", "run a deblurring flow; writes restored images, trace.csv, report.csv");
    auto* wide = add_run("wide", "WIDE minimizers for each eps, study.csv, report.csv");
    auto* verify = add_run("verify", "flow plus the full verification suite; writes trace.csv, report.csv");
    auto* selftest = app.add_subcommand("selftest", "run the built-in oracle suite");
    selftest->add_flag("--inject-fault", inject_fault, "corrupt one kernel weight (the suite must fail)");
    selftest->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    set_threads(threads);

    try {
        if (selftest->parsed()) {
            SelftestOptions opt;
            opt.corrupt_kernel_weight = inject_fault;
            const auto reports = run_selftest(opt);
            return detail::summarize(reports, std::cout);
        }
        RunConfig cfg = load_config(config_path);
        const std::string dir = out_dir.empty() ? cfg.output : out_dir;
        if (denoise->parsed()) return cmd_denoise(cfg, dir, std::cout);
        if (deblur->parsed()) return cmd_deblur(cfg, dir, std::cout);
        if (wide->parsed()) return cmd_wide(cfg, dir, std::cout);
        if (verify->parsed()) return cmd_verify(cfg, dir, std::cout);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
