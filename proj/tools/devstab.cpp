#include "devstab/error.hpp"
#include "devstab/pipeline.hpp"
#include "devstab/synth.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitRuntime = 2;

struct Args {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int jobs = 0;
    std::vector<int> k;
    std::vector<std::string> env;
    std::string checkpoint;
    std::string records;
    std::string model_name = "model";
};

void add_common(CLI::App* cmd, Args& a) {
    cmd->add_option("--config", a.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", a.out, "output directory (overrides the config)");
    cmd->add_option("--seed", a.seed, "global seed (overrides the config)");
    cmd->add_option("--jobs", a.jobs, "worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"devstab: cross-device model instability lab"};
    app.set_version_flag("--version", std::string(DEVSTAB_VERSION));
    app.require_subcommand(1);
    Args a;

    auto* validate = app.add_subcommand("validate", "check manifests, environments and cross-references");
    add_common(validate, a);

    auto* perturb = app.add_subcommand("perturb", "materialise every (eval image, environment) variant");
    add_common(perturb, a);
    perturb->add_option("--env", a.env, "restrict to these environment ids")->delimiter(',');

    auto* infer = app.add_subcommand("infer", "write prediction records for every variant");
    add_common(infer, a);
    infer->add_option("--env", a.env, "restrict to these environment ids")->delimiter(',');
    infer->add_option("--checkpoint", a.checkpoint, "checkpoint stem (overrides the config model)");
    infer->add_option("--name", a.model_name, "records file name under <out>/records/");

    auto* train = app.add_subcommand("train", "baseline fine-tune plus every stability cell");
    add_common(train, a);
    train->add_option("--checkpoint", a.checkpoint, "base checkpoint (overrides the config model)");

    auto* report = app.add_subcommand("report", "instability tables and plots per k");
    add_common(report, a);
    report->add_option("--k", a.k, "k values, e.g. 1,3")->delimiter(',')->check(CLI::PositiveNumber);
    report->add_option("--records", a.records, "records file (default <out>/records/<name>.jsonl)");
    report->add_option("--name", a.model_name, "model name used for the report directory");
    report->add_option("--env", a.env, "restrict to these environment ids")->delimiter(',');

    auto* run = app.add_subcommand("run", "validate, perturb, train, infer and report");
    add_common(run, a);
    run->add_option("--k", a.k, "k values, e.g. 1,3")->delimiter(',')->check(CLI::PositiveNumber);
    run->add_option("--checkpoint", a.checkpoint, "base checkpoint (overrides the config model)");

    std::string synth_out;
    int synth_train = 3500, synth_eval = 1000, synth_size = 32;
    std::uint64_t synth_seed = 1;
    auto* synth = app.add_subcommand("synth", "write the procedural 10-class dataset with manifests");
    synth->add_option("--out", synth_out, "dataset directory")->required();
    synth->add_option("--train", synth_train, "training images")->check(CLI::NonNegativeNumber);
    synth->add_option("--eval", synth_eval, "eval images")->check(CLI::NonNegativeNumber);
    synth->add_option("--size", synth_size, "image side in pixels")->check(CLI::Range(8, 1024));
    synth->add_option("--seed", synth_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        try {
            const auto written = devstab::synth::write_dataset(synth_out, synth_train, synth_eval, synth_seed, synth_size);
            std::cout << written.train_manifest << '\n' << written.eval_manifest << '\n';
            return kExitOk;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitRuntime;
        }
    }

    devstab::ExperimentConfig config;
    try {
        config = devstab::load_config(a.config);
        if (a.seed) devstab::apply_seed(config, *a.seed);
    } catch (const devstab::ParseError& e) {
        std::cerr << "E_PARSE: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }

    devstab::RunOptions opts;
    opts.out_dir = a.out;
    opts.jobs = a.jobs;
    opts.k_values = a.k;
    opts.env_ids = a.env;
    opts.checkpoint = a.checkpoint;
    opts.records = a.records;
    opts.model_name = a.model_name;

    try {
        if (validate->parsed()) return devstab::cmd_validate(config, std::cout);
        if (run->parsed()) return devstab::cmd_run(config, opts, std::cout);
        if (perturb->parsed()) {
            const auto index = devstab::cmd_perturb(config, opts);
            std::cout << index.size() << " variants written to " << devstab::output_dir(config, opts) << "/variants\n";
        } else if (infer->parsed()) {
            std::cout << devstab::cmd_infer(config, opts) << '\n';
        } else if (train->parsed()) {
            for (const auto& m : devstab::cmd_train(config, opts)) std::cout << m.name << ' ' << m.digest << '\n';
        } else if (report->parsed()) {
            devstab::cmd_report(config, opts, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
