#include "devstab/pipeline.hpp"

#include "devstab/codec.hpp"
#include "devstab/error.hpp"
#include "devstab/manifest.hpp"

#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace devstab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void apply_jobs(const ExperimentConfig& config, const RunOptions& options) {
    const int jobs = options.jobs > 0 ? options.jobs : config.jobs;
    if (jobs > 0) omp_set_num_threads(jobs);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

/// Every artifact directory carries the tool version and the resolved config.
void write_provenance(const fs::path& dir, const ExperimentConfig& config) {
    fs::create_directories(dir);
    json j{{"tool", "devstab"}, {"version", DEVSTAB_VERSION}, {"config", json::parse(config.resolved_json())}};
    write_text(dir / "provenance.json", j.dump(2) + "\n");
}

std::vector<const EnvironmentSpec*> select_environments(const ExperimentConfig& config,
                                                        const std::vector<std::string>& ids) {
    std::vector<const EnvironmentSpec*> out;
    if (ids.empty()) {
        for (const auto& e : config.environments) out.push_back(&e);
        return out;
    }
    for (const auto& id : ids) {
        const EnvironmentSpec* e = config.find_environment(id);
        if (!e) throw InvalidArgument("unknown environment \"" + id + "\"");
        out.push_back(e);
    }
    return out;
}

std::vector<LabeledImage> load_split(const std::string& manifest_path) {
    return load_dataset(load_manifest(manifest_path));
}

std::string variant_relpath(const std::string& env_id, const std::string& image_id) {
    return env_id + "/" + image_id + ".png";
}

ImageTensor render_variant(const LabeledImage& img, const EnvironmentSpec& env) {
    return quantize(apply_environment(img.tensor, env, img.image_id));
}

std::vector<PredictionRecord> to_records(const ModelParams& params, const std::vector<LabeledImage>& images,
                                         const std::vector<ImageTensor>& rendered, const std::string& env_id) {
    std::vector<ImageTensor> inputs(rendered.size());
    const auto n = static_cast<std::int64_t>(rendered.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::int64_t i = 0; i < n; ++i) inputs[i] = preprocess(rendered[i], params.arch());
    const auto results = forward_batch(params, inputs, Exec::parallel);
    std::vector<PredictionRecord> out(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        PredictionRecord& r = out[i];
        r.image_id = images[i].image_id;
        r.environment_id = env_id;
        r.accepted_labels = images[i].accepted_labels;
        const auto& probs = results[i].probabilities;
        for (const auto& [cls, conf] : predict_topk(probs, static_cast<int>(probs.size())))
            r.ranked.push_back(RankedClass{cls, static_cast<float>(conf)});
    }
    return out;
}

fs::path records_path(const ExperimentConfig& config, const RunOptions& options) {
    if (!options.records.empty()) return options.records;
    return fs::path(output_dir(config, options)) / "records" / (options.model_name + ".jsonl");
}

} // namespace

std::string output_dir(const ExperimentConfig& config, const RunOptions& options) {
    return options.out_dir.empty() ? config.output_dir : options.out_dir;
}

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", fraction * 100.0);
    return buf;
}

ModelParams resolve_model(const ExperimentConfig& config, const std::string& checkpoint_override) {
    const std::string source = checkpoint_override.empty() ? config.model : checkpoint_override;
    if (source != "init") {
        ModelParams params = load_checkpoint(source);
        if (!(params.arch() == config.arch))
            throw InvalidArgument("checkpoint " + source + " does not match the configured architecture");
        return params;
    }
    ModelParams params = init_params(config.arch, init_seed(config));
    if (config.pretrain.epochs > 0) {
        StabilityConfig pre;
        pre.name = "pretrain";
        pre.epochs = config.pretrain.epochs;
        pre.batch_size = config.pretrain.batch_size;
        pre.learning_rate = config.pretrain.learning_rate;
        pre.momentum = config.pretrain.momentum;
        pre.seed = derive_key(config.seed, "pretrain");
        params = stability_train(load_split(config.train_manifest), {}, std::nullopt, pre, params).params;
    }
    return params;
}

std::vector<PerturbIndexEntry> cmd_perturb(const ExperimentConfig& config, const RunOptions& options) {
    apply_jobs(config, options);
    const auto envs = select_environments(config, options.env_ids);
    const auto images = load_split(config.eval_manifest);
    const fs::path dir = fs::path(output_dir(config, options)) / "variants";
    write_provenance(dir, config);

    const std::size_t total = images.size() * envs.size();
    std::vector<PerturbIndexEntry> index(total);
    std::vector<std::string> errors(total);
    const auto n = static_cast<std::int64_t>(total);
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t t = 0; t < n; ++t) {
        const auto& img = images[static_cast<std::size_t>(t) / envs.size()];
        const auto& env = *envs[static_cast<std::size_t>(t) % envs.size()];
        try {
            const auto bytes = encode_image(render_variant(img, env), PngFormat{});
            const std::string rel = variant_relpath(env.env_id, img.image_id);
            const fs::path path = dir / rel;
            fs::create_directories(path.parent_path());
            write_file(path.string(), bytes);
            index[t] = PerturbIndexEntry{img.image_id, env.env_id, env.seed, rel, to_hex(decode_fingerprint(bytes))};
        } catch (const std::exception& e) {
            errors[t] = img.image_id + " / " + env.env_id + ": " + e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw Error("perturb failed for " + e);

    std::sort(index.begin(), index.end(), [](const PerturbIndexEntry& a, const PerturbIndexEntry& b) {
        return std::tie(a.image_id, a.env_id) < std::tie(b.image_id, b.env_id);
    });
    std::ostringstream lines;
    for (const auto& e : index) {
        lines << json{{"image_id", e.image_id}, {"env_id", e.env_id}, {"seed", e.seed}, {"path", e.path},
                      {"fingerprint", e.fingerprint}}
                     .dump()
              << '\n';
    }
    write_text(dir / "index.jsonl", lines.str());
    return index;
}

std::vector<PerturbIndexEntry> load_perturb_index(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("variant index not found: " + path);
    std::vector<PerturbIndexEntry> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            out.push_back(PerturbIndexEntry{j.at("image_id").get<std::string>(), j.at("env_id").get<std::string>(),
                                            j.at("seed").get<std::uint64_t>(), j.at("path").get<std::string>(),
                                            j.at("fingerprint").get<std::string>()});
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<PredictionRecord> infer_records(const ExperimentConfig& config, const ModelParams& params,
                                            const std::vector<std::string>& env_ids) {
    const auto envs = select_environments(config, env_ids);
    const auto images = load_split(config.eval_manifest);
    std::vector<PredictionRecord> records;
    for (const EnvironmentSpec* env : envs) {
        std::vector<ImageTensor> rendered(images.size());
        const auto n = static_cast<std::int64_t>(images.size());
#pragma omp parallel for schedule(dynamic, 4)
        for (std::int64_t i = 0; i < n; ++i) rendered[i] = render_variant(images[i], *env);
        auto part = to_records(params, images, rendered, env->env_id);
        records.insert(records.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    sort_records(records);
    return records;
}

std::string cmd_infer(const ExperimentConfig& config, const RunOptions& options) {
    apply_jobs(config, options);
    const ModelParams params = resolve_model(config, options.checkpoint);
    const fs::path out_dir(output_dir(config, options));
    const fs::path index_path = out_dir / "variants" / "index.jsonl";

    std::vector<PredictionRecord> records;
    if (!fs::exists(index_path)) {
        records = infer_records(config, params, options.env_ids);
    } else {
        std::map<std::pair<std::string, std::string>, std::string> by_key;
        for (const auto& e : load_perturb_index(index_path.string())) by_key[{e.image_id, e.env_id}] = e.path;
        const auto envs = select_environments(config, options.env_ids);
        const auto images = load_split(config.eval_manifest);
        for (const EnvironmentSpec* env : envs) {
            std::vector<ImageTensor> rendered(images.size());
            std::vector<std::string> errors(images.size());
            const auto n = static_cast<std::int64_t>(images.size());
#pragma omp parallel for schedule(dynamic, 4)
            for (std::int64_t i = 0; i < n; ++i) {
                const auto it = by_key.find({images[i].image_id, env->env_id});
                if (it == by_key.end()) {
                    errors[i] = "missing variant for " + images[i].image_id + " in environment " + env->env_id;
                    continue;
                }
                try {
                    rendered[i] = load_image((out_dir / "variants" / it->second).string());
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            }
            for (const auto& e : errors)
                if (!e.empty()) throw IoError(e);
            auto part = to_records(params, images, rendered, env->env_id);
            records.insert(records.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
        }
        sort_records(records);
    }

    const fs::path path = records_path(config, options);
    write_provenance(path.parent_path(), config);
    save_records(records, path.string());
    return path.string();
}

std::vector<TrainedModel> cmd_train(const ExperimentConfig& config, const RunOptions& options) {
    apply_jobs(config, options);
    if (config.stability.empty()) throw InvalidArgument("no stability configuration to train");
    const auto train = load_split(config.train_manifest);
    const auto eval = load_split(config.eval_manifest);
    const ModelParams base = resolve_model(config, options.checkpoint);
    const fs::path dir = fs::path(output_dir(config, options)) / "models";
    write_provenance(dir, config);

    // Baseline: the first cell's schedule and seed without any counterpart.
    StabilityConfig baseline = config.stability.front();
    baseline.name = "no_noise";
    baseline.loss.alpha = 0.0;
    baseline.noise = NoiseConfig{};
    std::vector<StabilityConfig> runs{baseline};
    runs.insert(runs.end(), config.stability.begin(), config.stability.end());

    std::vector<TrainedModel> out;
    for (const auto& cell : runs) {
        std::optional<CounterpartSource> source = generated_source(cell.noise);
        if (cell.noise.kind == NoiseKind::paired || cell.noise.kind == NoiseKind::subsample) {
            const EnvironmentSpec* env = config.find_environment(cell.noise.counterpart_env);
            if (!env) throw InvalidArgument("unknown counterpart environment \"" + cell.noise.counterpart_env + "\"");
            if (cell.noise.kind == NoiseKind::paired) source = build_paired(train, *env);
            else source = build_subsample_pool(train, *env, cell.noise.subsample_k);
        }
        const TrainResult result = stability_train(train, eval, source, cell, base);
        const fs::path stem = dir / cell.name;
        save_checkpoint(result.params, stem.string());
        write_text(dir / (cell.name + ".trace.csv"), trace_csv(result.trace));
        out.push_back(TrainedModel{cell.name, stem.string(), checkpoint_digest(result.params)});
    }
    return out;
}

std::vector<InstabilityReport> cmd_report(const ExperimentConfig& config, const RunOptions& options,
                                          std::ostream& out) {
    apply_jobs(config, options);
    auto records = load_records(records_path(config, options).string());
    if (!options.env_ids.empty()) {
        const std::set<std::string> keep(options.env_ids.begin(), options.env_ids.end());
        std::erase_if(records, [&](const PredictionRecord& r) { return !keep.count(r.environment_id); });
    }
    std::vector<std::string> class_names;
    try {
        class_names = load_manifest(config.eval_manifest).class_vocabulary;
    } catch (const Error&) {
        // Reports fall back to class indices.
    }
    const std::vector<int>& ks = options.k_values.empty() ? config.k_values : options.k_values;
    const fs::path dir = fs::path(output_dir(config, options)) / "report" / options.model_name;
    write_provenance(dir, config);

    std::vector<InstabilityReport> reports;
    for (int k : ks) {
        InstabilityReport report = compute_instability(records, k);
        render_report(report, (dir / ("top" + std::to_string(k))).string(), class_names);
        out << "top" << k << " instability: " << format_percent(report.overall_instability) << '\n';
        reports.push_back(std::move(report));
    }

    // Precision-recall per environment and class, plus the micro average.
    std::set<std::string> envs;
    int class_count = static_cast<int>(class_names.size());
    for (const auto& r : records) {
        envs.insert(r.environment_id);
        for (const auto& rc : r.ranked) class_count = std::max(class_count, rc.class_index + 1);
        for (int l : r.accepted_labels) class_count = std::max(class_count, l + 1);
    }
    std::ostringstream curves, ap;
    curves << "environment,class,recall,precision\n";
    ap << "environment,class,average_precision\n";
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    for (const auto& env : envs) {
        for (int c = -1; c < class_count; ++c) {
            const auto curve = c < 0 ? precision_recall_micro(records, env, class_count)
                                     : precision_recall(records, env, c, class_count);
            const std::string cls = c < 0 ? "micro" : std::to_string(c);
            for (const auto& p : curve) curves << env << ',' << cls << ',' << fmt(p.recall) << ',' << fmt(p.precision) << '\n';
            ap << env << ',' << cls << ',' << fmt(average_precision(curve)) << '\n';
        }
    }
    write_text(dir / "pr_curves.csv", curves.str());
    write_text(dir / "average_precision.csv", ap.str());
    return reports;
}

int cmd_validate(const ExperimentConfig& config, std::ostream& out) {
    const auto violations = validate_config(config);
    for (const auto& v : violations) out << v.code << ": " << v.message << '\n';
    if (violations.empty()) out << "config ok\n";
    return violations.empty() ? 0 : 1;
}

int cmd_run(const ExperimentConfig& config, const RunOptions& options, std::ostream& out) {
    apply_jobs(config, options);
    if (cmd_validate(config, out) != 0) return 1;
    const fs::path models = fs::path(output_dir(config, options)) / "models";

    // Resolve (and pretrain) once so every later step shares the same base weights.
    RunOptions opts = options;
    if (opts.checkpoint.empty()) {
        write_provenance(models, config);
        save_checkpoint(resolve_model(config), (models / "base").string());
        opts.checkpoint = (models / "base").string();
    }
    cmd_perturb(config, opts);

    std::vector<std::pair<std::string, std::string>> to_evaluate{{"base", opts.checkpoint}};
    if (!config.stability.empty()) {
        for (const auto& m : cmd_train(config, opts)) to_evaluate.emplace_back(m.name, m.checkpoint);
    }
    for (const auto& [name, checkpoint] : to_evaluate) {
        RunOptions step = opts;
        step.model_name = name;
        step.checkpoint = checkpoint;
        cmd_infer(config, step);
        out << "[" << name << "]\n";
        cmd_report(config, step, out);
    }
    return 0;
}

} // namespace devstab
