// Command-line front end: generate benchmarks, infer properties, evaluate
// them, and run the backdoor defense. Every command is a pure function of its
// input files, flags, and seed.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "gnnprop/generate.hpp"
#include "gnnprop/pipeline.hpp"

namespace fs = std::filesystem;
using namespace gnnprop;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitStage = 3;

struct CommonOpts {
    std::string model_path, data_path, out_dir = ".", config_path;
    uint64_t seed = 0;
    PipelineConfig cfg;
};

void apply_config_file(CLI::App& app, CommonOpts& opts) {
    if (opts.config_path.empty()) return;
    nlohmann::json j = parse_json(read_file(opts.config_path), opts.config_path);
    auto set_if_absent = [&](const char* flag, auto& field, const char* key) {
        if (app.count(flag) == 0 && j.contains(key))
            field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    set_if_absent("--seed", opts.seed, "seed");
    set_if_absent("--threshold", opts.cfg.threshold, "threshold");
    set_if_absent("--min-support", opts.cfg.min_support, "min_support");
    set_if_absent("--top-k", opts.cfg.top_k, "top_k");
    set_if_absent("--max-structure-nodes", opts.cfg.max_structure_nodes, "max_structure_nodes");
    set_if_absent("--match-cap", opts.cfg.match_cap, "match_cap");
    set_if_absent("--tau-s", opts.cfg.tau_s, "tau_s");
    set_if_absent("--unnoticeable", opts.cfg.unnoticeable, "unnoticeable");
    set_if_absent("--override-rate", opts.cfg.override_rate, "override_rate");
    set_if_absent("--jobs", opts.cfg.jobs, "jobs");
}

void add_common_flags(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--seed", opts.seed, "Seed threading all randomness");
    cmd->add_option("--config", opts.config_path, "JSON config mirroring the flags");
    cmd->add_option("--threshold", opts.cfg.threshold, "Occlusion keep threshold")->capture_default_str();
    cmd->add_option("--min-support", opts.cfg.min_support, "Mining support fraction")->capture_default_str();
    cmd->add_option("--top-k", opts.cfg.top_k, "Mined structures to keep")->capture_default_str();
    cmd->add_option("--max-structure-nodes", opts.cfg.max_structure_nodes, "Pattern size cap")
        ->capture_default_str();
    cmd->add_option("--match-cap", opts.cfg.match_cap, "Max retrieved matches")->capture_default_str();
    cmd->add_option("--tau-s", opts.cfg.tau_s, "Stealthiness ratio bound")->capture_default_str();
    cmd->add_option("--unnoticeable", opts.cfg.unnoticeable, "Unnoticeable SPR bound")
        ->capture_default_str();
    cmd->add_option("--override-rate", opts.cfg.override_rate, "Backdoor overriding-rate bar")
        ->capture_default_str();
    cmd->add_option("--jobs", opts.cfg.jobs, "Worker threads (0 = all cores)")->capture_default_str();
}

int do_gen(const std::string& task, const CommonOpts& opts, int n_graphs, int lo, int hi,
           double poison_rate) {
    fs::create_directories(opts.out_dir);
    auto path = [&](const std::string& name) { return (fs::path(opts.out_dir) / name).string(); };
    if (task == "bfs") {
        save_dataset(gen_bfs_dataset(opts.seed, n_graphs, lo, hi), path("bfs_data.json"));
        save_gnn(build_bfs_reference(), path("bfs_model.json"));
    } else if (task == "dfs") {
        save_dataset(gen_dfs_dataset(opts.seed, n_graphs, lo, hi), path("dfs_data.json"));
        save_gnn(build_dfs_reference(), path("dfs_model.json"));
    } else if (task == "bf") {
        save_dataset(gen_bf_dataset(opts.seed, n_graphs, lo, hi), path("bf_data.json"));
        save_gnn(build_bellman_ford_reference(), path("bf_model.json"));
    } else if (task == "backdoor") {
        TriggerSpec spec = TriggerSpec::defaults();
        spec.poison_rate = poison_rate;
        BackdoorBenchmark b = build_backdoored_classifier(spec, opts.seed);
        save_gnn(b.model, path("backdoor_model.json"));
        save_dataset(b.train, path("backdoor_train.json"));
        save_dataset(b.test_clean, path("backdoor_test_clean.json"));
        save_dataset(b.test_triggered, path("backdoor_test_triggered.json"));
    } else {
        throw ValidationError("unknown task: " + task + " (expected bfs|dfs|bf|backdoor)");
    }
    std::cout << "wrote " << task << " benchmark to " << opts.out_dir << "\n";
    return 0;
}

int do_infer(const CommonOpts& opts) {
    Gnn model = load_gnn(opts.model_path);
    Dataset data = load_dataset(opts.data_path);
    PipelineConfig cfg = opts.cfg;
    cfg.seed = opts.seed;
    InferenceResult result = run_infer(model, data, cfg);
    fs::create_directories(opts.out_dir);
    std::string props_path = (fs::path(opts.out_dir) / "properties.json").string();
    save_inference_result(result, props_path);
    std::string report = render_report(result, model, &data);
    write_file((fs::path(opts.out_dir) / "report.txt").string(), report);
    std::cout << report;
    std::cout << "wrote " << props_path << "\n";
    return 0;
}

int do_defend(const CommonOpts& opts, const std::string& train_path, const std::string& clean_path,
              const std::string& triggered_path, const std::string& props_path, bool with_ld) {
    Gnn model = load_gnn(opts.model_path);
    Dataset train = load_dataset(train_path);
    Dataset clean = load_dataset(clean_path);
    Dataset triggered = load_dataset(triggered_path);
    InferenceResult props = load_inference_result(props_path);

    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "thresholds: unnoticeable<=%.3f tau_s<%.3f override>=%.3f\n",
                  opts.cfg.unnoticeable, opts.cfg.tau_s, opts.cfg.override_rate);
    out += buf;

    std::vector<DynProperty> dyn_props;
    for (const PropertyRecord& rec : props.records)
        if (rec.dyn) dyn_props.push_back(*rec.dyn);

    std::vector<DynProperty> backdoor_props;
    std::string objective;
    int target_class = -1;
    if (!dyn_props.empty()) {
        BackdoorClassification cls = classify_backdoor(dyn_props, train, clean, model,
                                                       opts.cfg.backdoor_thresholds(),
                                                       opts.cfg.match_cap);
        for (size_t i : cls.backdoor) backdoor_props.push_back(dyn_props[i]);
        out += "backdoor properties: " + std::to_string(cls.backdoor.size()) +
               " benign: " + std::to_string(cls.benign.size()) +
               " undecided: " + std::to_string(cls.undecided.size()) + "\n";
        if (!backdoor_props.empty()) {
            objective = backdoor_props.front().base.objective;
            target_class = backdoor_props.front().base.out.cls;
        }
    } else {
        out += "no dynamic properties supplied; reporting baselines only\n";
    }
    if (objective.empty()) {
        for (const auto& [name, obj] : model.objectives)
            if (obj.kind == TaskKind::Classification) {
                objective = name;
                break;
            }
    }
    if (target_class < 0 && !backdoor_props.empty())
        target_class = backdoor_props.front().base.out.cls;

    PruneOptions po;
    po.match_cap = opts.cfg.match_cap;
    DefenseReport main = prune_and_evaluate(model, backdoor_props, clean, triggered, objective,
                                            target_class, po);
    out += render_defense_table("properties", main);
    DefenseReport base = prune_homophily_baseline(model, clean, triggered, objective, target_class,
                                                  0.0, false);
    out += render_defense_table("prune", base);
    DefenseReport base_ld = prune_homophily_baseline(model, clean, triggered, objective, target_class,
                                                     0.0, true);
    out += render_defense_table("prune+ld", base_ld);
    if (with_ld) {
        po.label_isolation = true;
        DefenseReport main_ld = prune_and_evaluate(model, backdoor_props, clean, triggered, objective,
                                                   target_class, po);
        out += render_defense_table("props+ld", main_ld);
    }

    fs::create_directories(opts.out_dir);
    JsonWriter w;
    w.begin_object();
    w.key("acc");
    w.value(main.acc);
    w.key("asr");
    w.value(main.asr);
    w.key("d_acc");
    w.value(main.d_acc);
    w.key("d_asr");
    w.value(main.d_asr);
    w.key("pruned_edge_count");
    w.value(static_cast<long long>(main.pruned_edge_count));
    w.key("n_backdoor_properties");
    w.value(static_cast<long long>(backdoor_props.size()));
    w.end_object();
    write_file((fs::path(opts.out_dir) / "defense_report.json").string(), w.str() + "\n");
    std::cout << out;
    return 0;
}

int do_eval(const CommonOpts& opts, const std::string& props_path) {
    Gnn model = load_gnn(opts.model_path);
    Dataset data = load_dataset(opts.data_path);
    InferenceResult props = load_inference_result(props_path);
    for (size_t i = 0; i < props.records.size(); ++i) {
        PropertyRecord& rec = props.records[i];
        if (!rec.dyn) continue;
        rec.dyn->confidence = evaluate_confidence(*rec.dyn, model, data, opts.cfg.match_cap);
    }
    std::cout << render_report(props, model, &data);
    return 0;
}

int do_report(const CommonOpts& opts, const std::string& props_path) {
    Gnn model = load_gnn(opts.model_path);
    InferenceResult props = load_inference_result(props_path);
    if (!opts.data_path.empty()) {
        Dataset data = load_dataset(opts.data_path);
        std::cout << render_report(props, model, &data);
    } else {
        std::cout << render_report(props, model, nullptr);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Property inference for message-passing graph neural networks"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string task, train_path, clean_path, triggered_path, props_path;
    int n_graphs = 160, nodes_lo = 6, nodes_hi = 12;
    double poison_rate = 0.05;
    bool with_ld = false;

    CLI::App* gen = app.add_subcommand("gen", "Generate a benchmark (dataset + model)");
    gen->add_option("task", task, "bfs|dfs|bf|backdoor")->required();
    gen->add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
    gen->add_option("--n-graphs", n_graphs, "Graphs (or traces for dfs)")->capture_default_str();
    gen->add_option("--nodes-lo", nodes_lo, "Min nodes per graph")->capture_default_str();
    gen->add_option("--nodes-hi", nodes_hi, "Max nodes per graph")->capture_default_str();
    gen->add_option("--poison-rate", poison_rate, "Backdoor poison fraction")->capture_default_str();
    add_common_flags(gen, opts);

    CLI::App* infer = app.add_subcommand("infer", "Infer properties of a model on a dataset");
    infer->add_option("--model", opts.model_path, "Model JSON")->required();
    infer->add_option("--data", opts.data_path, "Dataset JSON")->required();
    infer->add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
    add_common_flags(infer, opts);

    CLI::App* defend = app.add_subcommand("defend", "Detect backdoor properties and prune");
    defend->add_option("--model", opts.model_path, "Model JSON")->required();
    defend->add_option("--train", train_path, "Training dataset JSON")->required();
    defend->add_option("--test-clean", clean_path, "Clean test dataset JSON")->required();
    defend->add_option("--test-triggered", triggered_path, "Triggered test dataset JSON")->required();
    defend->add_option("--properties", props_path, "Inferred properties JSON")->required();
    defend->add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
    defend->add_flag("--with-ld", with_ld, "Also report label-isolation pruning");
    add_common_flags(defend, opts);

    CLI::App* eval = app.add_subcommand("eval", "Re-evaluate property confidence on a dataset");
    eval->add_option("--model", opts.model_path, "Model JSON")->required();
    eval->add_option("--data", opts.data_path, "Dataset JSON")->required();
    eval->add_option("--properties", props_path, "Inferred properties JSON")->required();
    add_common_flags(eval, opts);

    CLI::App* report = app.add_subcommand("report", "Render a properties file as text");
    report->add_option("--model", opts.model_path, "Model JSON")->required();
    report->add_option("--properties", props_path, "Inferred properties JSON")->required();
    report->add_option("--data", opts.data_path, "Dataset JSON (enables normalization)");
    add_common_flags(report, opts);

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* sub = app.get_subcommands().front();
        apply_config_file(*sub, opts);
        if (sub == gen) return do_gen(task, opts, n_graphs, nodes_lo, nodes_hi, poison_rate);
        if (sub == infer) return do_infer(opts);
        if (sub == defend)
            return do_defend(opts, train_path, clean_path, triggered_path, props_path, with_ld);
        if (sub == eval) return do_eval(opts, props_path);
        if (sub == report) return do_report(opts, props_path);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const Error& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return kExitStage;
    } catch (const std::exception& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return kExitStage;
    }
    return 0;
}
