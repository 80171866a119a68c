// cmvrp: generate instances, train, evaluate, solve, render and compare.

#include <cmvrp/cmvrp.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace cmvrp;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

struct Globals {
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::string out_dir = ".";
    bool no_timing = false;
};

// A generated test set on disk: manifest.json plus one document per instance.
void write_test_set(const ExperimentConfig& cfg, const fs::path& dir) {
    nlohmann::ordered_json manifest;
    manifest["experiment"] = cfg.name;
    manifest["config_hash"] = cfg.hash();
    manifest["num_customers"] = cfg.num_customers;
    manifest["num_vehicles"] = cfg.num_vehicles;
    manifest["capacities"] = cfg.capacities;
    manifest["test_set_size"] = cfg.test_set_size;
    manifest["seed"] = cfg.seed;
    auto files = nlohmann::ordered_json::array();
    for (const auto& inst : generate_test_set(cfg)) {
        const std::string file = inst.instance_id + ".json";
        write_file(dir / file, write_instance(inst));
        files.push_back(file);
    }
    manifest["instances"] = std::move(files);
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

struct TestSet {
    ExperimentConfig config;
    std::vector<ProblemInstance> instances;
};

TestSet read_test_set(const fs::path& dir) {
    nlohmann::ordered_json manifest;
    try {
        manifest = nlohmann::ordered_json::parse(read_file((dir / "manifest.json").string()));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest", e.what());
    }
    TestSet set;
    try {
        set.config.name = manifest.at("experiment").get<std::string>();
        set.config.num_customers = manifest.at("num_customers").get<int>();
        set.config.num_vehicles = manifest.at("num_vehicles").get<int>();
        set.config.capacities = manifest.at("capacities").get<std::vector<int>>();
        set.config.test_set_size = manifest.at("test_set_size").get<int>();
        set.config.seed = manifest.at("seed").get<std::uint64_t>();
        set.config.validate();
        if (manifest.at("config_hash").get<std::string>() != set.config.hash())
            throw ParseError("manifest.config_hash", "does not match the listed configuration");
        for (const auto& f : manifest.at("instances")) {
            auto inst = read_instance(read_file((dir / f.get<std::string>()).string()));
            if (inst.num_customers() != set.config.num_customers || inst.num_vehicles() != set.config.num_vehicles)
                throw ParseError(f.get<std::string>(), "instance shape differs from the manifest");
            set.instances.push_back(std::move(inst));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest", e.what());
    }
    return set;
}

std::vector<std::string> split_methods(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<Actor> load_actors(const std::string& path, const std::string& expected_hash) {
    const auto ckpt = read_checkpoint(path);
    if (!expected_hash.empty() && ckpt.config_hash != expected_hash)
        throw ValidationError("checkpoint " + path + " was trained for configuration " + ckpt.config_hash +
                              ", not " + expected_hash);
    return restore_train_state(ckpt).actors;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Capacitated multi-vehicle routing: heuristics and an A2C-trained attention policy"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Seed override (experiment, training or random policy)");
    app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out-dir", g.out_dir, "Output directory");
    app.add_flag("--no-timing", g.no_timing, "Record zero wall times so outputs are byte-reproducible");

    // generate
    auto* gen = app.add_subcommand("generate", "Write a test set of instance documents and a manifest");
    std::string gen_config;
    int gen_size = 0;
    gen->add_option("config", gen_config, "Experiment config file")->required();
    gen->add_option("--size", gen_size, "Override test_set_size");

    // train
    auto* tr = app.add_subcommand("train", "Train one actor per vehicle and a shared critic with A2C");
    std::string tr_config, tr_experiment;
    tr->add_option("train_config", tr_config, "Training config file")->required();
    tr->add_option("experiment_config", tr_experiment, "Experiment config file")->required();
    std::optional<int> batch_size, iterations, round_cap, eval_every, ckpt_every, val_size, embed_dim, attn_dim;
    std::optional<double> actor_lr, critic_lr, penalty;
    tr->add_option("--batch-size", batch_size);
    tr->add_option("--iterations", iterations);
    tr->add_option("--round-cap", round_cap);
    tr->add_option("--actor-lr", actor_lr);
    tr->add_option("--critic-lr", critic_lr);
    tr->add_option("--truncation-penalty", penalty);
    tr->add_option("--eval-every", eval_every);
    tr->add_option("--checkpoint-every", ckpt_every);
    tr->add_option("--validation-size", val_size);
    tr->add_option("--embed-dim", embed_dim);
    tr->add_option("--attn-dim", attn_dim);

    // eval
    auto* ev = app.add_subcommand("eval", "Run methods over a test set and write results.csv and summary.md");
    std::string ev_checkpoint, ev_test_set, ev_methods;
    ev->add_option("--checkpoint", ev_checkpoint, "Trained checkpoint (needed for drl-greedy)");
    ev->add_option("--test-set", ev_test_set, "Directory written by 'generate'")->required();
    ev->add_option("--methods", ev_methods, "Comma-separated: drl-greedy,cw,sweep,random,exact")->required();

    // solve
    auto* so = app.add_subcommand("solve", "Solve one instance document and write a plan document");
    std::string so_instance, so_method = "cw", so_checkpoint, so_out;
    so->add_option("instance", so_instance, "Instance document")->required();
    so->add_option("--method", so_method)->check(CLI::IsMember(known_methods()));
    so->add_option("--checkpoint", so_checkpoint);
    so->add_option("--out", so_out, "Plan file (default <out-dir>/<id>.<method>.plan.json)");

    // render
    auto* re = app.add_subcommand("render", "Draw a plan document as SVG");
    std::string re_plan, re_out;
    re->add_option("plan", re_plan, "Plan document")->required();
    re->add_option("--out", re_out, "SVG file (default <out-dir>/<plan stem>.svg)");

    // compare
    auto* co = app.add_subcommand("compare", "Merge result CSVs into markdown tables");
    std::vector<std::string> co_inputs;
    std::string co_out;
    co->add_option("results", co_inputs, "results.csv files")->required();
    co->add_option("--out", co_out, "Markdown file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    if (*seed_opt) g.seed = seed_value;
    const fs::path out_dir(g.out_dir);

    if (*gen) {
        auto cfg = ExperimentConfig::load(gen_config);
        if (gen_size > 0) cfg.test_set_size = gen_size;
        if (g.seed) cfg.seed = *g.seed;
        cfg.validate();
        write_test_set(cfg, out_dir);
        std::cout << "wrote " << cfg.test_set_size << " instances to " << out_dir.string() << "\n";
        return 0;
    }

    if (*tr) {
        auto cfg = TrainConfig::load(tr_config);
        const auto experiment = ExperimentConfig::load(tr_experiment);
        if (g.seed) cfg.seed = *g.seed;
        cfg.jobs = g.jobs;
        cfg.record_timing = !g.no_timing;
        if (batch_size) cfg.batch_size = *batch_size;
        if (iterations) cfg.iterations = *iterations;
        if (round_cap) cfg.round_cap = *round_cap;
        if (actor_lr) cfg.actor_lr = *actor_lr;
        if (critic_lr) cfg.critic_lr = *critic_lr;
        if (penalty) cfg.truncation_penalty = *penalty;
        if (eval_every) cfg.eval_every = *eval_every;
        if (ckpt_every) cfg.checkpoint_every = *ckpt_every;
        if (val_size) cfg.validation_size = *val_size;
        if (embed_dim) cfg.embed_dim = *embed_dim;
        if (attn_dim) cfg.attn_dim = *attn_dim;
        cfg.validate();
        TrainOutputs outputs;
        outputs.checkpoint_dir = checkpoint_dir_override(out_dir.string());
        outputs.log_path = (out_dir / "train_log.csv").string();
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) throw IoError("cannot create " + out_dir.string());
        const auto st = train(cfg, experiment, outputs, [&](const LogLine& line) {
            if (line.val_cost)
                std::cout << "iteration " << line.iteration + 1 << " mean_cost " << fixed(line.mean_cost, 4)
                          << " val_cost " << fixed(*line.val_cost, 4) << std::endl;
        });
        std::cout << "trained " << st.iteration << " iterations; checkpoint "
                  << (fs::path(outputs.checkpoint_dir) / "final.ckpt").string() << "\n";
        return 0;
    }

    if (*ev) {
        const auto methods = split_methods(ev_methods);
        if (methods.empty()) throw ValidationError("--methods: empty method list");
        const auto set = read_test_set(ev_test_set);
        std::optional<std::vector<Actor>> actors;
        const bool needs_policy = std::find(methods.begin(), methods.end(), "drl-greedy") != methods.end();
        if (needs_policy && ev_checkpoint.empty()) throw ValidationError("drl-greedy requires --checkpoint");
        if (!ev_checkpoint.empty()) actors = load_actors(ev_checkpoint, set.config.hash());
        EvalOptions opt;
        opt.experiment = set.config.name;
        opt.seed = g.seed.value_or(0);
        opt.jobs = g.jobs;
        opt.record_timing = !g.no_timing;
        const auto rows = evaluate_methods(methods, set.instances, actors ? &*actors : nullptr, opt);
        write_file(out_dir / "results.csv", write_csv(rows));
        const auto table = summary_table(summarize(rows));
        write_file(out_dir / "summary.md", table);
        std::cout << table;
        return 0;
    }

    if (*so) {
        const auto inst = read_instance(read_file(so_instance));
        RoutePlan plan;
        if (so_method == "drl-greedy") {
            if (so_checkpoint.empty()) throw ValidationError("drl-greedy requires --checkpoint");
            const auto actors = load_actors(so_checkpoint, "");
            plan = solve_greedy(inst, actors);
        } else {
            plan = solve_baseline(so_method, inst, g.seed.value_or(0));
        }
        const fs::path out = so_out.empty() ? out_dir / (inst.instance_id + "." + so_method + ".plan.json") : fs::path(so_out);
        write_file(out, write_plan({so_method, inst, plan}));
        std::cout << so_method << " " << inst.instance_id << " length " << format_double(plan.total_length)
                  << (plan.feasible ? "" : " (infeasible)") << "\n";
        return 0;
    }

    if (*re) {
        const auto doc = read_plan(read_file(re_plan));
        const fs::path out = re_out.empty() ? out_dir / (fs::path(re_plan).stem().string() + ".svg") : fs::path(re_out);
        write_file(out, render_svg(doc.plan, doc.instance));
        return 0;
    }

    if (*co) {
        std::vector<std::vector<ResultRow>> inputs;
        for (const auto& path : co_inputs) {
            try {
                inputs.push_back(read_csv(read_file(path)));
            } catch (const ParseError& e) {
                throw ParseError(path + ":" + e.field(), std::string(e.what()).substr(e.field().size() + 2));
            }
        }
        const auto md = compare_tables(inputs);
        if (co_out.empty())
            std::cout << md;
        else
            write_file(co_out, md);
        return 0;
    }
    return 2;
}

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
