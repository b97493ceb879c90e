// Command-line surface: dataset generation, two-phase training, evaluation,
// per-sample uncertainty inspection, and threshold diagnostics.
//
// Exit codes: 0 success, 1 usage error, 2 data/checkpoint error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "evoia/metrics.hpp"
#include "evoia/model.hpp"
#include "evoia/scenesim.hpp"
#include "evoia/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::int64_t> parse_ids(const std::string& csv) {
    std::vector<std::int64_t> ids;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = evoia::trim(tok);
        if (tok.empty()) continue;
        try {
            ids.push_back(std::stoll(tok));
        } catch (const std::exception&) {
            throw UsageError("--ids: '" + tok + "' is not an integer");
        }
    }
    if (ids.empty()) throw UsageError("--ids: no sample ids given");
    return ids;
}

std::string dataset_path(const std::string& data_arg) {
    fs::path p(data_arg);
    if (fs::is_directory(p)) p /= "dataset.jsonl";
    return p.string();
}

std::vector<evoia::SceneSample> load_split(const std::string& data_arg, const std::string& split) {
    const auto all = evoia::read_dataset(dataset_path(data_arg));
    auto subset = split.empty() ? all : evoia::filter_split(all, split);
    if (subset.empty())
        throw std::runtime_error("dataset " + dataset_path(data_arg) + " has no samples in split '" +
                                 split + "'");
    return subset;
}

struct GenArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

int run_gen(const GenArgs& args) {
    evoia::GeneratorConfig cfg =
        args.config.empty() ? evoia::GeneratorConfig{} : evoia::GeneratorConfig::from_file(args.config);
    if (args.seed) cfg.seed = *args.seed;
    const auto samples = evoia::generate_dataset(cfg);
    fs::create_directories(args.out);
    const std::string path = (fs::path(args.out) / "dataset.jsonl").string();
    evoia::write_dataset(samples, path);
    std::cout << "wrote " << samples.size() << " samples (" << cfg.n_train << " train / " << cfg.n_val
              << " val / " << cfg.n_test << " test) to " << path << "\n";
    return 0;
}

struct TrainArgs {
    int phase = 1;
    std::string data;
    std::string out;
    std::string config;
    std::string strategies;
    std::string init_checkpoint;
    std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& args) {
    if (args.phase != 1 && args.phase != 2) throw UsageError("--phase must be 1 or 2");
    if (args.phase == 2 && args.init_checkpoint.empty())
        throw UsageError("train --phase 2 requires --init-checkpoint (the Phase-1 best model)");
    if (args.phase == 1 && !args.strategies.empty())
        throw UsageError("--strategies only applies to --phase 2");

    evoia::TrainConfig train_cfg;
    evoia::ModelConfig model_cfg;
    if (!args.config.empty()) {
        evoia::KeyValueReader kv(evoia::parse_key_value_file(args.config));
        train_cfg = evoia::TrainConfig::from_reader(kv);
        model_cfg = evoia::model_config_from_reader(kv);
        auto leftovers = kv.unused();
        if (!leftovers.empty())
            throw std::runtime_error(args.config + ": unknown training key '" +
                                     leftovers.begin()->first + "'");
    }
    if (args.seed) train_cfg.seed = *args.seed;

    const auto dataset = evoia::read_dataset(dataset_path(args.data));
    fs::create_directories(args.out);

    evoia::TrainResult result;
    if (args.phase == 1) {
        model_cfg.region_feature_dim = evoia::filter_split(dataset, "train").at(0).region_dim();
        result = evoia::train_phase1(dataset, model_cfg, train_cfg);
    } else {
        evoia::StrategyFlags flags;
        try {
            flags = evoia::parse_strategies(args.strategies);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        const evoia::Checkpoint ckpt = evoia::load_checkpoint(args.init_checkpoint);
        result = evoia::train_phase2(ckpt.params, ckpt.config, dataset, train_cfg, flags);
    }

    const std::string ckpt_path = (fs::path(args.out) / "checkpoint.ckpt").string();
    const std::string log_path = (fs::path(args.out) / "train_log.jsonl").string();
    evoia::save_checkpoint(ckpt_path, result.best_params, result.model_config,
                           args.phase == 1 ? "phase1" : "phase2", train_cfg.seed);
    evoia::write_train_log(result.log, log_path);
    std::cout << "phase " << args.phase << ": ran " << result.epochs_run << " epochs, best epoch "
              << result.best_epoch << " with validation macro-F1 "
              << evoia::fmt_double(result.best_val_macro_f1) << "\n"
              << "checkpoint: " << ckpt_path << "\nlog: " << log_path << "\n";
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string split = "test";
    std::string report;
    std::string format = "csv";
};

int run_eval(const EvalArgs& args) {
    if (args.format != "csv" && args.format != "json-lines")
        throw UsageError("--format must be csv or json-lines");
    const evoia::Checkpoint ckpt = evoia::load_checkpoint(args.checkpoint);
    const auto samples = load_split(args.data, args.split);
    const evoia::EvalReport report = evoia::evaluate(ckpt.params, ckpt.config, samples);

    std::ostringstream text;
    if (args.format == "csv")
        evoia::write_report_csv(report, text);
    else
        evoia::write_report_jsonl(report, text);
    if (args.report.empty()) {
        std::cout << text.str();
    } else {
        std::ofstream out(args.report, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open report file " + args.report);
        out << text.str();
        std::cout << "wrote report for " << samples.size() << " samples to " << args.report << "\n";
    }
    return 0;
}

struct InspectArgs {
    std::string checkpoint;
    std::string data;
    std::string ids;
    std::string split;  // empty: search the whole file
    std::string format = "csv";
};

int run_inspect(const InspectArgs& args) {
    if (args.format != "csv" && args.format != "json-lines")
        throw UsageError("--format must be csv or json-lines");
    const evoia::Checkpoint ckpt = evoia::load_checkpoint(args.checkpoint);
    const auto samples = load_split(args.data, args.split);
    const auto ids = parse_ids(args.ids);

    if (args.format == "csv")
        std::cout << "kind,sample,name,value0,value1,value2,value3,value4\n";
    for (std::int64_t id : ids) {
        const evoia::SceneSample* sample = nullptr;
        for (const auto& s : samples)
            if (s.id == id) sample = &s;
        if (!sample) throw std::runtime_error("sample id " + std::to_string(id) + " not in dataset");
        const evoia::ScenePrediction pred = evoia::forward(ckpt.params, *sample, ckpt.config);
        const evoia::LabelDecision dec = evoia::predict_labels(pred, ckpt.config);

        for (int a = 0; a < evoia::kNumActions; ++a) {
            const auto& w = pred.selector_weights[a];
            int top = 0;
            for (std::size_t i = 0; i + 1 < w.size(); ++i)  // region slots only
                if (w[i] > w[top]) top = static_cast<int>(i);
            if (args.format == "json-lines") {
                nlohmann::json j{{"kind", "selector"},
                                 {"sample", id},
                                 {"action", evoia::action_names()[a]},
                                 {"weights", w},
                                 {"top_region", top}};
                std::cout << j.dump() << "\n";
            } else {
                std::cout << "selector," << id << ',' << evoia::action_names()[a] << ",top_region="
                          << top;
                for (double v : w) std::cout << ',' << evoia::fmt_double(v);
                std::cout << "\n";
            }
        }
        auto head_row = [&](int h, const evoia::EvidentialOutput& out, int predicted, int label) {
            if (args.format == "json-lines") {
                nlohmann::json j{{"kind", "head"},
                                 {"sample", id},
                                 {"name", evoia::head_name(h)},
                                 {"alpha", out.alpha.alpha},
                                 {"model_uncertainty", out.model_uncertainty},
                                 {"data_entropy", out.data_entropy},
                                 {"p_present", out.expected.p[0]},
                                 {"predicted", predicted},
                                 {"label", label}};
                std::cout << j.dump() << "\n";
            } else {
                std::cout << "head," << id << ',' << evoia::head_name(h) << ','
                          << evoia::fmt_double(out.alpha.alpha[0]) << ','
                          << evoia::fmt_double(out.alpha.alpha[1]) << ','
                          << evoia::fmt_double(out.model_uncertainty) << ','
                          << evoia::fmt_double(out.data_entropy) << ','
                          << evoia::fmt_double(out.expected.p[0]) << "\n";
            }
        };
        for (int a = 0; a < evoia::kNumActions; ++a)
            head_row(a, pred.actions[a], dec.actions[a], sample->actions[a]);
        for (int j = 0; j < evoia::kNumExplanations; ++j)
            head_row(evoia::kNumActions + j, pred.explanations[j], dec.explanations[j],
                     sample->explanations[j]);
    }
    return 0;
}

struct SweepArgs {
    std::string checkpoint;
    std::string data;
    std::string split = "val";
    std::string criterion = "balanced-accuracy";
    std::string format = "csv";
};

int run_sweep(const SweepArgs& args) {
    if (args.format != "csv" && args.format != "json-lines")
        throw UsageError("--format must be csv or json-lines");
    const evoia::Checkpoint ckpt = evoia::load_checkpoint(args.checkpoint);
    const auto samples = load_split(args.data, args.split);
    const evoia::UncertaintyReport report =
        evoia::compute_uncertainties(ckpt.params, ckpt.config, samples);
    const evoia::ThresholdSelection sel = evoia::select_threshold(report, args.criterion);

    if (args.format == "csv") {
        std::cout << "kind,level,tau,criterion\n";
        for (const auto& c : sel.candidates)
            std::cout << "candidate," << evoia::fmt_double(c.level) << ',' << evoia::fmt_double(c.tau)
                      << ',' << evoia::fmt_double(c.criterion) << "\n";
        std::cout << "selected,," << evoia::fmt_double(sel.tau_m) << ",\n";
        std::cout << "auc,,," << evoia::fmt_double(sel.auc) << "\n";
        if (sel.fallback) std::cout << "warning,,," << sel.warning << "\n";
    } else {
        for (const auto& c : sel.candidates) {
            nlohmann::json j{{"kind", "candidate"},
                             {"level", c.level},
                             {"tau", c.tau},
                             {"criterion", c.criterion}};
            std::cout << j.dump() << "\n";
        }
        nlohmann::json j{{"kind", "selected"},
                         {"tau_m", sel.tau_m},
                         {"auc", sel.auc},
                         {"fallback", sel.fallback}};
        if (sel.fallback) j["warning"] = sel.warning;
        std::cout << j.dump() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evidential scene-action engine"};
    app.require_subcommand(1);

    GenArgs gen_args;
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    gen->add_option("--config", gen_args.config, "generator config file (key = value)");
    gen->add_option("--out", gen_args.out, "output directory")->required();
    std::uint64_t gen_seed = 0;
    auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "override the config seed");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train phase 1 or phase 2");
    train->add_option("--phase", train_args.phase, "1 or 2")->required();
    train->add_option("--data", train_args.data, "dataset file or directory")->required();
    train->add_option("--out", train_args.out, "output directory")->required();
    train->add_option("--config", train_args.config, "training config file (key = value)");
    train->add_option("--strategies", train_args.strategies, "phase-2 strategies: sp,rw,ag");
    train->add_option("--init-checkpoint", train_args.init_checkpoint,
                      "phase-1 checkpoint to fine-tune (phase 2)");
    std::uint64_t train_seed = 0;
    auto* train_seed_opt = train->add_option("--seed", train_seed, "override the config seed");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
    eval->add_option("--data", eval_args.data, "dataset file or directory")->required();
    eval->add_option("--split", eval_args.split, "train, val, or test (default test)");
    eval->add_option("--report", eval_args.report, "report file (default stdout)");
    eval->add_option("--format", eval_args.format, "csv or json-lines (default csv)");

    InspectArgs inspect_args;
    auto* inspect = app.add_subcommand("inspect", "per-sample uncertainty and selector attention");
    inspect->add_option("--checkpoint", inspect_args.checkpoint, "checkpoint file")->required();
    inspect->add_option("--data", inspect_args.data, "dataset file or directory")->required();
    inspect->add_option("--ids", inspect_args.ids, "comma-separated sample ids")->required();
    inspect->add_option("--split", inspect_args.split, "restrict to one split");
    inspect->add_option("--format", inspect_args.format, "csv or json-lines (default csv)");

    SweepArgs sweep_args;
    auto* sweep = app.add_subcommand("sweep-threshold", "tau_m quantile diagnostics");
    sweep->add_option("--checkpoint", sweep_args.checkpoint, "checkpoint file")->required();
    sweep->add_option("--data", sweep_args.data, "dataset file or directory")->required();
    sweep->add_option("--split", sweep_args.split, "split to scan (default val)");
    sweep->add_option("--criterion", sweep_args.criterion, "balanced-accuracy or f1");
    sweep->add_option("--format", sweep_args.format, "csv or json-lines (default csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) {
            if (!gen_seed_opt->empty()) gen_args.seed = gen_seed;
            return run_gen(gen_args);
        }
        if (train->parsed()) {
            if (!train_seed_opt->empty()) train_args.seed = train_seed;
            return run_train(train_args);
        }
        if (eval->parsed()) return run_eval(eval_args);
        if (inspect->parsed()) return run_inspect(inspect_args);
        if (sweep->parsed()) return run_sweep(sweep_args);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
