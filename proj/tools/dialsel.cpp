// dialsel: budgeted selection of multi-turn dialogues, with structural
// diagnostics and baseline selectors. See README.md for the config format.

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dialsel/config.hpp"
#include "dialsel/errors.hpp"
#include "dialsel/pipeline.hpp"

namespace {

struct FlagOverrides {
    std::string config_path;
    std::string corpus;
    std::string out_dir;
    std::string cache_dir;
    std::string encoder_kind;
    std::string scorer_kind;
    std::int64_t seed = -1;
    bool seed_set = false;
    std::uint64_t budget = 0;
    bool budget_set = false;
    std::uint64_t bins = 0;
    bool bins_set = false;
    double lambda = 0.5;
    bool lambda_set = false;
    double alpha = 0.5;
    bool alpha_set = false;
    double tau_form = 1.0;
    bool tau_set = false;
    unsigned parallelism = 0;
    bool parallelism_set = false;
    bool backfill = false;
    bool strict_budget = false;
};

void add_common_flags(CLI::App* cmd, FlagOverrides& f) {
    cmd->add_option("--config", f.config_path, "key = value config file");
    cmd->add_option("--corpus", f.corpus, "corpus JSONL file (overrides config)");
    cmd->add_option("--seed", f.seed, "run seed (mandatory here or in the config)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--budget", f.budget, "selection budget M");
    cmd->add_option("--bins", f.bins, "number of semantic bins K");
    cmd->add_option("--lambda", f.lambda, "coverage/redundancy trade-off in [0,1]");
    cmd->add_option("--alpha", f.alpha, "per-bin candidate fraction in (0,1]");
    cmd->add_option("--tau-form", f.tau_form, "form-consistency threshold in [0,2]");
    cmd->add_option("--encoder", f.encoder_kind, "encoder kind: hash|precomputed|remote");
    cmd->add_option("--scorer", f.scorer_kind, "scorer kind: rules|remote");
    cmd->add_option("--parallelism", f.parallelism, "worker threads (0 = hardware)");
    cmd->add_flag("--backfill", f.backfill,
                  "redistribute per-bin shortfall to other bins (non-default rule)");
    cmd->add_flag("--strict-budget", f.strict_budget,
                  "exit nonzero when the selection falls short of the budget");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--cache", f.cache_dir, "cache directory");
}

dialsel::RunConfig build_config(const CLI::App* cmd, const FlagOverrides& f) {
    dialsel::RunConfig cfg;
    if (!f.config_path.empty()) {
        cfg = dialsel::config_from_map(dialsel::load_config_file(f.config_path));
    }
    auto passed = [&](const std::string& name) { return cmd->count(name) > 0; };
    if (passed("--corpus")) cfg.corpus_path = f.corpus;
    if (passed("--seed")) cfg.seed = static_cast<std::uint64_t>(f.seed);
    if (passed("--budget")) cfg.budget = f.budget;
    if (passed("--bins")) cfg.bins = f.bins;
    if (passed("--lambda")) cfg.lambda = f.lambda;
    if (passed("--alpha")) cfg.alpha = f.alpha;
    if (passed("--tau-form")) cfg.tau_form = f.tau_form;
    if (passed("--parallelism")) cfg.parallelism = f.parallelism;
    if (passed("--backfill")) cfg.backfill = true;
    if (passed("--strict-budget")) cfg.strict_budget = true;
    if (passed("--out")) cfg.out_dir = f.out_dir;
    if (passed("--cache")) cfg.cache_dir = f.cache_dir;
    if (passed("--encoder")) {
        dialsel::apply_config_entry(cfg, "encoder.kind", f.encoder_kind);
    }
    if (passed("--scorer")) {
        dialsel::apply_config_entry(cfg, "scorer.kind", f.scorer_kind);
    }
    if (cfg.corpus_path.empty()) {
        throw dialsel::UsageError("no corpus given: set corpus= in the config or --corpus");
    }
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"budgeted multi-turn dialogue selection"};
    app.require_subcommand(1);

    FlagOverrides f;
    std::string mode = "lenient";
    std::string selection_path;
    std::string perturb_list = "identity,pair,block:2,block:4,query_only";
    double fraction = 0.0;
    bool cached_permutation = false;
    std::string baseline_kind;
    std::vector<std::uint64_t> k_list;

    CLI::App* validate = app.add_subcommand("validate", "check a corpus file");
    add_common_flags(validate, f);
    validate->add_option("--mode", mode, "strict|lenient")
        ->check(CLI::IsMember({"strict", "lenient"}));

    CLI::App* select = app.add_subcommand("select", "run the full selection pipeline");
    add_common_flags(select, f);

    CLI::App* diagnose =
        app.add_subcommand("diagnose", "order-perturbation metrics over a selection");
    add_common_flags(diagnose, f);
    diagnose->add_option("--selection", selection_path, "selection JSONL file")
        ->required();
    diagnose->add_option("--perturb", perturb_list,
                         "comma list of identity,pair,block:<k>,query_only");
    diagnose->add_option("--fraction", fraction, "top high-dependency fraction");
    diagnose->add_flag("--cached-permutation", cached_permutation,
                       "permute cached annotations instead of re-annotating");

    CLI::App* baseline = app.add_subcommand("baseline", "heuristic or random selector");
    add_common_flags(baseline, f);
    baseline->add_option("--kind", baseline_kind, "heuristic|random")
        ->required()
        ->check(CLI::IsMember({"heuristic", "random"}));

    CLI::App* sweep = app.add_subcommand("sweep-bins", "one select run per K value");
    add_common_flags(sweep, f);
    sweep->add_option("--bins-list", k_list, "K values (comma separated)")
        ->required()
        ->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        CLI::App* cmd = app.get_subcommands().front();
        dialsel::RunConfig cfg = build_config(cmd, f);

        if (cmd == validate) {
            cfg.read_mode =
                mode == "strict" ? dialsel::ReadMode::strict : dialsel::ReadMode::lenient;
            dialsel::ValidateReport report = dialsel::run_validate(cfg);
            std::cout << report.to_json().dump(2) << '\n';
            if (cfg.read_mode == dialsel::ReadMode::strict && !report.clean) return 2;
            return 0;
        }
        if (cmd == select) {
            dialsel::SelectOutputs out = dialsel::run_select(cfg);
            std::cout << "selected " << out.selection.selected_ids.size() << " -> "
                      << out.selection_file.string() << '\n';
            if (cfg.strict_budget && out.total_shortfall > 0) {
                std::cerr << "budget shortfall: " << out.total_shortfall << '\n';
                return 2;
            }
            return 0;
        }
        if (cmd == diagnose) {
            if (diagnose->count("--fraction") > 0) cfg.diagnose_fraction = fraction;
            if (cached_permutation) cfg.diagnose_cached_permutation = true;
            std::vector<dialsel::Perturbation> ps;
            std::stringstream ss(perturb_list);
            std::string name;
            while (std::getline(ss, name, ',')) {
                if (!name.empty()) ps.push_back(dialsel::parse_perturbation(name));
            }
            if (ps.empty()) ps = dialsel::default_perturbations();
            dialsel::DiagnoseOutputs out = dialsel::run_diagnose(cfg, selection_path, ps);
            std::cout << "wrote " << out.report_file.string() << " (" << out.rows.size()
                      << " rows, top subset " << out.top_subset_size << ")\n";
            return 0;
        }
        if (cmd == baseline) {
            dialsel::BaselineKind kind = baseline_kind == "heuristic"
                                             ? dialsel::BaselineKind::heuristic
                                             : dialsel::BaselineKind::random;
            dialsel::BaselineOutputs out = dialsel::run_baseline(cfg, kind);
            std::cout << "selected " << out.selected_ids.size() << " -> "
                      << out.selection_file.string() << '\n';
            return 0;
        }
        if (cmd == sweep) {
            std::vector<std::size_t> ks(k_list.begin(), k_list.end());
            auto outs = dialsel::run_sweep_bins(cfg, ks);
            for (const auto& o : outs) {
                std::cout << o.selection.selected_ids.size() << " -> "
                          << o.selection_file.string() << '\n';
            }
            return 0;
        }
        throw dialsel::UsageError("no subcommand");
    } catch (const dialsel::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const dialsel::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const dialsel::BackendError& e) {
        std::cerr << "backend error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
