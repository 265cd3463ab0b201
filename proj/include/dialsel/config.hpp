#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dialsel/baselines.hpp"
#include "dialsel/corpus.hpp"
#include "dialsel/embedding.hpp"
#include "dialsel/errors.hpp"
#include "dialsel/global_stage.hpp"
#include "dialsel/scorer.hpp"

namespace dialsel {

// Full run configuration. Defaults mirror the documented pipeline setup:
// 1000 bins, lambda 0.5, alpha 0.5, form threshold 1.0, budget 10000. The
// seed has no default and must come from the config file or a flag.
struct RunConfig {
    std::string corpus_path;
    std::optional<std::uint64_t> seed;

    std::size_t bins = 1000;
    double lambda = 0.5;
    double alpha = 0.5;
    double tau_form = 1.0;
    std::size_t budget = 10000;
    std::size_t min_turns = 1;
    ReadMode read_mode = ReadMode::lenient;

    EncoderSpec encoder;
    ScorerSpec scorer;

    KmeansOptions kmeans;

    std::string cache_dir = "cache";
    std::string out_dir = "out";
    unsigned parallelism = 0;        // 0 = hardware concurrency
    bool backfill = false;
    bool strict_budget = false;

    HeuristicConfig heuristic;

    double pair_swap_prob = 0.5;
    double diagnose_fraction = 0.2;
    bool diagnose_cached_permutation = false;

    std::uint64_t require_seed() const {
        if (!seed) throw UsageError("seed is mandatory: set seed= in the config or --seed");
        return *seed;
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw UsageError("config: " + key + " expects a boolean, got \"" + value + "\"");
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    try {
        if constexpr (std::is_floating_point_v<T>) {
            return static_cast<T>(std::stod(value));
        } else if constexpr (std::is_signed_v<T>) {
            return static_cast<T>(std::stoll(value));
        } else {
            if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
            return static_cast<T>(std::stoull(value));
        }
    } catch (const std::exception&) {
        throw UsageError("config: " + key + " expects a number, got \"" + value + "\"");
    }
}

} // namespace detail

// Plain `key = value` lines; '#' starts a comment; blank lines ignored.
inline std::map<std::string, std::string> load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::string t = detail::trim(line);
        if (t.empty()) continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(line_no) +
                             ": expected key = value");
        }
        kv[detail::trim(t.substr(0, eq))] = detail::trim(t.substr(eq + 1));
    }
    return kv;
}

// Applies one key. Unknown keys throw so typos do not silently change runs.
inline void apply_config_entry(RunConfig& cfg, const std::string& key,
                               const std::string& value) {
    using detail::parse_bool;
    using detail::parse_number;
    if (key == "corpus") cfg.corpus_path = value;
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "bins") cfg.bins = parse_number<std::size_t>(key, value);
    else if (key == "lambda") cfg.lambda = parse_number<double>(key, value);
    else if (key == "alpha") cfg.alpha = parse_number<double>(key, value);
    else if (key == "tau_form") cfg.tau_form = parse_number<double>(key, value);
    else if (key == "budget") cfg.budget = parse_number<std::size_t>(key, value);
    else if (key == "min_turns") cfg.min_turns = parse_number<std::size_t>(key, value);
    else if (key == "read_mode") {
        if (value == "strict") cfg.read_mode = ReadMode::strict;
        else if (value == "lenient") cfg.read_mode = ReadMode::lenient;
        else throw UsageError("config: read_mode must be strict or lenient");
    }
    else if (key == "cache_dir") cfg.cache_dir = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "parallelism") cfg.parallelism = parse_number<unsigned>(key, value);
    else if (key == "backfill") cfg.backfill = parse_bool(key, value);
    else if (key == "strict_budget") cfg.strict_budget = parse_bool(key, value);
    else if (key == "encoder.kind") {
        if (value == "hash") cfg.encoder.kind = EncoderKind::hash;
        else if (value == "precomputed") cfg.encoder.kind = EncoderKind::precomputed;
        else if (value == "remote") cfg.encoder.kind = EncoderKind::remote;
        else throw UsageError("config: encoder.kind must be hash, precomputed or remote");
    }
    else if (key == "encoder.dim") cfg.encoder.dim = parse_number<std::size_t>(key, value);
    else if (key == "encoder.seed") cfg.encoder.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "encoder.file") cfg.encoder.file = value;
    else if (key == "encoder.endpoint") cfg.encoder.endpoint = value;
    else if (key == "encoder.model") cfg.encoder.model = value;
    else if (key == "encoder.api_key_env") cfg.encoder.api_key_env = value;
    else if (key == "encoder.batch_size") cfg.encoder.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "encoder.max_retries") cfg.encoder.max_retries = parse_number<unsigned>(key, value);
    else if (key == "encoder.backoff_ms") cfg.encoder.backoff_ms = parse_number<unsigned>(key, value);
    else if (key == "encoder.normalize_before_mean") {
        cfg.encoder.normalize_before_mean = parse_bool(key, value);
    }
    else if (key == "scorer.kind") {
        if (value == "rules") cfg.scorer.kind = ScorerKind::rules;
        else if (value == "remote") cfg.scorer.kind = ScorerKind::remote;
        else throw UsageError("config: scorer.kind must be rules or remote");
    }
    else if (key == "scorer.endpoint") cfg.scorer.endpoint = value;
    else if (key == "scorer.model") cfg.scorer.model = value;
    else if (key == "scorer.api_key_env") cfg.scorer.api_key_env = value;
    else if (key == "scorer.max_retries") cfg.scorer.max_retries = parse_number<unsigned>(key, value);
    else if (key == "scorer.backoff_ms") cfg.scorer.backoff_ms = parse_number<unsigned>(key, value);
    else if (key == "scorer.context_turns") cfg.scorer.context_turns = parse_number<unsigned>(key, value);
    else if (key == "scorer.strict") cfg.scorer.strict = parse_bool(key, value);
    else if (key == "kmeans.max_iters") cfg.kmeans.max_iters = parse_number<std::size_t>(key, value);
    else if (key == "kmeans.tol") cfg.kmeans.tol = parse_number<double>(key, value);
    else if (key == "kmeans.metric") {
        if (value == "euclidean") cfg.kmeans.metric = KmeansMetric::euclidean;
        else if (value == "cosine") cfg.kmeans.metric = KmeansMetric::cosine;
        else throw UsageError("config: kmeans.metric must be euclidean or cosine");
    }
    else if (key == "heuristic.min_asst_turns") cfg.heuristic.min_asst_turns = parse_number<std::size_t>(key, value);
    else if (key == "heuristic.short_tok_th") cfg.heuristic.short_tok_th = parse_number<std::size_t>(key, value);
    else if (key == "heuristic.short_char_th") cfg.heuristic.short_char_th = parse_number<std::size_t>(key, value);
    else if (key == "heuristic.max_short_ratio") cfg.heuristic.max_short_ratio = parse_number<double>(key, value);
    else if (key == "heuristic.rep_n") cfg.heuristic.rep_n = parse_number<std::size_t>(key, value);
    else if (key == "heuristic.max_rep_score") cfg.heuristic.max_rep_score = parse_number<double>(key, value);
    else if (key == "heuristic.min_lex_div") cfg.heuristic.min_lex_div = parse_number<double>(key, value);
    else if (key == "heuristic.min_asst_total_toks") cfg.heuristic.min_asst_total_toks = parse_number<std::size_t>(key, value);
    else if (key == "perturb.pair_swap_prob") cfg.pair_swap_prob = parse_number<double>(key, value);
    else if (key == "diagnose.fraction") cfg.diagnose_fraction = parse_number<double>(key, value);
    else if (key == "diagnose.cached_permutation") {
        cfg.diagnose_cached_permutation = parse_bool(key, value);
    }
    else throw UsageError("config: unknown key \"" + key + "\"");
}

inline RunConfig config_from_map(const std::map<std::string, std::string>& kv) {
    RunConfig cfg;
    for (const auto& [key, value] : kv) apply_config_entry(cfg, key, value);
    return cfg;
}

// Invariant checks shared by every subcommand.
inline void check_config(const RunConfig& cfg) {
    if (cfg.bins < 1) throw UsageError("bins must be >= 1");
    if (cfg.lambda < 0.0 || cfg.lambda > 1.0) throw UsageError("lambda must be in [0,1]");
    if (cfg.alpha <= 0.0 || cfg.alpha > 1.0) throw UsageError("alpha must be in (0,1]");
    if (cfg.tau_form < 0.0 || cfg.tau_form > 2.0) throw UsageError("tau_form must be in [0,2]");
    if (cfg.heuristic.rep_n < 2) throw UsageError("heuristic.rep_n must be >= 2");
    if (cfg.heuristic.max_short_ratio < 0.0 || cfg.heuristic.max_short_ratio > 1.0 ||
        cfg.heuristic.min_lex_div < 0.0 || cfg.heuristic.min_lex_div > 1.0 ||
        cfg.heuristic.max_rep_score < 0.0 || cfg.heuristic.max_rep_score > 1.0) {
        throw UsageError("heuristic ratio thresholds must be in [0,1]");
    }
    if (cfg.pair_swap_prob < 0.0 || cfg.pair_swap_prob > 1.0) {
        throw UsageError("perturb.pair_swap_prob must be in [0,1]");
    }
    if (cfg.diagnose_fraction <= 0.0 || cfg.diagnose_fraction > 1.0) {
        throw UsageError("diagnose.fraction must be in (0,1]");
    }
    if (cfg.heuristic.min_asst_turns < 1) {
        throw UsageError("heuristic.min_asst_turns must be >= 1");
    }
}

} // namespace dialsel
