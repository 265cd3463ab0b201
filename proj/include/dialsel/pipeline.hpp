#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "dialsel/baselines.hpp"
#include "dialsel/config.hpp"
#include "dialsel/corpus.hpp"
#include "dialsel/diagnostics.hpp"
#include "dialsel/embedding.hpp"
#include "dialsel/errors.hpp"
#include "dialsel/global_stage.hpp"
#include "dialsel/local_stage.hpp"
#include "dialsel/parallel.hpp"
#include "dialsel/remote.hpp"
#include "dialsel/scorer.hpp"

namespace dialsel {

namespace fs = std::filesystem;

inline void log_line(const json& record) { std::cerr << record.dump() << '\n'; }

// One JSONL event stream per run: parameters, stage summaries, tie-break
// counts, shortfalls.
class AuditLog {
public:
    explicit AuditLog(const fs::path& path) : out_(path, std::ios::trunc) {
        if (!out_) throw DataError("cannot open audit file: " + path.string());
    }
    void event(const json& e) { out_ << e.dump() << '\n'; }

private:
    std::ofstream out_;
};

namespace detail {

inline std::string cache_tag(const std::string& fingerprint) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(fingerprint)));
    return buf;
}

inline json stats_of(const std::vector<double>& xs) {
    if (xs.empty()) return {{"count", 0}};
    double lo = xs.front(), hi = xs.front(), sum = 0.0;
    for (double x : xs) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        sum += x;
    }
    return {{"count", xs.size()},
            {"min", lo},
            {"max", hi},
            {"mean", sum / static_cast<double>(xs.size())}};
}

template <class Map>
json index_map_to_json(const Map& m) {
    json out = json::object();
    for (const auto& [k, v] : m) out[std::to_string(k)] = v;
    return out;
}

} // namespace detail

// --- embedding cache ---------------------------------------------------------

// Trajectory embeddings per dialogue, keyed by the encoder fingerprint (plus
// the normalize flag). Missing entries are computed and appended so reruns
// and bin sweeps reuse earlier work.
class EmbeddingCache {
public:
    EmbeddingCache(const fs::path& cache_dir, const std::string& fingerprint)
        : path_(cache_dir / ("embeddings_" + detail::cache_tag(fingerprint) + ".jsonl")) {
        fs::create_directories(cache_dir);
        std::ifstream in(path_, std::ios::binary);
        if (!in) return;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line, nullptr, false);
            if (rec.is_discarded()) continue;
            table_[rec.at("dialogue_id").get<std::string>()] = rec.at("vector").get<Vec>();
        }
    }

    // Returns embeddings in corpus order; computes and persists the missing ones.
    std::vector<std::pair<std::string, Vec>> get_all(const Corpus& corpus,
                                                     QueryEncoder& encoder,
                                                     bool normalize_before_mean,
                                                     unsigned parallelism,
                                                     std::size_t* computed = nullptr) {
        std::vector<std::size_t> missing;
        for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) {
            if (!table_.contains(corpus.dialogues[i].id)) missing.push_back(i);
        }
        std::vector<Vec> fresh(missing.size());
        parallel_for(missing.size(), parallelism, [&](std::size_t j) {
            fresh[j] = dialogue_embedding(corpus.dialogues[missing[j]], encoder,
                                          normalize_before_mean);
        });
        if (!missing.empty()) {
            std::ofstream out(path_, std::ios::app | std::ios::binary);
            for (std::size_t j = 0; j < missing.size(); ++j) {
                const std::string& id = corpus.dialogues[missing[j]].id;
                out << json{{"dialogue_id", id}, {"vector", fresh[j]}}.dump() << '\n';
                table_[id] = std::move(fresh[j]);
            }
        }
        if (computed) *computed = missing.size();
        std::vector<std::pair<std::string, Vec>> result;
        result.reserve(corpus.dialogues.size());
        for (const Dialogue& d : corpus.dialogues) {
            result.emplace_back(d.id, table_.at(d.id));
        }
        return result;
    }

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
    std::unordered_map<std::string, Vec> table_;
};

// --- annotation cache --------------------------------------------------------

class AnnotationCache {
public:
    AnnotationCache(const fs::path& cache_dir, const std::string& fingerprint)
        : path_(cache_dir / ("annotations_" + detail::cache_tag(fingerprint) + ".jsonl")) {
        fs::create_directories(cache_dir);
        std::ifstream in(path_, std::ios::binary);
        if (!in) return;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line, nullptr, false);
            if (rec.is_discarded()) continue;
            DialogueAnnotation ann = annotation_from_json(rec);
            table_.emplace(ann.dialogue_id, std::move(ann));
        }
    }

    const DialogueAnnotation* find(const std::string& id) const {
        auto it = table_.find(id);
        return it == table_.end() ? nullptr : &it->second;
    }

    // Annotates the given dialogues (cache hits skipped), in input order.
    std::vector<const DialogueAnnotation*> get_all(
        const std::vector<const Dialogue*>& dialogues, TurnScorer& scorer,
        unsigned parallelism, bool strict, unsigned context_turns,
        std::size_t* computed = nullptr) {
        std::vector<std::size_t> missing;
        for (std::size_t i = 0; i < dialogues.size(); ++i) {
            if (!table_.contains(dialogues[i]->id)) missing.push_back(i);
        }
        std::vector<DialogueAnnotation> fresh(missing.size());
        parallel_for(missing.size(), parallelism, [&](std::size_t j) {
            fresh[j] = annotate_dialogue(*dialogues[missing[j]], scorer, 1, strict,
                                         context_turns);
        });
        if (!missing.empty()) {
            std::ofstream out(path_, std::ios::app | std::ios::binary);
            for (DialogueAnnotation& ann : fresh) {
                out << annotation_to_json(ann).dump() << '\n';
                std::string id = ann.dialogue_id;
                table_.emplace(std::move(id), std::move(ann));
            }
        }
        if (computed) *computed = missing.size();
        std::vector<const DialogueAnnotation*> result;
        result.reserve(dialogues.size());
        for (const Dialogue* d : dialogues) result.push_back(&table_.at(d->id));
        return result;
    }

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
    std::unordered_map<std::string, DialogueAnnotation> table_;
};

// --- score cache ---------------------------------------------------------------

inline json scores_to_json(const DialogueScores& s) {
    return {{"dialogue_id", s.dialogue_id},
            {"ent_per_turn", s.ent_per_turn},
            {"s_entity", s.entity},
            {"c_per_turn", s.c_per_turn},
            {"s_form", s.form}};
}

inline DialogueScores scores_from_json(const json& rec) {
    DialogueScores s;
    s.dialogue_id = rec.at("dialogue_id").get<std::string>();
    s.ent_per_turn = rec.at("ent_per_turn").get<std::vector<double>>();
    s.entity = rec.at("s_entity").get<double>();
    s.c_per_turn = rec.at("c_per_turn").get<std::vector<int>>();
    s.form = rec.at("s_form").get<double>();
    return s;
}

class ScoreCache {
public:
    ScoreCache(const fs::path& cache_dir, const std::string& fingerprint)
        : path_(cache_dir / ("scores_" + detail::cache_tag(fingerprint) + ".jsonl")) {
        fs::create_directories(cache_dir);
        std::ifstream in(path_, std::ios::binary);
        if (!in) return;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line, nullptr, false);
            if (rec.is_discarded()) continue;
            DialogueScores s = scores_from_json(rec);
            table_.emplace(s.dialogue_id, std::move(s));
        }
    }

    std::map<std::string, DialogueScores> get_all(
        const std::vector<const DialogueAnnotation*>& annotations) {
        std::vector<const DialogueAnnotation*> missing;
        for (const DialogueAnnotation* ann : annotations) {
            if (!table_.contains(ann->dialogue_id)) missing.push_back(ann);
        }
        if (!missing.empty()) {
            std::ofstream out(path_, std::ios::app | std::ios::binary);
            for (const DialogueAnnotation* ann : missing) {
                DialogueScores s = score_dialogue(*ann);
                out << scores_to_json(s).dump() << '\n';
                table_.emplace(s.dialogue_id, std::move(s));
            }
        }
        std::map<std::string, DialogueScores> result;
        for (const DialogueAnnotation* ann : annotations) {
            result.emplace(ann->dialogue_id, table_.at(ann->dialogue_id));
        }
        return result;
    }

private:
    fs::path path_;
    std::unordered_map<std::string, DialogueScores> table_;
};

// --- validate ------------------------------------------------------------------

struct ValidateReport {
    std::size_t dialogues = 0;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
    std::vector<std::pair<std::string, std::vector<std::string>>> violations;
    bool clean = false;

    json to_json() const {
        json v = json::array();
        for (const auto& [id, msgs] : violations) {
            v.push_back({{"id", id}, {"violations", msgs}});
        }
        return {{"dialogues", dialogues},
                {"skipped", skipped},
                {"warnings", warnings},
                {"violations", std::move(v)},
                {"clean", clean}};
    }
};

inline ValidateReport run_validate(const RunConfig& cfg) {
    check_config(cfg);
    ReadResult read = read_corpus(cfg.corpus_path, cfg.read_mode);
    ValidateReport report;
    report.dialogues = read.corpus.dialogues.size();
    report.skipped = read.skipped;
    report.warnings = read.warnings;
    for (const std::string& w : read.warnings) {
        log_line({{"event", "read_warning"}, {"message", w}});
    }
    for (const Dialogue& d : read.corpus.dialogues) {
        std::vector<std::string> v = validate(d, cfg.min_turns, cfg.read_mode);
        if (!v.empty()) {
            log_line({{"event", "violation"}, {"id", d.id}, {"messages", v}});
            report.violations.emplace_back(d.id, std::move(v));
        }
    }
    report.clean = report.skipped == 0 && report.violations.empty() &&
                   report.warnings.empty();
    return report;
}

// --- select ---------------------------------------------------------------------

struct SelectOutputs {
    fs::path selection_file;
    fs::path report_file;
    fs::path audit_file;
    fs::path bins_audit_file;
    SelectionResult selection;
    std::size_t total_shortfall = 0;
};

namespace detail {

inline void write_selection_file(const fs::path& path, const Corpus& corpus,
                                 const std::vector<std::string>& ids) {
    std::unordered_map<std::string, const Dialogue*> by_id;
    for (const Dialogue& d : corpus.dialogues) by_id[d.id] = &d;
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot write selection file: " + path.string());
    for (const std::string& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("selected id not in corpus: " + id);
        out << dialogue_to_json(*it->second).dump() << '\n';
    }
}

inline std::string encoder_cache_fingerprint(const EncoderSpec& spec,
                                             const QueryEncoder& enc) {
    return enc.fingerprint() + (spec.normalize_before_mean ? "|norm" : "");
}

} // namespace detail

// End-to-end selection: embed, bin, order greedily, keep the alpha prefix,
// annotate, score, filter on form, apportion quotas, rank by entity score.
// Deterministic given (config, seed) and a deterministic backend pair.
inline SelectOutputs run_select(const RunConfig& cfg) {
    check_config(cfg);
    const std::uint64_t seed = cfg.require_seed();
    fs::create_directories(cfg.out_dir);
    fs::create_directories(cfg.cache_dir);

    SelectOutputs outputs;
    outputs.selection_file = fs::path(cfg.out_dir) / "selection.jsonl";
    outputs.report_file = fs::path(cfg.out_dir) / "report.json";
    outputs.audit_file = fs::path(cfg.out_dir) / "audit.jsonl";
    outputs.bins_audit_file = fs::path(cfg.out_dir) / "bins_audit.jsonl";
    AuditLog audit(outputs.audit_file);

    std::unique_ptr<QueryEncoder> encoder = make_encoder(cfg.encoder);
    std::unique_ptr<TurnScorer> scorer = make_scorer(cfg.scorer);
    audit.event({{"event", "run_config"},
                 {"command", "select"},
                 {"corpus", cfg.corpus_path},
                 {"seed", seed},
                 {"bins", cfg.bins},
                 {"lambda", cfg.lambda},
                 {"alpha", cfg.alpha},
                 {"tau_form", cfg.tau_form},
                 {"budget", cfg.budget},
                 {"encoder", encoder->fingerprint()},
                 {"normalize_before_mean", cfg.encoder.normalize_before_mean},
                 {"scorer", scorer->fingerprint()},
                 {"kmeans_metric",
                  cfg.kmeans.metric == KmeansMetric::euclidean ? "euclidean" : "cosine"},
                 {"kmeans_max_iters", cfg.kmeans.max_iters},
                 {"kmeans_tol", cfg.kmeans.tol},
                 {"backfill", cfg.backfill}});

    // 1. corpus
    ReadResult read = read_corpus(cfg.corpus_path, cfg.read_mode);
    const Corpus& corpus = read.corpus;
    for (const std::string& w : read.warnings) {
        log_line({{"event", "read_warning"}, {"message", w}});
    }
    audit.event({{"event", "read"},
                 {"dialogues", corpus.dialogues.size()},
                 {"skipped", read.skipped}});
    if (corpus.dialogues.empty()) throw DataError("corpus is empty: " + cfg.corpus_path);

    // 2. trajectory embeddings
    EmbeddingCache embed_cache(cfg.cache_dir,
                               detail::encoder_cache_fingerprint(cfg.encoder, *encoder));
    std::size_t computed = 0;
    auto embeddings = embed_cache.get_all(corpus, *encoder,
                                          cfg.encoder.normalize_before_mean,
                                          cfg.parallelism, &computed);
    audit.event({{"event", "embed"},
                 {"computed", computed},
                 {"cached", embeddings.size() - computed}});

    // 3. semantic bins
    KmeansOptions kopt = cfg.kmeans;
    kopt.parallelism = cfg.parallelism;
    KmeansResult km = kmeans_bins(embeddings, cfg.bins, sub_seed(seed, "kmeans"), kopt);
    if (km.clamped) {
        log_line({{"event", "kmeans_clamped"},
                  {"requested", cfg.bins},
                  {"actual", km.bins.size()}});
    }
    audit.event({{"event", "kmeans"},
                 {"requested", cfg.bins},
                 {"actual", km.bins.size()},
                 {"clamped", km.clamped},
                 {"iters", km.iters},
                 {"metric",
                  cfg.kmeans.metric == KmeansMetric::euclidean ? "euclidean" : "cosine"}});

    // 4. greedy orders and the alpha prefix
    CandidatePool pool = build_global_pool(km.bins, embeddings, cfg.lambda, cfg.alpha,
                                           cfg.parallelism);
    {
        std::ofstream bins_out(outputs.bins_audit_file, std::ios::trunc | std::ios::binary);
        for (std::size_t k = 0; k < pool.bins.size(); ++k) {
            bins_out << json{{"bin", pool.bins[k].bin},
                             {"centroid_norm", l2_norm(km.bins[k].centroid)},
                             {"order", pool.bins[k].full_order}}
                            .dump()
                     << '\n';
            if (pool.bins[k].tie_breaks > 0) {
                audit.event({{"event", "tie_break"},
                             {"stage", "greedy_order"},
                             {"bin", pool.bins[k].bin},
                             {"count", pool.bins[k].tie_breaks}});
            }
        }
    }
    std::vector<std::string> pooled_ids = pool.all_kept();
    audit.event({{"event", "pool"},
                 {"alpha", cfg.alpha},
                 {"kept", pooled_ids.size()},
                 {"of", corpus.dialogues.size()}});

    // 5. annotations for the pooled dialogues
    std::unordered_map<std::string, const Dialogue*> by_id;
    for (const Dialogue& d : corpus.dialogues) by_id[d.id] = &d;
    std::vector<const Dialogue*> pooled;
    pooled.reserve(pooled_ids.size());
    for (const std::string& id : pooled_ids) pooled.push_back(by_id.at(id));
    AnnotationCache ann_cache(cfg.cache_dir, scorer->fingerprint());
    computed = 0;
    auto annotations = ann_cache.get_all(pooled, *scorer, cfg.parallelism,
                                         cfg.scorer.strict, cfg.scorer.context_turns,
                                         &computed);
    std::size_t failed_turns = 0;
    for (const DialogueAnnotation* a : annotations) failed_turns += a->failures.size();
    audit.event({{"event", "annotate"},
                 {"backend", scorer->fingerprint()},
                 {"computed", computed},
                 {"cached", annotations.size() - computed},
                 {"failed_turns", failed_turns}});

    // 6. structural scores
    ScoreCache score_cache(cfg.cache_dir, scorer->fingerprint());
    std::map<std::string, DialogueScores> scores = score_cache.get_all(annotations);

    // 7. quotas against the original bin sizes, then the final ranking
    std::vector<std::size_t> bin_sizes;
    bin_sizes.reserve(km.bins.size());
    for (const Bin& b : km.bins) bin_sizes.push_back(b.member_ids.size());
    outputs.selection = final_select(pool, scores, bin_sizes, cfg.budget, cfg.tau_form,
                                     cfg.backfill);
    audit.event({{"event", "quotas"},
                 {"budget", cfg.budget},
                 {"quotas", detail::index_map_to_json(outputs.selection.quotas)}});
    if (outputs.selection.tie_breaks > 0) {
        audit.event({{"event", "tie_break"},
                     {"stage", "entity_rank"},
                     {"count", outputs.selection.tie_breaks}});
    }
    for (const auto& [bin, missing] : outputs.selection.shortfall) {
        audit.event({{"event", "shortfall"}, {"bin", bin}, {"missing", missing}});
    }
    // Counts the full gap to the budget, including budget beyond total capacity.
    outputs.total_shortfall = cfg.budget - outputs.selection.selected_ids.size();
    if (outputs.selection.backfilled) {
        audit.event({{"event", "backfill"},
                     {"default_rule", false},
                     {"note", "shortfall redistributed across bins beyond per-bin quotas"}});
    }
    audit.event({{"event", "selection"},
                 {"selected", outputs.selection.selected_ids.size()},
                 {"total_shortfall", outputs.total_shortfall}});

    // 8. outputs
    detail::write_selection_file(outputs.selection_file, corpus,
                                 outputs.selection.selected_ids);
    std::vector<double> entity_scores;
    std::vector<double> form_scores;
    for (const std::string& id : outputs.selection.selected_ids) {
        entity_scores.push_back(scores.at(id).entity);
        form_scores.push_back(scores.at(id).form);
    }
    json report{{"command", "select"},
                {"budget", cfg.budget},
                {"selected", outputs.selection.selected_ids.size()},
                {"seed", seed},
                {"bins", {{"requested", cfg.bins},
                          {"actual", km.bins.size()},
                          {"clamped", km.clamped}}},
                {"lambda", cfg.lambda},
                {"alpha", cfg.alpha},
                {"tau_form", cfg.tau_form},
                {"pool_size", pooled_ids.size()},
                {"encoder", encoder->fingerprint()},
                {"scorer", scorer->fingerprint()},
                {"quotas", detail::index_map_to_json(outputs.selection.quotas)},
                {"shortfall", detail::index_map_to_json(outputs.selection.shortfall)},
                {"total_shortfall", outputs.total_shortfall},
                {"backfilled", outputs.selection.backfilled},
                {"score_distribution",
                 {{"entity", detail::stats_of(entity_scores)},
                  {"form", detail::stats_of(form_scores)}}}};
    std::ofstream report_out(outputs.report_file, std::ios::trunc | std::ios::binary);
    report_out << report.dump(2) << '\n';
    return outputs;
}

// --- baselines --------------------------------------------------------------------

enum class BaselineKind { heuristic, random };

struct BaselineOutputs {
    fs::path selection_file;
    fs::path report_file;
    std::vector<std::string> selected_ids;
};

inline BaselineOutputs run_baseline(const RunConfig& cfg, BaselineKind kind) {
    check_config(cfg);
    fs::create_directories(cfg.out_dir);
    ReadResult read = read_corpus(cfg.corpus_path, cfg.read_mode);
    for (const std::string& w : read.warnings) {
        log_line({{"event", "read_warning"}, {"message", w}});
    }

    BaselineOutputs outputs;
    outputs.selection_file = fs::path(cfg.out_dir) / "selection.jsonl";
    outputs.report_file = fs::path(cfg.out_dir) / "report.json";

    std::string kind_name;
    if (kind == BaselineKind::heuristic) {
        kind_name = "heuristic";
        outputs.selected_ids = heuristic_select(read.corpus, cfg.heuristic, cfg.budget);
        if (outputs.selected_ids.empty()) {
            log_line({{"event", "baseline_warning"},
                      {"message", "no dialogue passed the heuristic constraints"}});
        }
    } else {
        kind_name = "random";
        outputs.selected_ids = random_select(read.corpus, cfg.budget,
                                             sub_seed(cfg.require_seed(), "random-baseline"));
    }

    detail::write_selection_file(outputs.selection_file, read.corpus,
                                 outputs.selected_ids);
    json report{{"command", "baseline"},
                {"kind", kind_name},
                {"budget", cfg.budget},
                {"selected", outputs.selected_ids.size()},
                {"corpus_size", read.corpus.dialogues.size()}};
    if (kind == BaselineKind::heuristic) {
        report["thresholds"] = {{"min_asst_turns", cfg.heuristic.min_asst_turns},
                                {"short_tok_th", cfg.heuristic.short_tok_th},
                                {"short_char_th", cfg.heuristic.short_char_th},
                                {"max_short_ratio", cfg.heuristic.max_short_ratio},
                                {"rep_n", cfg.heuristic.rep_n},
                                {"max_rep_score", cfg.heuristic.max_rep_score},
                                {"min_lex_div", cfg.heuristic.min_lex_div},
                                {"min_asst_total_toks", cfg.heuristic.min_asst_total_toks}};
        report["declared_defaults"] = true;   // thresholds are choices, not tuned values
    } else {
        report["seed"] = cfg.require_seed();
    }
    std::ofstream report_out(outputs.report_file, std::ios::trunc | std::ios::binary);
    report_out << report.dump(2) << '\n';
    return outputs;
}

// --- diagnose ----------------------------------------------------------------------

struct DiagnoseRow {
    std::string perturbation;
    TurnWeighted all;
    TurnWeighted top;
};

struct DiagnoseOutputs {
    fs::path report_file;
    std::vector<DiagnoseRow> rows;
    std::size_t top_subset_size = 0;
    std::size_t dialogues = 0;
};

// Order-perturbation report over a selection file: turn-weighted metrics on
// the full selection and on the top high-history-dependency fraction (fixed
// from the unperturbed metrics), one row per perturbation.
inline DiagnoseOutputs run_diagnose(const RunConfig& cfg, const std::string& selection_path,
                                    const std::vector<Perturbation>& perturbations) {
    check_config(cfg);
    const std::uint64_t seed = cfg.require_seed();
    fs::create_directories(cfg.out_dir);
    ReadResult read = read_corpus(selection_path, cfg.read_mode);
    const Corpus& corpus = read.corpus;
    if (corpus.dialogues.empty()) {
        throw DataError("diagnose: selection is empty: " + selection_path);
    }

    // Annotations: reuse the configured scorer's cache; anything missing is
    // computed with the rules scorer (never a silent remote call).
    std::unique_ptr<TurnScorer> configured = make_scorer(cfg.scorer);
    AnnotationCache cache(cfg.cache_dir, configured->fingerprint());
    std::vector<const DialogueAnnotation*> annotations(corpus.dialogues.size());
    std::vector<const Dialogue*> missing;
    for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) {
        annotations[i] = cache.find(corpus.dialogues[i].id);
        if (!annotations[i]) missing.push_back(&corpus.dialogues[i]);
    }
    RulesScorer rules;
    AnnotationCache rules_cache(cfg.cache_dir, rules.fingerprint());
    if (!missing.empty()) {
        if (cfg.scorer.kind != ScorerKind::rules) {
            log_line({{"event", "diagnose_fallback"},
                      {"missing_annotations", missing.size()},
                      {"action", "computing with rules scorer"}});
        }
        auto filled = rules_cache.get_all(missing, rules, cfg.parallelism, false, 0);
        std::size_t j = 0;
        for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) {
            if (!annotations[i]) annotations[i] = filled[j++];
        }
    }

    // Unperturbed metrics fix the high-dependency subset.
    std::vector<HistoryMetrics> identity_metrics;
    identity_metrics.reserve(annotations.size());
    for (const DialogueAnnotation* a : annotations) {
        identity_metrics.push_back(history_metrics(*a));
    }
    std::set<std::string> top_ids =
        top_dependency_subset(identity_metrics, cfg.diagnose_fraction);

    auto split_tw = [&](const std::vector<HistoryMetrics>& ms) {
        std::vector<HistoryMetrics> top;
        for (const HistoryMetrics& m : ms) {
            if (top_ids.contains(m.dialogue_id)) top.push_back(m);
        }
        return std::make_pair(turn_weighted(ms), turn_weighted(top));
    };

    DiagnoseOutputs outputs;
    outputs.dialogues = corpus.dialogues.size();
    outputs.top_subset_size = top_ids.size();
    outputs.report_file = fs::path(cfg.out_dir) / "diagnostics.json";

    for (Perturbation p : perturbations) {
        switch (p.kind) {
            case PerturbationKind::pair: p.seed = sub_seed(seed, "pair-shuffle"); break;
            case PerturbationKind::block: p.seed = sub_seed(seed, "block-shuffle"); break;
            case PerturbationKind::query_only:
                p.seed = sub_seed(seed, "query-shuffle");
                break;
            case PerturbationKind::identity: break;
        }
        p.pair_swap_prob = cfg.pair_swap_prob;

        std::vector<HistoryMetrics> metrics;
        if (p.kind == PerturbationKind::identity) {
            metrics = identity_metrics;
        } else if (cfg.diagnose_cached_permutation) {
            metrics.resize(annotations.size());
            parallel_for(annotations.size(), cfg.parallelism, [&](std::size_t i) {
                metrics[i] = history_metrics(permute_annotation(*annotations[i], p));
            });
        } else {
            // Re-annotate the perturbed dialogue with the rules scorer.
            metrics.resize(corpus.dialogues.size());
            parallel_for(corpus.dialogues.size(), cfg.parallelism, [&](std::size_t i) {
                Dialogue shuffled = perturb(corpus.dialogues[i], p);
                DialogueAnnotation ann = annotate_dialogue(shuffled, rules, 1, false, 0);
                metrics[i] = history_metrics(ann);
            });
        }
        auto [all_tw, top_tw] = split_tw(metrics);
        outputs.rows.push_back({perturbation_name(p), all_tw, top_tw});
    }

    json rows = json::array();
    for (const DiagnoseRow& r : outputs.rows) {
        rows.push_back({{"perturbation", r.perturbation},
                        {"all_selected",
                         {{"esc", r.all.esc}, {"har", r.all.har}, {"enr", r.all.enr}}},
                        {"top_fraction",
                         {{"esc", r.top.esc}, {"har", r.top.har}, {"enr", r.top.enr}}}});
    }
    json report{{"command", "diagnose"},
                {"selection", selection_path},
                {"dialogues", outputs.dialogues},
                {"fraction", cfg.diagnose_fraction},
                {"top_subset_size", outputs.top_subset_size},
                {"metric_mode", cfg.diagnose_cached_permutation ? "cached_permutation"
                                                                : "rules_reannotation"},
                {"seed", seed},
                {"rows", std::move(rows)}};
    std::ofstream out(outputs.report_file, std::ios::trunc | std::ios::binary);
    out << report.dump(2) << '\n';
    return outputs;
}

inline std::vector<Perturbation> default_perturbations() {
    return {{PerturbationKind::identity},
            {PerturbationKind::pair},
            {PerturbationKind::block, 2},
            {PerturbationKind::block, 4},
            {PerturbationKind::query_only}};
}

// Parses "identity", "pair", "block:<k>", "query_only".
inline Perturbation parse_perturbation(const std::string& name) {
    Perturbation p;
    if (name == "identity") p.kind = PerturbationKind::identity;
    else if (name == "pair") p.kind = PerturbationKind::pair;
    else if (name == "query_only") p.kind = PerturbationKind::query_only;
    else if (name.rfind("block:", 0) == 0) {
        p.kind = PerturbationKind::block;
        p.block_size = detail::parse_number<std::size_t>("block size", name.substr(6));
    } else {
        throw UsageError("unknown perturbation \"" + name +
                         "\" (expected identity, pair, block:<k>, query_only)");
    }
    return p;
}

// --- sweep-bins -----------------------------------------------------------------------

// One select run per distinct K, sharing the embedding/annotation caches.
inline std::vector<SelectOutputs> run_sweep_bins(const RunConfig& cfg,
                                                 const std::vector<std::size_t>& k_values) {
    if (k_values.empty()) throw UsageError("sweep-bins: no K values given");
    std::vector<std::size_t> unique_ks;
    for (std::size_t k : k_values) {
        if (std::find(unique_ks.begin(), unique_ks.end(), k) == unique_ks.end()) {
            unique_ks.push_back(k);
        }
    }
    std::vector<SelectOutputs> outputs;
    for (std::size_t k : unique_ks) {
        RunConfig per_k = cfg;
        per_k.bins = k;
        per_k.out_dir = (fs::path(cfg.out_dir) / ("K_" + std::to_string(k))).string();
        outputs.push_back(run_select(per_k));
    }
    return outputs;
}

} // namespace dialsel
