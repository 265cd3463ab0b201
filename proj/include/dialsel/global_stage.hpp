#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dialsel/embedding.hpp"
#include "dialsel/errors.hpp"
#include "dialsel/parallel.hpp"
#include "dialsel/rng.hpp"

namespace dialsel {

// Semantic bin: cluster members (in corpus order) plus their mean vector.
struct Bin {
    std::size_t index = 0;
    std::vector<std::string> member_ids;
    Vec centroid;
};

enum class KmeansMetric { euclidean, cosine };

struct KmeansOptions {
    std::size_t max_iters = 100;
    double tol = 1e-4;
    KmeansMetric metric = KmeansMetric::euclidean;  // cosine = normalize, then euclidean
    unsigned parallelism = 1;
};

struct KmeansResult {
    std::vector<Bin> bins;
    bool clamped = false;     // K exceeded the number of distinct points
    std::size_t iters = 0;
};

namespace detail {

inline double sq_dist(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline std::size_t count_distinct(const std::vector<Vec>& points) {
    std::vector<const Vec*> ptrs;
    ptrs.reserve(points.size());
    for (const Vec& p : points) ptrs.push_back(&p);
    std::sort(ptrs.begin(), ptrs.end(),
              [](const Vec* a, const Vec* b) { return *a < *b; });
    std::size_t n = ptrs.empty() ? 0 : 1;
    for (std::size_t i = 1; i < ptrs.size(); ++i) {
        if (*ptrs[i] != *ptrs[i - 1]) ++n;
    }
    return n;
}

// k-means++: first center uniform, then D^2 sampling off the running
// min-distance table. Cumulative-sum draw keeps it platform-deterministic.
inline std::vector<std::size_t> kmeanspp_centers(const std::vector<Vec>& pts,
                                                 std::size_t k, SeededRng& rng) {
    std::vector<std::size_t> centers;
    centers.reserve(k);
    centers.push_back(rng.next_index(pts.size()));
    std::vector<double> min_d2(pts.size(), std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
        const Vec& latest = pts[centers.back()];
        double total = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            min_d2[i] = std::min(min_d2[i], sq_dist(pts[i], latest));
            total += min_d2[i];
        }
        std::size_t chosen = pts.size();
        if (total > 0.0) {
            double u = rng.next_double() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                acc += min_d2[i];
                if (u < acc) {
                    chosen = i;
                    break;
                }
            }
        }
        if (chosen == pts.size()) {
            // Unreachable while k <= distinct points; keep deterministic anyway.
            for (std::size_t i = 0; i < pts.size(); ++i) {
                if (std::find(centers.begin(), centers.end(), i) == centers.end()) {
                    chosen = i;
                    break;
                }
            }
        }
        centers.push_back(chosen);
    }
    return centers;
}

} // namespace detail

// Lloyd's algorithm over trajectory embeddings. Deterministic given the
// seed: assignment may run in parallel but centroid accumulation is a
// sequential pass in point order. Empty clusters are repaired by moving in
// the point currently farthest from its centroid.
inline KmeansResult kmeans_bins(const std::vector<std::pair<std::string, Vec>>& embeddings,
                                std::size_t k, std::uint64_t seed,
                                const KmeansOptions& opt = {}) {
    if (embeddings.empty()) throw DataError("kmeans_bins: empty input");
    if (k < 1) throw UsageError("kmeans_bins: K must be >= 1");

    const std::size_t n = embeddings.size();
    const std::size_t dim = embeddings.front().second.size();
    std::vector<Vec> pts(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec& v = embeddings[i].second;
        if (v.size() != dim) throw DataError("kmeans_bins: mixed dimensions");
        check_finite(v, "kmeans_bins");
        pts[i] = (opt.metric == KmeansMetric::cosine) ? l2_normalized(v) : v;
    }

    KmeansResult result;
    std::size_t distinct = detail::count_distinct(pts);
    if (k > distinct) {
        k = distinct;
        result.clamped = true;
    }

    SeededRng rng(seed);
    std::vector<std::size_t> center_idx = detail::kmeanspp_centers(pts, k, rng);
    std::vector<Vec> centroids;
    centroids.reserve(k);
    for (std::size_t c : center_idx) centroids.push_back(pts[c]);

    std::vector<std::size_t> assign(n, 0);
    std::vector<double> assign_d2(n, 0.0);
    for (std::size_t iter = 0; iter < opt.max_iters; ++iter) {
        result.iters = iter + 1;
        parallel_for(n, opt.parallelism, [&](std::size_t i) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_c = 0;
            for (std::size_t c = 0; c < k; ++c) {
                double d2 = detail::sq_dist(pts[i], centroids[c]);
                if (d2 < best) {
                    best = d2;
                    best_c = c;
                }
            }
            assign[i] = best_c;
            assign_d2[i] = best;
        });

        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) ++count[assign[i]];

        // Repair: hand the farthest point (ties by lowest index) to each
        // empty cluster, skipping points that are alone in their cluster.
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] != 0) continue;
            double far_d2 = -1.0;
            std::size_t far_i = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (count[assign[i]] <= 1) continue;
                if (assign_d2[i] > far_d2) {
                    far_d2 = assign_d2[i];
                    far_i = i;
                }
            }
            if (far_i == n) continue;
            --count[assign[far_i]];
            assign[far_i] = c;
            assign_d2[far_i] = 0.0;
            ++count[c];
        }

        std::vector<Vec> sums(k, Vec(dim, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            Vec& s = sums[assign[i]];
            for (std::size_t j = 0; j < dim; ++j) s[j] += pts[i][j];
        }
        double max_shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] == 0) continue;
            for (std::size_t j = 0; j < dim; ++j) {
                sums[c][j] /= static_cast<double>(count[c]);
            }
            max_shift = std::max(max_shift, std::sqrt(detail::sq_dist(sums[c], centroids[c])));
            centroids[c] = std::move(sums[c]);
        }
        if (max_shift < opt.tol) break;
    }

    std::vector<Bin> bins(k);
    for (std::size_t c = 0; c < k; ++c) {
        bins[c].index = c;
        bins[c].centroid = centroids[c];
    }
    for (std::size_t i = 0; i < n; ++i) {
        bins[assign[i]].member_ids.push_back(embeddings[i].first);
    }
    // Drop empty bins (only possible when repair had no donor), reindex.
    std::erase_if(bins, [](const Bin& b) { return b.member_ids.empty(); });
    for (std::size_t c = 0; c < bins.size(); ++c) bins[c].index = c;
    result.bins = std::move(bins);
    return result;
}

struct GreedyOrder {
    std::vector<std::string> order;
    std::size_t tie_breaks = 0;   // steps decided by the index tie-break
};

// Iteratively picks the candidate maximizing
//   lambda * cos(v, centroid) - (1 - lambda) * max_selected cos(v, v_sel)
// with the redundancy term zero while nothing is selected. Exact score ties
// go to the lowest original candidate index.
inline GreedyOrder greedy_order(const std::vector<std::pair<std::string, Vec>>& candidates,
                                const Vec& centroid, double lambda) {
    if (candidates.empty()) throw DataError("greedy_order: no candidates");
    if (lambda < 0.0 || lambda > 1.0) throw UsageError("greedy_order: lambda not in [0,1]");

    const std::size_t n = candidates.size();
    std::vector<double> rep(n);
    for (std::size_t i = 0; i < n; ++i) {
        rep[i] = cosine(candidates[i].second, centroid);
    }

    GreedyOrder result;
    result.order.reserve(n);
    std::vector<bool> used(n, false);
    // Running max cosine to the selected set. Starts below any cosine so the
    // first update yields the true max, which may be negative; the term only
    // collapses to zero while nothing is selected.
    std::vector<double> redundancy(n, -2.0);
    bool any_selected = false;
    for (std::size_t step = 0; step < n; ++step) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = n;
        bool tie_seen = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            double r = any_selected ? redundancy[i] : 0.0;
            double score = lambda * rep[i] - (1.0 - lambda) * r;
            if (score > best) {
                best = score;
                best_i = i;
                tie_seen = false;
            } else if (score == best) {
                tie_seen = true;
            }
        }
        if (tie_seen) ++result.tie_breaks;
        used[best_i] = true;
        result.order.push_back(candidates[best_i].first);
        any_selected = true;
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            redundancy[i] = std::max(redundancy[i],
                                     cosine(candidates[i].second, candidates[best_i].second));
        }
    }
    return result;
}

// Candidate pool: per-bin greedy orders plus the alpha prefix kept for the
// local stage.
struct CandidatePool {
    struct BinCandidates {
        std::size_t bin = 0;
        std::vector<std::string> full_order;   // complete greedy order
        std::vector<std::string> kept;         // first ceil(alpha * |bin|)
        std::size_t tie_breaks = 0;
    };
    std::vector<BinCandidates> bins;
    double lambda = 0.5;
    double alpha = 0.5;

    std::vector<std::string> all_kept() const {
        std::vector<std::string> out;
        for (const auto& b : bins) out.insert(out.end(), b.kept.begin(), b.kept.end());
        return out;
    }
};

// ceil(alpha * |bin|); the epsilon absorbs float noise in the product.
inline std::size_t alpha_keep_count(std::size_t bin_size, double alpha) {
    if (bin_size == 0) return 0;
    auto keep = static_cast<std::size_t>(
        std::ceil(alpha * static_cast<double>(bin_size) - 1e-12));
    return std::clamp<std::size_t>(keep, 1, bin_size);
}

inline CandidatePool build_global_pool(
    const std::vector<Bin>& bins,
    const std::vector<std::pair<std::string, Vec>>& embeddings,
    double lambda, double alpha, unsigned parallelism = 1) {
    if (alpha <= 0.0 || alpha > 1.0) throw UsageError("build_global_pool: alpha not in (0,1]");

    std::map<std::string, const Vec*> by_id;
    for (const auto& [id, v] : embeddings) by_id[id] = &v;

    CandidatePool pool;
    pool.lambda = lambda;
    pool.alpha = alpha;
    pool.bins.resize(bins.size());
    parallel_for(bins.size(), parallelism, [&](std::size_t k) {
        const Bin& bin = bins[k];
        std::vector<std::pair<std::string, Vec>> candidates;
        candidates.reserve(bin.member_ids.size());
        for (const std::string& id : bin.member_ids) {
            auto it = by_id.find(id);
            if (it == by_id.end()) {
                throw DataError("build_global_pool: no embedding for id " + id);
            }
            candidates.emplace_back(id, *it->second);
        }
        GreedyOrder g = greedy_order(candidates, bin.centroid, lambda);
        auto& out = pool.bins[k];
        out.bin = bin.index;
        out.tie_breaks = g.tie_breaks;
        std::size_t keep = alpha_keep_count(g.order.size(), alpha);
        out.kept.assign(g.order.begin(), g.order.begin() + keep);
        out.full_order = std::move(g.order);
    });
    return pool;
}

} // namespace dialsel
