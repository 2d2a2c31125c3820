#include "annoembed/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace annoembed {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}
}  // namespace

// ---------------------------------------------------------------------------
// Agreement

double cohen_kappa(std::span<const std::size_t> a, std::span<const std::size_t> b, std::size_t n_labels) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("cohen_kappa: need equal, non-empty sequences");
    std::vector<double> ra(n_labels, 0.0), rb(n_labels, 0.0);
    double agree = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ra[a[i]] += 1.0;
        rb[b[i]] += 1.0;
        agree += a[i] == b[i];
    }
    const double n = static_cast<double>(a.size());
    const double po = agree / n;
    double pe = 0.0;
    for (std::size_t m = 0; m < n_labels; ++m) pe += (ra[m] / n) * (rb[m] / n);
    if (pe >= 1.0) return 1.0;
    return (po - pe) / (1.0 - pe);
}

KappaMatrix cohen_kappa_matrix(const Dataset& d, std::size_t min_overlap) {
    if (min_overlap < 1) throw std::invalid_argument("cohen_kappa_matrix: min_overlap must be at least 1");
    const std::size_t n = d.annotator_count();
    KappaMatrix k;
    k.annotator_ids = d.annotator_ids();
    k.values.assign(n * n, kNaN);
    k.co_counts.assign(n * n, 0);
    k.defined_mask.assign(n * n, false);

    // example_id -> [(annotator, label)]
    std::unordered_map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> by_example;
    std::vector<std::string> order;
    for (std::size_t i = 0; i < d.size(); ++i) {
        auto [it, inserted] = by_example.try_emplace(d.examples()[i].example_id);
        if (inserted) order.push_back(it->first);
        it->second.emplace_back(d.annotator_of(i), d.examples()[i].label);
    }
    // Paired label sequences per annotator pair (i < j).
    std::unordered_map<std::size_t, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> pairs;
    for (const auto& id : order) {
        const auto& anns = by_example[id];
        for (std::size_t x = 0; x < anns.size(); ++x)
            for (std::size_t y = 0; y < anns.size(); ++y) {
                const auto [ai, li] = anns[x];
                const auto [aj, lj] = anns[y];
                if (ai >= aj) continue;
                auto& seqs = pairs[ai * n + aj];
                seqs.first.push_back(li);
                seqs.second.push_back(lj);
            }
    }
    std::vector<std::size_t> per_annotator(n, 0);
    for (std::size_t i = 0; i < d.size(); ++i) ++per_annotator[d.annotator_of(i)];
    for (std::size_t i = 0; i < n; ++i) {
        k.co_counts[i * n + i] = per_annotator[i];
        if (per_annotator[i] >= 1) {
            k.values[i * n + i] = 1.0;
            k.defined_mask[i * n + i] = true;
        }
    }
    for (const auto& [key, seqs] : pairs) {
        const std::size_t i = key / n;
        const std::size_t j = key % n;
        const std::size_t overlap = seqs.first.size();
        k.co_counts[i * n + j] = k.co_counts[j * n + i] = overlap;
        if (overlap < min_overlap) continue;
        const double kappa = cohen_kappa(seqs.first, seqs.second, d.label_count());
        k.values[i * n + j] = k.values[j * n + i] = kappa;
        k.defined_mask[i * n + j] = k.defined_mask[j * n + i] = true;
    }
    return k;
}

LabelCorrelation label_pearson(const Dataset& d, std::size_t min_examples) {
    const std::size_t m = d.label_count();
    std::vector<std::vector<double>> counts(d.annotator_count(), std::vector<double>(m, 0.0));
    std::vector<std::size_t> totals(d.annotator_count(), 0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        counts[d.annotator_of(i)][d.examples()[i].label] += 1.0;
        ++totals[d.annotator_of(i)];
    }
    LabelCorrelation r;
    r.label_names = d.label_names();
    std::vector<std::vector<double>> freq;
    for (std::size_t a = 0; a < d.annotator_count(); ++a) {
        if (totals[a] < min_examples) continue;
        r.annotators_used.push_back(d.annotator_ids()[a]);
        std::vector<double> f(m);
        for (std::size_t l = 0; l < m; ++l) f[l] = counts[a][l] / static_cast<double>(totals[a]);
        freq.push_back(std::move(f));
    }
    r.values.assign(m * m, kNaN);
    r.defined_mask.assign(m * m, false);
    const std::size_t n = freq.size();
    if (n < 2) return r;
    std::vector<double> mean(m, 0.0), sd(m, 0.0);
    for (const auto& f : freq)
        for (std::size_t l = 0; l < m; ++l) mean[l] += f[l];
    for (double& v : mean) v /= static_cast<double>(n);
    for (const auto& f : freq)
        for (std::size_t l = 0; l < m; ++l) sd[l] += (f[l] - mean[l]) * (f[l] - mean[l]);
    for (double& v : sd) v = std::sqrt(v);
    for (std::size_t x = 0; x < m; ++x)
        for (std::size_t y = 0; y < m; ++y) {
            if (sd[x] <= 1e-15 || sd[y] <= 1e-15) continue;
            double cov = 0.0;
            for (const auto& f : freq) cov += (f[x] - mean[x]) * (f[y] - mean[y]);
            r.values[x * m + y] = x == y ? 1.0 : cov / (sd[x] * sd[y]);
            r.defined_mask[x * m + y] = true;
        }
    return r;
}

// ---------------------------------------------------------------------------
// Clustering

double sum_squared_error(const Array2& points, const Array2& centroids, const std::vector<std::size_t>& assignments) {
    double s = 0.0;
    for (std::size_t i = 0; i < points.rows; ++i) s += squared_distance(points.row(i), centroids.row(assignments[i]));
    return s;
}

ClusterResult kmeans(const Array2& points, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
    const std::size_t n = points.rows;
    if (k == 0 || k > n) throw std::invalid_argument("kmeans: need 1 <= k <= number of points");
    ClusterResult r;
    r.seed = seed;
    r.centroids = Array2(k, points.cols);

    Rng rng(seed);
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t pick = static_cast<std::size_t>(rng.uniform_index(n));
    for (std::size_t c = 0; c < k; ++c) {
        std::copy_n(points.row(pick).begin(), points.cols, r.centroids.row(c).begin());
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(points.row(i), r.centroids.row(c)));
            if (nearest[i] > far_d) {
                far_d = nearest[i];
                far = i;
            }
        }
        pick = far;
    }

    r.assignments.assign(n, k);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = squared_distance(points.row(i), r.centroids.row(0));
            for (std::size_t c = 1; c < k; ++c) {
                const double dist = squared_distance(points.row(i), r.centroids.row(c));
                if (dist < best_d) {
                    best_d = dist;
                    best = c;
                }
            }
            if (r.assignments[i] != best) changed = true;
            r.assignments[i] = best;
        }
        std::vector<std::size_t> sizes(k, 0);
        for (std::size_t a : r.assignments) ++sizes[a];
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c] > 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (sizes[r.assignments[i]] < 2) continue;
                const double dist = squared_distance(points.row(i), r.centroids.row(r.assignments[i]));
                if (dist > far_d) {
                    far_d = dist;
                    far = i;
                }
            }
            --sizes[r.assignments[far]];
            r.assignments[far] = c;
            sizes[c] = 1;
            changed = true;
        }
        r.centroids.fill(0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < points.cols; ++j) r.centroids(r.assignments[i], j) += points(i, j);
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t j = 0; j < points.cols; ++j) r.centroids(c, j) /= static_cast<double>(sizes[c]);
        r.sse_history.push_back(sum_squared_error(points, r.centroids, r.assignments));
        r.iterations = iter + 1;
        if (!changed) break;
    }
    r.sse = r.sse_history.back();
    return r;
}

double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("adjusted_rand_index: length mismatch");
    const std::size_t n = a.size();
    std::map<std::pair<std::size_t, std::size_t>, double> table;
    std::map<std::size_t, double> rows, cols;
    for (std::size_t i = 0; i < n; ++i) {
        table[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [_, c] : table) index += choose2(c);
    for (const auto& [_, c] : rows) sum_rows += choose2(c);
    for (const auto& [_, c] : cols) sum_cols += choose2(c);
    const double total = choose2(static_cast<double>(n));
    const double expected = total > 0 ? sum_rows * sum_cols / total : 0.0;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// Projection

void symmetric_eigen(const Array2& input, std::vector<double>& eigenvalues, Array2& eigenvectors) {
    if (input.rows != input.cols) throw std::invalid_argument("symmetric_eigen: matrix must be square");
    const std::size_t n = input.rows;
    Array2 a = input;
    Array2 v = Array2::identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
    eigenvalues.resize(n);
    eigenvectors = Array2(n, n);
    for (std::size_t r = 0; r < n; ++r) {
        eigenvalues[r] = a(order[r], order[r]);
        for (std::size_t k = 0; k < n; ++k) eigenvectors(r, k) = v(k, order[r]);
    }
}

Projection pca_project(const Array2& points, std::size_t dims) {
    const std::size_t n = points.rows;
    const std::size_t h = points.cols;
    if (n < dims) throw std::invalid_argument("pca_project: fewer points than output dimensions");
    std::vector<double> mean(h, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < h; ++j) mean[j] += points(i, j);
    for (double& m : mean) m /= static_cast<double>(n);
    Array2 centred(n, h);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < h; ++j) centred(i, j) = points(i, j) - mean[j];
    Array2 cov = matmul(transpose(centred), centred);
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    for (double& c : cov.data) c /= denom;

    std::vector<double> eigenvalues;
    Array2 vectors;
    symmetric_eigen(cov, eigenvalues, vectors);
    double scale = 0.0;
    for (double e : eigenvalues) scale = std::max(scale, std::abs(e));
    const double tol = std::max(scale, 1.0) * 1e-12;

    Projection p;
    p.components = Array2(dims, h);
    p.variances.assign(dims, 0.0);
    for (std::size_t d = 0; d < dims; ++d) {
        if (d >= h || eigenvalues[d] <= tol) {
            p.rank_deficient = true;
            continue;
        }
        p.variances[d] = eigenvalues[d];
        std::size_t big = 0;
        for (std::size_t j = 1; j < h; ++j)
            if (std::abs(vectors(d, j)) > std::abs(vectors(d, big))) big = j;
        const double sign = vectors(d, big) < 0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < h; ++j) p.components(d, j) = sign * vectors(d, j);
    }
    p.coordinates = matmul(centred, transpose(p.components));
    return p;
}

// ---------------------------------------------------------------------------
// Demographics

DemographicAlignment demographic_alignment(const ClusterResult& clusters,
                                           const std::vector<std::string>& annotator_ids, const Dataset& d) {
    if (clusters.assignments.size() != annotator_ids.size())
        throw std::invalid_argument("demographic_alignment: assignments do not match annotators");
    std::unordered_map<std::string, const std::map<std::string, std::string>*> demo;
    for (const auto& ex : d.examples()) demo.try_emplace(ex.annotator_id, &ex.demographics);

    std::size_t k = clusters.centroids.rows;
    for (std::size_t c : clusters.assignments) k = std::max(k, c + 1);
    std::map<std::string, bool> dimension_names;
    for (const auto& id : annotator_ids)
        if (auto it = demo.find(id); it != demo.end())
            for (const auto& [dim, _] : *it->second) dimension_names[dim] = true;

    DemographicAlignment out;
    out.clusters = k;
    for (const auto& [dim, _] : dimension_names) {
        DimensionAlignment da;
        da.dimension = dim;
        std::map<std::string, std::size_t> value_slot;
        std::vector<std::pair<std::size_t, std::string>> members;  // (cluster, value)
        for (std::size_t a = 0; a < annotator_ids.size(); ++a) {
            auto it = demo.find(annotator_ids[a]);
            const std::string* value = nullptr;
            if (it != demo.end())
                if (auto v = it->second->find(dim); v != it->second->end()) value = &v->second;
            if (!value) {
                ++da.excluded;
                continue;
            }
            value_slot.emplace(*value, 0);
            members.emplace_back(clusters.assignments[a], *value);
        }
        da.annotators = members.size();
        for (auto& [value, slot] : value_slot) {
            slot = da.values.size();
            da.values.push_back(value);
        }
        std::vector<std::size_t> counts(da.values.size(), 0);
        for (const auto& [_, value] : members) ++counts[value_slot[value]];
        for (std::size_t v = 0; v < counts.size(); ++v)
            da.multiplier.push_back(static_cast<double>(da.annotators) / static_cast<double>(counts[v]));
        da.frequency.assign(k, std::vector<double>(da.values.size(), 0.0));
        for (const auto& [c, value] : members) {
            const std::size_t v = value_slot[value];
            da.frequency[c][v] += da.multiplier[v];
        }
        da.top.resize(k);
        for (std::size_t c = 0; c < k; ++c) {
            double best = 0.0;
            for (double f : da.frequency[c]) best = std::max(best, f);
            if (best <= 0.0) continue;
            for (std::size_t v = 0; v < da.values.size(); ++v)
                if (da.frequency[c][v] == best) da.top[c].push_back(da.values[v]);
        }
        out.dimensions.push_back(std::move(da));
    }
    return out;
}

Array2 annotation_embedding_points(const ModelCheckpoint& model) {
    if (!model.bank.label_table) throw std::invalid_argument("checkpoint has no label embeddings");
    Array2 out(model.annotator_ids.size(), model.encoder_config.hidden);
    for (std::size_t a = 0; a < model.annotator_ids.size(); ++a) {
        const Array2 row = annotation_embedding_test(model.params, model.bank, model.index, a);
        std::copy(row.data.begin(), row.data.end(), out.row(a).begin());
    }
    return out;
}

Array2 annotator_embedding_points(const ModelCheckpoint& model) {
    if (!model.bank.annotator_table) throw std::invalid_argument("checkpoint has no annotator embeddings");
    return model.params[*model.bank.annotator_table].value;
}

}  // namespace annoembed
