#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "annoembed/corpus.hpp"
#include "annoembed/model.hpp"
#include "annoembed/tensor.hpp"

namespace annoembed {

constexpr std::size_t kDefaultMinOverlap = 10;
constexpr std::size_t kDefaultMinExamples = 50;

// Pairwise Cohen's kappa over co-annotated example ids. Entries whose overlap
// is below the minimum are undefined (defined() false, value NaN).
struct KappaMatrix {
    std::vector<std::string> annotator_ids;
    std::vector<double> values;
    std::vector<std::size_t> co_counts;
    std::vector<bool> defined_mask;

    std::size_t size() const { return annotator_ids.size(); }
    double at(std::size_t i, std::size_t j) const { return values[i * size() + j]; }
    std::size_t overlap(std::size_t i, std::size_t j) const { return co_counts[i * size() + j]; }
    bool defined(std::size_t i, std::size_t j) const { return defined_mask[i * size() + j]; }
};

// kappa = (p_o - p_e) / (1 - p_e); 1 when p_e = 1 (both annotators always
// used the same single label).
double cohen_kappa(std::span<const std::size_t> a, std::span<const std::size_t> b, std::size_t n_labels);
KappaMatrix cohen_kappa_matrix(const Dataset& d, std::size_t min_overlap = kDefaultMinOverlap);

// Correlation between label-usage frequencies across annotators with at least
// `min_examples` annotations.
struct LabelCorrelation {
    std::vector<std::string> label_names;
    std::vector<std::string> annotators_used;
    std::vector<double> values;  // M x M, NaN where undefined
    std::vector<bool> defined_mask;

    std::size_t size() const { return label_names.size(); }
    double at(std::size_t i, std::size_t j) const { return values[i * size() + j]; }
    bool defined(std::size_t i, std::size_t j) const { return defined_mask[i * size() + j]; }
};

LabelCorrelation label_pearson(const Dataset& d, std::size_t min_examples = kDefaultMinExamples);

struct ClusterResult {
    std::vector<std::size_t> assignments;
    Array2 centroids;
    double sse = 0.0;
    // SSE after every Lloyd iteration.
    std::vector<double> sse_history;
    std::size_t iterations = 0;
    std::uint64_t seed = 0;
};

// Farthest-point initialization (first centroid drawn with the seed, each next
// one the point farthest from those chosen), then Lloyd iterations until the
// assignment stops changing or max_iter. A cluster that goes empty is
// re-seeded at the point farthest from its own centroid.
ClusterResult kmeans(const Array2& points, std::size_t k, std::uint64_t seed, std::size_t max_iter = 100);

double sum_squared_error(const Array2& points, const Array2& centroids, const std::vector<std::size_t>& assignments);

double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

struct Projection {
    Array2 coordinates;            // N x dims
    Array2 components;             // dims x H, orthonormal rows
    std::vector<double> variances;  // eigenvalues of the sample covariance, descending
    bool rank_deficient = false;    // fewer than dims non-zero directions; missing ones are zero
};

// Mean-centred projection onto the leading principal directions. Each
// direction's largest-magnitude loading is made positive.
Projection pca_project(const Array2& points, std::size_t dims = 2);

// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
// Returns eigenvalues descending and eigenvectors as matching rows.
void symmetric_eigen(const Array2& a, std::vector<double>& eigenvalues, Array2& eigenvectors);

struct DimensionAlignment {
    std::string dimension;
    // Annotators that carry the dimension (N in the multiplier).
    std::size_t annotators = 0;
    std::size_t excluded = 0;
    std::vector<std::string> values;
    std::vector<double> multiplier;              // per value: N / count(value)
    std::vector<std::vector<double>> frequency;  // [cluster][value]
    std::vector<std::vector<std::string>> top;   // [cluster] all values tied at the maximum
};

struct DemographicAlignment {
    std::size_t clusters = 0;
    std::vector<DimensionAlignment> dimensions;
};

// Weighted frequency f(v) = sum over annotators of cluster c with D = v of
// N / count(D = v). Demographics come from each annotator's first annotation
// in `d`. Annotators lacking a dimension are left out of its tallies.
DemographicAlignment demographic_alignment(const ClusterResult& clusters,
                                           const std::vector<std::string>& annotator_ids, const Dataset& d);

// Per-annotator test-time annotation embeddings (registry order), N x H.
Array2 annotation_embedding_points(const ModelCheckpoint& model);
// Rows of the annotator table, N x H.
Array2 annotator_embedding_points(const ModelCheckpoint& model);

}  // namespace annoembed
