#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "annoembed/rng.hpp"

namespace annoembed {

// Dense row-major matrix of doubles. Vectors are 1xC rows.
struct Array2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Array2() = default;
    Array2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Array2(std::size_t r, std::size_t c, std::initializer_list<double> values);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Array2& o) const { return rows == o.rows && cols == o.cols; }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    static Array2 identity(std::size_t n);
    static Array2 random_normal(std::size_t r, std::size_t c, double stddev, Rng& rng);

    bool operator==(const Array2&) const = default;
};

Array2 matmul(const Array2& a, const Array2& b);
Array2 transpose(const Array2& a);

// A trainable tensor. `grad` accumulates across backward passes until
// ParameterStore::zero_grad (so a mini-batch can be summed example by example).
struct Parameter {
    std::string name;
    Array2 value;
    Array2 grad;
};

// Insertion-ordered parameter registry. Handles are indices, so stores can be
// copied and moved freely.
class ParameterStore {
public:
    std::size_t add(std::string name, Array2 value);

    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;

    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;
    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Handle to a node recorded on a Tape.
struct Var {
    std::size_t id = 0;
};

constexpr double kLayerNormEps = 1e-12;

// Reverse-mode tape. Nodes are appended in evaluation order, so walking the
// tape backwards is a valid reverse topological order. A tape is single-use
// and single-threaded; parameters may be read by several tapes at once as
// long as nobody calls backward concurrently on the same store.
class Tape {
public:
    // Dropout is active only when `training` is set; it then draws masks from `rng`.
    explicit Tape(bool training = false, Rng* rng = nullptr) : training_(training), rng_(rng) {}

    Var constant(Array2 value);
    // Leaf bound to a parameter; backward adds into parameter.grad.
    Var parameter(Parameter& p);

    const Array2& value(Var v) const { return nodes_[v.id].value; }
    const Array2& grad(Var v) const { return nodes_[v.id].grad; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    std::size_t node_count() const { return nodes_.size(); }
    bool training() const { return training_; }

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    // x (RxC) + row (1xC) broadcast over rows.
    Var add_row(Var x, Var row);
    Var scale(Var x, double factor);
    // alpha is 1x1; returns alpha * x.
    Var scalar_scale(Var alpha, Var x);
    Var row_mean(Var x);
    Var sum(Var x);
    Var gather_rows(Var table, std::vector<std::size_t> indices);
    // out[indices[r]] += rows[r]; out has out_rows rows.
    Var scatter_add(Var rows, std::vector<std::size_t> indices, std::size_t out_rows);
    // Per-row normalization followed by gamma * xhat + beta (gamma, beta are 1xC).
    Var layer_norm(Var x, Var gamma, Var beta, double eps = kLayerNormEps);
    Var dropout(Var x, double p);
    Var gelu(Var x);
    Var softmax_rows(Var x);
    // logits is 1xM; returns 1x1 -log softmax(logits)[target].
    Var softmax_cross_entropy(Var logits, std::size_t target);
    Var concat_rows(Var top, Var bottom);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_rows(Var x, std::size_t begin, std::size_t end);
    Var slice_cols(Var x, std::size_t begin, std::size_t end);
    Var transpose(Var x);

    // loss must be 1x1. Node gradients are reset first; parameter gradients accumulate.
    void backward(Var loss);

private:
    using BackwardFn = std::function<void(Tape&)>;

    struct Node {
        Array2 value;
        Array2 grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        BackwardFn backward;
    };

    Var push(Array2 value, bool requires_grad, BackwardFn fn);
    Array2& g(std::size_t id) { return nodes_[id].grad; }
    bool needs(std::size_t id) const { return nodes_[id].requires_grad; }
    const Node& node(Var v) const { return nodes_[v.id]; }

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> param_nodes_;
    bool training_;
    Rng* rng_;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    std::size_t coordinates_checked = 0;
    std::unordered_map<std::string, double> per_parameter;
};

// Compares backward() against central differences
//   |analytic - (f(t+eps) - f(t-eps)) / 2eps| / (|analytic| + 1e-8)
// over `samples_per_param` seeded coordinates of each parameter (0 = all).
// `build` records a scalar loss on the given tape and must be deterministic.
GradCheckResult finite_difference_check(const std::function<Var(Tape&)>& build,
                                        const std::vector<Parameter*>& params, double eps,
                                        std::size_t samples_per_param = 0,
                                        std::uint64_t seed = 0);

}  // namespace annoembed
