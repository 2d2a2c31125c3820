#include "annoembed/tensor.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace annoembed {

namespace {

void require(bool ok, const char* op, const std::string& what) {
    if (!ok) throw std::invalid_argument(std::string(op) + ": " + what);
}

std::string shape(const Array2& a) {
    return std::to_string(a.rows) + "x" + std::to_string(a.cols);
}

// c (+)= a * b, with optional transposes of a or b.
void gemm(const Array2& a, bool ta, const Array2& b, bool tb, Array2& c) {
    const std::size_t m = ta ? a.cols : a.rows;
    const std::size_t k = ta ? a.rows : a.cols;
    const std::size_t n = tb ? b.rows : b.cols;
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c.data.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ta ? a(p, i) : a(i, p);
            if (av == 0.0) continue;
            if (!tb) {
                const double* brow = b.data.data() + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            } else {
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * b(j, p);
            }
        }
    }
}

void add_into(Array2& dst, const Array2& src) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

Array2::Array2(std::size_t r, std::size_t c, std::initializer_list<double> values)
    : rows(r), cols(c), data(values) {
    if (data.size() != r * c) throw std::invalid_argument("Array2: initializer size mismatch");
}

Array2 Array2::identity(std::size_t n) {
    Array2 out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
}

Array2 Array2::random_normal(std::size_t r, std::size_t c, double stddev, Rng& rng) {
    Array2 out(r, c);
    for (double& v : out.data) v = rng.normal(0.0, stddev);
    return out;
}

Array2 matmul(const Array2& a, const Array2& b) {
    require(a.cols == b.rows, "matmul", shape(a) + " by " + shape(b));
    Array2 c(a.rows, b.cols);
    gemm(a, false, b, false, c);
    return c;
}

Array2 transpose(const Array2& a) {
    Array2 t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

std::size_t ParameterStore::add(std::string name, Array2 value) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter: " + name);
    Array2 grad(value.rows, value.cols);
    index_.emplace(name, params_.size());
    params_.push_back({std::move(name), std::move(value), std::move(grad)});
    return params_.size() - 1;
}

Parameter* ParameterStore::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterStore::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
}

// ---------------------------------------------------------------------------

Var Tape::push(Array2 value, bool requires_grad, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::constant(Array2 value) {
    return push(std::move(value), false, nullptr);
}

Var Tape::parameter(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
    Var v = push(p.value, true, nullptr);
    nodes_[v.id].param = &p;
    param_nodes_.emplace(&p, v.id);
    return v;
}

Var Tape::matmul(Var a, Var b) {
    const Array2& av = value(a);
    const Array2& bv = value(b);
    require(av.cols == bv.rows, "matmul", shape(av) + " by " + shape(bv));
    Array2 out(av.rows, bv.cols);
    gemm(av, false, bv, false, out);
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(a.id) || needs(b.id), [a, b, o](Tape& t) {
        const Array2& go = t.g(o);
        if (t.needs(a.id)) gemm(go, false, t.value(b), true, t.g(a.id));
        if (t.needs(b.id)) gemm(t.value(a), true, go, false, t.g(b.id));
    });
}

Var Tape::add(Var a, Var b) {
    const Array2& av = value(a);
    const Array2& bv = value(b);
    require(av.same_shape(bv), "add", shape(av) + " vs " + shape(bv));
    Array2 out = av;
    add_into(out, bv);
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(a.id) || needs(b.id), [a, b, o](Tape& t) {
        if (t.needs(a.id)) add_into(t.g(a.id), t.g(o));
        if (t.needs(b.id)) add_into(t.g(b.id), t.g(o));
    });
}

Var Tape::add_row(Var x, Var row) {
    const Array2& xv = value(x);
    const Array2& rv = value(row);
    require(rv.rows == 1 && rv.cols == xv.cols, "add_row", shape(xv) + " + " + shape(rv));
    Array2 out = xv;
    for (std::size_t r = 0; r < out.rows; ++r)
        for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += rv.data[c];
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(x.id) || needs(row.id), [x, row, o](Tape& t) {
        const Array2& go = t.g(o);
        if (t.needs(x.id)) add_into(t.g(x.id), go);
        if (t.needs(row.id)) {
            Array2& gr = t.g(row.id);
            for (std::size_t r = 0; r < go.rows; ++r)
                for (std::size_t c = 0; c < go.cols; ++c) gr.data[c] += go(r, c);
        }
    });
}

Var Tape::scale(Var x, double factor) {
    Array2 out = value(x);
    for (double& v : out.data) v *= factor;
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(x.id), [x, o, factor](Tape& t) {
        Array2& gx = t.g(x.id);
        const Array2& go = t.g(o);
        for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += factor * go.data[i];
    });
}

Var Tape::scalar_scale(Var alpha, Var x) {
    const Array2& av = value(alpha);
    require(av.rows == 1 && av.cols == 1, "scalar_scale", "alpha must be 1x1, got " + shape(av));
    const double a = av.data[0];
    Array2 out = value(x);
    for (double& v : out.data) v *= a;
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(alpha.id) || needs(x.id), [alpha, x, o](Tape& t) {
        const Array2& go = t.g(o);
        const Array2& xv = t.value(x);
        if (t.needs(alpha.id)) {
            double s = 0.0;
            for (std::size_t i = 0; i < go.data.size(); ++i) s += go.data[i] * xv.data[i];
            t.g(alpha.id).data[0] += s;
        }
        if (t.needs(x.id)) {
            const double a = t.value(alpha).data[0];
            Array2& gx = t.g(x.id);
            for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += a * go.data[i];
        }
    });
}

Var Tape::row_mean(Var x) {
    const Array2& xv = value(x);
    require(xv.rows >= 1, "row_mean", "empty input");
    Array2 out(1, xv.cols);
    for (std::size_t r = 0; r < xv.rows; ++r)
        for (std::size_t c = 0; c < xv.cols; ++c) out.data[c] += xv(r, c);
    const double inv = 1.0 / static_cast<double>(xv.rows);
    for (double& v : out.data) v *= inv;
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(x.id), [x, o, inv](Tape& t) {
        Array2& gx = t.g(x.id);
        const Array2& go = t.g(o);
        for (std::size_t r = 0; r < gx.rows; ++r)
            for (std::size_t c = 0; c < gx.cols; ++c) gx(r, c) += inv * go.data[c];
    });
}

Var Tape::sum(Var x) {
    double s = 0.0;
    for (double v : value(x).data) s += v;
    const std::size_t o = nodes_.size();
    return push(Array2(1, 1, {s}), needs(x.id), [x, o](Tape& t) {
        const double go = t.g(o).data[0];
        for (double& v : t.g(x.id).data) v += go;
    });
}

Var Tape::gather_rows(Var table, std::vector<std::size_t> indices) {
    const Array2& tv = value(table);
    Array2 out(indices.size(), tv.cols);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        require(indices[r] < tv.rows, "gather_rows",
                "row " + std::to_string(indices[r]) + " out of range for " + shape(tv));
        std::copy_n(tv.row(indices[r]).begin(), tv.cols, out.row(r).begin());
    }
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(table.id), [table, o, idx = std::move(indices)](Tape& t) {
        Array2& gt = t.g(table.id);
        const Array2& go = t.g(o);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < go.cols; ++c) gt(idx[r], c) += go(r, c);
    });
}

Var Tape::scatter_add(Var rows, std::vector<std::size_t> indices, std::size_t out_rows) {
    const Array2& rv = value(rows);
    require(rv.rows == indices.size(), "scatter_add", "index count does not match rows");
    Array2 out(out_rows, rv.cols);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        require(indices[r] < out_rows, "scatter_add", "target row out of range");
        for (std::size_t c = 0; c < rv.cols; ++c) out(indices[r], c) += rv(r, c);
    }
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(rows.id), [rows, o, idx = std::move(indices)](Tape& t) {
        Array2& gr = t.g(rows.id);
        const Array2& go = t.g(o);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < go.cols; ++c) gr(r, c) += go(idx[r], c);
    });
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Array2& xv = value(x);
    const Array2& gv = value(gamma);
    const Array2& bv = value(beta);
    require(gv.rows == 1 && gv.cols == xv.cols && bv.same_shape(gv), "layer_norm",
            "affine parameters must be 1x" + std::to_string(xv.cols));
    const std::size_t n = xv.cols;
    Array2 xhat(xv.rows, n);
    std::vector<double> inv_std(xv.rows);
    Array2 out(xv.rows, n);
    for (std::size_t r = 0; r < xv.rows; ++r) {
        double mean = 0.0;
        for (double v : xv.row(r)) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : xv.row(r)) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < n; ++c) {
            xhat(r, c) = (xv(r, c) - mean) * inv_std[r];
            out(r, c) = gv.data[c] * xhat(r, c) + bv.data[c];
        }
    }
    const std::size_t o = nodes_.size();
    const bool rg = needs(x.id) || needs(gamma.id) || needs(beta.id);
    return push(std::move(out), rg,
                [x, gamma, beta, o, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t) {
                    const Array2& go = t.g(o);
                    const Array2& gv = t.value(gamma);
                    const std::size_t n = go.cols;
                    for (std::size_t r = 0; r < go.rows; ++r) {
                        if (t.needs(gamma.id) || t.needs(beta.id)) {
                            for (std::size_t c = 0; c < n; ++c) {
                                if (t.needs(gamma.id)) t.g(gamma.id).data[c] += go(r, c) * xhat(r, c);
                                if (t.needs(beta.id)) t.g(beta.id).data[c] += go(r, c);
                            }
                        }
                        if (!t.needs(x.id)) continue;
                        double mean_d = 0.0;
                        double mean_dx = 0.0;
                        for (std::size_t c = 0; c < n; ++c) {
                            const double d = go(r, c) * gv.data[c];
                            mean_d += d;
                            mean_dx += d * xhat(r, c);
                        }
                        mean_d /= static_cast<double>(n);
                        mean_dx /= static_cast<double>(n);
                        Array2& gx = t.g(x.id);
                        for (std::size_t c = 0; c < n; ++c) {
                            const double d = go(r, c) * gv.data[c];
                            gx(r, c) += inv_std[r] * (d - mean_d - xhat(r, c) * mean_dx);
                        }
                    }
                });
}

Var Tape::dropout(Var x, double p) {
    require(p >= 0.0 && p < 1.0, "dropout", "probability must be in [0, 1), got " + std::to_string(p));
    if (!training_ || p == 0.0) return x;
    require(rng_ != nullptr, "dropout", "training tape needs a generator");
    const Array2& xv = value(x);
    std::vector<double> mask(xv.size());
    const double keep_scale = 1.0 / (1.0 - p);
    for (double& m : mask) m = rng_->bernoulli(p) ? 0.0 : keep_scale;
    Array2 out = xv;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask[i];
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(x.id), [x, o, mask = std::move(mask)](Tape& t) {
        Array2& gx = t.g(x.id);
        const Array2& go = t.g(o);
        for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += mask[i] * go.data[i];
    });
}

Var Tape::gelu(Var x) {
    Array2 out = value(x);
    for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(x.id), [x, o](Tape& t) {
        const Array2& xv = t.value(x);
        Array2& gx = t.g(x.id);
        const Array2& go = t.g(o);
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < gx.data.size(); ++i) {
            const double v = xv.data[i];
            const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            gx.data[i] += go.data[i] * (cdf + v * pdf);
        }
    });
}

Var Tape::softmax_rows(Var x) {
    Array2 out = value(x);
    for (std::size_t r = 0; r < out.rows; ++r) {
        auto row = out.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            z += v;
        }
        for (double& v : row) v /= z;
    }
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(x.id), [x, o](Tape& t) {
        const Array2& y = t.value(Var{o});
        const Array2& go = t.g(o);
        Array2& gx = t.g(x.id);
        for (std::size_t r = 0; r < y.rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < y.cols; ++c) dot += go(r, c) * y(r, c);
            for (std::size_t c = 0; c < y.cols; ++c) gx(r, c) += y(r, c) * (go(r, c) - dot);
        }
    });
}

Var Tape::softmax_cross_entropy(Var logits, std::size_t target) {
    const Array2& lv = value(logits);
    require(lv.rows == 1, "softmax_cross_entropy", "logits must be a single row, got " + shape(lv));
    require(target < lv.cols, "softmax_cross_entropy",
            "target " + std::to_string(target) + " out of range for " + std::to_string(lv.cols) + " classes");
    const double mx = *std::max_element(lv.data.begin(), lv.data.end());
    double z = 0.0;
    for (double v : lv.data) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    std::vector<double> probs(lv.cols);
    for (std::size_t c = 0; c < lv.cols; ++c) probs[c] = std::exp(lv.data[c] - log_z);
    const double loss = log_z - lv.data[target];
    const std::size_t o = nodes_.size();
    return push(Array2(1, 1, {loss}), needs(logits.id),
                [logits, o, target, probs = std::move(probs)](Tape& t) {
                    const double go = t.g(o).data[0];
                    Array2& gl = t.g(logits.id);
                    for (std::size_t c = 0; c < probs.size(); ++c)
                        gl.data[c] += go * (probs[c] - (c == target ? 1.0 : 0.0));
                });
}

Var Tape::concat_rows(Var top, Var bottom) {
    const Array2& tv = value(top);
    const Array2& bv = value(bottom);
    require(tv.cols == bv.cols, "concat_rows", shape(tv) + " over " + shape(bv));
    Array2 out(tv.rows + bv.rows, tv.cols);
    std::copy(tv.data.begin(), tv.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(tv.size()));
    const std::size_t o = nodes_.size();
    const std::size_t split = tv.size();
    return push(std::move(out), needs(top.id) || needs(bottom.id), [top, bottom, o, split](Tape& t) {
        const Array2& go = t.g(o);
        if (t.needs(top.id)) {
            Array2& gt = t.g(top.id);
            for (std::size_t i = 0; i < split; ++i) gt.data[i] += go.data[i];
        }
        if (t.needs(bottom.id)) {
            Array2& gb = t.g(bottom.id);
            for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += go.data[split + i];
        }
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols", "no inputs");
    const std::size_t rows = value(parts[0]).rows;
    std::size_t cols = 0;
    bool rg = false;
    for (Var p : parts) {
        require(value(p).rows == rows, "concat_cols", "row count mismatch");
        cols += value(p).cols;
        rg = rg || needs(p.id);
    }
    Array2 out(rows, cols);
    std::size_t offset = 0;
    for (Var p : parts) {
        const Array2& pv = value(p);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < pv.cols; ++c) out(r, offset + c) = pv(r, c);
        offset += pv.cols;
    }
    const std::size_t o = nodes_.size();
    return push(std::move(out), rg, [parts, o](Tape& t) {
        const Array2& go = t.g(o);
        std::size_t offset = 0;
        for (Var p : parts) {
            const std::size_t pc = t.value(p).cols;
            if (t.needs(p.id)) {
                Array2& gp = t.g(p.id);
                for (std::size_t r = 0; r < go.rows; ++r)
                    for (std::size_t c = 0; c < pc; ++c) gp(r, c) += go(r, offset + c);
            }
            offset += pc;
        }
    });
}

Var Tape::slice_rows(Var x, std::size_t begin, std::size_t end) {
    const Array2& xv = value(x);
    require(begin <= end && end <= xv.rows, "slice_rows", "range out of bounds for " + shape(xv));
    Array2 out(end - begin, xv.cols);
    std::copy(xv.data.begin() + static_cast<std::ptrdiff_t>(begin * xv.cols),
              xv.data.begin() + static_cast<std::ptrdiff_t>(end * xv.cols), out.data.begin());
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(x.id), [x, o, begin](Tape& t) {
        const Array2& go = t.g(o);
        Array2& gx = t.g(x.id);
        const std::size_t base = begin * gx.cols;
        for (std::size_t i = 0; i < go.data.size(); ++i) gx.data[base + i] += go.data[i];
    });
}

Var Tape::slice_cols(Var x, std::size_t begin, std::size_t end) {
    const Array2& xv = value(x);
    require(begin <= end && end <= xv.cols, "slice_cols", "range out of bounds for " + shape(xv));
    Array2 out(xv.rows, end - begin);
    for (std::size_t r = 0; r < xv.rows; ++r)
        for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = xv(r, c);
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(x.id), [x, o, begin](Tape& t) {
        const Array2& go = t.g(o);
        Array2& gx = t.g(x.id);
        for (std::size_t r = 0; r < go.rows; ++r)
            for (std::size_t c = 0; c < go.cols; ++c) gx(r, begin + c) += go(r, c);
    });
}

Var Tape::transpose(Var x) {
    Array2 out = annoembed::transpose(value(x));
    const std::size_t o = nodes_.size();
    return push(std::move(out), needs(x.id), [x, o](Tape& t) {
        const Array2& go = t.g(o);
        Array2& gx = t.g(x.id);
        for (std::size_t r = 0; r < gx.rows; ++r)
            for (std::size_t c = 0; c < gx.cols; ++c) gx(r, c) += go(c, r);
    });
}

void Tape::backward(Var loss) {
    const Array2& lv = value(loss);
    if (lv.rows != 1 || lv.cols != 1)
        throw std::invalid_argument("backward: loss must be 1x1, got " + shape(lv));
    for (std::size_t i = 0; i <= loss.id; ++i) {
        Node& n = nodes_[i];
        if (n.requires_grad) n.grad = Array2(n.value.rows, n.value.cols);
    }
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad.data[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad) continue;
        if (n.backward) n.backward(*this);
        if (n.param) add_into(n.param->grad, n.grad);
    }
}

// ---------------------------------------------------------------------------

GradCheckResult finite_difference_check(const std::function<Var(Tape&)>& build,
                                        const std::vector<Parameter*>& params, double eps,
                                        std::size_t samples_per_param, std::uint64_t seed) {
    for (Parameter* p : params) p->grad.fill(0.0);
    {
        Tape tape;
        Var loss = build(tape);
        tape.backward(loss);
    }
    auto eval = [&] {
        Tape tape;
        return tape.value(build(tape)).data[0];
    };

    GradCheckResult result;
    Rng rng(seed);
    for (Parameter* p : params) {
        std::vector<std::size_t> coords;
        const std::size_t n = p->value.size();
        if (samples_per_param == 0 || samples_per_param >= n) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            for (std::size_t s = 0; s < samples_per_param; ++s)
                coords.push_back(static_cast<std::size_t>(rng.uniform_index(n)));
        }
        double worst = 0.0;
        for (std::size_t i : coords) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + eps;
            const double up = eval();
            p->value.data[i] = saved - eps;
            const double down = eval();
            p->value.data[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = p->grad.data[i];
            const double err = std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8);
            worst = std::max(worst, err);
            ++result.coordinates_checked;
        }
        result.per_parameter[p->name] = worst;
        if (worst >= result.max_rel_error) {
            result.max_rel_error = worst;
            result.worst_parameter = p->name;
        }
    }
    return result;
}

}  // namespace annoembed
