#include "lexforge/autograd.hpp"

#include "lexforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lexforge {

// ----------------------------- Var -----------------------------

const Shape& Var::shape() const { return graph_->shape(id_); }
std::span<const double> Var::value() const { return graph_->value(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

double Var::item() const {
    const auto v = value();
    if (v.size() != 1) {
        throw Error(ErrorCode::NotScalar, "item() on a node of shape " + shape_string(shape()));
    }
    return v[0];
}

Tensor Var::to_tensor() const {
    const auto v = value();
    return Tensor(shape(), std::vector<double>(v.begin(), v.end()));
}

// ----------------------------- Graph -----------------------------

Var Graph::param(Tensor& t) {
    auto node = std::make_unique<Node>();
    node->shape = t.shape();
    node->external = t.values().data();
    node->length = t.size();
    node->requires_grad = t.requires_grad();
    node->sink = t.requires_grad() ? &t : nullptr;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::param(const Tensor& t) {
    auto node = std::make_unique<Node>();
    node->shape = t.shape();
    node->external = t.values().data();
    node->length = t.size();
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
    auto node = std::make_unique<Node>();
    node->shape = value.shape();
    const auto v = value.values();
    node->own.assign(v.begin(), v.end());
    node->length = node->own.size();
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::record(Shape shape, std::vector<double> value, std::vector<std::size_t> parents, BackwardFn fn) {
    auto node = std::make_unique<Node>();
    node->shape = std::move(shape);
    node->own = std::move(value);
    node->length = node->own.size();
    node->requires_grad = std::any_of(parents.begin(), parents.end(),
                                      [this](std::size_t p) { return nodes_[p]->requires_grad; });
    if (node->requires_grad) {
        node->backward = std::move(fn);
    }
    node->parents = std::move(parents);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

std::span<const double> Graph::value(std::size_t id) const {
    const Node& n = *nodes_[id];
    if (n.external != nullptr) {
        return {n.external, n.length};
    }
    return n.own;
}

std::span<double> Graph::grad(std::size_t id) {
    Node& n = *nodes_[id];
    if (!n.requires_grad) {
        return {};
    }
    if (n.grad.size() != n.length) {
        n.grad.assign(n.length, 0.0);
    }
    return n.grad;
}

void Graph::backward(Var loss) {
    if (&loss.graph() != this) {
        throw Error(ErrorCode::InvalidArgument, "loss belongs to another graph");
    }
    if (consumed_) {
        throw Error(ErrorCode::DoubleBackward, "backward already ran on this graph; call reset() first");
    }
    if (nodes_[loss.id()]->length != 1) {
        throw Error(ErrorCode::NotScalar, "loss has shape " + shape_string(loss.shape()));
    }
    consumed_ = true;
    if (!nodes_[loss.id()]->requires_grad) {
        return;
    }
    grad(loss.id())[0] = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& n = *nodes_[id];
        if (!n.requires_grad || n.grad.empty()) {
            continue;
        }
        if (n.backward) {
            n.backward(*this, id);
        }
        if (n.sink != nullptr) {
            auto dst = n.sink->grad();
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] += n.grad[i];
            }
        }
    }
}

void Graph::reset() {
    nodes_.clear();
    consumed_ = false;
}

// ----------------------------- ops -----------------------------

namespace ops {

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) {
        throw Error(ErrorCode::ShapeError, message);
    }
}

std::size_t rows_of(const Shape& s) { return s.empty() ? 1 : s.front(); }
std::size_t cols_of(const Shape& s) {
    if (s.empty()) return 1;
    return s.front() == 0 ? 0 : shape_size(s) / s.front();
}

inline double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) {
        s0 += a[i] * b[i];
    }
    return (s0 + s1) + (s2 + s3);
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

}  // namespace

Var add(Var a, Var b) {
    Graph& g = a.graph();
    require(a.shape() == b.shape(), "add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    const auto av = a.value();
    const auto bv = b.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] + bv[i];
    }
    const std::size_t ia = a.id(), ib = b.id();
    return g.record(a.shape(), std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
        const auto go = gr.grad(self);
        for (std::size_t p : {ia, ib}) {
            auto gp = gr.grad(p);
            for (std::size_t i = 0; i < gp.size(); ++i) {
                gp[i] += go[i];
            }
        }
    });
}

Var add_bias(Var x, Var bias) {
    Graph& g = x.graph();
    const std::size_t n = cols_of(x.shape());
    const std::size_t t = rows_of(x.shape());
    require(bias.value().size() == n, "add_bias: bias length does not match columns");
    const auto xv = x.value();
    const auto bv = bias.value();
    std::vector<double> out(xv.size());
    for (std::size_t r = 0; r < t; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            out[r * n + c] = xv[r * n + c] + bv[c];
        }
    }
    const std::size_t ix = x.id(), ib = bias.id();
    return g.record(x.shape(), std::move(out), {ix, ib}, [ix, ib, t, n](Graph& gr, std::size_t self) {
        const auto go = gr.grad(self);
        auto gx = gr.grad(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += go[i];
        }
        auto gb = gr.grad(ib);
        if (!gb.empty()) {
            for (std::size_t r = 0; r < t; ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    gb[c] += go[r * n + c];
                }
            }
        }
    });
}

Var scale(Var x, double factor) {
    Graph& g = x.graph();
    const auto xv = x.value();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = xv[i] * factor;
    }
    const std::size_t ix = x.id();
    return g.record(x.shape(), std::move(out), {ix}, [ix, factor](Graph& gr, std::size_t self) {
        const auto go = gr.grad(self);
        auto gx = gr.grad(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += go[i] * factor;
        }
    });
}

Var matmul_nt(Var x, Var w) {
    Graph& g = x.graph();
    require(w.shape().size() == 2, "matmul_nt: weight must be 2-D");
    const std::size_t t = rows_of(x.shape());
    const std::size_t in = cols_of(x.shape());
    const std::size_t out_dim = w.shape()[0];
    require(w.shape()[1] == in, "matmul_nt: x " + shape_string(x.shape()) + " vs w " + shape_string(w.shape()));
    const auto xv = x.value();
    const auto wv = w.value();
    std::vector<double> out(t * out_dim);
    for (std::size_t r = 0; r < t; ++r) {
        const double* xr = xv.data() + r * in;
        for (std::size_t o = 0; o < out_dim; ++o) {
            out[r * out_dim + o] = dot(xr, wv.data() + o * in, in);
        }
    }
    const std::size_t ix = x.id(), iw = w.id();
    return g.record({t, out_dim}, std::move(out), {ix, iw}, [ix, iw, t, in, out_dim](Graph& gr, std::size_t self) {
        const auto go = gr.grad(self);
        const auto xv2 = gr.value(ix);
        const auto wv2 = gr.value(iw);
        auto gx = gr.grad(ix);
        if (!gx.empty()) {
            for (std::size_t r = 0; r < t; ++r) {
                double* gxr = gx.data() + r * in;
                for (std::size_t o = 0; o < out_dim; ++o) {
                    const double d = go[r * out_dim + o];
                    if (d != 0.0) {
                        axpy(d, wv2.data() + o * in, gxr, in);
                    }
                }
            }
        }
        auto gw = gr.grad(iw);
        if (!gw.empty()) {
            for (std::size_t r = 0; r < t; ++r) {
                const double* xr = xv2.data() + r * in;
                for (std::size_t o = 0; o < out_dim; ++o) {
                    const double d = go[r * out_dim + o];
                    if (d != 0.0) {
                        axpy(d, xr, gw.data() + o * in, in);
                    }
                }
            }
        }
    });
}

Var embedding(Var table, std::span<const TokenId> ids) {
    Graph& g = table.graph();
    require(table.shape().size() == 2, "embedding: table must be 2-D");
    const std::size_t vocab = table.shape()[0];
    const std::size_t d = table.shape()[1];
    const auto tv = table.value();
    std::vector<double> out(ids.size() * d);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] >= vocab) {
            throw Error(ErrorCode::UnknownToken,
                        "id " + std::to_string(ids[r]) + " outside table of " + std::to_string(vocab) + " rows");
        }
        std::copy_n(tv.data() + ids[r] * d, d, out.data() + r * d);
    }
    const std::size_t it = table.id();
    std::vector<TokenId> rows(ids.begin(), ids.end());
    return g.record({ids.size(), d}, std::move(out), {it},
                    [it, d, rows = std::move(rows)](Graph& gr, std::size_t self) {
                        const auto go = gr.grad(self);
                        auto gt = gr.grad(it);
                        for (std::size_t r = 0; r < rows.size(); ++r) {
                            axpy(1.0, go.data() + r * d, gt.data() + rows[r] * d, d);
                        }
                    });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    Graph& g = x.graph();
    const std::size_t t = rows_of(x.shape());
    const std::size_t n = cols_of(x.shape());
    require(gamma.value().size() == n && beta.value().size() == n, "layer_norm: parameter length mismatch");
    const auto xv = x.value();
    const auto gv = gamma.value();
    const auto bv = beta.value();
    std::vector<double> out(xv.size());
    std::vector<double> xhat(xv.size());
    std::vector<double> inv_std(t);
    for (std::size_t r = 0; r < t; ++r) {
        const double* xr = xv.data() + r * n;
        double mean = 0.0;
        for (std::size_t c = 0; c < n; ++c) mean += xr[c];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t c = 0; c < n; ++c) var += (xr[c] - mean) * (xr[c] - mean);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t c = 0; c < n; ++c) {
            const double h = (xr[c] - mean) * is;
            xhat[r * n + c] = h;
            out[r * n + c] = h * gv[c] + bv[c];
        }
    }
    const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
    return g.record(x.shape(), std::move(out), {ix, ig, ib},
                    [ix, ig, ib, t, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& gr,
                                                                                          std::size_t self) {
                        const auto go = gr.grad(self);
                        const auto gv2 = gr.value(ig);
                        auto gx = gr.grad(ix);
                        auto gg = gr.grad(ig);
                        auto gb = gr.grad(ib);
                        std::vector<double> dh(n);
                        for (std::size_t r = 0; r < t; ++r) {
                            const double* gor = go.data() + r * n;
                            const double* hr = xhat.data() + r * n;
                            if (!gg.empty()) {
                                for (std::size_t c = 0; c < n; ++c) gg[c] += gor[c] * hr[c];
                            }
                            if (!gb.empty()) {
                                for (std::size_t c = 0; c < n; ++c) gb[c] += gor[c];
                            }
                            if (gx.empty()) continue;
                            double mean_dh = 0.0;
                            double mean_dh_h = 0.0;
                            for (std::size_t c = 0; c < n; ++c) {
                                dh[c] = gor[c] * gv2[c];
                                mean_dh += dh[c];
                                mean_dh_h += dh[c] * hr[c];
                            }
                            mean_dh /= static_cast<double>(n);
                            mean_dh_h /= static_cast<double>(n);
                            double* gxr = gx.data() + r * n;
                            for (std::size_t c = 0; c < n; ++c) {
                                gxr[c] += inv_std[r] * (dh[c] - mean_dh - hr[c] * mean_dh_h);
                            }
                        }
                    });
}

Var gelu(Var x) {
    Graph& g = x.graph();
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    const auto xv = x.value();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xv[i];
        out[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
    }
    const std::size_t ix = x.id();
    return g.record(x.shape(), std::move(out), {ix}, [ix](Graph& gr, std::size_t self) {
        const auto go = gr.grad(self);
        const auto xv2 = gr.value(ix);
        auto gx = gr.grad(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const double v = xv2[i];
            const double th = std::tanh(kC * (v + kA * v * v * v));
            const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kC * (1.0 + 3.0 * kA * v * v);
            gx[i] += go[i] * d;
        }
    });
}

Var dropout(Var x, double p, std::mt19937_64& rng) {
    Graph& g = x.graph();
    if (p <= 0.0) {
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - p);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const auto xv = x.value();
    std::vector<double> mask(xv.size());
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = uni(rng) < p ? 0.0 : keep_scale;
        out[i] = xv[i] * mask[i];
    }
    const std::size_t ix = x.id();
    return g.record(x.shape(), std::move(out), {ix}, [ix, mask = std::move(mask)](Graph& gr, std::size_t self) {
        const auto go = gr.grad(self);
        auto gx = gr.grad(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += go[i] * mask[i];
        }
    });
}

Var causal_attention(Var q, Var k, Var v, std::size_t heads, std::span<const bool> key_valid) {
    Graph& g = q.graph();
    require(q.shape() == k.shape() && q.shape() == v.shape(), "attention: q/k/v shapes differ");
    const std::size_t t = rows_of(q.shape());
    const std::size_t d = cols_of(q.shape());
    require(heads > 0 && d % heads == 0, "attention: width not divisible by heads");
    require(key_valid.empty() || key_valid.size() == t, "attention: key mask length mismatch");
    const std::size_t hd = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    const auto qv = q.value();
    const auto kv = k.value();
    const auto vv = v.value();

    std::vector<double> probs(heads * t * t, 0.0);
    std::vector<double> out(t * d, 0.0);
    std::vector<double> scores(t);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * hd;
        for (std::size_t i = 0; i < t; ++i) {
            double maxv = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j <= i; ++j) {
                if (!key_valid.empty() && !key_valid[j]) continue;
                scores[j] = dot(qv.data() + i * d + off, kv.data() + j * d + off, hd) * inv_sqrt;
                maxv = std::max(maxv, scores[j]);
            }
            if (maxv == -std::numeric_limits<double>::infinity()) {
                continue;  // no visible key: output stays zero
            }
            double denom = 0.0;
            double* pr = probs.data() + (h * t + i) * t;
            for (std::size_t j = 0; j <= i; ++j) {
                if (!key_valid.empty() && !key_valid[j]) continue;
                pr[j] = std::exp(scores[j] - maxv);
                denom += pr[j];
            }
            double* orow = out.data() + i * d + off;
            for (std::size_t j = 0; j <= i; ++j) {
                if (pr[j] == 0.0) continue;
                pr[j] /= denom;
                axpy(pr[j], vv.data() + j * d + off, orow, hd);
            }
        }
    }

    const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
    return g.record(
        {t, d}, std::move(out), {iq, ik, iv},
        [iq, ik, iv, t, d, hd, heads, inv_sqrt, probs = std::move(probs)](Graph& gr, std::size_t self) {
            const auto go = gr.grad(self);
            const auto qv2 = gr.value(iq);
            const auto kv2 = gr.value(ik);
            const auto vv2 = gr.value(iv);
            auto gq = gr.grad(iq);
            auto gk = gr.grad(ik);
            auto gv = gr.grad(iv);
            std::vector<double> dp(t);
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t off = h * hd;
                for (std::size_t i = 0; i < t; ++i) {
                    const double* pr = probs.data() + (h * t + i) * t;
                    const double* gor = go.data() + i * d + off;
                    double weighted = 0.0;
                    for (std::size_t j = 0; j <= i; ++j) {
                        if (pr[j] == 0.0) {
                            dp[j] = 0.0;
                            continue;
                        }
                        dp[j] = dot(gor, vv2.data() + j * d + off, hd);
                        weighted += pr[j] * dp[j];
                        if (!gv.empty()) axpy(pr[j], gor, gv.data() + j * d + off, hd);
                    }
                    for (std::size_t j = 0; j <= i; ++j) {
                        if (pr[j] == 0.0) continue;
                        const double ds = pr[j] * (dp[j] - weighted) * inv_sqrt;
                        if (!gq.empty()) axpy(ds, kv2.data() + j * d + off, gq.data() + i * d + off, hd);
                        if (!gk.empty()) axpy(ds, qv2.data() + i * d + off, gk.data() + j * d + off, hd);
                    }
                }
            }
        });
}

Var sum(Var x) {
    Graph& g = x.graph();
    const auto xv = x.value();
    double s = 0.0;
    for (double e : xv) s += e;
    const std::size_t ix = x.id();
    return g.record({1}, {s}, {ix}, [ix](Graph& gr, std::size_t self) {
        const double go = gr.grad(self)[0];
        auto gx = gr.grad(ix);
        for (double& e : gx) e += go;
    });
}

Var mean(std::span<const Var> scalars) {
    if (scalars.empty()) {
        throw Error(ErrorCode::InvalidArgument, "mean of no values");
    }
    Graph& g = scalars.front().graph();
    std::vector<std::size_t> ids;
    double s = 0.0;
    for (const Var& v : scalars) {
        s += v.item();
        ids.push_back(v.id());
    }
    const double n = static_cast<double>(scalars.size());
    std::vector<std::size_t> parents = ids;
    return g.record({1}, {s / n}, std::move(parents), [ids = std::move(ids), n](Graph& gr, std::size_t self) {
        const double go = gr.grad(self)[0] / n;
        for (std::size_t p : ids) {
            auto gp = gr.grad(p);
            if (!gp.empty()) gp[0] += go;
        }
    });
}

Var mean_nll(Var logits, std::span<const Target> targets) {
    Graph& g = logits.graph();
    require(!targets.empty(), "mean_nll: no targets");
    const std::size_t t = rows_of(logits.shape());
    const std::size_t vsz = cols_of(logits.shape());
    const auto lv = logits.value();
    double total = 0.0;
    std::vector<double> lse(targets.size());
    for (std::size_t k = 0; k < targets.size(); ++k) {
        const Target& tg = targets[k];
        require(tg.row < t, "mean_nll: row out of range");
        if (tg.token >= vsz) {
            throw Error(ErrorCode::UnknownToken, "target id " + std::to_string(tg.token) + " >= " +
                                                     std::to_string(vsz));
        }
        const double* row = lv.data() + tg.row * vsz;
        const double maxv = *std::max_element(row, row + vsz);
        double s = 0.0;
        for (std::size_t c = 0; c < vsz; ++c) s += std::exp(row[c] - maxv);
        lse[k] = maxv + std::log(s);
        total += lse[k] - row[tg.token];
    }
    const double n = static_cast<double>(targets.size());
    std::vector<Target> tg(targets.begin(), targets.end());
    const std::size_t il = logits.id();
    return g.record({1}, {total / n}, {il},
                    [il, vsz, n, tg = std::move(tg), lse = std::move(lse)](Graph& gr, std::size_t self) {
                        const double go = gr.grad(self)[0] / n;
                        const auto lv2 = gr.value(il);
                        auto gl = gr.grad(il);
                        for (std::size_t k = 0; k < tg.size(); ++k) {
                            const double* row = lv2.data() + tg[k].row * vsz;
                            double* grow = gl.data() + tg[k].row * vsz;
                            for (std::size_t c = 0; c < vsz; ++c) {
                                grow[c] += go * std::exp(row[c] - lse[k]);
                            }
                            grow[tg[k].token] -= go;
                        }
                    });
}

}  // namespace ops

}  // namespace lexforge
