#include "slimda/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "slimda/error.hpp"
#include "slimda/kernels.hpp"

namespace slimda::ad {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

// A softmax "lane" is one row (axis 1) or one column (axis 0).
struct Lanes {
    std::size_t count;
    std::size_t length;
    std::size_t lane_step;
    std::size_t elem_step;
};

Lanes lanes_for(const Tensor& t, int axis) {
    if (axis == 1) return {t.rows(), t.cols(), t.cols(), 1};
    if (axis == 0) return {t.cols(), t.rows(), 1, t.cols()};
    throw ConfigError("softmax axis must be 0 or 1, got " + std::to_string(axis));
}

Tensor log_softmax_values(const Tensor& x, int axis) {
    const Lanes l = lanes_for(x, axis);
    Tensor out(x.shape());
    for (std::size_t g = 0; g < l.count; ++g) {
        const std::size_t base = g * l.lane_step;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < l.length; ++i) mx = std::max(mx, x[base + i * l.elem_step]);
        double sum = 0.0;
        for (std::size_t i = 0; i < l.length; ++i) sum += std::exp(x[base + i * l.elem_step] - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t i = 0; i < l.length; ++i) {
            out[base + i * l.elem_step] = x[base + i * l.elem_step] - lse;
        }
    }
    return out;
}

} // namespace

Var Graph::push(std::string_view op, std::vector<std::size_t> inputs, Tensor out,
                std::function<void(Graph&, std::size_t)> backward_fn) {
    if (!out.all_finite()) {
        throw NumericError("non-finite output from op '" + std::string(op) + "'");
    }
    Node n;
    n.op = op;
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](std::size_t i) { return nodes_[i].requires_grad; });
    n.inputs = std::move(inputs);
    n.owned = std::move(out);
    if (n.requires_grad) n.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw UsageError("invalid graph variable");
    return nodes_[v.id];
}

Tensor& Graph::grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value().shape(), 0.0);
        n.has_grad = true;
    }
    return n.grad;
}

const Tensor& Graph::value(Var v) const { return node(v).value(); }

double Graph::scalar(Var v) const {
    const Tensor& t = value(v);
    if (t.size() != 1) throw UsageError("scalar() on a tensor of shape " + shape_string(t.shape()));
    return t[0];
}

std::string_view Graph::op_name(Var v) const { return node(v).op; }

std::optional<Tensor> Graph::grad(Var v) const {
    const Node& n = node(v);
    if (!n.has_grad) return std::nullopt;
    return n.grad;
}

Var Graph::constant(Tensor t) {
    if (!t.all_finite()) throw NumericError("non-finite constant");
    Node n;
    n.op = "constant";
    n.owned = std::move(t);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Graph::constant_ref(const Tensor& t) {
    Node n;
    n.op = "constant";
    n.external = &t;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Graph::parameter(ParamId id, const Tensor& value) {
    Node n;
    n.op = "parameter";
    n.external = &value;
    n.requires_grad = true;
    n.param = id;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Graph::detach(Var v) { return constant(value(v)); }

Var Graph::matmul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require(ta.cols() == tb.rows(), "matmul: inner dimensions differ " + shape_string(ta.shape()) +
                                        " x " + shape_string(tb.shape()));
    const std::size_t n = ta.rows(), k = ta.cols(), m = tb.cols();
    Tensor out = Tensor::matrix(n, m);
    kernels::gemm_nn(n, k, m, ta.data(), tb.data(), out.data());
    return push("matmul", {a.id, b.id}, std::move(out), [a, b, n, k, m](Graph& g, std::size_t self) {
        const Tensor& go = g.nodes_[self].grad;
        if (g.needs_grad(a.id)) {
            kernels::gemm_nt(n, m, k, go.data(), g.nodes_[b.id].value().data(),
                             g.grad_slot(a.id).data());
        }
        if (g.needs_grad(b.id)) {
            kernels::gemm_tn(n, k, m, g.nodes_[a.id].value().data(), go.data(),
                             g.grad_slot(b.id).data());
        }
    });
}

Var Graph::add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    const bool same = ta.shape() == tb.shape();
    const bool broadcast = !same && tb.rows() == 1 && tb.cols() == ta.cols();
    require(same || broadcast, "add: incompatible shapes " + shape_string(ta.shape()) + " + " +
                                   shape_string(tb.shape()));
    Tensor out = ta;
    const std::size_t cols = ta.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += same ? tb[i] : tb[i % cols];
    return push("add", {a.id, b.id}, std::move(out), [a, b, same, cols](Graph& g, std::size_t self) {
        const Tensor& go = g.nodes_[self].grad;
        if (g.needs_grad(a.id)) kernels::axpy(1.0, go.data(), g.grad_slot(a.id).data());
        if (g.needs_grad(b.id)) {
            Tensor& gb = g.grad_slot(b.id);
            if (same) {
                kernels::axpy(1.0, go.data(), gb.data());
            } else {
                for (std::size_t i = 0; i < go.size(); ++i) gb[i % cols] += go[i];
            }
        }
    });
}

Var Graph::scale(Var a, double factor) {
    Tensor out = value(a);
    for (auto& v : out.data()) v *= factor;
    return push("scale", {a.id}, std::move(out), [a, factor](Graph& g, std::size_t self) {
        kernels::axpy(factor, g.nodes_[self].grad.data(), g.grad_slot(a.id).data());
    });
}

Var Graph::relu(Var a) {
    Tensor out = value(a);
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return push("relu", {a.id}, std::move(out), [a](Graph& g, std::size_t self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& x = g.nodes_[a.id].value();
        Tensor& ga = g.grad_slot(a.id);
        for (std::size_t i = 0; i < go.size(); ++i) {
            if (x[i] > 0.0) ga[i] += go[i];
        }
    });
}

Var Graph::log_softmax(Var x, int axis) {
    Tensor out = log_softmax_values(value(x), axis);
    return push("log_softmax", {x.id}, std::move(out), [x, axis](Graph& g, std::size_t self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& y = g.nodes_[self].value();
        Tensor& gx = g.grad_slot(x.id);
        const Lanes l = lanes_for(y, axis);
        for (std::size_t lane = 0; lane < l.count; ++lane) {
            const std::size_t base = lane * l.lane_step;
            double sum = 0.0;
            for (std::size_t i = 0; i < l.length; ++i) sum += go[base + i * l.elem_step];
            for (std::size_t i = 0; i < l.length; ++i) {
                const std::size_t e = base + i * l.elem_step;
                gx[e] += go[e] - std::exp(y[e]) * sum;
            }
        }
    });
}

Var Graph::softmax(Var x, int axis) {
    Tensor out = log_softmax_values(value(x), axis);
    for (auto& v : out.data()) v = std::exp(v);
    return push("softmax", {x.id}, std::move(out), [x, axis](Graph& g, std::size_t self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& y = g.nodes_[self].value();
        Tensor& gx = g.grad_slot(x.id);
        const Lanes l = lanes_for(y, axis);
        for (std::size_t lane = 0; lane < l.count; ++lane) {
            const std::size_t base = lane * l.lane_step;
            double inner = 0.0;
            for (std::size_t i = 0; i < l.length; ++i) {
                const std::size_t e = base + i * l.elem_step;
                inner += go[e] * y[e];
            }
            for (std::size_t i = 0; i < l.length; ++i) {
                const std::size_t e = base + i * l.elem_step;
                gx[e] += y[e] * (go[e] - inner);
            }
        }
    });
}

Var Graph::cross_entropy(Var log_probs, Var target) {
    const Tensor& lp = value(log_probs);
    const Tensor& tg = value(target);
    require_same_shape(lp, tg, "cross_entropy");
    const double inv_rows = 1.0 / static_cast<double>(lp.rows());
    double acc = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i) acc -= tg[i] * lp[i];
    return push("cross_entropy", {log_probs.id, target.id}, Tensor::scalar(acc * inv_rows),
                [log_probs, target, inv_rows](Graph& g, std::size_t self) {
                    const double go = g.nodes_[self].grad[0];
                    if (g.needs_grad(log_probs.id)) {
                        kernels::axpy(-go * inv_rows, g.nodes_[target.id].value().data(),
                                      g.grad_slot(log_probs.id).data());
                    }
                    if (g.needs_grad(target.id)) {
                        kernels::axpy(-go * inv_rows, g.nodes_[log_probs.id].value().data(),
                                      g.grad_slot(target.id).data());
                    }
                });
}

Var Graph::slice(Var t, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
    Tensor out = value(t).block(r0, r1, c0, c1);
    return push("slice", {t.id}, std::move(out), [t, r0, r1, c0, c1](Graph& g, std::size_t self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& gt = g.grad_slot(t.id);
        const std::size_t w = c1 - c0;
        for (std::size_t r = r0; r < r1; ++r) {
            kernels::axpy(1.0, go.row(r - r0), gt.row(r).subspan(c0, w));
        }
    });
}

Var Graph::slice_cols(Var t, std::size_t c0, std::size_t c1) {
    return slice(t, 0, value(t).rows(), c0, c1);
}

Var Graph::slice_rows(Var t, std::size_t r0, std::size_t r1) {
    return slice(t, r0, r1, 0, value(t).cols());
}

Var Graph::concat(std::span<const Var> parts, int axis) {
    require(!parts.empty(), "concat of nothing");
    require(axis == 0 || axis == 1, "concat axis must be 0 or 1");
    std::vector<std::size_t> ids;
    std::vector<std::size_t> offsets;
    std::size_t total = 0;
    const Tensor& first = value(parts.front());
    for (Var p : parts) {
        const Tensor& tp = value(p);
        require(axis == 0 ? tp.cols() == first.cols() : tp.rows() == first.rows(),
                "concat: incompatible shapes " + shape_string(first.shape()) + " and " +
                    shape_string(tp.shape()));
        ids.push_back(p.id);
        offsets.push_back(total);
        total += axis == 0 ? tp.rows() : tp.cols();
    }
    Tensor out = axis == 0 ? Tensor::matrix(total, first.cols()) : Tensor::matrix(first.rows(), total);
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const Tensor& tp = nodes_[ids[k]].value();
        for (std::size_t r = 0; r < tp.rows(); ++r) {
            auto src = tp.row(r);
            auto dst = axis == 0 ? out.row(offsets[k] + r) : out.row(r).subspan(offsets[k], tp.cols());
            std::copy(src.begin(), src.end(), dst.begin());
        }
    }
    return push("concat", ids, std::move(out), [ids, offsets, axis](Graph& g, std::size_t self) {
        const Tensor& go = g.nodes_[self].grad;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!g.needs_grad(ids[k])) continue;
            Tensor& gp = g.grad_slot(ids[k]);
            for (std::size_t r = 0; r < gp.rows(); ++r) {
                auto src = axis == 0 ? go.row(offsets[k] + r) : go.row(r).subspan(offsets[k], gp.cols());
                kernels::axpy(1.0, src, gp.row(r));
            }
        }
    });
}

Var Graph::mean(Var t) {
    const Tensor& tt = value(t);
    double acc = 0.0;
    for (double v : tt.data()) acc += v;
    const double inv = 1.0 / static_cast<double>(tt.size());
    return push("mean", {t.id}, Tensor::scalar(acc * inv), [t, inv](Graph& g, std::size_t self) {
        const double go = g.nodes_[self].grad[0] * inv;
        for (auto& v : g.grad_slot(t.id).data()) v += go;
    });
}

Var Graph::sum_cols(Var t, std::size_t c0, std::size_t c1) {
    const Tensor& tt = value(t);
    require(c0 < c1 && c1 <= tt.cols(), "sum_cols: column range out of bounds");
    Tensor out = Tensor::matrix(tt.rows(), 1);
    for (std::size_t r = 0; r < tt.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = c0; c < c1; ++c) acc += tt.at(r, c);
        out[r] = acc;
    }
    return push("sum_cols", {t.id}, std::move(out), [t, c0, c1](Graph& g, std::size_t self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& gt = g.grad_slot(t.id);
        for (std::size_t r = 0; r < gt.rows(); ++r) {
            for (std::size_t c = c0; c < c1; ++c) gt.at(r, c) += go[r];
        }
    });
}

Var Graph::log_clamped(Var t, double floor) {
    Tensor out = value(t);
    for (auto& v : out.data()) v = std::log(std::max(v, floor));
    return push("log_clamped", {t.id}, std::move(out), [t, floor](Graph& g, std::size_t self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& x = g.nodes_[t.id].value();
        Tensor& gt = g.grad_slot(t.id);
        for (std::size_t i = 0; i < go.size(); ++i) {
            if (x[i] > floor) gt[i] += go[i] / x[i];
        }
    });
}

Var Graph::batchnorm(Var x, Var gamma, Var beta, BnMode mode, const Tensor* running_mean,
                     const Tensor* running_var) {
    const Tensor& tx = value(x);
    const std::size_t n = tx.rows(), c = tx.cols();
    require(value(gamma).size() == c && value(beta).size() == c,
            "batchnorm: gamma/beta width differs from input width " + std::to_string(c));
    Tensor mean_t({c}), inv_std({c});
    if (mode == BnMode::Train) {
        if (n < 2) throw UsageError("batchnorm in TRAIN mode needs at least 2 rows");
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < c; ++j) mean_t[j] += tx.at(r, j);
        }
        for (auto& v : mean_t.data()) v /= static_cast<double>(n);
        Tensor var({c});
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
                const double d = tx.at(r, j) - mean_t[j];
                var[j] += d * d;
            }
        }
        for (std::size_t j = 0; j < c; ++j) {
            inv_std[j] = 1.0 / std::sqrt(var[j] / static_cast<double>(n) + kBnEpsilon);
        }
    } else {
        if (running_mean == nullptr || running_var == nullptr) {
            throw UsageError("batchnorm in EVAL mode requires running statistics");
        }
        require(running_mean->size() == c && running_var->size() == c,
                "batchnorm: running statistics width differs from input width");
        for (std::size_t j = 0; j < c; ++j) {
            mean_t[j] = (*running_mean)[j];
            inv_std[j] = 1.0 / std::sqrt((*running_var)[j] + kBnEpsilon);
        }
    }
    Tensor xhat(tx.shape());
    Tensor out(tx.shape());
    const Tensor& tg = value(gamma);
    const Tensor& tb = value(beta);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
            const double h = (tx.at(r, j) - mean_t[j]) * inv_std[j];
            xhat.at(r, j) = h;
            out.at(r, j) = tg[j] * h + tb[j];
        }
    }
    const bool train = mode == BnMode::Train;
    return push("batchnorm", {x.id, gamma.id, beta.id}, std::move(out),
                [x, gamma, beta, train, n, c, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
                    const Tensor& go = g.nodes_[self].grad;
                    if (g.needs_grad(gamma.id) || g.needs_grad(beta.id)) {
                        Tensor dg({c}), db({c});
                        for (std::size_t r = 0; r < n; ++r) {
                            for (std::size_t j = 0; j < c; ++j) {
                                dg[j] += go.at(r, j) * xhat.at(r, j);
                                db[j] += go.at(r, j);
                            }
                        }
                        if (g.needs_grad(gamma.id)) kernels::axpy(1.0, dg.data(), g.grad_slot(gamma.id).data());
                        if (g.needs_grad(beta.id)) kernels::axpy(1.0, db.data(), g.grad_slot(beta.id).data());
                    }
                    if (!g.needs_grad(x.id)) return;
                    const Tensor& tgam = g.nodes_[gamma.id].value();
                    Tensor& gx = g.grad_slot(x.id);
                    if (!train) {
                        for (std::size_t r = 0; r < n; ++r) {
                            for (std::size_t j = 0; j < c; ++j) gx.at(r, j) += go.at(r, j) * tgam[j] * inv_std[j];
                        }
                        return;
                    }
                    Tensor sum_d({c}), sum_dx({c});
                    for (std::size_t r = 0; r < n; ++r) {
                        for (std::size_t j = 0; j < c; ++j) {
                            const double d = go.at(r, j) * tgam[j];
                            sum_d[j] += d;
                            sum_dx[j] += d * xhat.at(r, j);
                        }
                    }
                    const double nn = static_cast<double>(n);
                    for (std::size_t r = 0; r < n; ++r) {
                        for (std::size_t j = 0; j < c; ++j) {
                            const double d = go.at(r, j) * tgam[j];
                            gx.at(r, j) += inv_std[j] / nn * (nn * d - sum_d[j] - xhat.at(r, j) * sum_dx[j]);
                        }
                    }
                });
}

Gradients Graph::backward(Var loss) {
    const Node& ln = node(loss);
    if (ln.value().size() != 1) {
        throw UsageError("backward() needs a scalar loss, got shape " + shape_string(ln.value().shape()));
    }
    if (backward_done_) throw UsageError("backward() called twice without zero_grad()");
    backward_done_ = true;
    if (ln.requires_grad) {
        grad_slot(loss.id)[0] = 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.has_grad && n.backward_fn) n.backward_fn(*this, i);
        }
    }
    Gradients out;
    for (const Node& n : nodes_) {
        if (!n.param) continue;
        auto [it, inserted] = out.try_emplace(*n.param, n.value().shape(), 0.0);
        if (n.has_grad) kernels::axpy(1.0, n.grad.data(), it->second.data());
    }
    for (const auto& [id, g] : out) {
        if (!g.all_finite()) throw NumericError("non-finite gradient for parameter " + std::to_string(id));
    }
    return out;
}

void Graph::zero_grad() {
    for (Node& n : nodes_) {
        n.grad = Tensor();
        n.has_grad = false;
    }
    backward_done_ = false;
}

} // namespace slimda::ad
