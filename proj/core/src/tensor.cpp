#include "attnscope/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "attnscope/error.hpp"

namespace attnscope::tensor {

namespace {

std::string dims_str(const std::vector<int>& d) {
    std::string s = "[";
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(d[i]);
    }
    return s + "]";
}

std::size_t checked_numel(const std::vector<int>& dims) {
    std::size_t n = 1;
    for (int d : dims) {
        if (d <= 0) throw DataError("ShapeMismatch", "non-positive dim in " + dims_str(dims));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

void require_rank(const Tensor& t, int r, const char* op) {
    if (t.rank() != r)
        throw DataError("ShapeMismatch", std::string(op) + ": want rank " + std::to_string(r) +
                                             ", got " + dims_str(t.dims));
}

constexpr double kLnEps = 1e-5;     // layer_norm variance floor
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Tensor::Tensor(std::vector<int> d) : dims(std::move(d)), data(checked_numel(dims), 0.0) {}

Tensor::Tensor(std::vector<int> d, std::vector<double> values)
    : dims(std::move(d)), data(std::move(values)) {
    if (checked_numel(dims) != data.size())
        throw DataError("ShapeMismatch", "dims " + dims_str(dims) + " need " +
                                             std::to_string(checked_numel(dims)) + " values, got " +
                                             std::to_string(data.size()));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Graph::NodeId Graph::push(Tensor value, bool requires_grad, std::function<void()> back) {
    Node n;
    n.grad = Tensor(value.dims);  // zeros
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::Node& Graph::node(NodeId id) {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw DataError("ShapeMismatch", "bad node id " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

const Graph::Node& Graph::node(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw DataError("ShapeMismatch", "bad node id " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

Graph::NodeId Graph::value(Tensor t) {
    for (double v : t.data)
        if (!std::isfinite(v)) throw DataError("NonFiniteValue", "non-finite value leaf");
    return push(std::move(t), false);
}

Graph::NodeId Graph::param(Tensor t) {
    for (double v : t.data)
        if (!std::isfinite(v)) throw DataError("NonFiniteValue", "non-finite param leaf");
    return push(std::move(t), true);
}

const Tensor& Graph::val(NodeId id) const { return node(id).value; }
const Tensor& Graph::grad(NodeId id) const { return node(id).grad; }

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.dims != tb.dims)
        throw DataError("ShapeMismatch",
                        "add: " + dims_str(ta.dims) + " vs " + dims_str(tb.dims));
    Tensor y(ta.dims);
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = ta.data[i] + tb.data[i];
    bool req = needs(a) || needs(b);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, a, b, out] {
            const Tensor& go = grad(out);
            if (needs(a)) {
                Tensor& ga = g(a);
                for (std::size_t i = 0; i < go.numel(); ++i) ga.data[i] += go.data[i];
            }
            if (needs(b)) {
                Tensor& gb = g(b);
                for (std::size_t i = 0; i < go.numel(); ++i) gb.data[i] += go.data[i];
            }
        };
    return out;
}

Graph::NodeId Graph::scale(NodeId a, double s) {
    const Tensor& ta = val(a);
    Tensor y(ta.dims);
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = s * ta.data[i];
    bool req = needs(a);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, a, s, out] {
            const Tensor& go = grad(out);
            Tensor& ga = g(a);
            for (std::size_t i = 0; i < go.numel(); ++i) ga.data[i] += s * go.data[i];
        };
    return out;
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_rank(ta, 2, "matmul");
    require_rank(tb, 2, "matmul");
    if (ta.dims[1] != tb.dims[0])
        throw DataError("ShapeMismatch",
                        "matmul: " + dims_str(ta.dims) + " x " + dims_str(tb.dims));
    const int n = ta.dims[0], m = ta.dims[1], p = tb.dims[1];
    Tensor y({n, p});
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < m; ++k) {
            double aik = ta.at2(i, k);
            const double* brow = &tb.data[static_cast<std::size_t>(k) * p];
            double* yrow = &y.data[static_cast<std::size_t>(i) * p];
            for (int j = 0; j < p; ++j) yrow[j] += aik * brow[j];
        }
    bool req = needs(a) || needs(b);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, a, b, out, n, m, p] {
            const Tensor& go = grad(out);
            const Tensor& ta2 = val(a);
            const Tensor& tb2 = val(b);
            if (needs(a)) {
                Tensor& ga = g(a);
                for (int i = 0; i < n; ++i)
                    for (int k = 0; k < m; ++k) {
                        double s = 0;
                        const double* grow = &go.data[static_cast<std::size_t>(i) * p];
                        const double* brow = &tb2.data[static_cast<std::size_t>(k) * p];
                        for (int j = 0; j < p; ++j) s += grow[j] * brow[j];
                        ga.at2(i, k) += s;
                    }
            }
            if (needs(b)) {
                Tensor& gb = g(b);
                for (int i = 0; i < n; ++i)
                    for (int k = 0; k < m; ++k) {
                        double aik = ta2.at2(i, k);
                        const double* grow = &go.data[static_cast<std::size_t>(i) * p];
                        double* gbrow = &gb.data[static_cast<std::size_t>(k) * p];
                        for (int j = 0; j < p; ++j) gbrow[j] += aik * grow[j];
                    }
            }
        };
    return out;
}

Graph::NodeId Graph::transpose(NodeId a) {
    const Tensor& ta = val(a);
    require_rank(ta, 2, "transpose");
    const int n = ta.dims[0], m = ta.dims[1];
    Tensor y({m, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) y.at2(j, i) = ta.at2(i, j);
    bool req = needs(a);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, a, out, n, m] {
            const Tensor& go = grad(out);
            Tensor& ga = g(a);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) ga.at2(i, j) += go.at2(j, i);
        };
    return out;
}

Graph::NodeId Graph::slice_cols(NodeId a, int c0, int c1) {
    const Tensor& ta = val(a);
    require_rank(ta, 2, "slice_cols");
    const int n = ta.dims[0], m = ta.dims[1];
    if (c0 < 0 || c1 <= c0 || c1 > m)
        throw DataError("ShapeMismatch", "slice_cols [" + std::to_string(c0) + "," +
                                             std::to_string(c1) + ") of " + dims_str(ta.dims));
    const int w = c1 - c0;
    Tensor y({n, w});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < w; ++j) y.at2(i, j) = ta.at2(i, c0 + j);
    bool req = needs(a);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, a, out, n, w, c0] {
            const Tensor& go = grad(out);
            Tensor& ga = g(a);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < w; ++j) ga.at2(i, c0 + j) += go.at2(i, j);
        };
    return out;
}

Graph::NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw DataError("ShapeMismatch", "concat_cols: no inputs");
    const int n = val(parts[0]).dims[0];
    int total = 0;
    bool req = false;
    for (NodeId p : parts) {
        const Tensor& t = val(p);
        require_rank(t, 2, "concat_cols");
        if (t.dims[0] != n)
            throw DataError("ShapeMismatch", "concat_cols: row mismatch " + dims_str(t.dims));
        total += t.dims[1];
        req = req || needs(p);
    }
    Tensor y({n, total});
    int off = 0;
    for (NodeId p : parts) {
        const Tensor& t = val(p);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < t.dims[1]; ++j) y.at2(i, off + j) = t.at2(i, j);
        off += t.dims[1];
    }
    std::vector<NodeId> ps = parts;
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, ps, out, n] {
            const Tensor& go = grad(out);
            int off2 = 0;
            for (NodeId p : ps) {
                const int w = val(p).dims[1];
                if (needs(p)) {
                    Tensor& gp = g(p);
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < w; ++j) gp.at2(i, j) += go.at2(i, off2 + j);
                }
                off2 += w;
            }
        };
    return out;
}

Graph::NodeId Graph::reshape(NodeId a, std::vector<int> dims) {
    const Tensor& ta = val(a);
    if (checked_numel(dims) != ta.numel())
        throw DataError("ShapeMismatch",
                        "reshape " + dims_str(ta.dims) + " -> " + dims_str(dims));
    Tensor y(std::move(dims));
    y.data = ta.data;
    bool req = needs(a);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, a, out] {
            const Tensor& go = grad(out);
            Tensor& ga = g(a);
            for (std::size_t i = 0; i < go.numel(); ++i) ga.data[i] += go.data[i];
        };
    return out;
}

Graph::NodeId Graph::dot(NodeId a, NodeId b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.dims != tb.dims)
        throw DataError("ShapeMismatch",
                        "dot: " + dims_str(ta.dims) + " vs " + dims_str(tb.dims));
    double s = 0;
    for (std::size_t i = 0; i < ta.numel(); ++i) s += ta.data[i] * tb.data[i];
    bool req = needs(a) || needs(b);
    NodeId out = push(Tensor::scalar(s), req);
    if (req)
        node(out).back = [this, a, b, out] {
            const double go = grad(out).data[0];
            const Tensor& ta2 = val(a);
            const Tensor& tb2 = val(b);
            if (needs(a)) {
                Tensor& ga = g(a);
                for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] += go * tb2.data[i];
            }
            if (needs(b)) {
                Tensor& gb = g(b);
                for (std::size_t i = 0; i < gb.numel(); ++i) gb.data[i] += go * ta2.data[i];
            }
        };
    return out;
}

Graph::NodeId Graph::relu(NodeId a) {
    const Tensor& ta = val(a);
    Tensor y(ta.dims);
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = ta.data[i] > 0 ? ta.data[i] : 0.0;
    bool req = needs(a);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, a, out] {
            const Tensor& go = grad(out);
            const Tensor& ta2 = val(a);
            Tensor& ga = g(a);
            for (std::size_t i = 0; i < go.numel(); ++i)
                if (ta2.data[i] > 0) ga.data[i] += go.data[i];
        };
    return out;
}

Graph::NodeId Graph::gelu(NodeId a) {
    const Tensor& ta = val(a);
    Tensor y(ta.dims);
    for (std::size_t i = 0; i < y.numel(); ++i) {
        double x = ta.data[i];
        y.data[i] = x * 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    }
    bool req = needs(a);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, a, out] {
            const Tensor& go = grad(out);
            const Tensor& ta2 = val(a);
            Tensor& ga = g(a);
            for (std::size_t i = 0; i < go.numel(); ++i) {
                double x = ta2.data[i];
                double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                ga.data[i] += go.data[i] * (cdf + x * pdf);
            }
        };
    return out;
}

Graph::NodeId Graph::softmax(NodeId a) {
    const Tensor& ta = val(a);
    if (ta.rank() < 1) throw DataError("ShapeMismatch", "softmax: rank 0");
    const int k = ta.dims.back();
    const std::size_t rows = ta.numel() / static_cast<std::size_t>(k);
    Tensor y(ta.dims);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = &ta.data[r * k];
        double* o = &y.data[r * k];
        double mx = x[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, x[j]);
        double sum = 0;
        for (int j = 0; j < k; ++j) {
            o[j] = std::exp(x[j] - mx);
            sum += o[j];
        }
        for (int j = 0; j < k; ++j) o[j] /= sum;
    }
    bool req = needs(a);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, a, out, k, rows] {
            const Tensor& go = grad(out);
            const Tensor& yo = val(out);
            Tensor& ga = g(a);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gr = &go.data[r * k];
                const double* yr = &yo.data[r * k];
                double dotgy = 0;
                for (int j = 0; j < k; ++j) dotgy += gr[j] * yr[j];
                double* gar = &ga.data[r * k];
                for (int j = 0; j < k; ++j) gar[j] += yr[j] * (gr[j] - dotgy);
            }
        };
    return out;
}

Graph::NodeId Graph::linear(NodeId x, NodeId w, NodeId b) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    const Tensor& tb = val(b);
    require_rank(tx, 2, "linear");
    require_rank(tw, 2, "linear");
    require_rank(tb, 1, "linear");
    if (tx.dims[1] != tw.dims[0] || tw.dims[1] != tb.dims[0])
        throw DataError("ShapeMismatch", "linear: " + dims_str(tx.dims) + " x " +
                                             dims_str(tw.dims) + " + " + dims_str(tb.dims));
    const int n = tx.dims[0], di = tx.dims[1], dout = tw.dims[1];
    Tensor y({n, dout});
    for (int i = 0; i < n; ++i) {
        double* yrow = &y.data[static_cast<std::size_t>(i) * dout];
        for (int j = 0; j < dout; ++j) yrow[j] = tb.data[j];
        for (int k = 0; k < di; ++k) {
            double xik = tx.at2(i, k);
            const double* wrow = &tw.data[static_cast<std::size_t>(k) * dout];
            for (int j = 0; j < dout; ++j) yrow[j] += xik * wrow[j];
        }
    }
    bool req = needs(x) || needs(w) || needs(b);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, x, w, b, out, n, di, dout] {
            const Tensor& go = grad(out);
            const Tensor& tx2 = val(x);
            const Tensor& tw2 = val(w);
            if (needs(x)) {
                Tensor& gx = g(x);
                for (int i = 0; i < n; ++i)
                    for (int k = 0; k < di; ++k) {
                        double s = 0;
                        const double* grow = &go.data[static_cast<std::size_t>(i) * dout];
                        const double* wrow = &tw2.data[static_cast<std::size_t>(k) * dout];
                        for (int j = 0; j < dout; ++j) s += grow[j] * wrow[j];
                        gx.at2(i, k) += s;
                    }
            }
            if (needs(w)) {
                Tensor& gw = g(w);
                for (int i = 0; i < n; ++i)
                    for (int k = 0; k < di; ++k) {
                        double xik = tx2.at2(i, k);
                        const double* grow = &go.data[static_cast<std::size_t>(i) * dout];
                        double* gwrow = &gw.data[static_cast<std::size_t>(k) * dout];
                        for (int j = 0; j < dout; ++j) gwrow[j] += xik * grow[j];
                    }
            }
            if (needs(b)) {
                Tensor& gb = g(b);
                for (int i = 0; i < n; ++i) {
                    const double* grow = &go.data[static_cast<std::size_t>(i) * dout];
                    for (int j = 0; j < dout; ++j) gb.data[j] += grow[j];
                }
            }
        };
    return out;
}

Graph::NodeId Graph::layer_norm(NodeId x, NodeId gamma, NodeId beta) {
    const Tensor& tx = val(x);
    const Tensor& tg = val(gamma);
    const Tensor& tb = val(beta);
    require_rank(tx, 2, "layer_norm");
    require_rank(tg, 1, "layer_norm");
    require_rank(tb, 1, "layer_norm");
    const int n = tx.dims[0], d = tx.dims[1];
    if (d < 2) throw DataError("ShapeMismatch", "layer_norm: need d >= 2");
    if (tg.dims[0] != d || tb.dims[0] != d)
        throw DataError("ShapeMismatch", "layer_norm: scale/shift dim " + dims_str(tg.dims));
    Tensor y({n, d});
    for (int i = 0; i < n; ++i) {
        double mu = 0;
        for (int j = 0; j < d; ++j) mu += tx.at2(i, j);
        mu /= d;
        double var = 0;
        for (int j = 0; j < d; ++j) var += (tx.at2(i, j) - mu) * (tx.at2(i, j) - mu);
        var /= d;
        double inv = 1.0 / std::sqrt(var + kLnEps);
        for (int j = 0; j < d; ++j)
            y.at2(i, j) = tg.data[j] * ((tx.at2(i, j) - mu) * inv) + tb.data[j];
    }
    bool req = needs(x) || needs(gamma) || needs(beta);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, x, gamma, beta, out, n, d] {
            const Tensor& go = grad(out);
            const Tensor& tx2 = val(x);
            const Tensor& tg2 = val(gamma);
            for (int i = 0; i < n; ++i) {
                double mu = 0;
                for (int j = 0; j < d; ++j) mu += tx2.at2(i, j);
                mu /= d;
                double var = 0;
                for (int j = 0; j < d; ++j) var += (tx2.at2(i, j) - mu) * (tx2.at2(i, j) - mu);
                var /= d;
                double inv = 1.0 / std::sqrt(var + kLnEps);
                if (needs(x)) {
                    // ghat = gamma*g; dx = (ghat - mean(ghat) - xhat*mean(ghat*xhat)) * inv
                    double mg = 0, mgx = 0;
                    for (int j = 0; j < d; ++j) {
                        double xh = (tx2.at2(i, j) - mu) * inv;
                        double gh = tg2.data[j] * go.at2(i, j);
                        mg += gh;
                        mgx += gh * xh;
                    }
                    mg /= d;
                    mgx /= d;
                    Tensor& gx = g(x);
                    for (int j = 0; j < d; ++j) {
                        double xh = (tx2.at2(i, j) - mu) * inv;
                        double gh = tg2.data[j] * go.at2(i, j);
                        gx.at2(i, j) += (gh - mg - xh * mgx) * inv;
                    }
                }
                if (needs(gamma)) {
                    Tensor& gg = g(gamma);
                    for (int j = 0; j < d; ++j)
                        gg.data[j] += go.at2(i, j) * ((tx2.at2(i, j) - mu) * inv);
                }
                if (needs(beta)) {
                    Tensor& gb = g(beta);
                    for (int j = 0; j < d; ++j) gb.data[j] += go.at2(i, j);
                }
            }
        };
    return out;
}

Graph::NodeId Graph::mhsa(NodeId x, const MhsaParams& p, int n_heads) {
    const Tensor& tx = val(x);
    require_rank(tx, 2, "mhsa");
    const int d = tx.dims[1];
    if (n_heads < 1 || d % n_heads != 0)
        throw DataError("HeadDivisibility", "d=" + std::to_string(d) + " not divisible by " +
                                                std::to_string(n_heads) + " heads");
    const int dh = d / n_heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
    NodeId q = linear(x, p.wq, p.bq);
    NodeId kk = linear(x, p.wk, p.bk);
    NodeId v = linear(x, p.wv, p.bv);
    std::vector<NodeId> heads;
    heads.reserve(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        NodeId qh = slice_cols(q, h * dh, (h + 1) * dh);
        NodeId kh = slice_cols(kk, h * dh, (h + 1) * dh);
        NodeId vh = slice_cols(v, h * dh, (h + 1) * dh);
        NodeId att = softmax(scale(matmul(qh, transpose(kh)), sc));
        heads.push_back(matmul(att, vh));
    }
    return linear(concat_cols(heads), p.wo, p.bo);
}

Graph::NodeId Graph::conv1x1(NodeId x, NodeId w, NodeId b) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    const Tensor& tb = val(b);
    require_rank(tx, 3, "conv1x1");
    require_rank(tw, 2, "conv1x1");
    require_rank(tb, 1, "conv1x1");
    const int ci = tx.dims[0], h = tx.dims[1], wd = tx.dims[2];
    const int co = tw.dims[1];
    if (tw.dims[0] != ci || tb.dims[0] != co)
        throw DataError("ShapeMismatch", "conv1x1: " + dims_str(tx.dims) + " x " +
                                             dims_str(tw.dims) + " + " + dims_str(tb.dims));
    const std::size_t px = static_cast<std::size_t>(h) * wd;
    Tensor y({co, h, wd});
    for (int o = 0; o < co; ++o) {
        double* yp = &y.data[static_cast<std::size_t>(o) * px];
        for (std::size_t pix = 0; pix < px; ++pix) yp[pix] = tb.data[o];
    }
    for (int c = 0; c < ci; ++c) {
        const double* xp = &tx.data[static_cast<std::size_t>(c) * px];
        const double* wrow = &tw.data[static_cast<std::size_t>(c) * co];
        for (int o = 0; o < co; ++o) {
            double wco = wrow[o];
            double* yp = &y.data[static_cast<std::size_t>(o) * px];
            for (std::size_t pix = 0; pix < px; ++pix) yp[pix] += wco * xp[pix];
        }
    }
    bool req = needs(x) || needs(w) || needs(b);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, x, w, b, out, ci, co, px] {
            const Tensor& go = grad(out);
            const Tensor& tx2 = val(x);
            const Tensor& tw2 = val(w);
            if (needs(x)) {
                Tensor& gx = g(x);
                for (int c = 0; c < ci; ++c) {
                    double* gxp = &gx.data[static_cast<std::size_t>(c) * px];
                    const double* wrow = &tw2.data[static_cast<std::size_t>(c) * co];
                    for (int o = 0; o < co; ++o) {
                        double wco = wrow[o];
                        const double* gp = &go.data[static_cast<std::size_t>(o) * px];
                        for (std::size_t pix = 0; pix < px; ++pix) gxp[pix] += wco * gp[pix];
                    }
                }
            }
            if (needs(w)) {
                Tensor& gw = g(w);
                for (int c = 0; c < ci; ++c) {
                    const double* xp = &tx2.data[static_cast<std::size_t>(c) * px];
                    double* gwrow = &gw.data[static_cast<std::size_t>(c) * co];
                    for (int o = 0; o < co; ++o) {
                        const double* gp = &go.data[static_cast<std::size_t>(o) * px];
                        double s = 0;
                        for (std::size_t pix = 0; pix < px; ++pix) s += xp[pix] * gp[pix];
                        gwrow[o] += s;
                    }
                }
            }
            if (needs(b)) {
                Tensor& gb = g(b);
                for (int o = 0; o < co; ++o) {
                    const double* gp = &go.data[static_cast<std::size_t>(o) * px];
                    double s = 0;
                    for (std::size_t pix = 0; pix < px; ++pix) s += gp[pix];
                    gb.data[o] += s;
                }
            }
        };
    return out;
}

Graph::NodeId Graph::avg_pool2d(NodeId x, int k, int stride) {
    const Tensor& tx = val(x);
    require_rank(tx, 3, "avg_pool2d");
    const int c = tx.dims[0], h = tx.dims[1], w = tx.dims[2];
    if (k < 1 || stride < 1) throw DataError("ShapeMismatch", "avg_pool2d: bad k/stride");
    if (h < k || w < k)
        throw DataError("InputTooSmall", "avg_pool2d: " + dims_str(tx.dims) + " with k=" +
                                             std::to_string(k));
    const int oh = (h - k) / stride + 1;
    const int ow = (w - k) / stride + 1;
    const double inv = 1.0 / (static_cast<double>(k) * k);
    Tensor y({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                double s = 0;
                for (int di = 0; di < k; ++di)
                    for (int dj = 0; dj < k; ++dj)
                        s += tx.at3(ch, i * stride + di, j * stride + dj);
                y.at3(ch, i, j) = s * inv;
            }
    bool req = needs(x);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, x, out, c, k, stride, oh, ow, inv] {
            const Tensor& go = grad(out);
            Tensor& gx = g(x);
            for (int ch = 0; ch < c; ++ch)
                for (int i = 0; i < oh; ++i)
                    for (int j = 0; j < ow; ++j) {
                        double gv = go.at3(ch, i, j) * inv;
                        for (int di = 0; di < k; ++di)
                            for (int dj = 0; dj < k; ++dj)
                                gx.at3(ch, i * stride + di, j * stride + dj) += gv;
                    }
        };
    return out;
}

Graph::NodeId Graph::adaptive_avg_pool(NodeId x, int out_h, int out_w) {
    const Tensor& tx = val(x);
    require_rank(tx, 3, "adaptive_avg_pool");
    if (out_h < 1 || out_w < 1) throw DataError("ShapeMismatch", "adaptive_avg_pool: bad output");
    const int c = tx.dims[0], h = tx.dims[1], w = tx.dims[2];
    // window [floor(i*h/oh), ceil((i+1)*h/oh)); nonempty for any h, oh
    auto lo = [](int i, int in, int out) { return (i * in) / out; };
    auto hi = [](int i, int in, int out) { return ((i + 1) * in + out - 1) / out; };
    Tensor y({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < out_h; ++i)
            for (int j = 0; j < out_w; ++j) {
                int r0 = lo(i, h, out_h), r1 = hi(i, h, out_h);
                int c0 = lo(j, w, out_w), c1 = hi(j, w, out_w);
                double s = 0;
                for (int r = r0; r < r1; ++r)
                    for (int cc = c0; cc < c1; ++cc) s += tx.at3(ch, r, cc);
                y.at3(ch, i, j) = s / (static_cast<double>(r1 - r0) * (c1 - c0));
            }
    bool req = needs(x);
    NodeId out = push(std::move(y), req);
    if (req)
        node(out).back = [this, x, out, c, h, w, out_h, out_w, lo, hi] {
            const Tensor& go = grad(out);
            Tensor& gx = g(x);
            for (int ch = 0; ch < c; ++ch)
                for (int i = 0; i < out_h; ++i)
                    for (int j = 0; j < out_w; ++j) {
                        int r0 = lo(i, h, out_h), r1 = hi(i, h, out_h);
                        int c0 = lo(j, w, out_w), c1 = hi(j, w, out_w);
                        double gv = go.at3(ch, i, j) /
                                    (static_cast<double>(r1 - r0) * (c1 - c0));
                        for (int r = r0; r < r1; ++r)
                            for (int cc = c0; cc < c1; ++cc) gx.at3(ch, r, cc) += gv;
                    }
        };
    return out;
}

Graph::NodeId Graph::cc_loss(NodeId pred, NodeId gt) {
    const Tensor& tp = val(pred);
    const Tensor& tg = val(gt);
    if (tp.dims != tg.dims)
        throw DataError("ShapeMismatch",
                        "cc_loss: " + dims_str(tp.dims) + " vs " + dims_str(tg.dims));
    const std::size_t n = tp.numel();
    if (n < 2) throw DataError("ShapeMismatch", "cc_loss: need at least 2 elements");
    double mp = 0, mg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mp += tp.data[i];
        mg += tg.data[i];
    }
    mp /= static_cast<double>(n);
    mg /= static_cast<double>(n);
    double spp = 0, sgg = 0, spg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double dp = tp.data[i] - mp, dg = tg.data[i] - mg;
        spp += dp * dp;
        sgg += dg * dg;
        spg += dp * dg;
    }
    if (!(sgg > 0)) throw NumericError("DegenerateMap", "cc_loss: target is constant");
    bool req = needs(pred) || needs(gt);
    if (!(spp > 0)) {
        // constant prediction: defined as loss 1 with zero gradient
        ++degenerate_;
        return push(Tensor::scalar(1.0), req);
    }
    double denom = std::sqrt(spp * sgg);
    double cc = spg / denom;
    NodeId out = push(Tensor::scalar(1.0 - cc), req);
    if (req)
        node(out).back = [this, pred, gt, out, n, mp, mg, spp, sgg, denom, cc] {
            const double go = grad(out).data[0];
            const Tensor& tp2 = val(pred);
            const Tensor& tg2 = val(gt);
            if (needs(pred)) {
                Tensor& gp = g(pred);
                for (std::size_t i = 0; i < n; ++i) {
                    double dp = tp2.data[i] - mp, dg = tg2.data[i] - mg;
                    gp.data[i] += go * (-(dg / denom) + cc * dp / spp);
                }
            }
            if (needs(gt)) {
                Tensor& gg = g(gt);
                for (std::size_t i = 0; i < n; ++i) {
                    double dp = tp2.data[i] - mp, dg = tg2.data[i] - mg;
                    gg.data[i] += go * (-(dp / denom) + cc * dg / sgg);
                }
            }
        };
    return out;
}

Graph::NodeId Graph::weighted_ce_loss(NodeId logits, const std::vector<int>& labels,
                                      const std::vector<double>& class_weights) {
    const Tensor& tl = val(logits);
    require_rank(tl, 2, "weighted_ce_loss");
    const int n = tl.dims[0], k = tl.dims[1];
    if (static_cast<int>(labels.size()) != n)
        throw DataError("ShapeMismatch", "weighted_ce_loss: " + std::to_string(labels.size()) +
                                             " labels for " + std::to_string(n) + " rows");
    if (static_cast<int>(class_weights.size()) != k)
        throw DataError("ShapeMismatch", "weighted_ce_loss: " +
                                             std::to_string(class_weights.size()) +
                                             " weights for " + std::to_string(k) + " classes");
    for (double w : class_weights)
        if (!(w > 0)) throw DataError("BadClassWeights", "class weights must be positive");
    for (int y : labels)
        if (y < 0 || y >= k)
            throw DataError("LabelOutOfRange",
                            "label " + std::to_string(y) + " for k=" + std::to_string(k));
    // stable per-row log-softmax
    std::vector<double> sm(static_cast<std::size_t>(n) * k);
    double wsum = 0, loss = 0;
    for (int i = 0; i < n; ++i) {
        const double* x = &tl.data[static_cast<std::size_t>(i) * k];
        double* o = &sm[static_cast<std::size_t>(i) * k];
        double mx = x[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, x[j]);
        double s = 0;
        for (int j = 0; j < k; ++j) {
            o[j] = std::exp(x[j] - mx);
            s += o[j];
        }
        for (int j = 0; j < k; ++j) o[j] /= s;
        double wy = class_weights[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        loss += -wy * (x[labels[static_cast<std::size_t>(i)]] - mx - std::log(s));
        wsum += wy;
    }
    loss /= wsum;
    bool req = needs(logits);
    NodeId out = push(Tensor::scalar(loss), req);
    if (req) {
        std::vector<int> lab = labels;
        std::vector<double> cw = class_weights;
        node(out).back = [this, logits, out, n, k, sm = std::move(sm), lab = std::move(lab),
                          cw = std::move(cw), wsum] {
            const double go = grad(out).data[0];
            Tensor& gl = g(logits);
            for (int i = 0; i < n; ++i) {
                double wy = cw[static_cast<std::size_t>(lab[static_cast<std::size_t>(i)])];
                const double* smr = &sm[static_cast<std::size_t>(i) * k];
                double* gr = &gl.data[static_cast<std::size_t>(i) * k];
                for (int j = 0; j < k; ++j) {
                    double ind = j == lab[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
                    gr[j] += go * wy * (smr[j] - ind) / wsum;
                }
            }
        };
    }
    return out;
}

void Graph::backward(NodeId loss) {
    const Tensor& tl = val(loss);
    if (tl.numel() != 1)
        throw DataError("NonScalarLoss", "backward from " + dims_str(tl.dims));
    for (auto& nd : nodes_) std::fill(nd.grad.data.begin(), nd.grad.data.end(), 0.0);
    node(loss).grad.data[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        Node& nd = node(id);
        if (nd.requires_grad && nd.back) nd.back();
    }
}

}  // namespace attnscope::tensor
