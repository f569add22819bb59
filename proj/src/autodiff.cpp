// SPDX-License-Identifier: Apache-2.0
//
// Copyright (C) 2026 The wfcf authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wfcf/autodiff.hpp"

#include "wfcf/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace wfcf::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Tape &same_tape(Var a, Var b, const char *op) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape())
        throw ConfigError(std::string(op) + ": operands live on different tapes");
    return *a.tape();
}

Tape &tape_of(Var a, const char *op) {
    if (!a.valid())
        throw ConfigError(std::string(op) + ": invalid operand");
    return *a.tape();
}

void require_same_shape(Var a, Var b, const char *op) {
    if (a.shape() != b.shape())
        throw ShapeMismatch(std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void require_rank2(Var a, const char *op) {
    if (a.shape().size() != 2)
        throw ShapeMismatch(std::string(op) + ": expected rank 2, got " + shape_string(a.shape()));
}

// outer x extent x inner decomposition around `axis`.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_axis(const Shape &shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i)
        s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i)
        s.inner *= shape[i];
    return s;
}

} // namespace

std::size_t numel(const Shape &shape) {
    std::size_t n = 1;
    for (auto d : shape)
        n *= d;
    return n;
}

std::string shape_string(const Shape &shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? ", " : "") << shape[i];
    os << ']';
    return os.str();
}

const Shape &Var::shape() const { return tape_->node(id_).shape; }

std::size_t Var::cols() const {
    const auto &s = shape();
    return s.empty() ? 1 : s.back();
}

std::size_t Var::rows() const {
    const auto c = cols();
    return c == 0 ? 0 : numel(shape()) / c;
}

std::span<const double> Var::values() const { return tape_->node(id_).value; }

double Var::item() const {
    const auto &v = tape_->node(id_).value;
    if (v.size() != 1)
        throw ShapeMismatch("item(): array is not scalar " + shape_string(shape()));
    return v[0];
}

// ---- tape -------------------------------------------------------------------

Var Tape::constant(Shape shape, std::vector<double> values) {
    if (numel(shape) != values.size())
        throw ShapeMismatch("constant: shape " + shape_string(shape) + " does not match value count");
    for (double x : values)
        if (!std::isfinite(x))
            throw NonFiniteInput("constant: non-finite input value");
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(values);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::variable(Shape shape, std::vector<double> values) {
    Var v = constant(std::move(shape), std::move(values));
    nodes_[v.id()].requires_grad = true;
    return v;
}

Var Tape::record(const char *op, Shape shape, std::vector<double> value, std::initializer_list<Var> parents,
                 std::function<void(Tape &)> backward) {
    bool needs = false;
    for (const Var &p : parents)
        needs = needs || nodes_[p.id()].requires_grad;
    for (double x : value)
        if (!std::isfinite(x))
            throw NonFiniteInput(std::string(op) + ": produced a non-finite value");
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.requires_grad = needs;
    n.op = op;
    if (needs)
        n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::record(const char *op, Shape shape, std::vector<double> value, const std::vector<Var> &parents,
                 std::function<void(Tape &)> backward) {
    bool needs = false;
    for (const Var &p : parents)
        needs = needs || nodes_[p.id()].requires_grad;
    for (double x : value)
        if (!std::isfinite(x))
            throw NonFiniteInput(std::string(op) + ": produced a non-finite value");
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.requires_grad = needs;
    n.op = op;
    if (needs)
        n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

void Tape::backward(Var loss, double seed) {
    if (loss.tape() != this)
        throw ConfigError("backward: loss belongs to another tape");
    Node &root = nodes_[loss.id()];
    if (root.value.size() != 1)
        throw ConfigError("backward: loss must be scalar, got " + shape_string(root.shape));
    if (!root.requires_grad)
        return;
    root.grad.assign(1, seed);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node &n = nodes_[i];
        if (n.backward && !n.grad.empty())
            n.backward(*this);
    }
}

std::span<const double> Tape::grad(Var v) const { return nodes_[v.id()].grad; }

double *Tape::grad_target(Var v) {
    Node &n = nodes_[v.id()];
    if (!n.requires_grad)
        return nullptr;
    if (n.grad.empty())
        n.grad.assign(n.value.size(), 0.0);
    return n.grad.data();
}

// ---- elementwise ------------------------------------------------------------

Var add(Var a, Var b) {
    Tape &t = same_tape(a, b, "add");
    require_same_shape(a, b, "add");
    std::vector<double> out(a.values().begin(), a.values().end());
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += bv[i];
    return t.record("add", a.shape(), std::move(out), {a, b}, [a, b, self = t.size()](Tape &tp) {
        const auto &g = tp.node(self).grad;
        for (Var p : {a, b})
            if (double *gp = tp.grad_target(p))
                for (std::size_t i = 0; i < g.size(); ++i)
                    gp[i] += g[i];
    });
}

Var sub(Var a, Var b) {
    Tape &t = same_tape(a, b, "sub");
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.values().begin(), a.values().end());
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] -= bv[i];
    return t.record("sub", a.shape(), std::move(out), {a, b}, [a, b, self = t.size()](Tape &tp) {
        const auto &g = tp.node(self).grad;
        if (double *ga = tp.grad_target(a))
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += g[i];
        if (double *gb = tp.grad_target(b))
            for (std::size_t i = 0; i < g.size(); ++i)
                gb[i] -= g[i];
    });
}

Var mul(Var a, Var b) {
    Tape &t = same_tape(a, b, "mul");
    require_same_shape(a, b, "mul");
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = av[i] * bv[i];
    return t.record("mul", a.shape(), std::move(out), {a, b}, [a, b, self = t.size()](Tape &tp) {
        const auto &g = tp.node(self).grad;
        const auto &av = tp.node(a.id()).value;
        const auto &bv = tp.node(b.id()).value;
        if (double *ga = tp.grad_target(a))
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += g[i] * bv[i];
        if (double *gb = tp.grad_target(b))
            for (std::size_t i = 0; i < g.size(); ++i)
                gb[i] += g[i] * av[i];
    });
}

Var scale(Var a, double factor) {
    Tape &t = tape_of(a, "scale");
    std::vector<double> out(a.values().begin(), a.values().end());
    for (double &x : out)
        x *= factor;
    return t.record("scale", a.shape(), std::move(out), {a}, [a, factor, self = t.size()](Tape &tp) {
        const auto &g = tp.node(self).grad;
        double *ga = tp.grad_target(a);
        for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] += factor * g[i];
    });
}

Var add_rowwise(Var x, Var bias) {
    Tape &t = same_tape(x, bias, "add_rowwise");
    const std::size_t c = x.cols();
    if (numel(bias.shape()) != c)
        throw ShapeMismatch("add_rowwise: bias " + shape_string(bias.shape()) + " vs rows of " + shape_string(x.shape()));
    const std::size_t r = x.rows();
    std::vector<double> out(x.values().begin(), x.values().end());
    auto bv = bias.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out[i * c + j] += bv[j];
    return t.record("add_rowwise", x.shape(), std::move(out), {x, bias}, [x, bias, r, c, self = t.size()](Tape &tp) {
        const auto &g = tp.node(self).grad;
        if (double *gx = tp.grad_target(x))
            for (std::size_t i = 0; i < g.size(); ++i)
                gx[i] += g[i];
        if (double *gb = tp.grad_target(bias))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    gb[j] += g[i * c + j];
    });
}

Var mul_rowwise(Var x, Var w) {
    Tape &t = same_tape(x, w, "mul_rowwise");
    const std::size_t c = x.cols();
    const std::size_t r = x.rows();
    if (numel(w.shape()) != r)
        throw ShapeMismatch("mul_rowwise: weights " + shape_string(w.shape()) + " vs " + shape_string(x.shape()));
    auto xv = x.values();
    auto wv = w.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out[i * c + j] = xv[i * c + j] * wv[i];
    return t.record("mul_rowwise", x.shape(), std::move(out), {x, w}, [x, w, r, c, self = t.size()](Tape &tp) {
        const auto &g = tp.node(self).grad;
        const auto &xv = tp.node(x.id()).value;
        const auto &wv = tp.node(w.id()).value;
        if (double *gx = tp.grad_target(x))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    gx[i * c + j] += g[i * c + j] * wv[i];
        if (double *gw = tp.grad_target(w))
            for (std::size_t i = 0; i < r; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < c; ++j)
                    acc += g[i * c + j] * xv[i * c + j];
                gw[i] += acc;
            }
    });
}

// ---- linear algebra ---------------------------------------------------------

Var matmul(Var a, Var b) {
    Tape &t = same_tape(a, b, "matmul");
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k)
        throw ShapeMismatch("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    std::vector<double> out(m * n);
    MapMat(out.data(), m, n).noalias() = ConstMapMat(a.values().data(), m, k) * ConstMapMat(b.values().data(), k, n);
    return t.record("matmul", Shape{m, n}, std::move(out), {a, b}, [a, b, m, k, n, self = t.size()](Tape &tp) {
        ConstMapMat g(tp.node(self).grad.data(), m, n);
        if (double *ga = tp.grad_target(a))
            MapMat(ga, m, k).noalias() += g * ConstMapMat(tp.node(b.id()).value.data(), k, n).transpose();
        if (double *gb = tp.grad_target(b))
            MapMat(gb, k, n).noalias() += ConstMapMat(tp.node(a.id()).value.data(), m, k).transpose() * g;
    });
}

Var matmul_nt(Var a, Var b) {
    Tape &t = same_tape(a, b, "matmul_nt");
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
    if (b.shape()[1] != k)
        throw ShapeMismatch("matmul_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
    std::vector<double> out(m * n);
    MapMat(out.data(), m, n).noalias() =
        ConstMapMat(a.values().data(), m, k) * ConstMapMat(b.values().data(), n, k).transpose();
    return t.record("matmul_nt", Shape{m, n}, std::move(out), {a, b}, [a, b, m, k, n, self = t.size()](Tape &tp) {
        ConstMapMat g(tp.node(self).grad.data(), m, n);
        if (double *ga = tp.grad_target(a))
            MapMat(ga, m, k).noalias() += g * ConstMapMat(tp.node(b.id()).value.data(), n, k);
        if (double *gb = tp.grad_target(b))
            MapMat(gb, n, k).noalias() += g.transpose() * ConstMapMat(tp.node(a.id()).value.data(), m, k);
    });
}

Var batched_matmul(Var a, Var b, bool transpose_b) {
    Tape &t = same_tape(a, b, "batched_matmul");
    if (a.shape().size() != 3 || b.shape().size() != 3 || a.shape()[0] != b.shape()[0])
        throw ShapeMismatch("batched_matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    const std::size_t batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2];
    const std::size_t n = transpose_b ? b.shape()[1] : b.shape()[2];
    if ((transpose_b ? b.shape()[2] : b.shape()[1]) != k)
        throw ShapeMismatch("batched_matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                            shape_string(b.shape()));
    std::vector<double> out(batch * m * n);
    const double *av = a.values().data(), *bv = b.values().data();
    for (std::size_t i = 0; i < batch; ++i) {
        ConstMapMat ai(av + i * m * k, m, k);
        MapMat oi(out.data() + i * m * n, m, n);
        if (transpose_b)
            oi.noalias() = ai * ConstMapMat(bv + i * n * k, n, k).transpose();
        else
            oi.noalias() = ai * ConstMapMat(bv + i * k * n, k, n);
    }
    return t.record("batched_matmul", Shape{batch, m, n}, std::move(out), {a, b},
                    [a, b, batch, m, k, n, transpose_b, self = t.size()](Tape &tp) {
                        const double *g = tp.node(self).grad.data();
                        const double *av = tp.node(a.id()).value.data();
                        const double *bv = tp.node(b.id()).value.data();
                        double *ga = tp.grad_target(a);
                        double *gb = tp.grad_target(b);
                        for (std::size_t i = 0; i < batch; ++i) {
                            ConstMapMat gi(g + i * m * n, m, n);
                            if (transpose_b) {
                                ConstMapMat bi(bv + i * n * k, n, k);
                                if (ga)
                                    MapMat(ga + i * m * k, m, k).noalias() += gi * bi;
                                if (gb)
                                    MapMat(gb + i * n * k, n, k).noalias() +=
                                        gi.transpose() * ConstMapMat(av + i * m * k, m, k);
                            } else {
                                ConstMapMat bi(bv + i * k * n, k, n);
                                if (ga)
                                    MapMat(ga + i * m * k, m, k).noalias() += gi * bi.transpose();
                                if (gb)
                                    MapMat(gb + i * k * n, k, n).noalias() +=
                                        ConstMapMat(av + i * m * k, m, k).transpose() * gi;
                            }
                        }
                    });
}

Var transpose(Var a) {
    Tape &t = tape_of(a, "transpose");
    require_rank2(a, "transpose");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m * n);
    auto av = a.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out[j * m + i] = av[i * n + j];
    return t.record("transpose", Shape{n, m}, std::move(out), {a}, [a, m, n, self = t.size()](Tape &tp) {
        const auto &g = tp.node(self).grad;
        double *ga = tp.grad_target(a);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                ga[i * n + j] += g[j * m + i];
    });
}

Var reshape(Var a, Shape shape) {
    Tape &t = tape_of(a, "reshape");
    if (numel(shape) != numel(a.shape()))
        throw ShapeMismatch("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
    std::vector<double> out(a.values().begin(), a.values().end());
    return t.record("reshape", std::move(shape), std::move(out), {a}, [a, self = t.size()](Tape &tp) {
        const auto &g = tp.node(self).grad;
        double *ga = tp.grad_target(a);
        for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i];
    });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
    Tape &t = tape_of(a, "slice");
    const Shape &in = a.shape();
    if (axis >= in.size() || begin > end || end > in[axis])
        throw ShapeMismatch("slice: axis/range out of bounds for " + shape_string(in));
    const AxisSplit s = split_axis(in, axis);
    const std::size_t len = end - begin;
    Shape shape = in;
    shape[axis] = len;
    std::vector<double> out(s.outer * len * s.inner);
    auto av = a.values();
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(av.begin() + (o * s.extent + begin) * s.inner, len * s.inner, out.begin() + o * len * s.inner);
    return t.record("slice", std::move(shape), std::move(out), {a}, [a, s, begin, len, self = t.size()](Tape &tp) {
        const auto &g = tp.node(self).grad;
        double *ga = tp.grad_target(a);
        for (std::size_t o = 0; o < s.outer; ++o) {
            const double *src = g.data() + o * len * s.inner;
            double *dst = ga + (o * s.extent + begin) * s.inner;
            for (std::size_t i = 0; i < len * s.inner; ++i)
                dst[i] += src[i];
        }
    });
}

Var concat(const std::vector<Var> &parts, std::size_t axis) {
    if (parts.empty())
        throw ShapeMismatch("concat: no operands");
    Tape &t = tape_of(parts[0], "concat");
    Shape shape = parts[0].shape();
    if (axis >= shape.size())
        throw ShapeMismatch("concat: axis out of range for " + shape_string(shape));
    std::size_t total = 0;
    std::vector<std::size_t> extents;
    for (const Var &p : parts) {
        if (p.tape() != &t)
            throw ConfigError("concat: operands live on different tapes");
        Shape ps = p.shape();
        if (ps.size() != shape.size())
            throw ShapeMismatch("concat: rank mismatch");
        ps[axis] = shape[axis];
        if (ps != shape)
            throw ShapeMismatch("concat: incompatible " + shape_string(p.shape()) + " vs " + shape_string(shape));
        extents.push_back(p.shape()[axis]);
        total += p.shape()[axis];
    }
    shape[axis] = total;
    const AxisSplit s = split_axis(shape, axis);
    std::vector<double> out(numel(shape));
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        auto pv = parts[pi].values();
        const std::size_t len = extents[pi];
        for (std::size_t o = 0; o < s.outer; ++o)
            std::copy_n(pv.begin() + o * len * s.inner, len * s.inner, out.begin() + (o * total + offset) * s.inner);
        offset += len;
    }
    return t.record("concat", std::move(shape), std::move(out), parts,
                    [parts, extents, s, total, self = t.size()](Tape &tp) {
                        const auto &g = tp.node(self).grad;
                        std::size_t offset = 0;
                        for (std::size_t pi = 0; pi < parts.size(); ++pi) {
                            const std::size_t len = extents[pi];
                            if (double *gp = tp.grad_target(parts[pi]))
                                for (std::size_t o = 0; o < s.outer; ++o) {
                                    const double *src = g.data() + (o * total + offset) * s.inner;
                                    double *dst = gp + o * len * s.inner;
                                    for (std::size_t i = 0; i < len * s.inner; ++i)
                                        dst[i] += src[i];
                                }
                            offset += len;
                        }
                    });
}

// ---- normalisation and activations -------------------------------------------

Var softmax_lastdim(Var a) {
    Tape &t = tape_of(a, "softmax_lastdim");
    const std::size_t c = a.cols(), r = a.rows();
    auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < r; ++i) {
        const double *x = av.data() + i * c;
        double *y = out.data() + i * c;
        const double mx = *std::max_element(x, x + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j)
            z += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < c; ++j)
            y[j] /= z;
    }
    return t.record("softmax_lastdim", a.shape(), std::move(out), {a}, [a, r, c, self = t.size()](Tape &tp) {
        const auto &g = tp.node(self).grad;
        const auto &y = tp.node(self).value;
        double *ga = tp.grad_target(a);
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j)
                dot += g[i * c + j] * y[i * c + j];
            for (std::size_t j = 0; j < c; ++j)
                ga[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
        }
    });
}

Var rmsnorm(Var x, Var gain, double eps) {
    Tape &t = same_tape(x, gain, "rmsnorm");
    const std::size_t c = x.cols(), r = x.rows();
    if (numel(gain.shape()) != c)
        throw ShapeMismatch("rmsnorm: gain " + shape_string(gain.shape()) + " vs " + shape_string(x.shape()));
    auto xv = x.values();
    auto gv = gain.values();
    std::vector<double> out(xv.size());
    std::vector<double> inv_rms(r);
    for (std::size_t i = 0; i < r; ++i) {
        double ms = 0.0;
        for (std::size_t j = 0; j < c; ++j)
            ms += xv[i * c + j] * xv[i * c + j];
        ms /= static_cast<double>(c);
        if (ms + eps <= 0.0)
            throw NonFiniteInput("rmsnorm: zero row with eps = 0");
        inv_rms[i] = 1.0 / std::sqrt(ms + eps);
        for (std::size_t j = 0; j < c; ++j)
            out[i * c + j] = xv[i * c + j] * inv_rms[i] * gv[j];
    }
    return t.record("rmsnorm", x.shape(), std::move(out), {x, gain},
                    [x, gain, r, c, inv_rms = std::move(inv_rms), self = t.size()](Tape &tp) {
                        const auto &g = tp.node(self).grad;
                        const auto &xv = tp.node(x.id()).value;
                        const auto &gv = tp.node(gain.id()).value;
                        double *gx = tp.grad_target(x);
                        double *gg = tp.grad_target(gain);
                        for (std::size_t i = 0; i < r; ++i) {
                            const double s = inv_rms[i];
                            if (gx) {
                                double dot = 0.0;
                                for (std::size_t j = 0; j < c; ++j)
                                    dot += g[i * c + j] * gv[j] * xv[i * c + j];
                                const double k = s * s * s * dot / static_cast<double>(c);
                                for (std::size_t j = 0; j < c; ++j)
                                    gx[i * c + j] += g[i * c + j] * gv[j] * s - xv[i * c + j] * k;
                            }
                            if (gg)
                                for (std::size_t j = 0; j < c; ++j)
                                    gg[j] += g[i * c + j] * xv[i * c + j] * s;
                        }
                    });
}

Var gelu(Var a) {
    Tape &t = tape_of(a, "gelu");
    auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] / std::numbers::sqrt2));
    return t.record("gelu", a.shape(), std::move(out), {a}, [a, self = t.size()](Tape &tp) {
        const auto &g = tp.node(self).grad;
        const auto &av = tp.node(a.id()).value;
        double *ga = tp.grad_target(a);
        constexpr double inv_sqrt_2pi = 0.5 * std::numbers::sqrt2 * std::numbers::inv_sqrtpi;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = av[i];
            const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
            ga[i] += g[i] * (cdf + x * pdf);
        }
    });
}

Var tanh(Var a) {
    Tape &t = tape_of(a, "tanh");
    auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::tanh(av[i]);
    return t.record("tanh", a.shape(), std::move(out), {a}, [a, self = t.size()](Tape &tp) {
        const auto &g = tp.node(self).grad;
        const auto &y = tp.node(self).value;
        double *ga = tp.grad_target(a);
        for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

// ---- reductions ---------------------------------------------------------------

Var mean(Var a) {
    Tape &t = tape_of(a, "mean");
    auto av = a.values();
    if (av.empty())
        throw ShapeMismatch("mean: empty array");
    double s = 0.0;
    for (double x : av)
        s += x;
    const double n = static_cast<double>(av.size());
    return t.record("mean", Shape{1}, {s / n}, {a}, [a, n, self = t.size()](Tape &tp) {
        const double g = tp.node(self).grad[0] / n;
        double *ga = tp.grad_target(a);
        const std::size_t len = tp.node(a.id()).value.size();
        for (std::size_t i = 0; i < len; ++i)
            ga[i] += g;
    });
}

Var sum(Var a) {
    Tape &t = tape_of(a, "sum");
    double s = 0.0;
    for (double x : a.values())
        s += x;
    return t.record("sum", Shape{1}, {s}, {a}, [a, self = t.size()](Tape &tp) {
        const double g = tp.node(self).grad[0];
        double *ga = tp.grad_target(a);
        const std::size_t len = tp.node(a.id()).value.size();
        for (std::size_t i = 0; i < len; ++i)
            ga[i] += g;
    });
}

Var sum_of_squares(Var a) {
    Tape &t = tape_of(a, "sum_of_squares");
    double s = 0.0;
    for (double x : a.values())
        s += x * x;
    return t.record("sum_of_squares", Shape{1}, {s}, {a}, [a, self = t.size()](Tape &tp) {
        const double g = tp.node(self).grad[0];
        const auto &av = tp.node(a.id()).value;
        double *ga = tp.grad_target(a);
        for (std::size_t i = 0; i < av.size(); ++i)
            ga[i] += 2.0 * g * av[i];
    });
}

// ---- indexing -----------------------------------------------------------------

Var gather_rows(Var x, std::vector<std::size_t> index) {
    Tape &t = tape_of(x, "gather_rows");
    const std::size_t c = x.cols(), r = x.rows();
    auto xv = x.values();
    std::vector<double> out(index.size() * c);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= r)
            throw ShapeMismatch("gather_rows: row index out of range");
        std::copy_n(xv.begin() + index[i] * c, c, out.begin() + i * c);
    }
    const std::size_t n = index.size();
    return t.record("gather_rows", Shape{n, c}, std::move(out), {x},
                    [x, c, index = std::move(index), self = t.size()](Tape &tp) {
                        const auto &g = tp.node(self).grad;
                        double *gx = tp.grad_target(x);
                        for (std::size_t i = 0; i < index.size(); ++i)
                            for (std::size_t j = 0; j < c; ++j)
                                gx[index[i] * c + j] += g[i * c + j];
                    });
}

Var scatter_add_rows(Var base, Var y, std::vector<std::size_t> index) {
    Tape &t = same_tape(base, y, "scatter_add_rows");
    const std::size_t c = base.cols(), r = base.rows();
    if (y.cols() != c || y.rows() != index.size())
        throw ShapeMismatch("scatter_add_rows: " + shape_string(y.shape()) + " into " + shape_string(base.shape()));
    std::vector<double> out(base.values().begin(), base.values().end());
    auto yv = y.values();
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= r)
            throw ShapeMismatch("scatter_add_rows: row index out of range");
        for (std::size_t j = 0; j < c; ++j)
            out[index[i] * c + j] += yv[i * c + j];
    }
    return t.record("scatter_add_rows", base.shape(), std::move(out), {base, y},
                    [base, y, c, index = std::move(index), self = t.size()](Tape &tp) {
                        const auto &g = tp.node(self).grad;
                        if (double *gb = tp.grad_target(base))
                            for (std::size_t i = 0; i < g.size(); ++i)
                                gb[i] += g[i];
                        if (double *gy = tp.grad_target(y))
                            for (std::size_t i = 0; i < index.size(); ++i)
                                for (std::size_t j = 0; j < c; ++j)
                                    gy[i * c + j] += g[index[i] * c + j];
                    });
}

Var pick(Var x, std::vector<std::size_t> rows, std::vector<std::size_t> cols) {
    Tape &t = tape_of(x, "pick");
    require_rank2(x, "pick");
    if (rows.size() != cols.size())
        throw ShapeMismatch("pick: index lists differ in length");
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    auto xv = x.values();
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= r || cols[i] >= c)
            throw ShapeMismatch("pick: index out of range");
        out[i] = xv[rows[i] * c + cols[i]];
    }
    const std::size_t n = rows.size();
    return t.record("pick", Shape{n}, std::move(out), {x},
                    [x, c, rows = std::move(rows), cols = std::move(cols), self = t.size()](Tape &tp) {
                        const auto &g = tp.node(self).grad;
                        double *gx = tp.grad_target(x);
                        for (std::size_t i = 0; i < rows.size(); ++i)
                            gx[rows[i] * c + cols[i]] += g[i];
                    });
}

Var gather_flat(Var x, std::vector<std::size_t> index, Shape shape) {
    Tape &t = tape_of(x, "gather_flat");
    if (numel(shape) != index.size())
        throw ShapeMismatch("gather_flat: index count does not match " + shape_string(shape));
    auto xv = x.values();
    std::vector<double> out(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= xv.size())
            throw ShapeMismatch("gather_flat: index out of range");
        out[i] = xv[index[i]];
    }
    return t.record("gather_flat", std::move(shape), std::move(out), {x},
                    [x, index = std::move(index), self = t.size()](Tape &tp) {
                        const auto &g = tp.node(self).grad;
                        double *gx = tp.grad_target(x);
                        for (std::size_t i = 0; i < index.size(); ++i)
                            gx[index[i]] += g[i];
                    });
}

// ---- parameters -----------------------------------------------------------------

std::size_t ParameterSet::add(std::string name, Shape shape, std::vector<double> value) {
    if (index_.count(name))
        throw ConfigError("duplicate parameter name: " + name);
    if (numel(shape) != value.size())
        throw ShapeMismatch("parameter " + name + ": value count does not match " + shape_string(shape));
    const std::size_t id = params_.size();
    index_.emplace(name, id);
    params_.push_back(Parameter{std::move(name), std::move(shape), std::move(value), true});
    return id;
}

std::size_t ParameterSet::index(const std::string &name) const {
    auto it = index_.find(name);
    if (it == index_.end())
        throw ConfigError("unknown parameter: " + name);
    return it->second;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto &p : params_)
        n += p.value.size();
    return n;
}

std::size_t ParameterSet::trainable_scalar_count() const {
    std::size_t n = 0;
    for (const auto &p : params_)
        if (p.trainable)
            n += p.value.size();
    return n;
}

Gradients zero_gradients(const ParameterSet &params) { return Gradients(params.size()); }

void accumulate(Gradients &into, const Gradients &from, double factor) {
    if (into.size() < from.size())
        into.resize(from.size());
    for (std::size_t i = 0; i < from.size(); ++i) {
        if (from[i].empty())
            continue;
        if (into[i].empty())
            into[i].assign(from[i].size(), 0.0);
        for (std::size_t j = 0; j < from[i].size(); ++j)
            into[i][j] += factor * from[i][j];
    }
}

Binder::Binder(Tape &tape, const ParameterSet &params, bool constants_only)
    : tape_(tape), params_(params), node_of_(params.size(), -1), constants_only_(constants_only) {}

Var Binder::operator()(std::size_t index) {
    if (node_of_[index] >= 0)
        return {&tape_, static_cast<std::size_t>(node_of_[index])};
    const Parameter &p = params_[index];
    Var v = p.trainable && !constants_only_ ? tape_.variable(p.shape, p.value) : tape_.constant(p.shape, p.value);
    node_of_[index] = static_cast<std::int64_t>(v.id());
    return v;
}

void Binder::collect(Gradients &into, double factor) const {
    if (into.size() < params_.size())
        into.resize(params_.size());
    for (std::size_t i = 0; i < node_of_.size(); ++i) {
        if (node_of_[i] < 0 || !params_[i].trainable)
            continue;
        const auto &g = tape_.node(static_cast<std::size_t>(node_of_[i])).grad;
        if (g.empty())
            continue;
        if (into[i].empty())
            into[i].assign(g.size(), 0.0);
        for (std::size_t j = 0; j < g.size(); ++j)
            into[i][j] += factor * g[j];
    }
}

// ---- verification -----------------------------------------------------------------

double evaluate_loss(const LossFn &fn, const ParameterSet &params) {
    Tape tape;
    Binder bind(tape, params);
    return fn(tape, bind).item();
}

Gradients loss_gradients(const LossFn &fn, const ParameterSet &params, double *loss_out) {
    Tape tape;
    Binder bind(tape, params);
    Var loss = fn(tape, bind);
    tape.backward(loss);
    if (loss_out)
        *loss_out = loss.item();
    Gradients g = zero_gradients(params);
    bind.collect(g);
    return g;
}

namespace {

// Ridders' polynomial extrapolation of central differences: the step shrinks
// by 1.4 per row and the tableau entry with the smallest error estimate wins.
template <class Central> double ridders(Central &&central, double step) {
    constexpr int kRows = 10;
    constexpr double kShrink = 1.4, kShrink2 = kShrink * kShrink, kSafe = 2.0;
    double a[kRows][kRows];
    double h = step;
    a[0][0] = central(h);
    double best = a[0][0];
    double err = std::numeric_limits<double>::max();
    for (int i = 1; i < kRows; ++i) {
        h /= kShrink;
        a[0][i] = central(h);
        double fac = kShrink2;
        for (int j = 1; j <= i; ++j) {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= kShrink2;
            const double e = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
            if (e <= err) {
                err = e;
                best = a[j][i];
            }
        }
        if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err)
            break;
    }
    return best;
}

} // namespace

FdReport finite_difference_check(const LossFn &fn, ParameterSet &params, double step, double tolerance,
                                 const FdOptions &options) {
    FdReport report;
    if (!(step > 0.0) || !std::isfinite(step)) {
        report.valid = false;
        report.message = "finite difference step must be positive and finite";
        return report;
    }
    const Gradients analytic = loss_gradients(fn, params);
    std::mt19937_64 rng(options.seed);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter &p = params[pi];
        if (!p.trainable)
            continue;
        std::vector<std::size_t> entries(p.value.size());
        for (std::size_t j = 0; j < entries.size(); ++j)
            entries[j] = j;
        if (options.max_entries_per_param && entries.size() > options.max_entries_per_param) {
            std::shuffle(entries.begin(), entries.end(), rng);
            entries.resize(options.max_entries_per_param);
            std::sort(entries.begin(), entries.end());
        }
        for (std::size_t j : entries) {
            const double saved = p.value[j];
            auto central = [&](double h) {
                p.value[j] = saved + h;
                const double up = evaluate_loss(fn, params);
                p.value[j] = saved - h;
                const double down = evaluate_loss(fn, params);
                p.value[j] = saved;
                return (up - down) / (2.0 * h);
            };
            const double numeric = options.extrapolate ? ridders(central, step) : central(step);
            ++report.checked;
            if (analytic[pi].empty()) {
                // No path from this parameter to the loss, so the exact gradient
                // is zero and `numeric` is evaluation roundoff. Bound it directly.
                ++report.structural_zeros;
                if (std::abs(numeric) > tolerance && report.max_relative_error <= tolerance) {
                    std::ostringstream os;
                    os << p.name << '[' << j << "] unreachable from the loss but numeric=" << numeric;
                    report.worst_entry = os.str();
                    report.max_relative_error = std::numeric_limits<double>::infinity();
                }
                continue;
            }
            const double a = analytic[pi][j];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > report.max_relative_error || report.worst_entry.empty()) {
                report.max_relative_error = std::max(rel, report.max_relative_error);
                std::ostringstream os;
                os << p.name << '[' << j << "] analytic=" << a << " numeric=" << numeric;
                report.worst_entry = os.str();
            }
        }
    }
    report.pass = report.max_relative_error <= tolerance;
    return report;
}

void adam_step(ParameterSet &params, const Gradients &grads, AdamState &state, double lr) {
    if (grads.size() > params.size())
        throw ShapeMismatch("adam_step: more gradient entries than parameters");
    if (state.first_moment.size() != params.size()) {
        state.first_moment.assign(params.size(), {});
        state.second_moment.assign(params.size(), {});
    }
    ++state.step_count;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter &p = params[i];
        if (!p.trainable)
            continue;
        const bool has_grad = i < grads.size() && !grads[i].empty();
        if (has_grad && grads[i].size() != p.value.size())
            throw ShapeMismatch("adam_step: gradient shape mismatch for " + p.name);
        auto &m = state.first_moment[i];
        auto &v = state.second_moment[i];
        if (m.empty()) {
            if (!has_grad)
                continue; // zero moments and zero gradient: the update is exactly zero
            m.assign(p.value.size(), 0.0);
            v.assign(p.value.size(), 0.0);
        }
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = has_grad ? grads[i][j] : 0.0;
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.value[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double cosine_lr(std::int64_t epoch, std::int64_t period, double lr_min, double lr_max) {
    if (lr_min > lr_max)
        throw ConfigError("cosine_lr: lr_min exceeds lr_max");
    if (period <= 0 || epoch < 0)
        throw ConfigError("cosine_lr: need period > 0 and epoch >= 0");
    const double phase = static_cast<double>(epoch % period) / static_cast<double>(period);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * phase));
}

} // namespace wfcf::ad
