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

// Reverse-mode differentiation over dense 64-bit arrays.
//
// A Tape records every operation in execution order; backward() walks the
// records in reverse exactly once. Arrays are row-major. Operations that talk
// about "rows" treat an array of shape [..., C] as (numel / C) rows of C.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace wfcf::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape &shape);
std::string shape_string(const Shape &shape);

class Tape;

/// Handle to one recorded array. Cheap to copy; valid while its tape lives.
class Var {
public:
    Var() = default;
    Var(Tape *tape, std::size_t id) : tape_(tape), id_(id) {}

    bool valid() const { return tape_ != nullptr; }
    Tape *tape() const { return tape_; }
    std::size_t id() const { return id_; }

    const Shape &shape() const;
    std::size_t rows() const;  // numel / last dim
    std::size_t cols() const;  // last dim
    std::span<const double> values() const;
    double item() const;

private:
    Tape *tape_ = nullptr;
    std::size_t id_ = 0;
};

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad; // empty until something flows into it
    bool requires_grad = false;
    std::function<void(Tape &)> backward;
    const char *op = "leaf";
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape &) = delete;
    Tape &operator=(const Tape &) = delete;

    Var constant(Shape shape, std::vector<double> values);
    Var variable(Shape shape, std::vector<double> values);

    /// Record the result of an operation. `backward` is only kept when at
    /// least one parent requires a gradient.
    Var record(const char *op, Shape shape, std::vector<double> value, std::initializer_list<Var> parents,
               std::function<void(Tape &)> backward);
    Var record(const char *op, Shape shape, std::vector<double> value, const std::vector<Var> &parents,
               std::function<void(Tape &)> backward);

    /// Seeds d(loss)/d(loss) = seed and propagates. Throws ConfigError when
    /// the loss is not scalar.
    void backward(Var loss, double seed = 1.0);

    Node &node(std::size_t id) { return nodes_[id]; }
    const Node &node(std::size_t id) const { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }

    /// Output gradient of a node during backward (empty span if none arrived).
    std::span<const double> grad(Var v) const;
    /// Gradient buffer of a parent, allocated on first use; nullptr when the
    /// parent does not take gradients.
    double *grad_target(Var v);

private:
    std::vector<Node> nodes_;
};

// ---- primitives -----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// x[R, C] + bias[C] broadcast over rows.
Var add_rowwise(Var x, Var bias);
/// x[R, C] with row r multiplied by w[r].
Var mul_rowwise(Var x, Var w);
/// [M, K] x [K, N].
Var matmul(Var a, Var b);
/// [M, K] x [N, K]^T.
Var matmul_nt(Var a, Var b);
/// Batched [B, M, K] x [B, K, N]; with transpose_b the second operand is
/// [B, N, K] and each slice is used transposed.
Var batched_matmul(Var a, Var b, bool transpose_b = false);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
/// Half-open range [begin, end) along `axis`.
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var concat(const std::vector<Var> &parts, std::size_t axis);
Var softmax_lastdim(Var a);
/// x / sqrt(mean(x^2) + eps) * gain, per row.
Var rmsnorm(Var x, Var gain, double eps);
Var gelu(Var a);
Var tanh(Var a);
Var mean(Var a);
Var sum(Var a);
Var sum_of_squares(Var a);

/// out[i, :] = x[index[i], :]
Var gather_rows(Var x, std::vector<std::size_t> index);
/// base with y[i, :] added into row index[i].
Var scatter_add_rows(Var base, Var y, std::vector<std::size_t> index);
/// out[i] = x[rows[i], cols[i]] for a 2-D x.
Var pick(Var x, std::vector<std::size_t> rows, std::vector<std::size_t> cols);
/// out.flat[i] = x.flat[index[i]]
Var gather_flat(Var x, std::vector<std::size_t> index, Shape shape);

// ---- parameters -----------------------------------------------------------

struct Parameter {
    std::string name;
    Shape shape;
    std::vector<double> value;
    bool trainable = true;
};

class ParameterSet {
public:
    std::size_t add(std::string name, Shape shape, std::vector<double> value);
    std::size_t size() const { return params_.size(); }
    Parameter &operator[](std::size_t i) { return params_[i]; }
    const Parameter &operator[](std::size_t i) const { return params_[i]; }
    /// Index of `name`; throws ConfigError when absent.
    std::size_t index(const std::string &name) const;
    bool contains(const std::string &name) const { return index_.count(name) != 0; }
    std::size_t scalar_count() const;
    std::size_t trainable_scalar_count() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Per-parameter gradient buffers; an empty entry means "exactly zero".
using Gradients = std::vector<std::vector<double>>;

Gradients zero_gradients(const ParameterSet &params);
void accumulate(Gradients &into, const Gradients &from, double factor = 1.0);

/// Puts parameters on a tape on first use. Trainable parameters become
/// gradient-carrying leaves; frozen ones become constants.
class Binder {
public:
    /// With `constants_only` every parameter is bound as a constant
    /// (inference: no gradients, no backward closures).
    Binder(Tape &tape, const ParameterSet &params, bool constants_only = false);
    Var operator()(std::size_t index);
    Var operator()(const std::string &name) { return (*this)(params_.index(name)); }
    Tape &tape() { return tape_; }
    const ParameterSet &params() const { return params_; }

    /// Adds factor * d(loss)/d(param) for every bound trainable parameter.
    void collect(Gradients &into, double factor = 1.0) const;

private:
    Tape &tape_;
    const ParameterSet &params_;
    std::vector<std::int64_t> node_of_;
    bool constants_only_ = false;
};

// ---- verification and optimisation ---------------------------------------

struct FdOptions {
    /// Entries checked per parameter; 0 checks all of them.
    std::size_t max_entries_per_param = 0;
    std::uint64_t seed = 7;
    /// Extrapolate central differences from `step` downwards (Ridders)
    /// instead of using the single quotient at `step`. Costs up to ten
    /// quotients per entry; needed where roundoff at small steps and
    /// piecewise behaviour (top-k routing) at large steps both bite.
    bool extrapolate = false;
};

struct FdReport {
    bool valid = true;
    bool pass = false;
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    /// Checked entries of parameters with no path to the loss; these must
    /// show |numeric| <= tolerance instead of a relative match.
    std::size_t structural_zeros = 0;
    std::string worst_entry;
    std::string message;
};

using LossFn = std::function<Var(Tape &, Binder &)>;

double evaluate_loss(const LossFn &fn, const ParameterSet &params);
Gradients loss_gradients(const LossFn &fn, const ParameterSet &params, double *loss_out = nullptr);

/// Central differences (f(x+h) - f(x-h)) / 2h against backward(), relative
/// error |a - b| / max(|a|, |b|, 1e-8). Trainable parameters only.
FdReport finite_difference_check(const LossFn &fn, ParameterSet &params, double step, double tolerance,
                                 const FdOptions &options = {});

struct AdamState {
    Gradients first_moment;
    Gradients second_moment;
    std::int64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam. An empty gradient entry counts as zero; frozen
/// parameters are left untouched.
void adam_step(ParameterSet &params, const Gradients &grads, AdamState &state, double lr);

double cosine_lr(std::int64_t epoch, std::int64_t period, double lr_min, double lr_max);

} // namespace wfcf::ad
