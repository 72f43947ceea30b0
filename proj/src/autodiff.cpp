#include "stylealign/autodiff.hpp"

#include "stylealign/errors.hpp"
#include "stylealign/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

namespace stylealign {

// ----------------------------------------------------------------------------
// ParameterSet

auto ParameterSet::add(std::string name, Tensor value) -> ParamId {
    params_.push_back({std::move(name), std::move(value)});
    return params_.size() - 1;
}

auto ParameterSet::find(const std::string &name) const -> std::optional<ParamId> {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

auto ParameterSet::numel() const -> std::size_t {
    std::size_t n = 0;
    for (const auto &p : params_) {
        n += p.value.size();
    }
    return n;
}

auto ParameterSet::all_finite() const -> bool {
    return std::all_of(params_.begin(), params_.end(), [](const NamedTensor &p) { return p.value.all_finite(); });
}

auto operator==(const ParameterSet &a, const ParameterSet &b) -> bool {
    if (a.params_.size() != b.params_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
        if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value)) {
            return false;
        }
    }
    return true;
}

// ----------------------------------------------------------------------------
// scalar helpers

namespace {
constexpr double kGeluC = 0.7978845608028654;    // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}    // namespace

auto gelu_scalar(double x) -> double {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

auto gelu_derivative(double x) -> double {
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

auto sigmoid_scalar(double x) -> double {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

auto log_sigmoid_scalar(double x) -> double {
    return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
}

auto op_name(OpKind kind) -> const char * {
    switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::add_bias: return "add_bias";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::transpose: return "transpose";
    case OpKind::gelu: return "gelu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::log_sigmoid: return "log_sigmoid";
    case OpKind::exp: return "exp";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::concat_rows: return "concat_rows";
    case OpKind::concat: return "concat";
    case OpKind::slice_rows: return "slice_rows";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::pick: return "pick";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::causal_mask: return "causal_mask";
    }
    return "?";
}

// ----------------------------------------------------------------------------
// forward evaluation

namespace {

auto map_unary(const Tensor &x, double (*f)(double)) -> Tensor {
    Tensor out = x;
    for (auto &v : out.data()) {
        v = f(v);
    }
    return out;
}

void require_same_shape(const char *op, const Tensor &a, const Tensor &b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs "
                             + shape_to_string(b.shape()));
    }
}

void require_rank(const char *op, const Tensor &x, std::size_t lo, std::size_t hi) {
    if (x.rank() < lo || x.rank() > hi) {
        throw DimensionError(std::string(op) + ": unsupported shape " + shape_to_string(x.shape()));
    }
}

auto exp_double(double x) -> double {
    return std::exp(x);
}

// Computes entry.output's value from input values; fills entry.saved.
auto evaluate(TapeEntry &e, std::span<const Tensor *const> in) -> Tensor {
    const char *name = op_name(e.kind);
    switch (e.kind) {
    case OpKind::matmul: {
        const Tensor &a = *in[0];
        const Tensor &b = *in[1];
        if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
            throw DimensionError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by "
                                 + shape_to_string(b.shape()));
        }
        const kernels::GemmDims d{a.shape()[0], a.shape()[1], b.shape()[1]};
        Tensor out = Tensor::zeros({d.m, d.n});
        kernels::gemm(kernels::Transpose::none, d, a.data(), b.data(), out.data());
        return out;
    }
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul: {
        require_same_shape(name, *in[0], *in[1]);
        Tensor out = *in[0];
        auto o = out.data();
        auto b = in[1]->data();
        for (std::size_t i = 0; i < o.size(); ++i) {
            if (e.kind == OpKind::add) {
                o[i] += b[i];
            } else if (e.kind == OpKind::sub) {
                o[i] -= b[i];
            } else {
                o[i] *= b[i];
            }
        }
        return out;
    }
    case OpKind::add_bias: {
        const Tensor &x = *in[0];
        const Tensor &b = *in[1];
        require_rank(name, x, 1, 2);
        if (b.rank() != 1 || b.size() != x.cols()) {
            throw DimensionError("add_bias: bias " + shape_to_string(b.shape()) + " does not match last axis of "
                                 + shape_to_string(x.shape()));
        }
        Tensor out = x;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            for (std::size_t c = 0; c < x.cols(); ++c) {
                out[r * x.cols() + c] += b[c];
            }
        }
        return out;
    }
    case OpKind::scale: {
        Tensor out = *in[0];
        for (auto &v : out.data()) {
            v *= e.scalar;
        }
        return out;
    }
    case OpKind::add_scalar: {
        Tensor out = *in[0];
        for (auto &v : out.data()) {
            v += e.scalar;
        }
        return out;
    }
    case OpKind::transpose: {
        const Tensor &x = *in[0];
        require_rank(name, x, 2, 2);
        const std::size_t r = x.shape()[0];
        const std::size_t c = x.shape()[1];
        Tensor out = Tensor::zeros({c, r});
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                out[j * r + i] = x[i * c + j];
            }
        }
        return out;
    }
    case OpKind::gelu:
        return map_unary(*in[0], gelu_scalar);
    case OpKind::sigmoid:
        return map_unary(*in[0], sigmoid_scalar);
    case OpKind::log_sigmoid:
        return map_unary(*in[0], log_sigmoid_scalar);
    case OpKind::exp:
        return map_unary(*in[0], exp_double);
    case OpKind::log_softmax: {
        const Tensor &x = *in[0];
        require_rank(name, x, 1, 2);
        if (e.axis >= std::max<std::size_t>(x.rank(), 1)) {
            throw DimensionError("log_softmax: axis " + std::to_string(e.axis) + " invalid for "
                                 + shape_to_string(x.shape()));
        }
        const std::size_t rows = x.rows();
        const std::size_t cols = x.cols();
        const bool along_cols = x.rank() == 1 || e.axis == 1;
        const std::size_t lanes = along_cols ? rows : cols;
        const std::size_t len = along_cols ? cols : rows;
        const std::size_t lane_stride = along_cols ? cols : 1;
        const std::size_t step = along_cols ? 1 : cols;
        Tensor out = x;
        for (std::size_t l = 0; l < lanes; ++l) {
            const std::size_t base = l * lane_stride;
            double mx = x[base];
            for (std::size_t i = 1; i < len; ++i) {
                mx = std::max(mx, x[base + i * step]);
            }
            double acc = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                acc += std::exp(x[base + i * step] - mx);
            }
            const double lse = mx + std::log(acc);
            for (std::size_t i = 0; i < len; ++i) {
                out[base + i * step] = x[base + i * step] - lse;
            }
        }
        return out;
    }
    case OpKind::layer_norm: {
        const Tensor &x = *in[0];
        const Tensor &gain = *in[1];
        const Tensor &bias = *in[2];
        require_rank(name, x, 1, 2);
        const std::size_t rows = x.rows();
        const std::size_t n = x.cols();
        if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
            throw DimensionError("layer_norm: gain " + shape_to_string(gain.shape()) + " / bias "
                                 + shape_to_string(bias.shape()) + " do not match " + shape_to_string(x.shape()));
        }
        Tensor xhat = x;
        Tensor inv_std = Tensor::zeros({rows});
        Tensor out = x;
        for (std::size_t r = 0; r < rows; ++r) {
            double mu = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                mu += x[r * n + c];
            }
            mu /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                const double dv = x[r * n + c] - mu;
                var += dv * dv;
            }
            var /= static_cast<double>(n);
            const double denom = var + e.scalar;
            // Zero variance with zero epsilon: the centered row is all zeros.
            const double rs = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
            inv_std[r] = rs;
            for (std::size_t c = 0; c < n; ++c) {
                const double h = (x[r * n + c] - mu) * rs;
                xhat[r * n + c] = h;
                out[r * n + c] = h * gain[c] + bias[c];
            }
        }
        e.saved = {std::move(xhat), std::move(inv_std)};
        return out;
    }
    case OpKind::concat_rows: {
        const std::size_t cols = in[0]->cols();
        std::size_t rows = 0;
        for (const Tensor *t : in) {
            require_rank(name, *t, 1, 2);
            if (t->cols() != cols) {
                throw DimensionError("concat_rows: column mismatch " + shape_to_string(in[0]->shape()) + " vs "
                                     + shape_to_string(t->shape()));
            }
            rows += t->rows();
        }
        std::vector<double> data;
        data.reserve(rows * cols);
        for (const Tensor *t : in) {
            data.insert(data.end(), t->values().begin(), t->values().end());
        }
        return {{rows, cols}, std::move(data)};
    }
    case OpKind::concat: {
        std::vector<double> data;
        for (const Tensor *t : in) {
            data.insert(data.end(), t->values().begin(), t->values().end());
        }
        return Tensor::vector(std::move(data));
    }
    case OpKind::slice_rows: {
        const Tensor &x = *in[0];
        require_rank(name, x, 2, 2);
        const std::size_t begin = e.indices[0];
        const std::size_t count = e.indices[1];
        if (count == 0 || begin + count > x.rows()) {
            throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count)
                                 + ") outside " + shape_to_string(x.shape()));
        }
        const auto first = x.values().begin() + static_cast<std::ptrdiff_t>(begin * x.cols());
        return {{count, x.cols()},
                std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * x.cols()))};
    }
    case OpKind::gather_rows: {
        const Tensor &table = *in[0];
        require_rank(name, table, 2, 2);
        if (e.indices.empty()) {
            throw DimensionError("gather_rows: empty index list");
        }
        const std::size_t cols = table.cols();
        std::vector<double> data;
        data.reserve(e.indices.size() * cols);
        for (auto id : e.indices) {
            if (id >= table.rows()) {
                throw DimensionError("gather_rows: row " + std::to_string(id) + " outside "
                                     + shape_to_string(table.shape()));
            }
            const auto first = table.values().begin() + static_cast<std::ptrdiff_t>(id * cols);
            data.insert(data.end(), first, first + static_cast<std::ptrdiff_t>(cols));
        }
        return {{e.indices.size(), cols}, std::move(data)};
    }
    case OpKind::pick: {
        const Tensor &x = *in[0];
        require_rank(name, x, 2, 2);
        if (e.indices.size() != x.rows()) {
            throw DimensionError("pick: " + std::to_string(e.indices.size()) + " ids for "
                                 + shape_to_string(x.shape()));
        }
        Tensor out = Tensor::zeros({x.rows()});
        for (std::size_t r = 0; r < x.rows(); ++r) {
            if (e.indices[r] >= x.cols()) {
                throw DimensionError("pick: column " + std::to_string(e.indices[r]) + " outside "
                                     + shape_to_string(x.shape()));
            }
            out[r] = x.at(r, e.indices[r]);
        }
        return out;
    }
    case OpKind::sum:
    case OpKind::mean: {
        // Neumaier-compensated so that n equal terms sum to the correctly
        // rounded n * x.
        double acc = 0.0;
        double comp = 0.0;
        for (double v : in[0]->data()) {
            const double t = acc + v;
            comp += std::abs(acc) >= std::abs(v) ? (acc - t) + v : (v - t) + acc;
            acc = t;
        }
        acc += comp;
        if (e.kind == OpKind::mean) {
            acc /= static_cast<double>(in[0]->size());
        }
        return Tensor::scalar(acc);
    }
    case OpKind::causal_mask: {
        const Tensor &x = *in[0];
        if (x.rank() != 2 || x.shape()[0] != x.shape()[1]) {
            throw DimensionError("causal_mask: needs a square matrix, got " + shape_to_string(x.shape()));
        }
        Tensor out = x;
        const std::size_t n = x.rows();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                out[i * n + j] = kMaskedLogit;
            }
        }
        return out;
    }
    }
    throw ContractError("unknown op");
}

void accumulate(std::optional<Tensor> &slot, Tensor g) {
    if (!slot) {
        slot = std::move(g);
        return;
    }
    auto dst = slot->data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

}    // namespace

// ----------------------------------------------------------------------------
// Var / Tape

auto Var::value() const -> const Tensor & {
    return tape_->value(id_);
}

auto Tape::constant(Tensor value) -> Var {
    nodes_.push_back({std::move(value), nullptr, false, true});
    return {this, nodes_.size() - 1};
}

auto Tape::leaf(Tensor value) -> Var {
    nodes_.push_back({std::move(value), nullptr, true, true});
    return {this, nodes_.size() - 1};
}

auto Tape::parameter(const Tensor &value, ParamId id) -> Var {
    if (auto it = param_nodes_.find(id); it != param_nodes_.end()) {
        return {this, it->second};
    }
    nodes_.push_back({Tensor{}, &value, true, true});
    param_nodes_.emplace(id, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
}

auto Tape::value(NodeId id) const -> const Tensor & {
    const Node &n = nodes_.at(id);
    return n.external != nullptr ? *n.external : n.value;
}

auto Tape::record(TapeEntry entry) -> Var {
    std::vector<const Tensor *> in;
    in.reserve(entry.inputs.size());
    bool grad = false;
    for (NodeId id : entry.inputs) {
        in.push_back(&value(id));
        grad = grad || nodes_.at(id).requires_grad;
    }
    Tensor out = evaluate(entry, in);
    nodes_.push_back({std::move(out), nullptr, grad, false});
    entry.output = nodes_.size() - 1;
    entries_.push_back(std::move(entry));
    return {this, nodes_.size() - 1};
}

auto Tape::replay_matches() const -> bool {
    for (const TapeEntry &stored : entries_) {
        TapeEntry copy = stored;
        std::vector<const Tensor *> in;
        for (NodeId id : copy.inputs) {
            in.push_back(&value(id));
        }
        const Tensor again = evaluate(copy, in);
        if (!(again == value(stored.output))) {
            return false;
        }
    }
    return true;
}

auto Tape::backward(Var loss) const -> GradientMap {
    if (loss.tape() != this) {
        throw ContractError("backward: loss belongs to a different tape");
    }
    if (value(loss.id()).size() != 1 || value(loss.id()).rank() > 1) {
        throw ContractError("backward: loss must be a scalar, got shape "
                            + shape_to_string(value(loss.id()).shape()));
    }
    std::vector<std::optional<Tensor>> grads(nodes_.size());
    grads[loss.id()] = Tensor::filled(value(loss.id()).shape(), 1.0);

    auto wants = [&](NodeId id) { return nodes_[id].requires_grad; };

    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        const TapeEntry &e = *it;
        if (!grads[e.output] || !nodes_[e.output].requires_grad) {
            continue;
        }
        const Tensor &g = *grads[e.output];
        const Tensor &out = value(e.output);
        switch (e.kind) {
        case OpKind::matmul: {
            const Tensor &a = value(e.inputs[0]);
            const Tensor &b = value(e.inputs[1]);
            const std::size_t m = a.shape()[0];
            const std::size_t k = a.shape()[1];
            const std::size_t n = b.shape()[1];
            if (wants(e.inputs[0])) {
                Tensor ga = Tensor::zeros({m, k});
                kernels::gemm(kernels::Transpose::rhs, {m, n, k}, g.data(), b.data(), ga.data());
                accumulate(grads[e.inputs[0]], std::move(ga));
            }
            if (wants(e.inputs[1])) {
                Tensor gb = Tensor::zeros({k, n});
                kernels::gemm(kernels::Transpose::lhs, {k, m, n}, a.data(), g.data(), gb.data());
                accumulate(grads[e.inputs[1]], std::move(gb));
            }
            break;
        }
        case OpKind::add:
            if (wants(e.inputs[0])) {
                accumulate(grads[e.inputs[0]], g);
            }
            if (wants(e.inputs[1])) {
                accumulate(grads[e.inputs[1]], g);
            }
            break;
        case OpKind::sub:
            if (wants(e.inputs[0])) {
                accumulate(grads[e.inputs[0]], g);
            }
            if (wants(e.inputs[1])) {
                Tensor ng = g;
                for (auto &v : ng.data()) {
                    v = -v;
                }
                accumulate(grads[e.inputs[1]], std::move(ng));
            }
            break;
        case OpKind::mul:
            for (int side = 0; side < 2; ++side) {
                if (!wants(e.inputs[side])) {
                    continue;
                }
                Tensor gx = g;
                const Tensor &other = value(e.inputs[1 - side]);
                for (std::size_t i = 0; i < gx.size(); ++i) {
                    gx[i] *= other[i];
                }
                accumulate(grads[e.inputs[side]], std::move(gx));
            }
            break;
        case OpKind::add_bias:
            if (wants(e.inputs[0])) {
                accumulate(grads[e.inputs[0]], g);
            }
            if (wants(e.inputs[1])) {
                const std::size_t cols = g.cols();
                Tensor gb = Tensor::zeros({cols});
                for (std::size_t r = 0; r < g.rows(); ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                        gb[c] += g[r * cols + c];
                    }
                }
                accumulate(grads[e.inputs[1]], std::move(gb));
            }
            break;
        case OpKind::scale: {
            Tensor gx = g;
            for (auto &v : gx.data()) {
                v *= e.scalar;
            }
            accumulate(grads[e.inputs[0]], std::move(gx));
            break;
        }
        case OpKind::add_scalar:
            accumulate(grads[e.inputs[0]], g);
            break;
        case OpKind::transpose: {
            const std::size_t r = g.shape()[0];
            const std::size_t c = g.shape()[1];
            Tensor gx = Tensor::zeros({c, r});
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    gx[j * r + i] = g[i * c + j];
                }
            }
            accumulate(grads[e.inputs[0]], std::move(gx));
            break;
        }
        case OpKind::gelu: {
            const Tensor &x = value(e.inputs[0]);
            Tensor gx = g;
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] *= gelu_derivative(x[i]);
            }
            accumulate(grads[e.inputs[0]], std::move(gx));
            break;
        }
        case OpKind::sigmoid: {
            Tensor gx = g;
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] *= out[i] * (1.0 - out[i]);
            }
            accumulate(grads[e.inputs[0]], std::move(gx));
            break;
        }
        case OpKind::log_sigmoid: {
            const Tensor &x = value(e.inputs[0]);
            Tensor gx = g;
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] *= sigmoid_scalar(-x[i]);
            }
            accumulate(grads[e.inputs[0]], std::move(gx));
            break;
        }
        case OpKind::exp: {
            Tensor gx = g;
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] *= out[i];
            }
            accumulate(grads[e.inputs[0]], std::move(gx));
            break;
        }
        case OpKind::log_softmax: {
            const std::size_t rows = out.rows();
            const std::size_t cols = out.cols();
            const bool along_cols = out.rank() == 1 || e.axis == 1;
            const std::size_t lanes = along_cols ? rows : cols;
            const std::size_t len = along_cols ? cols : rows;
            const std::size_t lane_stride = along_cols ? cols : 1;
            const std::size_t step = along_cols ? 1 : cols;
            Tensor gx = g;
            for (std::size_t l = 0; l < lanes; ++l) {
                const std::size_t base = l * lane_stride;
                double gsum = 0.0;
                for (std::size_t i = 0; i < len; ++i) {
                    gsum += g[base + i * step];
                }
                for (std::size_t i = 0; i < len; ++i) {
                    const std::size_t idx = base + i * step;
                    gx[idx] = g[idx] - std::exp(out[idx]) * gsum;
                }
            }
            accumulate(grads[e.inputs[0]], std::move(gx));
            break;
        }
        case OpKind::layer_norm: {
            const Tensor &xhat = e.saved[0];
            const Tensor &inv_std = e.saved[1];
            const Tensor &gain = value(e.inputs[1]);
            const std::size_t rows = xhat.rows();
            const std::size_t n = xhat.cols();
            if (wants(e.inputs[0])) {
                Tensor gx = Tensor::zeros(xhat.shape());
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_gh = 0.0;
                    double mean_ghx = 0.0;
                    for (std::size_t c = 0; c < n; ++c) {
                        const double gh = g[r * n + c] * gain[c];
                        mean_gh += gh;
                        mean_ghx += gh * xhat[r * n + c];
                    }
                    mean_gh /= static_cast<double>(n);
                    mean_ghx /= static_cast<double>(n);
                    for (std::size_t c = 0; c < n; ++c) {
                        const double gh = g[r * n + c] * gain[c];
                        gx[r * n + c] = inv_std[r] * (gh - mean_gh - xhat[r * n + c] * mean_ghx);
                    }
                }
                accumulate(grads[e.inputs[0]], std::move(gx));
            }
            if (wants(e.inputs[1])) {
                Tensor gg = Tensor::zeros({n});
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < n; ++c) {
                        gg[c] += g[r * n + c] * xhat[r * n + c];
                    }
                }
                accumulate(grads[e.inputs[1]], std::move(gg));
            }
            if (wants(e.inputs[2])) {
                Tensor gb = Tensor::zeros({n});
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < n; ++c) {
                        gb[c] += g[r * n + c];
                    }
                }
                accumulate(grads[e.inputs[2]], std::move(gb));
            }
            break;
        }
        case OpKind::concat_rows:
        case OpKind::concat: {
            std::size_t offset = 0;
            for (NodeId id : e.inputs) {
                const Tensor &part = value(id);
                const std::size_t len = part.size();
                if (wants(id)) {
                    const auto first = g.values().begin() + static_cast<std::ptrdiff_t>(offset);
                    accumulate(grads[id],
                               Tensor(part.shape(), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(len))));
                }
                offset += len;
            }
            break;
        }
        case OpKind::slice_rows: {
            const Tensor &x = value(e.inputs[0]);
            Tensor gx = Tensor::zeros(x.shape());
            std::copy(g.values().begin(), g.values().end(),
                      gx.data().begin() + static_cast<std::ptrdiff_t>(e.indices[0] * x.cols()));
            accumulate(grads[e.inputs[0]], std::move(gx));
            break;
        }
        case OpKind::gather_rows: {
            const Tensor &table = value(e.inputs[0]);
            const std::size_t cols = table.cols();
            Tensor gt = Tensor::zeros(table.shape());
            for (std::size_t r = 0; r < e.indices.size(); ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    gt[e.indices[r] * cols + c] += g[r * cols + c];
                }
            }
            accumulate(grads[e.inputs[0]], std::move(gt));
            break;
        }
        case OpKind::pick: {
            const Tensor &x = value(e.inputs[0]);
            Tensor gx = Tensor::zeros(x.shape());
            for (std::size_t r = 0; r < e.indices.size(); ++r) {
                gx.at(r, e.indices[r]) += g[r];
            }
            accumulate(grads[e.inputs[0]], std::move(gx));
            break;
        }
        case OpKind::sum:
        case OpKind::mean: {
            const Tensor &x = value(e.inputs[0]);
            double gv = g.item();
            if (e.kind == OpKind::mean) {
                gv /= static_cast<double>(x.size());
            }
            accumulate(grads[e.inputs[0]], Tensor::filled(x.shape(), gv));
            break;
        }
        case OpKind::causal_mask: {
            Tensor gx = g;
            const std::size_t n = gx.rows();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) {
                    gx[i * n + j] = 0.0;
                }
            }
            accumulate(grads[e.inputs[0]], std::move(gx));
            break;
        }
        }
    }

    GradientMap result;
    for (NodeId id = 0; id < nodes_.size(); ++id) {
        if (!nodes_[id].is_leaf || !nodes_[id].requires_grad) {
            continue;
        }
        result.by_node_.emplace(id, grads[id] ? std::move(*grads[id]) : Tensor::zeros(value(id).shape()));
    }
    result.param_nodes_ = param_nodes_;
    return result;
}

// ----------------------------------------------------------------------------
// GradientMap

auto GradientMap::operator[](Var leaf) const -> const Tensor & {
    auto it = by_node_.find(leaf.id());
    if (it == by_node_.end()) {
        throw ContractError("no gradient recorded for node " + std::to_string(leaf.id()));
    }
    return it->second;
}

auto GradientMap::param(ParamId id) const -> const Tensor * {
    auto it = param_nodes_.find(id);
    if (it == param_nodes_.end()) {
        return nullptr;
    }
    return &by_node_.at(it->second);
}

auto GradientMap::to_vector(const ParameterSet &params) const -> std::vector<Tensor> {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (ParamId id = 0; id < params.size(); ++id) {
        const Tensor *g = param(id);
        out.push_back(g != nullptr ? *g : Tensor::zeros(params[id].shape()));
    }
    return out;
}

// ----------------------------------------------------------------------------
// op builders

namespace {

auto make_entry(OpKind kind, std::vector<NodeId> inputs) -> TapeEntry {
    TapeEntry e;
    e.kind = kind;
    e.inputs = std::move(inputs);
    return e;
}

auto same_tape(Var a, Var b) -> Tape * {
    if (a.tape() != b.tape()) {
        throw ContractError("operands live on different tapes");
    }
    return a.tape();
}

auto unary(OpKind kind, Var x) -> Var {
    return x.tape()->record(make_entry(kind, {x.id()}));
}

auto binary(OpKind kind, Var a, Var b) -> Var {
    return same_tape(a, b)->record(make_entry(kind, {a.id(), b.id()}));
}

}    // namespace

auto matmul(Var a, Var b) -> Var {
    return binary(OpKind::matmul, a, b);
}
auto add(Var a, Var b) -> Var {
    return binary(OpKind::add, a, b);
}
auto sub(Var a, Var b) -> Var {
    return binary(OpKind::sub, a, b);
}
auto mul(Var a, Var b) -> Var {
    return binary(OpKind::mul, a, b);
}
auto add_bias(Var x, Var bias) -> Var {
    return binary(OpKind::add_bias, x, bias);
}

auto scale(Var x, double factor) -> Var {
    TapeEntry e = make_entry(OpKind::scale, {x.id()});
    e.scalar = factor;
    return x.tape()->record(std::move(e));
}

auto add_scalar(Var x, double value) -> Var {
    TapeEntry e = make_entry(OpKind::add_scalar, {x.id()});
    e.scalar = value;
    return x.tape()->record(std::move(e));
}

auto transpose(Var x) -> Var {
    return unary(OpKind::transpose, x);
}
auto gelu(Var x) -> Var {
    return unary(OpKind::gelu, x);
}
auto sigmoid(Var x) -> Var {
    return unary(OpKind::sigmoid, x);
}
auto log_sigmoid(Var x) -> Var {
    return unary(OpKind::log_sigmoid, x);
}
auto exp(Var x) -> Var {
    return unary(OpKind::exp, x);
}

auto log_softmax(Var x, std::size_t axis) -> Var {
    TapeEntry e = make_entry(OpKind::log_softmax, {x.id()});
    e.axis = axis;
    return x.tape()->record(std::move(e));
}

auto layer_norm(Var x, Var gain, Var bias, double epsilon) -> Var {
    same_tape(x, gain);
    same_tape(x, bias);
    TapeEntry e = make_entry(OpKind::layer_norm, {x.id(), gain.id(), bias.id()});
    e.scalar = epsilon;
    return x.tape()->record(std::move(e));
}

auto concat_rows(std::span<const Var> parts) -> Var {
    if (parts.empty()) {
        throw DimensionError("concat_rows: no inputs");
    }
    TapeEntry e = make_entry(OpKind::concat_rows, {});
    for (const Var &p : parts) {
        same_tape(parts[0], p);
        e.inputs.push_back(p.id());
    }
    return parts[0].tape()->record(std::move(e));
}

auto concat(std::span<const Var> parts) -> Var {
    if (parts.empty()) {
        throw DimensionError("concat: no inputs");
    }
    TapeEntry e = make_entry(OpKind::concat, {});
    for (const Var &p : parts) {
        same_tape(parts[0], p);
        e.inputs.push_back(p.id());
    }
    return parts[0].tape()->record(std::move(e));
}

auto slice_rows(Var x, std::size_t begin, std::size_t count) -> Var {
    TapeEntry e = make_entry(OpKind::slice_rows, {x.id()});
    e.indices = {begin, count};
    return x.tape()->record(std::move(e));
}

auto gather_rows(Var table, std::span<const std::size_t> ids) -> Var {
    TapeEntry e = make_entry(OpKind::gather_rows, {table.id()});
    e.indices.assign(ids.begin(), ids.end());
    return table.tape()->record(std::move(e));
}

auto pick(Var x, std::span<const std::size_t> ids) -> Var {
    TapeEntry e = make_entry(OpKind::pick, {x.id()});
    e.indices.assign(ids.begin(), ids.end());
    return x.tape()->record(std::move(e));
}

auto sum(Var x) -> Var {
    return unary(OpKind::sum, x);
}
auto mean(Var x) -> Var {
    return unary(OpKind::mean, x);
}
auto causal_mask(Var x) -> Var {
    return unary(OpKind::causal_mask, x);
}

}    // namespace stylealign
