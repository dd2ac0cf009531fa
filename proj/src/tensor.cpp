#include "fnsda/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "fnsda/errors.hpp"
#include "fnsda/fft.hpp"

namespace fnsda {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::shared_ptr<Node> creator;

    std::span<double> grad_buffer() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

class BackwardContext;
using BackwardFn = std::function<void(BackwardContext&)>;

struct Node {
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::vector<std::weak_ptr<TensorImpl>> outputs;
    BackwardFn fn;
};

class BackwardContext {
public:
    explicit BackwardContext(Node& node) : node_(node) {
        locked_.reserve(node.outputs.size());
        for (const auto& w : node.outputs) locked_.push_back(w.lock());
    }

    /// Empty when the output received no gradient.
    std::span<const double> out_grad(std::size_t i) const {
        const auto& p = locked_[i];
        if (!p || p->grad.empty()) return {};
        return p->grad;
    }
    bool any_out_grad() const {
        for (std::size_t i = 0; i < locked_.size(); ++i)
            if (!out_grad(i).empty()) return true;
        return false;
    }

    /// Empty when the input does not take gradients.
    std::span<double> in_grad(std::size_t i) {
        auto& p = node_.inputs[i];
        if (!p->requires_grad) return {};
        return p->grad_buffer();
    }

private:
    Node& node_;
    std::vector<std::shared_ptr<TensorImpl>> locked_;
};

struct Access {
    static Tensor wrap(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }
};

}  // namespace detail

using detail::BackwardContext;
using detail::TensorImpl;

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<std::uint64_t> g_next_node_id{1};

Tensor make_tensor(Shape shape, std::vector<double> values) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    return detail::Access::wrap(std::move(impl));
}

/// Attaches a backward rule to freshly created outputs when any input needs
/// gradients and recording is on.
void record(std::initializer_list<const Tensor*> inputs, std::initializer_list<Tensor*> outputs,
            detail::BackwardFn fn) {
    if (!t_grad_enabled) return;
    bool needed = false;
    for (const Tensor* t : inputs) needed = needed || (t->defined() && t->requires_grad());
    if (!needed) return;

    auto node = std::make_shared<detail::Node>();
    node->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    for (const Tensor* t : inputs) {
        // Undefined optional inputs are represented by a constant stub so that
        // input indices stay stable inside backward rules.
        node->inputs.push_back(t->defined() ? t->impl() : std::make_shared<TensorImpl>());
    }
    for (Tensor* t : outputs) {
        node->outputs.push_back(t->impl());
        t->impl()->requires_grad = true;
        t->impl()->creator = node;
    }
    node->fn = std::move(fn);
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ShapeError(message);
}

struct AxisLayout {
    std::size_t outer;
    std::size_t n;
    std::size_t inner;
};

AxisLayout axis_layout(const Shape& shape, std::size_t axis) {
    require(axis < shape.size(), "axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
    AxisLayout l{1, shape[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
    return l;
}

Shape with_axis(Shape shape, std::size_t axis, std::size_t len) {
    shape[axis] = len;
    return shape;
}

// ---------------------------------------------------------------------------
// Elementwise helpers

enum class BinaryKind { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind) {
    Shape shape;
    if (a.shape() == b.shape() || b.size() == 1) {
        shape = a.shape();
    } else if (a.size() == 1) {
        shape = b.shape();
    } else {
        throw ShapeError("elementwise shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const std::size_t n = shape_numel(shape);
    const bool a_scalar = a.size() == 1 && n != 1;
    const bool b_scalar = b.size() == 1 && n != 1;
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = av[a_scalar ? 0 : i];
        const double y = bv[b_scalar ? 0 : i];
        switch (kind) {
            case BinaryKind::add: out[i] = x + y; break;
            case BinaryKind::sub: out[i] = x - y; break;
            case BinaryKind::mul: out[i] = x * y; break;
        }
    }
    Tensor result = make_tensor(std::move(shape), std::move(out));
    record({&a, &b}, {&result}, [a, b, kind, a_scalar, b_scalar, n](BackwardContext& ctx) {
        const auto g = ctx.out_grad(0);
        if (g.empty()) return;
        auto ga = ctx.in_grad(0);
        auto gb = ctx.in_grad(1);
        const auto av = a.values();
        const auto bv = b.values();
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ia = a_scalar ? 0 : i;
            const std::size_t ib = b_scalar ? 0 : i;
            switch (kind) {
                case BinaryKind::add:
                    if (!ga.empty()) ga[ia] += g[i];
                    if (!gb.empty()) gb[ib] += g[i];
                    break;
                case BinaryKind::sub:
                    if (!ga.empty()) ga[ia] += g[i];
                    if (!gb.empty()) gb[ib] -= g[i];
                    break;
                case BinaryKind::mul:
                    if (!ga.empty()) ga[ia] += g[i] * bv[ib];
                    if (!gb.empty()) gb[ib] += g[i] * av[ia];
                    break;
            }
        }
    });
    return result;
}

/// Pointwise map with derivative computed from (x, y).
template <class F, class D>
Tensor unary(const Tensor& x, F f, D df) {
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    Tensor result = make_tensor(x.shape(), std::move(out));
    if (t_grad_enabled && x.requires_grad()) {
        std::vector<double> y(result.values().begin(), result.values().end());
        record({&x}, {&result}, [x, y = std::move(y), df](BackwardContext& ctx) {
            const auto g = ctx.out_grad(0);
            auto gx = ctx.in_grad(0);
            if (g.empty() || gx.empty()) return;
            const auto xv = x.values();
            for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * df(xv[i], y[i]);
        });
    }
    return result;
}

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Spectral line helpers

using dft::cplx;

template <class F>
void for_each_line(const AxisLayout& in, F f) {
    for (std::size_t o = 0; o < in.outer; ++o)
        for (std::size_t i = 0; i < in.inner; ++i) f(o, i);
}

void check_pow2(std::size_t n) {
    if (!dft::is_power_of_two(n)) {
        throw ConfigError("spectral axis length must be a power of two, got " + std::to_string(n));
    }
}

void check_complex(const ComplexTensor& x) {
    require(x.re.defined() && x.im.defined() && x.re.shape() == x.im.shape(),
            "complex tensor parts must share shape");
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape) {
    const std::size_t n = shape_numel(shape);
    *this = make_tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
    if (values.size() != shape_numel(shape)) {
        throw ShapeError("tensor of shape " + shape_str(shape) + " given " + std::to_string(values.size()) +
                         " values");
    }
    *this = make_tensor(std::move(shape), std::move(values));
}

Tensor Tensor::scalar(double value) { return make_tensor({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    Tensor t(std::move(shape), std::move(values));
    t.impl_->requires_grad = true;
    return t;
}

const Shape& Tensor::shape() const {
    if (!impl_) throw UsageError("undefined tensor");
    return impl_->shape;
}

std::size_t Tensor::size() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::values() const {
    if (!impl_) throw UsageError("undefined tensor");
    return impl_->data;
}

std::span<double> Tensor::mutable_values() {
    if (!impl_) throw UsageError("undefined tensor");
    if (impl_->creator) throw UsageError("cannot mutate the output of a recorded op");
    return impl_->data;
}

double Tensor::item() const {
    if (size() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    if (!impl_) throw UsageError("undefined tensor");
    if (impl_->creator) throw UsageError("requires_grad is fixed on op outputs");
    impl_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return impl_ && !impl_->creator; }

std::span<const double> Tensor::grad() const {
    if (!impl_) throw UsageError("undefined tensor");
    return impl_->grad_buffer();
}

void Tensor::zero_grad() {
    if (impl_) impl_->grad.assign(impl_->data.size(), 0.0);
}

Tensor Tensor::detach() const {
    return make_tensor(shape(), std::vector<double>(values().begin(), values().end()));
}

// ---------------------------------------------------------------------------
// Graph control

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw UsageError("backward requires a scalar loss, got shape " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    auto& root = *loss.impl();
    if (!root.requires_grad) return;
    root.grad_buffer()[0] += 1.0;
    if (!root.creator) return;

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{root.creator.get()};
    seen.insert(root.creator.get());
    while (!stack.empty()) {
        detail::Node* node = stack.back();
        stack.pop_back();
        order.push_back(node);
        for (const auto& in : node->inputs) {
            detail::Node* parent = in->creator.get();
            if (parent && seen.insert(parent).second) stack.push_back(parent);
        }
    }
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->id > b->id; });
    for (detail::Node* node : order) {
        BackwardContext ctx(*node);
        if (ctx.any_out_grad()) node->fn(ctx);
    }
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::mul); }

Tensor affine(const Tensor& x, double a, double b) {
    return unary(x, [a, b](double v) { return a * v + b; }, [a](double, double) { return a; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    return unary(
        x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor square(const Tensor& x) {
    return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
    return unary(
        x, [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor sigmoid(const Tensor& x) {
    return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor hard_sigmoid(const Tensor& x) {
    return unary(
        x, [](double v) { return std::clamp(v / 6.0 + 0.5, 0.0, 1.0); },
        [](double v, double) { return (v > -3.0 && v < 3.0) ? 1.0 / 6.0 : 0.0; });
}

Tensor relu(const Tensor& x) {
    return unary(x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor swish(const Tensor& x, const Tensor& beta) {
    require(beta.size() == 1, "swish slope must have size 1, got shape " + shape_str(beta.shape()));
    const double b = beta.item();
    const auto xv = x.values();
    const std::size_t n = xv.size();
    std::vector<double> out(n);
    std::vector<double> sig(n);
    for (std::size_t i = 0; i < n; ++i) {
        sig[i] = stable_sigmoid(b * xv[i]);
        out[i] = xv[i] * sig[i];
    }
    Tensor result = make_tensor(x.shape(), std::move(out));
    record({&x, &beta}, {&result}, [x, b, sig = std::move(sig)](BackwardContext& ctx) {
        const auto g = ctx.out_grad(0);
        auto gx = ctx.in_grad(0);
        auto gb = ctx.in_grad(1);
        const auto xv = x.values();
        double acc_b = 0.0;
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double s = sig[i];
            const double ds = s * (1.0 - s);
            if (!gx.empty()) gx[i] += g[i] * (s + b * xv[i] * ds);
            acc_b += g[i] * xv[i] * xv[i] * ds;
        }
        if (!gb.empty()) gb[0] += acc_b;
    });
    return result;
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.shape()[1] == b.shape()[0],
            "matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < m; ++j) out[i * m + j] += aip * bv[p * m + j];
        }
    Tensor result = make_tensor({n, m}, std::move(out));
    record({&a, &b}, {&result}, [a, b, n, k, m](BackwardContext& ctx) {
        const auto g = ctx.out_grad(0);
        auto ga = ctx.in_grad(0);
        auto gb = ctx.in_grad(1);
        const auto av = a.values();
        const auto bv = b.values();
        if (!ga.empty())
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * bv[p * m + j];
                    ga[i * k + p] += acc;
                }
        if (!gb.empty())
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = av[i * k + p];
                    for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += aip * g[i * m + j];
                }
    });
    return result;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require(x.rank() >= 1 && weight.rank() == 2 && weight.shape()[1] == x.shape().back(),
            "linear shape mismatch: input " + shape_str(x.shape()) + ", weight " + shape_str(weight.shape()));
    const std::size_t in = weight.shape()[1], out_dim = weight.shape()[0];
    if (bias.defined()) {
        require(bias.size() == out_dim, "linear bias " + shape_str(bias.shape()) + " does not match weight " +
                                            shape_str(weight.shape()));
    }
    const std::size_t rows = x.size() / in;
    const auto xv = x.values();
    const auto wv = weight.values();
    std::vector<double> out(rows * out_dim);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * in;
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double* wo = wv.data() + o * in;
            double acc = bias.defined() ? bias.values()[o] : 0.0;
            for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wo[i];
            out[r * out_dim + o] = acc;
        }
    }
    Shape shape = x.shape();
    shape.back() = out_dim;
    Tensor result = make_tensor(std::move(shape), std::move(out));
    record({&x, &weight, &bias}, {&result}, [x, weight, rows, in, out_dim](BackwardContext& ctx) {
        const auto g = ctx.out_grad(0);
        auto gx = ctx.in_grad(0);
        auto gw = ctx.in_grad(1);
        auto gbias = ctx.in_grad(2);
        const auto xv = x.values();
        const auto wv = weight.values();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = xv.data() + r * in;
            for (std::size_t o = 0; o < out_dim; ++o) {
                const double go = g[r * out_dim + o];
                if (go == 0.0) continue;
                const double* wo = wv.data() + o * in;
                if (!gx.empty()) {
                    double* gxr = gx.data() + r * in;
                    for (std::size_t i = 0; i < in; ++i) gxr[i] += go * wo[i];
                }
                if (!gw.empty()) {
                    double* gwo = gw.data() + o * in;
                    for (std::size_t i = 0; i < in; ++i) gwo[i] += go * xr[i];
                }
                if (!gbias.empty()) gbias[o] += go;
            }
        }
    });
    return result;
}

Tensor contract(const Tensor& a, const Tensor& b, std::size_t axes) {
    require(axes <= a.rank() && axes <= b.rank(), "contract: too many axes for " + shape_str(a.shape()) + " and " +
                                                      shape_str(b.shape()));
    const std::size_t lead = a.rank() - axes;
    for (std::size_t i = 0; i < axes; ++i) {
        require(a.shape()[lead + i] == b.shape()[i],
                "contract shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Shape shape(a.shape().begin(), a.shape().begin() + static_cast<std::ptrdiff_t>(lead));
    shape.insert(shape.end(), b.shape().begin() + static_cast<std::ptrdiff_t>(axes), b.shape().end());
    std::size_t k = 1;
    for (std::size_t i = 0; i < axes; ++i) k *= b.shape()[i];
    const std::size_t m = a.size() / k;
    const std::size_t n = b.size() / k;
    Tensor a2 = reshape(a, {m, k});
    Tensor b2 = reshape(b, {k, n});
    return reshape(matmul(a2, b2), shape);
}

Tensor sum(const Tensor& x) {
    const auto xv = x.values();
    double acc = 0.0;
    for (double v : xv) acc += v;
    Tensor result = make_tensor({}, {acc});
    record({&x}, {&result}, [](BackwardContext& ctx) {
        const double g = ctx.out_grad(0)[0];
        for (double& v : ctx.in_grad(0)) v += g;
    });
    return result;
}

Tensor mean(const Tensor& x) {
    require(x.size() > 0, "mean of an empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& x, Shape shape) {
    require(shape_numel(shape) == x.size(),
            "cannot reshape " + shape_str(x.shape()) + " into " + shape_str(shape));
    Tensor result = make_tensor(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
    record({&x}, {&result}, [](BackwardContext& ctx) {
        const auto g = ctx.out_grad(0);
        auto gx = ctx.in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    return result;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
    const std::size_t r = x.rank();
    require(perm.size() == r, "permute: permutation rank does not match " + shape_str(x.shape()));
    std::vector<bool> used(r, false);
    for (std::size_t p : perm) {
        require(p < r && !used[p], "permute: invalid permutation");
        used[p] = true;
    }
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.shape()[perm[i]];
    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.shape()[i];
    // Source offset for every destination element.
    const std::size_t n = x.size();
    std::vector<std::size_t> src(n);
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t flat = 0; flat < n; ++flat) {
        std::size_t off = 0;
        for (std::size_t d = 0; d < r; ++d) off += idx[d] * in_strides[perm[d]];
        src[flat] = off;
        for (std::size_t d = r; d-- > 0;) {
            if (++idx[d] < out_shape[d]) break;
            idx[d] = 0;
        }
    }
    const auto xv = x.values();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = xv[src[i]];
    Tensor result = make_tensor(std::move(out_shape), std::move(out));
    record({&x}, {&result}, [src = std::move(src)](BackwardContext& ctx) {
        const auto g = ctx.out_grad(0);
        auto gx = ctx.in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[src[i]] += g[i];
    });
    return result;
}

Tensor take(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& index) {
    const AxisLayout l = axis_layout(x.shape(), axis);
    for (std::size_t k : index) require(k < l.n, "take: index out of range for " + shape_str(x.shape()));
    const std::size_t m = index.size();
    const auto xv = x.values();
    std::vector<double> out(l.outer * m * l.inner);
    for (std::size_t o = 0; o < l.outer; ++o)
        for (std::size_t j = 0; j < m; ++j) {
            const double* s = xv.data() + (o * l.n + index[j]) * l.inner;
            double* d = out.data() + (o * m + j) * l.inner;
            std::copy(s, s + l.inner, d);
        }
    Tensor result = make_tensor(with_axis(x.shape(), axis, m), std::move(out));
    record({&x}, {&result}, [l, index, m](BackwardContext& ctx) {
        const auto g = ctx.out_grad(0);
        auto gx = ctx.in_grad(0);
        for (std::size_t o = 0; o < l.outer; ++o)
            for (std::size_t j = 0; j < m; ++j) {
                const double* s = g.data() + (o * m + j) * l.inner;
                double* d = gx.data() + (o * l.n + index[j]) * l.inner;
                for (std::size_t i = 0; i < l.inner; ++i) d[i] += s[i];
            }
    });
    return result;
}

Tensor put(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& index, std::size_t n) {
    const AxisLayout l = axis_layout(x.shape(), axis);
    require(index.size() == l.n, "put: index count does not match axis of " + shape_str(x.shape()));
    for (std::size_t k : index) require(k < n, "put: index out of range");
    const auto xv = x.values();
    std::vector<double> out(l.outer * n * l.inner, 0.0);
    for (std::size_t o = 0; o < l.outer; ++o)
        for (std::size_t j = 0; j < l.n; ++j) {
            const double* s = xv.data() + (o * l.n + j) * l.inner;
            double* d = out.data() + (o * n + index[j]) * l.inner;
            for (std::size_t i = 0; i < l.inner; ++i) d[i] += s[i];
        }
    Tensor result = make_tensor(with_axis(x.shape(), axis, n), std::move(out));
    record({&x}, {&result}, [l, index, n](BackwardContext& ctx) {
        const auto g = ctx.out_grad(0);
        auto gx = ctx.in_grad(0);
        for (std::size_t o = 0; o < l.outer; ++o)
            for (std::size_t j = 0; j < l.n; ++j) {
                const double* s = g.data() + (o * n + index[j]) * l.inner;
                double* d = gx.data() + (o * l.n + j) * l.inner;
                for (std::size_t i = 0; i < l.inner; ++i) d[i] += s[i];
            }
    });
    return result;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
    require(a.rank() == b.rank(), "concat rank mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    for (std::size_t d = 0; d < a.rank(); ++d) {
        require(d == axis || a.shape()[d] == b.shape()[d],
                "concat shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const AxisLayout la = axis_layout(a.shape(), axis);
    const AxisLayout lb = axis_layout(b.shape(), axis);
    const std::size_t na = la.n * la.inner, nb = lb.n * lb.inner;
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    for (std::size_t o = 0; o < la.outer; ++o) {
        out.insert(out.end(), av.begin() + static_cast<std::ptrdiff_t>(o * na),
                   av.begin() + static_cast<std::ptrdiff_t>((o + 1) * na));
        out.insert(out.end(), bv.begin() + static_cast<std::ptrdiff_t>(o * nb),
                   bv.begin() + static_cast<std::ptrdiff_t>((o + 1) * nb));
    }
    Tensor result = make_tensor(with_axis(a.shape(), axis, la.n + lb.n), std::move(out));
    record({&a, &b}, {&result}, [outer = la.outer, na, nb](BackwardContext& ctx) {
        const auto g = ctx.out_grad(0);
        auto ga = ctx.in_grad(0);
        auto gb = ctx.in_grad(1);
        for (std::size_t o = 0; o < outer; ++o) {
            const double* s = g.data() + o * (na + nb);
            if (!ga.empty())
                for (std::size_t i = 0; i < na; ++i) ga[o * na + i] += s[i];
            if (!gb.empty())
                for (std::size_t i = 0; i < nb; ++i) gb[o * nb + i] += s[na + i];
        }
    });
    return result;
}

Tensor mul_axis(const Tensor& x, const Tensor& v, std::size_t axis) {
    const AxisLayout l = axis_layout(x.shape(), axis);
    require(v.size() == l.n, "mul_axis: vector " + shape_str(v.shape()) + " does not match axis " +
                                 std::to_string(axis) + " of " + shape_str(x.shape()));
    const auto xv = x.values();
    const auto vv = v.values();
    std::vector<double> out(xv.size());
    for (std::size_t o = 0; o < l.outer; ++o)
        for (std::size_t k = 0; k < l.n; ++k) {
            const std::size_t base = (o * l.n + k) * l.inner;
            for (std::size_t i = 0; i < l.inner; ++i) out[base + i] = xv[base + i] * vv[k];
        }
    Tensor result = make_tensor(x.shape(), std::move(out));
    record({&x, &v}, {&result}, [x, v, l](BackwardContext& ctx) {
        const auto g = ctx.out_grad(0);
        auto gx = ctx.in_grad(0);
        auto gv = ctx.in_grad(1);
        const auto xv = x.values();
        const auto vv = v.values();
        for (std::size_t o = 0; o < l.outer; ++o)
            for (std::size_t k = 0; k < l.n; ++k) {
                const std::size_t base = (o * l.n + k) * l.inner;
                double acc = 0.0;
                for (std::size_t i = 0; i < l.inner; ++i) {
                    if (!gx.empty()) gx[base + i] += g[base + i] * vv[k];
                    acc += g[base + i] * xv[base + i];
                }
                if (!gv.empty()) gv[k] += acc;
            }
    });
    return result;
}

// ---------------------------------------------------------------------------
// Spectral

ComplexTensor rfft(const Tensor& x, std::size_t axis) {
    const AxisLayout l = axis_layout(x.shape(), axis);
    check_pow2(l.n);
    const std::size_t m = l.n / 2 + 1;
    const auto xv = x.values();
    std::vector<double> re(l.outer * m * l.inner), im(re.size());
    std::vector<cplx> buf(l.n);
    for_each_line(l, [&](std::size_t o, std::size_t i) {
        for (std::size_t t = 0; t < l.n; ++t) buf[t] = cplx(xv[(o * l.n + t) * l.inner + i], 0.0);
        dft::transform(buf, false);
        for (std::size_t k = 0; k < m; ++k) {
            re[(o * m + k) * l.inner + i] = buf[k].real();
            im[(o * m + k) * l.inner + i] = buf[k].imag();
        }
    });
    const Shape shape = with_axis(x.shape(), axis, m);
    ComplexTensor result{make_tensor(shape, std::move(re)), make_tensor(shape, std::move(im))};
    record({&x}, {&result.re, &result.im}, [l, m](BackwardContext& ctx) {
        auto gx = ctx.in_grad(0);
        const auto gre = ctx.out_grad(0);
        const auto gim = ctx.out_grad(1);
        std::vector<cplx> buf(l.n);
        for_each_line(l, [&](std::size_t o, std::size_t i) {
            std::fill(buf.begin(), buf.end(), cplx(0.0, 0.0));
            for (std::size_t k = 0; k < m; ++k) {
                const std::size_t idx = (o * m + k) * l.inner + i;
                buf[k] = cplx(gre.empty() ? 0.0 : gre[idx], gim.empty() ? 0.0 : gim[idx]);
            }
            dft::transform(buf, true);
            for (std::size_t t = 0; t < l.n; ++t) gx[(o * l.n + t) * l.inner + i] += buf[t].real();
        });
    });
    return result;
}

Tensor irfft(const ComplexTensor& x, std::size_t axis, std::size_t n) {
    check_complex(x);
    check_pow2(n);
    const AxisLayout l = axis_layout(x.shape(), axis);
    const std::size_t m = n / 2 + 1;
    require(l.n == m, "irfft: axis length " + std::to_string(l.n) + " does not match output length " +
                          std::to_string(n));
    const auto re = x.re.values();
    const auto im = x.im.values();
    std::vector<double> out(l.outer * n * l.inner);
    std::vector<cplx> buf(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    for_each_line(l, [&](std::size_t o, std::size_t i) {
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t idx = (o * m + k) * l.inner + i;
            buf[k] = cplx(re[idx], im[idx]);
        }
        for (std::size_t k = 1; k < (n + 1) / 2; ++k) buf[n - k] = std::conj(buf[k]);
        dft::transform(buf, true);
        for (std::size_t t = 0; t < n; ++t) out[(o * n + t) * l.inner + i] = buf[t].real() * inv_n;
    });
    Tensor result = make_tensor(with_axis(x.shape(), axis, n), std::move(out));
    record({&x.re, &x.im}, {&result}, [l, m, n, inv_n](BackwardContext& ctx) {
        const auto g = ctx.out_grad(0);
        auto gre = ctx.in_grad(0);
        auto gim = ctx.in_grad(1);
        std::vector<cplx> buf(n);
        for_each_line(l, [&](std::size_t o, std::size_t i) {
            for (std::size_t t = 0; t < n; ++t) buf[t] = cplx(g[(o * n + t) * l.inner + i], 0.0);
            dft::transform(buf, false);
            for (std::size_t k = 0; k < m; ++k) {
                const double c = (k == 0 || 2 * k == n) ? inv_n : 2.0 * inv_n;
                const std::size_t idx = (o * m + k) * l.inner + i;
                if (!gre.empty()) gre[idx] += c * buf[k].real();
                if (!gim.empty()) gim[idx] += c * buf[k].imag();
            }
        });
    });
    return result;
}

namespace {

// Complex-to-complex transform along an axis. `inverse` selects the +i sign and
// 1/N normalization; the backward rule is the adjoint of the forward map.
ComplexTensor complex_transform(const ComplexTensor& x, std::size_t axis, bool inverse) {
    check_complex(x);
    const AxisLayout l = axis_layout(x.shape(), axis);
    check_pow2(l.n);
    const double norm = inverse ? 1.0 / static_cast<double>(l.n) : 1.0;
    const auto re = x.re.values();
    const auto im = x.im.values();
    std::vector<double> ore(re.size()), oim(im.size());
    std::vector<cplx> buf(l.n);
    for_each_line(l, [&](std::size_t o, std::size_t i) {
        for (std::size_t t = 0; t < l.n; ++t) {
            const std::size_t idx = (o * l.n + t) * l.inner + i;
            buf[t] = cplx(re[idx], im[idx]);
        }
        dft::transform(buf, inverse);
        for (std::size_t t = 0; t < l.n; ++t) {
            const std::size_t idx = (o * l.n + t) * l.inner + i;
            ore[idx] = buf[t].real() * norm;
            oim[idx] = buf[t].imag() * norm;
        }
    });
    ComplexTensor result{make_tensor(x.shape(), std::move(ore)), make_tensor(x.shape(), std::move(oim))};
    record({&x.re, &x.im}, {&result.re, &result.im}, [l, inverse, norm](BackwardContext& ctx) {
        const auto g_re = ctx.out_grad(0);
        const auto g_im = ctx.out_grad(1);
        auto gx_re = ctx.in_grad(0);
        auto gx_im = ctx.in_grad(1);
        std::vector<cplx> buf(l.n);
        for_each_line(l, [&](std::size_t o, std::size_t i) {
            for (std::size_t t = 0; t < l.n; ++t) {
                const std::size_t idx = (o * l.n + t) * l.inner + i;
                buf[t] = cplx(g_re.empty() ? 0.0 : g_re[idx], g_im.empty() ? 0.0 : g_im[idx]);
            }
            dft::transform(buf, !inverse);
            for (std::size_t t = 0; t < l.n; ++t) {
                const std::size_t idx = (o * l.n + t) * l.inner + i;
                if (!gx_re.empty()) gx_re[idx] += buf[t].real() * norm;
                if (!gx_im.empty()) gx_im[idx] += buf[t].imag() * norm;
            }
        });
    });
    return result;
}

}  // namespace

ComplexTensor fft(const ComplexTensor& x, std::size_t axis) { return complex_transform(x, axis, false); }
ComplexTensor ifft(const ComplexTensor& x, std::size_t axis) { return complex_transform(x, axis, true); }

ComplexTensor fft_2d(const Tensor& x, std::size_t axis0, std::size_t axis1) {
    return fft(rfft(x, axis1), axis0);
}

Tensor ifft_2d(const ComplexTensor& x, std::size_t axis0, std::size_t axis1, std::size_t n1) {
    return irfft(ifft(x, axis0), axis1, n1);
}

ComplexTensor complex_mode_mul(const ComplexTensor& weights, const ComplexTensor& modes) {
    check_complex(weights);
    check_complex(modes);
    const Shape& ws = weights.shape();
    const Shape& xs = modes.shape();
    require(ws.size() == 3 && xs.size() >= 2 && xs[xs.size() - 2] == ws[0] && xs.back() == ws[2],
            "complex_mode_mul shape mismatch: weights " + shape_str(ws) + ", modes " + shape_str(xs));
    const std::size_t p_count = ws[0], c_out = ws[1], c_in = ws[2];
    const std::size_t batch = modes.re.size() / (p_count * c_in);
    const auto wr = weights.re.values();
    const auto wi = weights.im.values();
    const auto xr = modes.re.values();
    const auto xi = modes.im.values();
    std::vector<double> yr(batch * p_count * c_out), yi(yr.size());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < p_count; ++p) {
            const std::size_t xoff = (b * p_count + p) * c_in;
            const std::size_t yoff = (b * p_count + p) * c_out;
            for (std::size_t o = 0; o < c_out; ++o) {
                const std::size_t woff = (p * c_out + o) * c_in;
                double ar = 0.0, ai = 0.0;
                for (std::size_t i = 0; i < c_in; ++i) {
                    ar += wr[woff + i] * xr[xoff + i] - wi[woff + i] * xi[xoff + i];
                    ai += wr[woff + i] * xi[xoff + i] + wi[woff + i] * xr[xoff + i];
                }
                yr[yoff + o] = ar;
                yi[yoff + o] = ai;
            }
        }
    Shape out_shape = xs;
    out_shape.back() = c_out;
    ComplexTensor result{make_tensor(out_shape, std::move(yr)), make_tensor(out_shape, std::move(yi))};
    record({&weights.re, &weights.im, &modes.re, &modes.im}, {&result.re, &result.im},
           [weights, modes, batch, p_count, c_out, c_in](BackwardContext& ctx) {
               const auto gr = ctx.out_grad(0);
               const auto gi = ctx.out_grad(1);
               auto gwr = ctx.in_grad(0);
               auto gwi = ctx.in_grad(1);
               auto gxr = ctx.in_grad(2);
               auto gxi = ctx.in_grad(3);
               const auto wr = weights.re.values();
               const auto wi = weights.im.values();
               const auto xr = modes.re.values();
               const auto xi = modes.im.values();
               for (std::size_t b = 0; b < batch; ++b)
                   for (std::size_t p = 0; p < p_count; ++p) {
                       const std::size_t xoff = (b * p_count + p) * c_in;
                       const std::size_t yoff = (b * p_count + p) * c_out;
                       for (std::size_t o = 0; o < c_out; ++o) {
                           const double g_r = gr.empty() ? 0.0 : gr[yoff + o];
                           const double g_i = gi.empty() ? 0.0 : gi[yoff + o];
                           const std::size_t woff = (p * c_out + o) * c_in;
                           for (std::size_t i = 0; i < c_in; ++i) {
                               // d/dx: conj(w) * g ; d/dw: g * conj(x)
                               if (!gxr.empty()) gxr[xoff + i] += wr[woff + i] * g_r + wi[woff + i] * g_i;
                               if (!gxi.empty()) gxi[xoff + i] += wr[woff + i] * g_i - wi[woff + i] * g_r;
                               if (!gwr.empty()) gwr[woff + i] += g_r * xr[xoff + i] + g_i * xi[xoff + i];
                               if (!gwi.empty()) gwi[woff + i] += g_i * xr[xoff + i] - g_r * xi[xoff + i];
                           }
                       }
                   }
           });
    return result;
}

ComplexTensor complex_add(const ComplexTensor& a, const ComplexTensor& b) {
    return {add(a.re, b.re), add(a.im, b.im)};
}

}  // namespace fnsda
