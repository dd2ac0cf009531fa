#pragma once

// Float64 n-dimensional tensors with tape-free reverse-mode differentiation.
//
// Every differentiable op that has at least one input requiring gradients
// records a node holding its inputs and a backward rule. Nodes carry a
// monotonically increasing id, so sorting the nodes reachable from a loss by
// descending id is a valid reverse topological order. The graph lives as long
// as the tensors that reference it; nothing is global except the id counter
// and a thread-local grad-mode flag.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fnsda {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
struct Node;
struct Access;
}  // namespace detail

class Tensor {
public:
    Tensor() = default;
    /// Zero-filled constant.
    explicit Tensor(Shape shape);
    /// Constant with the given row-major values.
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double value);
    /// Trainable leaf.
    static Tensor parameter(Shape shape, std::vector<double> values);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;

    std::span<const double> values() const;
    /// Writable view of a leaf's data. Throws UsageError on op outputs.
    std::span<double> mutable_values();
    double item() const;
    double at(std::size_t flat_index) const { return values()[flat_index]; }

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool is_leaf() const;

    /// Accumulated gradient; a zero buffer when backward never reached it.
    std::span<const double> grad() const;
    void zero_grad();

    /// Same values, no graph history, not trainable.
    Tensor detach() const;

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;

    friend struct detail::Access;
};

/// A complex tensor stored as two real tensors of equal shape. All complex
/// differentiation is the real chain rule applied to the (re, im) pair.
struct ComplexTensor {
    Tensor re;
    Tensor im;
    const Shape& shape() const { return re.shape(); }
};

// ---------------------------------------------------------------------------
// Graph control

bool grad_enabled();

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Reverse sweep from a scalar loss. Gradients accumulate into every tensor
/// that requires them; leaves keep them until zero_grad().
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Elementwise. Binary ops require equal shapes, or one operand of size 1.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a * x + b, with plain scalars.
Tensor affine(const Tensor& x, double a, double b);
inline Tensor scale(const Tensor& x, double a) { return affine(x, a, 0.0); }
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);

Tensor sigmoid(const Tensor& x);
/// clamp(x / 6 + 1/2, 0, 1)
Tensor hard_sigmoid(const Tensor& x);
/// x * sigmoid(beta * x), beta a size-1 tensor.
Tensor swish(const Tensor& x, const Tensor& beta);
Tensor relu(const Tensor& x);

// ---------------------------------------------------------------------------
// Linear algebra and reductions

/// [n, k] x [k, m] -> [n, m]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., in] W[out, in]^T + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Contracts the last `axes` dims of a with the first `axes` dims of b.
Tensor contract(const Tensor& a, const Tensor& b, std::size_t axes);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
/// Gathers `index` entries along `axis`.
Tensor take(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& index);
/// Adjoint of take: scatters into a zero tensor whose `axis` has length n.
Tensor put(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& index, std::size_t n);
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
/// Multiplies x by the vector v broadcast along `axis` (v.size() == x.shape()[axis]).
Tensor mul_axis(const Tensor& x, const Tensor& v, std::size_t axis);

// ---------------------------------------------------------------------------
// Spectral. Forward transforms are unnormalized; inverses apply 1/N.
// Transformed axis lengths must be powers of two (ConfigError otherwise).

/// Real-input DFT along `axis`, keeping the N/2+1 non-redundant modes.
ComplexTensor rfft(const Tensor& x, std::size_t axis);
/// Inverse of rfft; `n` is the real output length. Imaginary parts of the
/// zero and Nyquist modes are ignored.
Tensor irfft(const ComplexTensor& x, std::size_t axis, std::size_t n);
ComplexTensor fft(const ComplexTensor& x, std::size_t axis);
ComplexTensor ifft(const ComplexTensor& x, std::size_t axis);
/// rfft along axis1 followed by a complex fft along axis0.
ComplexTensor fft_2d(const Tensor& x, std::size_t axis0, std::size_t axis1);
/// Inverse of fft_2d; n1 is the real length of axis1.
Tensor ifft_2d(const ComplexTensor& x, std::size_t axis0, std::size_t axis1, std::size_t n1);

/// Per-mode complex matrix-vector product:
/// out[..., p, o] = sum_i w[p, o, i] * x[..., p, i].
ComplexTensor complex_mode_mul(const ComplexTensor& weights, const ComplexTensor& modes);
ComplexTensor complex_add(const ComplexTensor& a, const ComplexTensor& b);

}  // namespace fnsda
