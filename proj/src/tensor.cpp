#include "mcbert/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mcbert {

int64_t shape_size(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) {
        os << s[i] << (i + 1 < s.size() ? "," : "");
    }
    os << ")";
    return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto d = std::make_shared<TensorData>();
    d->values.assign(static_cast<size_t>(shape_size(shape)), 0.0);
    d->shape = std::move(shape);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), value);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_size(shape) != static_cast<int64_t>(values.size())) {
        throw DimensionError("tensor init: shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    auto d = std::make_shared<TensorData>();
    d->shape = std::move(shape);
    d->values = std::move(values);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

double Tensor::item() const {
    if (size() != 1) {
        throw DimensionError("item() on tensor of size " + std::to_string(size()));
    }
    return d_->values[0];
}

Tensor Tensor::detach_copy() const {
    auto d = std::make_shared<TensorData>();
    d->shape = d_->shape;
    d->values = d_->values;
    return Tensor(std::move(d));
}

namespace {
bool g_finite_checks = false;
}

bool Tape::finite_checks_enabled() { return g_finite_checks; }
void Tape::set_finite_checks(bool on) { g_finite_checks = on; }

void check_finite(const Tensor& t, const char* what) {
    for (double v : t.values()) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value in ") + what);
        }
    }
}

void Tape::record(const Tensor& out, std::function<void()> backward_fn) {
    if (g_finite_checks) {
        check_finite(out, "op output");
    }
    nodes_.push_back(Node{out.node(), std::move(backward_fn)});
}

void Tape::backward(const Tensor& root) {
    if (root.size() != 1) {
        throw DimensionError("backward: root must be a scalar");
    }
    root.node()->ensure_grad();
    root.node()->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        // Nodes whose output never received a gradient are not ancestors of
        // the root; skip them.
        if (it->out->grad.empty()) {
            continue;
        }
        it->backward_fn();
    }
}

} // namespace mcbert
