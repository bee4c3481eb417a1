#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mcbert/errors.hpp"

namespace mcbert {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// Flat row-major storage. 64-bit values throughout: reductions and gradient
// checks need the precision, and the desk-scale models are small enough that
// the memory cost is irrelevant.
struct TensorData {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad; // empty until first accumulation
    bool requires_grad = false;

    int64_t size() const { return static_cast<int64_t>(values.size()); }

    void ensure_grad() {
        if (grad.size() != values.size()) {
            grad.assign(values.size(), 0.0);
        }
    }
};

// Cheap value-semantic handle onto shared storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const { return d_->shape; }
    int ndim() const { return static_cast<int>(d_->shape.size()); }
    int64_t dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
    int64_t size() const { return d_->size(); }
    // Width of the last axis; every elementwise/row op views a tensor as
    // (rows, last_dim).
    int64_t last_dim() const { return d_->shape.empty() ? 1 : d_->shape.back(); }
    int64_t rows() const { return last_dim() == 0 ? 0 : size() / last_dim(); }

    double* data() { return d_->values.data(); }
    const double* data() const { return d_->values.data(); }
    std::vector<double>& values() { return d_->values; }
    const std::vector<double>& values() const { return d_->values; }

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool b) { d_->requires_grad = b; }

    bool has_grad() const { return !d_->grad.empty(); }
    std::vector<double>& grad() { d_->ensure_grad(); return d_->grad; }
    const std::vector<double>& grad_ref() const { return d_->grad; }
    void zero_grad() { if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0); }

    double item() const;

    // Deep copy of the values; the copy has no grad and no graph history.
    Tensor detach_copy() const;

    std::shared_ptr<TensorData> node() const { return d_; }

private:
    std::shared_ptr<TensorData> d_;
};

// Reverse-mode tape. Ops append nodes in execution order, which is already a
// topological order of the DAG; backward() replays the records once, in
// reverse, accumulating (summing) into input gradients so fan-out works.
class Tape {
public:
    void record(const Tensor& out, std::function<void()> backward_fn);

    // Seeds d(root)/d(root) = 1 (root must be scalar) and propagates.
    void backward(const Tensor& root);

    size_t num_nodes() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Debug mode: every recorded output is scanned for NaN/Inf. Off by
    // default, it roughly doubles the cost of cheap ops.
    static bool finite_checks_enabled();
    static void set_finite_checks(bool on);

private:
    struct Node {
        std::shared_ptr<TensorData> out;
        std::function<void()> backward_fn;
    };
    std::vector<Node> nodes_;
};

void check_finite(const Tensor& t, const char* what);

} // namespace mcbert
