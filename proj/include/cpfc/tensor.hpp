#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "cpfc/rng.hpp"

namespace cpfc {

// Dense N-dimensional array, row-major, 32-bit values. The gradient buffer
// lives alongside the data and is filled by ComputationRecord::backward.
// Tensors share their payload: copies are cheap handles onto one buffer.
class Tensor {
public:
    struct Impl {
        std::vector<int> shape;
        std::vector<float> data;
        std::vector<float> grad;  // empty until first needed
        bool requires_grad = false;
        // Scalars produced by reductions carry the 64-bit accumulated value
        // alongside the 32-bit stored one; value() prefers it.
        double precise = 0.0;
        bool has_precise = false;
    };

    Tensor() = default;
    explicit Tensor(std::vector<int> shape);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, float value);
    static Tensor from(std::vector<int> shape, std::vector<float> values);
    static Tensor scalar(float value);
    static Tensor uniform(std::vector<int> shape, float lo, float hi, Rng& rng);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    int numel() const { return static_cast<int>(impl_->data.size()); }

    std::vector<float>& data() { return impl_->data; }
    const std::vector<float>& data() const { return impl_->data; }
    double value() const;  // scalar tensors only
    void set_precise_value(double v);  // for scalar-producing reduction ops

    // Allocates (zero-filled) on first access.
    std::vector<float>& grad();
    bool has_grad() const { return !impl_->grad.empty(); }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    Tensor clone() const;  // deep copy of data (not grad)

    std::shared_ptr<Impl> impl() const { return impl_; }

private:
    std::shared_ptr<Impl> impl_;
};

// Ordered record of executed operations. Operations append themselves in
// execution order, so the list is topological by construction; backward
// replays the adjoints in reverse, touching each operation exactly once.
// A record is single-threaded; independent records may run concurrently.
class ComputationRecord {
public:
    ComputationRecord() = default;
    ComputationRecord(const ComputationRecord&) = delete;
    ComputationRecord& operator=(const ComputationRecord&) = delete;

    // Zeroes the gradients of every tensor touched by this record, seeds
    // d(loss)/d(loss) = 1 and replays adjoints in reverse order. Tensors not
    // reachable from the loss keep their zeroed gradient. Calling backward
    // again without re-running the forward pass reproduces the same
    // gradients (the zeroing makes the replay idempotent).
    void backward(const Tensor& loss);

    std::size_t op_count() const { return ops_.size(); }

    // Active record for the current thread, or nullptr when not recording.
    static ComputationRecord* active();

    // For op authors: register a backward step plus the tensors whose
    // gradients it may write.
    void push_op(std::function<void()> backward_fn, std::initializer_list<Tensor> touched);

private:
    friend class RecordScope;
    void note_tensor(const std::shared_ptr<Tensor::Impl>& t);

    std::vector<std::function<void()>> ops_;
    std::vector<std::shared_ptr<Tensor::Impl>> touched_;
    std::unordered_set<Tensor::Impl*> seen_;
};

// RAII guard that makes a record the active one for this thread.
class RecordScope {
public:
    explicit RecordScope(ComputationRecord& record);
    ~RecordScope();
    RecordScope(const RecordScope&) = delete;
    RecordScope& operator=(const RecordScope&) = delete;

private:
    ComputationRecord* previous_;
};

namespace detail {

// True when an active record exists and any input participates in
// differentiation; ops record their backward step only in that case.
bool tracking(std::initializer_list<Tensor> inputs);

// Gradient buffer helpers for backward lambdas. read returns nullptr when
// the tensor never received a gradient (nothing to propagate).
std::vector<float>& grad_of(const std::shared_ptr<Tensor::Impl>& t);
const float* grad_read(const std::shared_ptr<Tensor::Impl>& t);

}  // namespace detail

struct GradCheckResult {
    double max_rel_error = 0.0;
    int worst_coord = -1;
    int skipped = 0;  // coordinates excluded as kink-adjacent
};

// Compares the analytic gradient of builder(point) against central finite
// differences, coordinate by coordinate. The builder must be deterministic
// and return a scalar. Relative error uses max(1, |central difference|) as
// the denominator. Coordinates where the two one-sided slopes disagree
// (non-smooth points of L1/hinge/max within eps of the kink) are excluded
// and counted in `skipped`.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& builder,
                           const Tensor& point, double eps);

}  // namespace cpfc
