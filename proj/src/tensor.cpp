#include "cpfc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cpfc {

namespace {

int checked_numel(const std::vector<int>& shape) {
    long long n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor: dimension sizes must be positive");
        n *= d;
    }
    if (n > (1LL << 31) - 1) throw std::invalid_argument("tensor: too large");
    return static_cast<int>(n);
}

thread_local ComputationRecord* g_active_record = nullptr;

}  // namespace

Tensor::Tensor(std::vector<int> shape) : impl_(std::make_shared<Impl>()) {
    int n = checked_numel(shape);
    impl_->shape = std::move(shape);
    impl_->data.assign(static_cast<size_t>(n), 0.0f);
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.data().begin(), t.data().end(), value);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> values) {
    int n = checked_numel(shape);
    if (static_cast<size_t>(n) != values.size())
        throw std::invalid_argument("tensor: value count does not match shape");
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    return t;
}

Tensor Tensor::scalar(float value) { return from({1}, {value}); }

Tensor Tensor::uniform(std::vector<int> shape, float lo, float hi, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

double Tensor::value() const {
    if (numel() != 1) throw std::invalid_argument("tensor: value() requires a scalar");
    return impl_->has_precise ? impl_->precise : static_cast<double>(impl_->data[0]);
}

void Tensor::set_precise_value(double v) {
    if (numel() != 1) throw std::invalid_argument("tensor: precise value requires a scalar");
    impl_->precise = v;
    impl_->has_precise = true;
    impl_->data[0] = static_cast<float>(v);
}

std::vector<float>& Tensor::grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
    return impl_->grad;
}

Tensor Tensor::clone() const {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    t.impl_->requires_grad = impl_->requires_grad;
    t.impl_->precise = impl_->precise;
    t.impl_->has_precise = impl_->has_precise;
    return t;
}

ComputationRecord* ComputationRecord::active() { return g_active_record; }

void ComputationRecord::note_tensor(const std::shared_ptr<Tensor::Impl>& t) {
    if (seen_.insert(t.get()).second) touched_.push_back(t);
}

void ComputationRecord::push_op(std::function<void()> backward_fn,
                                std::initializer_list<Tensor> touched) {
    for (const Tensor& t : touched) note_tensor(t.impl());
    ops_.push_back(std::move(backward_fn));
}

void ComputationRecord::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be a scalar tensor");
    for (auto& t : touched_) {
        if (!t->grad.empty()) std::fill(t->grad.begin(), t->grad.end(), 0.0f);
    }
    detail::grad_of(loss.impl())[0] = 1.0f;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

RecordScope::RecordScope(ComputationRecord& record) : previous_(g_active_record) {
    g_active_record = &record;
}

RecordScope::~RecordScope() { g_active_record = previous_; }

namespace detail {

bool tracking(std::initializer_list<Tensor> inputs) {
    if (g_active_record == nullptr) return false;
    for (const Tensor& t : inputs) {
        if (t.defined() && t.requires_grad()) return true;
    }
    return false;
}

std::vector<float>& grad_of(const std::shared_ptr<Tensor::Impl>& t) {
    if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0f);
    return t->grad;
}

const float* grad_read(const std::shared_ptr<Tensor::Impl>& t) {
    return t->grad.empty() ? nullptr : t->grad.data();
}

}  // namespace detail

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& builder,
                           const Tensor& point, double eps) {
    if (eps < 1e-6 || eps > 1e-2)
        throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-2]");

    Tensor x = point.clone();
    x.set_requires_grad(true);

    ComputationRecord record;
    double f0;
    {
        RecordScope scope(record);
        Tensor loss = builder(x);
        if (loss.numel() != 1) throw std::invalid_argument("grad_check: builder must return a scalar");
        f0 = loss.value();
        record.backward(loss);
    }
    std::vector<float> analytic = x.grad();

    Tensor probe = point.clone();  // not tracked: forwards below are pure
    GradCheckResult result;
    for (int i = 0; i < probe.numel(); ++i) {
        float saved = probe.data()[static_cast<size_t>(i)];
        float plus = saved + static_cast<float>(eps);
        float minus = saved - static_cast<float>(eps);
        probe.data()[static_cast<size_t>(i)] = plus;
        double f_plus = builder(probe).value();
        probe.data()[static_cast<size_t>(i)] = minus;
        double f_minus = builder(probe).value();
        probe.data()[static_cast<size_t>(i)] = saved;

        // divide by the step actually realized in 32-bit storage
        double h_plus = static_cast<double>(plus) - saved;
        double h_minus = static_cast<double>(saved) - minus;
        double central = (f_plus - f_minus) / (h_plus + h_minus);
        double slope_plus = (f_plus - f0) / h_plus;
        double slope_minus = (f0 - f_minus) / h_minus;
        // A kink between x-eps and x+eps shows up as disagreeing one-sided
        // slopes; the central difference is meaningless there.
        if (std::abs(slope_plus - slope_minus) >
            0.05 * std::max(1.0, std::abs(slope_plus) + std::abs(slope_minus))) {
            ++result.skipped;
            continue;
        }
        double rel = std::abs(static_cast<double>(analytic[static_cast<size_t>(i)]) - central) /
                     std::max(1.0, std::abs(central));
        if (rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_coord = i;
        }
    }
    return result;
}

}  // namespace cpfc
