#ifndef RLSTM_TESTS_GRADCHECK_HPP
#define RLSTM_TESTS_GRADCHECK_HPP

#include "rlstm/layers.hpp"
#include "rlstm/tensor.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace rlstm::testing {

struct GradCheckResult {
    bool ok = true;
    std::size_t checked = 0;
    std::size_t failures = 0;
    double worst_excess = 0; ///< largest |analytic - numeric| - tolerance
    std::string detail;
};

/// Builds a scalar loss from leaves holding `inputs`.
using LossFn = std::function<Tensor<double>(Graph<double>&, const std::vector<Tensor<double>>&)>;

/// Central differences with step h against reverse mode; an entry passes when
/// |analytic - numeric| <= max(rel * |analytic|, abs).
inline GradCheckResult grad_check(const LossFn& loss_fn, std::vector<Mat> inputs, double h = 1e-5, double rel = 1e-4,
                                  double abs = 1e-6)
{
    std::vector<Mat> analytic;
    {
        Graph<double> g;
        std::vector<Tensor<double>> leaves;
        for (const auto& m : inputs)
            leaves.push_back(g.leaf(m));
        g.backward(loss_fn(g, leaves));
        for (const auto& l : leaves)
            analytic.push_back(l.grad().size() ? l.grad() : Mat::Zero(l.rows(), l.cols()));
    }
    auto eval = [&](const std::vector<Mat>& at) {
        Graph<double> g;
        std::vector<Tensor<double>> leaves;
        for (const auto& m : at)
            leaves.push_back(g.leaf(m));
        return loss_fn(g, leaves).value()(0, 0);
    };
    GradCheckResult r;
    for (std::size_t k = 0; k < inputs.size(); ++k)
        for (Index i = 0; i < inputs[k].size(); ++i) {
            const double x0 = inputs[k].data()[i];
            inputs[k].data()[i] = x0 + h;
            const double fp = eval(inputs);
            inputs[k].data()[i] = x0 - h;
            const double fm = eval(inputs);
            inputs[k].data()[i] = x0;
            const double numeric = (fp - fm) / (2 * h);
            const double a = analytic[k].data()[i];
            const double tol = std::max(rel * std::abs(a), abs);
            const double err = std::abs(a - numeric);
            ++r.checked;
            if (err > tol) {
                ++r.failures;
                r.ok = false;
                if (err - tol > r.worst_excess) {
                    r.worst_excess = err - tol;
                    r.detail = "input " + std::to_string(k) + " entry " + std::to_string(i) + ": analytic " +
                               std::to_string(a) + " numeric " + std::to_string(numeric);
                }
            }
        }
    return r;
}

/// Builds a scalar loss from parameters bound out of a store.
using StoreLossFn = std::function<Tensor<double>(Graph<double>&, ParamBinder<double>&)>;

/// Same check over every owned parameter of `store` (inputs can be stored
/// as parameters too).
inline GradCheckResult grad_check_store(ParamStore<double>& store, const StoreLossFn& loss_fn, double h = 1e-5,
                                        double rel = 1e-4, double abs = 1e-6)
{
    store.zero_grad();
    {
        Graph<double> g;
        ParamBinder<double> p(g, store);
        g.backward(loss_fn(g, p));
    }
    auto eval = [&] {
        Graph<double> g;
        ParamBinder<double> p(g, store, true);
        return loss_fn(g, p).value()(0, 0);
    };
    GradCheckResult r;
    for (auto& [path, param] : store.owned())
        for (Index i = 0; i < param.value.size(); ++i) {
            const double x0 = param.value.data()[i];
            param.value.data()[i] = x0 + h;
            const double fp = eval();
            param.value.data()[i] = x0 - h;
            const double fm = eval();
            param.value.data()[i] = x0;
            const double numeric = (fp - fm) / (2 * h);
            const double a = param.grad.data()[i];
            const double tol = std::max(rel * std::abs(a), abs);
            const double err = std::abs(a - numeric);
            ++r.checked;
            if (err > tol) {
                ++r.failures;
                r.ok = false;
                if (err - tol > r.worst_excess) {
                    r.worst_excess = err - tol;
                    r.detail = path + " entry " + std::to_string(i) + ": analytic " + std::to_string(a) +
                               " numeric " + std::to_string(numeric);
                }
            }
        }
    return r;
}

/// sum(out ⊙ R) for a fixed random R, so every output entry carries a distinct weight.
inline Tensor<double> project(const Tensor<double>& out, const Mat& weights)
{
    return sum(mul(out, out.graph().constant(weights)));
}

} // namespace rlstm::testing

#endif // RLSTM_TESTS_GRADCHECK_HPP
