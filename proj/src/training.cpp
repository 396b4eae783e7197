#include "rlstm/training.hpp"

#include "rlstm/errors.hpp"
#include "rlstm/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iostream>
#include <mutex>
#include <numeric>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace rlstm {

void TrainSpec::validate() const
{
    if (epochs < 1)
        throw ContractError("TrainSpec: epochs must be at least 1");
    if (batch_size < 0)
        throw ContractError("TrainSpec: batch_size must be non-negative");
    if (!(lr0 > 0.0))
        throw ContractError("TrainSpec: lr0 must be positive");
    if (!(decay > 0.0 && decay <= 1.0))
        throw ContractError("TrainSpec: decay must lie in (0, 1]");
    if (decay_interval < 1)
        throw ContractError("TrainSpec: decay_interval must be at least 1");
}

double TrainSpec::learning_rate(int epoch) const
{
    return lr0 * std::pow(decay, epoch / decay_interval);
}

// ---------------------------------------------------------------------------

Adam::Adam(double beta1, double beta2, double epsilon) : beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(ParamStore<double>& params, double lr)
{
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [path, p] : params.owned()) {
        if (!p.requires_grad)
            continue;
        auto [mit, fresh] = m_.try_emplace(path);
        Mat& m = mit->second;
        Mat& v = v_[path];
        if (fresh) {
            m = Mat::Zero(p.value.rows(), p.value.cols());
            v = Mat::Zero(p.value.rows(), p.value.cols());
        }
        m = beta1_ * m + (1.0 - beta1_) * p.grad;
        v = beta2_ * v + (1.0 - beta2_) * p.grad.cwiseAbs2();
        p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    }
}

// ---------------------------------------------------------------------------

Mat TrainedModel::predict(const Mat& inputs) const
{
    if (inputs.cols() != 3)
        throw DimensionError("predict: expected N x 3 inputs (H, r, T), got " + shape_str(inputs.rows(), inputs.cols()));
    if (inputs.rows() == 0)
        return Mat(0, model.config().out_dim());
    return stats.denormalize_targets(model.predict(stats.normalize_inputs(inputs)));
}

double mse_value(const Mat& pred, const Mat& target)
{
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw DimensionError("mse: prediction " + shape_str(pred.rows(), pred.cols()) + " vs target " +
                             shape_str(target.rows(), target.cols()));
    if (pred.size() == 0)
        throw ContractError("mse: empty input");
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Metrics metrics(const Mat& pred, const Mat& target)
{
    Metrics m;
    m.rmse = std::sqrt(mse_value(pred, target));
    m.relative_error = ((pred - target).array().abs() / target.array().abs()).matrix();
    bool defined = true;
    double r2_sum = 0;
    for (Index j = 0; j < pred.cols(); ++j) {
        const auto col_err = (pred.col(j) - target.col(j)).eval();
        m.rmse_per_output.push_back(std::sqrt(col_err.squaredNorm() / static_cast<double>(pred.rows())));
        const double ss_res = col_err.squaredNorm();
        const double ss_tot = (target.col(j).array() - target.col(j).mean()).square().sum();
        if (!(ss_tot > 0.0))
            defined = false;
        else
            r2_sum += 1.0 - ss_res / ss_tot;
    }
    if (defined)
        m.r2 = r2_sum / static_cast<double>(pred.cols());
    return m;
}

// ---------------------------------------------------------------------------

std::size_t EvalReport::completed_runs() const
{
    return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const RunReport& r) { return !r.failed; }));
}

namespace {

void write_list(std::ostream& os, const char* key, const std::vector<double>& v)
{
    os << key;
    for (double x : v)
        os << ' ' << format_real(x);
    os << '\n';
}

} // namespace

void write_report(std::ostream& os, const EvalReport& r)
{
    os << "runs " << r.runs.size() << '\n';
    os << "completed_runs " << r.completed_runs() << '\n';
    os << "rmse_train " << format_real(r.rmse_train) << '\n';
    os << "rmse_test " << format_real(r.rmse_test) << '\n';
    os << "r2_train " << format_real(r.r2_train) << '\n';
    os << "r2_test " << format_real(r.r2_test) << '\n';
    os << "rmse_test_stddev " << format_real(r.rmse_test_stddev) << '\n';
    os << "unstable " << (r.unstable ? 1 : 0) << '\n';
    write_list(os, "rmse_train_per_output", r.rmse_train_per_output);
    write_list(os, "rmse_test_per_output", r.rmse_test_per_output);
    os << "train_seconds " << format_real(r.train_seconds) << '\n';
    for (std::size_t k = 0; k < r.runs.size(); ++k) {
        const RunReport& run = r.runs[k];
        const std::string pre = "run." + std::to_string(k) + ".";
        os << pre << "seed " << run.seed << '\n';
        if (run.failed) {
            os << pre << "failed " << run.failure << '\n';
            continue;
        }
        os << pre << "rmse_train " << format_real(run.rmse_train) << '\n';
        os << pre << "rmse_test " << format_real(run.rmse_test) << '\n';
        os << pre << "r2_train " << format_real(run.r2_train) << '\n';
        os << pre << "r2_test " << format_real(run.r2_test) << '\n';
    }
    for (const auto& w : r.warnings)
        os << "warning " << w << '\n';
}

// ---------------------------------------------------------------------------

namespace {

// Every step frees and reallocates multi-megabyte temporaries. glibc serves
// those with mmap by default and pays page faults on each one.
void keep_large_blocks_in_heap()
{
#if defined(__GLIBC__)
    static std::once_flag once;
    std::call_once(once, [] {
        mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
        mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
    });
#endif
}

} // namespace

TrainResult train(const ModelConfig& cfg, const TrainSpec& spec, const Dataset& train_set, const Dataset& test_set)
{
    cfg.validate();
    spec.validate();
    keep_large_blocks_in_heap();
    const auto start = std::chrono::steady_clock::now();

    const Mat x_train = inputs_of(train_set);
    const Mat y_train = targets_of(train_set, cfg.task);
    NormStats stats = NormStats::fit(x_train, y_train);
    const Mat xs = stats.normalize_inputs(x_train);
    const Mat ys = stats.normalize_targets(y_train);

    TransformerLstm model(cfg);
    ParamStore<double>& params = model.params();
    Adam adam(spec.beta1, spec.beta2, spec.epsilon);
    Rng batch_rng(derive_seed(spec.seed, "batches"));
    Rng dropout_rng(derive_seed(spec.seed, "dropout"));

    const Index n = xs.rows();
    const Index batch = spec.batch_size <= 0 ? n : std::min<Index>(spec.batch_size, n);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});

    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(spec.epochs));

    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        const double lr = spec.learning_rate(epoch);
        if (batch < n)
            shuffle(order, batch_rng);
        double epoch_loss = 0;
        for (Index begin = 0; begin < n; begin += batch) {
            const Index count = std::min(batch, n - begin);
            Mat xb(count, 3), yb(count, ys.cols());
            for (Index i = 0; i < count; ++i) {
                xb.row(i) = xs.row(order[static_cast<std::size_t>(begin + i)]);
                yb.row(i) = ys.row(order[static_cast<std::size_t>(begin + i)]);
            }
            Graph<double> g;
            ParamBinder<double> binder(g, params);
            const Tensor<double> pred = model.forward(binder, g.constant(std::move(xb)), Mode::Train, &dropout_rng);
            const Tensor<double> loss = mse(pred, g.constant(std::move(yb)));
            const double lv = loss.value()(0, 0);
            if (!std::isfinite(lv))
                throw NumericalError("training diverged at epoch " + std::to_string(epoch) + " (lr " +
                                     format_real(lr) + "): loss is " + format_real(lv));
            params.zero_grad();
            g.backward(loss);
            adam.step(params, lr);
            epoch_loss += lv * static_cast<double>(count);
        }
        epoch_loss /= static_cast<double>(n);
        history.push_back(epoch_loss);
        if (spec.log && ((epoch + 1) % spec.decay_interval == 0 || epoch + 1 == spec.epochs))
            std::cerr << "epoch " << epoch + 1 << " lr " << format_real(lr) << " loss " << format_real(epoch_loss)
                      << '\n';
    }

    TrainResult result{TrainedModel{std::move(model), std::move(stats)}, {}, std::move(history)};
    RunReport& rep = result.report;
    rep.seed = spec.seed;
    rep.final_loss = result.loss_history.back();
    const Metrics m_train = metrics(result.model.predict(x_train), y_train);
    rep.rmse_train = m_train.rmse;
    rep.r2_train = m_train.r2.value_or(std::nan(""));
    rep.rmse_train_per_output = m_train.rmse_per_output;
    if (!test_set.empty()) {
        const Metrics m_test = metrics(result.model.predict(inputs_of(test_set)), targets_of(test_set, cfg.task));
        rep.rmse_test = m_test.rmse;
        rep.r2_test = m_test.r2.value_or(std::nan(""));
        rep.rmse_test_per_output = m_test.rmse_per_output;
    }
    rep.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn)
{
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                }
            }
        });
    for (auto& t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

EvalReport aggregate_runs(std::vector<RunReport> reports)
{
    EvalReport rep;
    rep.runs = std::move(reports);
    const auto& runs = rep.runs;
    std::vector<const RunReport*> ok;
    for (const auto& r : runs) {
        rep.train_seconds += r.train_seconds;
        if (!r.failed)
            ok.push_back(&r);
    }
    if (ok.size() < runs.size())
        rep.warnings.push_back(std::to_string(runs.size() - ok.size()) + " of " + std::to_string(runs.size()) +
                               " runs diverged; averages use completed runs only");
    if (ok.empty()) {
        const double nan = std::nan("");
        rep.rmse_train = rep.rmse_test = rep.r2_train = rep.r2_test = nan;
        return rep;
    }
    const double k = static_cast<double>(ok.size());
    const std::size_t outputs = ok.front()->rmse_test_per_output.size();
    rep.rmse_train_per_output.assign(ok.front()->rmse_train_per_output.size(), 0.0);
    rep.rmse_test_per_output.assign(outputs, 0.0);
    for (const RunReport* r : ok) {
        rep.rmse_train += r->rmse_train;
        rep.rmse_test += r->rmse_test;
        rep.r2_train += r->r2_train;
        rep.r2_test += r->r2_test;
        for (std::size_t j = 0; j < rep.rmse_train_per_output.size(); ++j)
            rep.rmse_train_per_output[j] += r->rmse_train_per_output[j];
        for (std::size_t j = 0; j < outputs; ++j)
            rep.rmse_test_per_output[j] += r->rmse_test_per_output[j];
    }
    rep.rmse_train /= k;
    rep.rmse_test /= k;
    rep.r2_train /= k;
    rep.r2_test /= k;
    for (auto& v : rep.rmse_train_per_output)
        v /= k;
    for (auto& v : rep.rmse_test_per_output)
        v /= k;
    if (ok.size() > 1) {
        double ss = 0;
        for (const RunReport* r : ok)
            ss += (r->rmse_test - rep.rmse_test) * (r->rmse_test - rep.rmse_test);
        rep.rmse_test_stddev = std::sqrt(ss / (k - 1.0));
        rep.unstable = rep.rmse_test > 0.0 && rep.rmse_test_stddev / rep.rmse_test > 0.5;
        if (rep.unstable)
            rep.warnings.push_back("test RMSE coefficient of variation exceeds 0.5 across runs");
    }
    return rep;
}

AveragedResult evaluate_averaged(const ModelConfig& cfg, const TrainSpec& spec, const Dataset& dataset, int runs,
                                 int threads, bool keep_first_model)
{
    if (runs < 1)
        throw ContractError("evaluate_averaged: runs must be at least 1");
    std::vector<RunReport> reports(static_cast<std::size_t>(runs));
    std::optional<TrainedModel> first;
    parallel_for(reports.size(), threads, [&](std::size_t k) {
        const std::uint64_t seed = spec.seed + k;
        ModelConfig run_cfg = cfg;
        run_cfg.seed = seed;
        TrainSpec run_spec = spec;
        run_spec.seed = seed;
        run_spec.log = spec.log && k == 0;
        const auto [train_set, test_set] = split(dataset, kTrainFraction, seed);
        try {
            TrainResult r = train(run_cfg, run_spec, train_set, test_set);
            reports[k] = r.report;
            if (k == 0 && keep_first_model)
                first.emplace(std::move(r.model));
        } catch (const NumericalError& e) {
            reports[k].seed = seed;
            reports[k].failed = true;
            reports[k].failure = e.what();
        }
    });

    AveragedResult out;
    out.report = aggregate_runs(std::move(reports));
    out.first_model = std::move(first);
    return out;
}

} // namespace rlstm
