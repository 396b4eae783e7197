#include "gradcheck.hpp"

#include "rlstm/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace rlstm;

namespace {

const Dataset& shipped()
{
    static const Dataset ds = read_csv(std::string(RLSTM_DATA_DIR) + "/surrogate_314.csv");
    return ds;
}

Dataset first_n(const Dataset& ds, std::size_t n)
{
    Dataset out;
    out.samples.assign(ds.samples.begin(), ds.samples.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
}

ModelConfig tiny_config(Task task)
{
    ModelConfig cfg = default_config(task);
    cfg.d_model = 16;
    cfg.numlstm = 16;
    cfg.numhead = 2;
    return cfg;
}

TrainSpec short_spec(int epochs)
{
    TrainSpec s;
    s.epochs = epochs;
    s.decay_interval = std::max(1, epochs / 3);
    s.lr0 = 3e-3;
    s.seed = 11;
    return s;
}

RunReport run_report(double rmse_test, double rmse_train = 1.0)
{
    RunReport r;
    r.rmse_test = rmse_test;
    r.rmse_train = rmse_train;
    r.r2_test = 0.5;
    r.r2_train = 0.9;
    r.rmse_test_per_output = {rmse_test};
    r.rmse_train_per_output = {rmse_train};
    return r;
}

/// Everything in the report except the wall-clock fields.
std::string stable_text(EvalReport r)
{
    r.train_seconds = 0;
    for (auto& run : r.runs)
        run.train_seconds = 0;
    std::ostringstream os;
    write_report(os, r);
    return os.str();
}

} // namespace

// ---------------------------------------------------------------------------
// loss and metrics

TEST(MseLoss, Examples)
{
    const Mat a = Mat::Random(4, 3);
    EXPECT_EQ(mse_value(a, a), 0.0);
    EXPECT_DOUBLE_EQ(mse_value((a.array() + 2.0).matrix(), a), 4.0);
    EXPECT_THROW(mse_value(Mat::Zero(2, 2), Mat::Zero(2, 3)), DimensionError);
    Graph<double> g;
    EXPECT_THROW(mse(g.constant(Mat::Zero(2, 2)), g.constant(Mat::Zero(1, 4))), DimensionError);
}

TEST(MseLoss, GradientIsTwiceResidualOverN)
{
    Rng rng(1);
    Mat p(3, 2), t(3, 2);
    for (Index i = 0; i < 6; ++i) {
        p.data()[i] = rng.normal();
        t.data()[i] = rng.normal();
    }
    Graph<double> g;
    auto tp = g.leaf(p);
    g.backward(mse(tp, g.constant(t)));
    EXPECT_TRUE(tp.grad().isApprox(2.0 * (p - t) / 6.0, 1e-15));
    auto r = rlstm::testing::grad_check([&](Graph<double>& gg, const auto& in) { return mse(in[0], gg.constant(t)); },
                                        {p});
    EXPECT_TRUE(r.ok) << r.detail;
}

TEST(Metrics, PerfectPrediction)
{
    Mat y(3, 2);
    y << 1, 10, 2, 20, 4, 25;
    const Metrics m = metrics(y, y);
    EXPECT_EQ(m.rmse, 0.0);
    ASSERT_TRUE(m.r2.has_value());
    EXPECT_EQ(*m.r2, 1.0);
    EXPECT_TRUE(m.relative_error.isZero(0));
}

TEST(Metrics, MeanPredictionHasZeroR2)
{
    Mat y(4, 2);
    y << 1, 10, 2, 20, 4, 25, 9, 5;
    const Mat mean_pred = y.colwise().mean().replicate(4, 1);
    const Metrics m = metrics(mean_pred, y);
    ASSERT_TRUE(m.r2.has_value());
    EXPECT_NEAR(*m.r2, 0.0, 1e-15);
}

TEST(Metrics, RelativeErrorAndRmse)
{
    Mat t(1, 1), p(1, 1);
    t << 10;
    p << 9;
    EXPECT_NEAR(metrics(p, t).relative_error(0, 0), 0.10, 1e-15);
    Mat y(2, 1), q(2, 1);
    y << 0, 0;
    q << 3, 4;
    const Metrics m = metrics(q, y);
    EXPECT_DOUBLE_EQ(m.rmse, std::sqrt(12.5));
    EXPECT_FALSE(m.r2.has_value()) << "zero target variance leaves R2 undefined";
}

TEST(Metrics, PerOutputBreakdownAndBounds)
{
    Rng rng(2);
    Mat y(20, 3), p(20, 3);
    for (Index i = 0; i < y.size(); ++i) {
        y.data()[i] = rng.normal();
        p.data()[i] = rng.normal();
    }
    const Metrics m = metrics(p, y);
    ASSERT_EQ(m.rmse_per_output.size(), 3u);
    double mean_sq = 0;
    for (int j = 0; j < 3; ++j) {
        const double want = std::sqrt((p.col(j) - y.col(j)).squaredNorm() / 20.0);
        EXPECT_NEAR(m.rmse_per_output[j], want, 1e-14);
        mean_sq += want * want / 3.0;
    }
    EXPECT_NEAR(m.rmse, std::sqrt(mean_sq), 1e-14);
    EXPECT_GE(m.rmse, 0.0);
    EXPECT_LE(*m.r2, 1.0);
    EXPECT_THROW(metrics(Mat(0, 3), Mat(0, 3)), std::exception);
}

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, ZeroGradientLeavesEverythingUnchanged)
{
    ParamStore<double> s;
    s.add("w", Mat::Constant(2, 2, 1.5));
    Adam adam;
    adam.step(s, 0.1);
    EXPECT_EQ(s.at("w").value, Mat::Constant(2, 2, 1.5));
    EXPECT_TRUE(adam.first_moment("w").isZero(0));
    EXPECT_TRUE(adam.second_moment("w").isZero(0));
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign)
{
    ParamStore<double> s;
    Mat w(1, 4), g(1, 4);
    w << 1, 2, 3, 4;
    g << 0.5, -2, 1e-3, -7;
    s.add("w", w).grad = g;
    Adam adam;
    const double lr = 0.01;
    adam.step(s, lr);
    for (Index j = 0; j < 4; ++j) {
        const double sign = g(0, j) > 0 ? 1.0 : -1.0;
        EXPECT_NEAR(s.at("w").value(0, j), w(0, j) - lr * sign, lr * 1e-8 / std::abs(g(0, j)) + 1e-15);
    }
    EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, MatchesReferenceRecurrence)
{
    ParamStore<double> s;
    s.add("w", Mat::Constant(1, 1, 0.3));
    Adam adam(0.8, 0.95, 1e-6);
    double w = 0.3, m = 0, v = 0;
    for (int t = 1; t <= 5; ++t) {
        const double grad = std::sin(t) + 0.2;
        s.at("w").grad(0, 0) = grad;
        adam.step(s, 0.05);
        m = 0.8 * m + 0.2 * grad;
        v = 0.95 * v + 0.05 * grad * grad;
        const double mh = m / (1 - std::pow(0.8, t)), vh = v / (1 - std::pow(0.95, t));
        w -= 0.05 * mh / (std::sqrt(vh) + 1e-6);
        EXPECT_NEAR(s.at("w").value(0, 0), w, 1e-15);
    }
}

TEST(TrainSpec, LearningRateDecaysPerInterval)
{
    TrainSpec s;
    EXPECT_EQ(s.learning_rate(0), 1e-3);
    EXPECT_EQ(s.learning_rate(999), 1e-3);
    EXPECT_EQ(s.learning_rate(1000), 5e-4);
    EXPECT_EQ(s.learning_rate(2999), 2.5e-4);
    TrainSpec bad;
    bad.lr0 = 0;
    EXPECT_THROW(bad.validate(), ContractError);
    bad = TrainSpec{};
    bad.decay = 1.5;
    EXPECT_THROW(bad.validate(), ContractError);
    bad = TrainSpec{};
    bad.epochs = 0;
    EXPECT_THROW(bad.validate(), ContractError);
}

// ---------------------------------------------------------------------------
// train

TEST(Train, OverfitsTenSamples)
{
    const Dataset ten = first_n(shipped(), 10);
    for (Task task : {Task::Frequency, Task::Radius}) {
        TrainSpec spec;
        spec.epochs = 2000;
        spec.decay_interval = 1000;
        spec.seed = 4;
        const TrainResult r = train(default_config(task), spec, ten, Dataset{});
        const Mat y = targets_of(ten, task);
        const Mat pred = r.model.predict(inputs_of(ten));
        for (Index j = 0; j < y.cols(); ++j) {
            const double sd = std::sqrt((y.col(j).array() - y.col(j).mean()).square().mean());
            const double rmse = std::sqrt((pred.col(j) - y.col(j)).squaredNorm() / 10.0);
            EXPECT_LT(rmse, 0.01 * sd) << to_string(task) << " output " << j;
        }
    }
}

TEST(Train, OverfitLossKeepsFalling)
{
    // Dropout off: a single dropped unit moves a 1e-5 loss by orders of
    // magnitude, which says nothing about the optimizer.
    const Dataset ten = first_n(shipped(), 10);
    TrainSpec spec;
    spec.epochs = 2000;
    spec.decay_interval = 1000;
    spec.seed = 4;
    ModelConfig cfg = default_config(Task::Frequency);
    cfg.numdrop = 0;
    const TrainResult r = train(cfg, spec, ten, Dataset{});
    const auto& h = r.loss_history;
    ASSERT_EQ(h.size(), 2000u);
    // After epoch 200 no 50-epoch window may end more than 5% above its start.
    for (std::size_t e = 200; e + 50 < h.size(); ++e)
        ASSERT_LE(h[e + 50], 1.05 * h[e]) << "window at epoch " << e;
}

TEST(Train, EvalPredictionIsDeterministic)
{
    auto [tr, te] = split(shipped(), kTrainFraction, 1);
    const TrainResult r = train(tiny_config(Task::Radius), short_spec(30), tr, te);
    const Mat x = inputs_of(te);
    EXPECT_EQ(r.model.predict(x), r.model.predict(x));
    EXPECT_EQ(r.model.predict(Mat(0, 3)).rows(), 0);
    EXPECT_THROW(r.model.predict(Mat::Zero(2, 4)), DimensionError);
}

TEST(Train, FixedSeedGivesIdenticalReports)
{
    auto [tr, te] = split(shipped(), kTrainFraction, 2);
    const TrainResult a = train(tiny_config(Task::Frequency), short_spec(40), tr, te);
    const TrainResult b = train(tiny_config(Task::Frequency), short_spec(40), tr, te);
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(a.report.rmse_test, b.report.rmse_test);
    EXPECT_EQ(a.report.rmse_train_per_output, b.report.rmse_train_per_output);
    for (const auto& path : a.model.model.params().paths())
        EXPECT_EQ(a.model.model.params().at(path).value, b.model.model.params().at(path).value) << path;
}

TEST(Train, MiniBatchesAreSeeded)
{
    auto [tr, te] = split(shipped(), kTrainFraction, 2);
    TrainSpec s = short_spec(10);
    s.batch_size = 32;
    const TrainResult a = train(tiny_config(Task::Radius), s, tr, te);
    const TrainResult b = train(tiny_config(Task::Radius), s, tr, te);
    EXPECT_EQ(a.loss_history, b.loss_history);
    s.seed += 1;
    const TrainResult c = train(tiny_config(Task::Radius), s, tr, te);
    EXPECT_NE(a.loss_history, c.loss_history);
}

TEST(Train, PoisonedTestSetDoesNotChangeTraining)
{
    auto [tr, te] = split(shipped(), kTrainFraction, 3);
    Dataset poisoned = te;
    for (auto& s : poisoned.samples) {
        s.f1 *= 1000;
        s.rn = 42;
    }
    const TrainResult a = train(tiny_config(Task::Frequency), short_spec(20), tr, te);
    const TrainResult b = train(tiny_config(Task::Frequency), short_spec(20), tr, poisoned);
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(a.report.rmse_train, b.report.rmse_train);
    EXPECT_EQ(a.model.stats.target_mean, b.model.stats.target_mean);
    EXPECT_EQ(a.model.stats.input_std, b.model.stats.input_std);
    EXPECT_NE(a.report.rmse_test, b.report.rmse_test);
}

TEST(Train, MetricsAreInPhysicalUnits)
{
    auto [tr, te] = split(shipped(), kTrainFraction, 4);
    const TrainResult r = train(tiny_config(Task::Radius), short_spec(60), tr, te);
    const Metrics m = metrics(r.model.predict(inputs_of(te)), targets_of(te, Task::Radius));
    EXPECT_EQ(r.report.rmse_test, m.rmse);
    // Radius errors are in mm: a fraction of the anchor radius, not standardized units.
    EXPECT_LT(r.report.rmse_test, 0.5);
}

TEST(Train, DivergenceNamesEpochAndRate)
{
    auto [tr, te] = split(shipped(), kTrainFraction, 5);
    TrainSpec s = short_spec(50);
    s.lr0 = 1e300;
    try {
        train(tiny_config(Task::Radius), s, tr, te);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("epoch"), std::string::npos) << msg;
        EXPECT_NE(msg.find("lr"), std::string::npos) << msg;
    }
}

// ---------------------------------------------------------------------------
// averaged evaluation

TEST(Averaged, SingleRunEqualsOneTrainCall)
{
    const ModelConfig cfg = tiny_config(Task::Radius);
    TrainSpec spec = short_spec(25);
    spec.seed = 7;
    const EvalReport avg = evaluate_averaged(cfg, spec, shipped(), 1).report;
    ModelConfig c1 = cfg;
    c1.seed = 7;
    auto [tr, te] = split(shipped(), kTrainFraction, 7);
    const RunReport one = train(c1, spec, tr, te).report;
    EXPECT_EQ(avg.rmse_test, one.rmse_test);
    EXPECT_EQ(avg.rmse_train, one.rmse_train);
    EXPECT_EQ(avg.r2_test, one.r2_test);
    EXPECT_EQ(avg.rmse_test_per_output, one.rmse_test_per_output);
    ASSERT_EQ(avg.runs.size(), 1u);
    EXPECT_EQ(avg.runs[0].seed, 7u);
}

TEST(Averaged, MeanOfOneTwoThreeIsTwo)
{
    const EvalReport r = aggregate_runs({run_report(1.0), run_report(2.0), run_report(3.0)});
    EXPECT_EQ(r.rmse_test, 2.0);
    EXPECT_EQ(r.rmse_test_per_output, std::vector<double>{2.0});
    EXPECT_EQ(r.rmse_test_stddev, 1.0);
    EXPECT_FALSE(r.unstable);
    EXPECT_EQ(r.completed_runs(), 3u);
}

TEST(Averaged, HighVariationIsFlagged)
{
    const EvalReport r = aggregate_runs({run_report(0.1), run_report(0.1), run_report(3.0)});
    EXPECT_TRUE(r.unstable);
    EXPECT_FALSE(r.warnings.empty());
}

TEST(Averaged, FailedRunsAreExcludedWithWarning)
{
    RunReport bad;
    bad.failed = true;
    bad.failure = "diverged";
    const EvalReport r = aggregate_runs({run_report(1.0), bad, run_report(3.0)});
    EXPECT_EQ(r.rmse_test, 2.0);
    EXPECT_EQ(r.completed_runs(), 2u);
    ASSERT_FALSE(r.warnings.empty());
    const EvalReport none = aggregate_runs({bad});
    EXPECT_TRUE(std::isnan(none.rmse_test));
    EXPECT_EQ(none.completed_runs(), 0u);
}

TEST(Averaged, DivergingRunsAreReportedNotThrown)
{
    TrainSpec s = short_spec(20);
    s.lr0 = 1e300;
    const EvalReport r = evaluate_averaged(tiny_config(Task::Radius), s, shipped(), 2).report;
    EXPECT_EQ(r.completed_runs(), 0u);
    ASSERT_EQ(r.runs.size(), 2u);
    EXPECT_TRUE(r.runs[0].failed);
    EXPECT_FALSE(r.warnings.empty());
}

TEST(Averaged, ThreadCountDoesNotChangeResults)
{
    const ModelConfig cfg = tiny_config(Task::Radius);
    const TrainSpec spec = short_spec(15);
    const EvalReport serial = evaluate_averaged(cfg, spec, shipped(), 3, 1).report;
    const EvalReport threaded = evaluate_averaged(cfg, spec, shipped(), 3, 3).report;
    EXPECT_EQ(stable_text(serial), stable_text(threaded));
    ASSERT_EQ(serial.runs.size(), 3u);
    EXPECT_EQ(serial.runs[2].seed, spec.seed + 2);
    EXPECT_NE(serial.runs[0].rmse_test, serial.runs[1].rmse_test);
}

TEST(Averaged, ReportTextIsKeyValue)
{
    const EvalReport r = aggregate_runs({run_report(1.0), run_report(3.0)});
    std::ostringstream os;
    write_report(os, r);
    std::istringstream is(os.str());
    std::string line;
    bool saw_mean = false;
    while (std::getline(is, line)) {
        ASSERT_NE(line.find(' '), std::string::npos) << line;
        saw_mean = saw_mean || line == "rmse_test 2";
    }
    EXPECT_TRUE(saw_mean) << os.str();
    EXPECT_THROW(evaluate_averaged(tiny_config(Task::Radius), short_spec(1), shipped(), 0), ContractError);
}

TEST(ParallelFor, CoversEveryIndexAndRethrows)
{
    std::vector<int> hits(100, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 100);
    EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                     if (i == 7)
                         throw DataError("boom");
                 }),
                 DataError);
}
