#ifndef RLSTM_TRAINING_HPP
#define RLSTM_TRAINING_HPP

#include "rlstm/dataset.hpp"
#include "rlstm/model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rlstm {

struct TrainSpec {
    int epochs = 3000;
    int batch_size = 0; ///< 0 = full batch
    double lr0 = 1e-3;
    double decay = 0.5;
    int decay_interval = 1000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    bool log = false; ///< one stderr line per decay interval

    void validate() const;
    /// Learning rate in effect during `epoch` (0-based).
    double learning_rate(int epoch) const;
};

/// Adam with bias correction. Moments are keyed by owned parameter path.
class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

    /// One update of every parameter in `params` from its accumulated grad.
    void step(ParamStore<double>& params, double lr);

    long steps() const { return t_; }
    const Mat& first_moment(const std::string& path) const { return m_.at(path); }
    const Mat& second_moment(const std::string& path) const { return v_.at(path); }

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<std::string, Mat> m_, v_;
};

/// A trained regressor together with the statistics that standardize its
/// inputs and targets.
struct TrainedModel {
    TransformerLstm model;
    NormStats stats;

    Task task() const { return model.config().task; }
    /// Physical-unit inputs (N x 3: H, r, T in mm) to physical-unit outputs.
    Mat predict(const Mat& inputs) const;
};

struct Metrics {
    double rmse = 0;
    std::optional<double> r2;    ///< undefined when the target has no variance
    Mat relative_error;          ///< |pred - target| / |target| per element
    std::vector<double> rmse_per_output;
};

/// rmse over all elements; r2 is the mean over outputs of 1 - SS_res / SS_tot.
/// Throws on empty or mismatched input.
Metrics metrics(const Mat& pred, const Mat& target);

/// Mean of squared differences (plain value, no graph).
double mse_value(const Mat& pred, const Mat& target);

struct RunReport {
    std::uint64_t seed = 0;
    bool failed = false;
    std::string failure;
    double rmse_train = 0, rmse_test = 0;
    double r2_train = 0, r2_test = 0;
    std::vector<double> rmse_train_per_output, rmse_test_per_output;
    double train_seconds = 0;
    double final_loss = 0;
};

struct EvalReport {
    double rmse_train = 0, rmse_test = 0;
    double r2_train = 0, r2_test = 0;
    std::vector<double> rmse_train_per_output, rmse_test_per_output;
    double train_seconds = 0;
    std::vector<RunReport> runs;
    double rmse_test_stddev = 0;
    bool unstable = false; ///< coefficient of variation of test RMSE above 0.5
    std::vector<std::string> warnings;

    std::size_t completed_runs() const;
};

/// Key-value text rendering, one "key value" pair per line.
void write_report(std::ostream& os, const EvalReport& report);

struct TrainResult {
    TrainedModel model;
    RunReport report;
    std::vector<double> loss_history; ///< training loss per epoch (standardized units)
};

/// Trains one model. NormStats come from `train_set` alone; reported metrics
/// are in physical units with dropout disabled. Throws NumericalError if the
/// loss becomes non-finite.
TrainResult train(const ModelConfig& cfg, const TrainSpec& spec, const Dataset& train_set, const Dataset& test_set);

/// Means over the completed runs, the spread of test RMSE and the
/// instability flag. Failed runs are kept in the report but not averaged.
EvalReport aggregate_runs(std::vector<RunReport> reports);

struct AveragedResult {
    EvalReport report;
    std::optional<TrainedModel> first_model; ///< model of run 0 when it completed
};

/// Re-splits (85/15) and retrains `runs` times with seeds seed+k, then averages.
/// Failed runs are recorded and excluded from the mean. `threads` > 1 runs them
/// concurrently; results do not depend on it.
AveragedResult evaluate_averaged(const ModelConfig& cfg, const TrainSpec& spec, const Dataset& dataset, int runs = 3,
                                 int threads = 1, bool keep_first_model = false);

/// Calls fn(i) for i in [0, n) on up to `threads` threads.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

} // namespace rlstm

#endif // RLSTM_TRAINING_HPP
