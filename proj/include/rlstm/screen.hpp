#ifndef RLSTM_SCREEN_HPP
#define RLSTM_SCREEN_HPP

#include "rlstm/training.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rlstm {

/// Inclusive arithmetic progression start, start + step, ..., <= stop.
struct AxisSpec {
    double start = 0, stop = 0, step = 1;

    std::vector<double> values() const;
};

/// Full-factorial (H, r) grid at fixed T and R.
struct GridSpec {
    double R = kResonatorRadiusMm;
    double T = 0.16;
    AxisSpec r{0.4, 1.1, 0.1};
    AxisSpec H{1.5, 2.9, 0.2};

    void validate() const;
    std::size_t size() const { return r.values().size() * H.values().size(); }
    /// Rows of (H, r, T), H outer and r inner.
    Mat inputs() const;
};

/// Parses "r=0.4:1.1:0.1,H=1.5:2.9:0.2,T=0.16"; any key may be omitted.
GridSpec parse_grid(const std::string& text);

struct Thresholds {
    double rn_min = 0.2; ///< mm
    double df_min = 1200; ///< Hz

    void validate() const;
    bool operator==(const Thresholds&) const = default;
};

/// {0.2, 0.3, 0.4} mm x {1200, 1400, 1600} Hz.
std::vector<Thresholds> default_threshold_sets();
/// CSV with header rn_min_mm,df_min_hz.
std::vector<Thresholds> read_thresholds(std::istream& is);
std::vector<Thresholds> read_thresholds(const std::string& path);

/// min over the five other modes of |f2 - f|, for (f1, f2, f3, fb, fr, fs).
double delta_f(const std::array<double, 6>& freqs);

enum class Verdict { Feasible, AnchorTooSmall, ModeCoupling, Both };

/// "feasible", "anchor_too_small", "mode_coupling", "both".
std::string to_string(Verdict v);

/// Feasible iff rn >= rn_min and df >= df_min.
Verdict classify(double rn, double df, const Thresholds& th);

struct PointPrediction {
    double rn = 0;
    std::array<double, 6> freqs{};
};

/// Maps N x 3 inputs (H, r, T) to one prediction per row.
using PointPredictor = std::function<std::vector<PointPrediction>(const Mat&)>;

/// Frequencies from `freq`, rn from `radius`. Throws ContractError unless the
/// two models serve the frequency and radius tasks respectively.
PointPredictor model_predictor(const TrainedModel& freq, const TrainedModel& radius);
/// The surrogate itself.
PointPredictor surrogate_predictor(std::uint64_t seed);
/// Looks each point up in `ds` by (H, r, T); throws DataError when absent.
PointPredictor dataset_predictor(const Dataset& ds);

/// Predictions over a grid, kept separate from classification so that many
/// threshold sets can be applied to one pass.
struct GridEvaluation {
    GridSpec grid;
    Mat inputs;
    std::vector<PointPrediction> predicted;
    std::optional<std::vector<PointPrediction>> oracle;
    double prediction_seconds = 0; ///< wall clock of the predictor call alone
};

GridEvaluation evaluate_grid(const GridSpec& grid, const PointPredictor& predictor,
                             const PointPredictor* oracle = nullptr);

struct ScreenPoint {
    double H = 0, r = 0;
    PointPrediction predicted;
    double predicted_df = 0;
    Verdict predicted_class = Verdict::Feasible;
    std::optional<double> oracle_df;
    std::optional<Verdict> oracle_class;
};

struct ScreeningReport {
    Thresholds thresholds;
    std::vector<ScreenPoint> points;
    std::size_t feasible = 0;
    std::optional<std::size_t> matches;
    std::optional<double> accuracy; ///< matches / points, present with an oracle
    double prediction_seconds = 0;
};

ScreeningReport classify_grid(const GridEvaluation& eval, const Thresholds& th);

ScreeningReport screen(const GridSpec& grid, const PointPredictor& predictor, const Thresholds& th,
                       const PointPredictor* oracle = nullptr);

double accuracy_rate(std::size_t matches, std::size_t total);
/// Arithmetic mean; throws ContractError on an empty list.
double average_accuracy(const std::vector<double>& accuracies);

struct ThresholdAccuracy {
    Thresholds thresholds;
    double accuracy = 0;
    std::size_t matches = 0;
};

struct MultiThresholdReport {
    std::vector<ThresholdAccuracy> rows;
    double average = 0;
};

/// Requires an oracle in `eval` and at least one set.
MultiThresholdReport multi_threshold_report(const GridEvaluation& eval, const std::vector<Thresholds>& sets);

/// Per-point CSV; the oracle_class and match columns appear only with an oracle.
void write_screen_csv(std::ostream& os, const ScreeningReport& report);
void write_screen_summary(std::ostream& os, const ScreeningReport& report);
void write_multi_summary(std::ostream& os, const MultiThresholdReport& report);
/// gnuplot "nonuniform matrix": first row n_r then the r values, each later
/// row H then 1 (feasible) or 0 per r.
void write_heatmap(std::ostream& os, const ScreeningReport& report, const GridSpec& grid);

} // namespace rlstm

#endif // RLSTM_SCREEN_HPP
