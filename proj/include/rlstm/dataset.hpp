#ifndef RLSTM_DATASET_HPP
#define RLSTM_DATASET_HPP

#include "rlstm/tensor.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rlstm {

/// Which of the two independent regressors a model serves.
enum class Task { Frequency, Radius };

std::string to_string(Task task);
Task parse_task(const std::string& name);
/// 6 for the frequency task (f1, f2, f3, fb, fr, fs), 1 for the radius task (rn).
int output_dim(Task task);

/// Fixed resonator radius of every design, mm.
inline constexpr double kResonatorRadiusMm = 5.0;

/// One design point. Lengths in mm, frequencies in Hz.
struct Sample {
    double H = 0;  ///< resonator height
    double r = 0;  ///< designed anchor radius
    double T = 0;  ///< edge thickness
    double f1 = 0; ///< n=1 mode
    double f2 = 0; ///< n=2 (operating) mode
    double f3 = 0; ///< n=3 mode
    double fb = 0; ///< breathing mode
    double fr = 0; ///< rotational mode
    double fs = 0; ///< swing mode
    double rn = 0; ///< actual anchor radius after forming

    std::array<double, 6> frequencies() const { return {f1, f2, f3, fb, fr, fs}; }
    bool operator==(const Sample&) const = default;
};

/// Closed ranges of the geometric inputs covered by the dataset.
struct ParameterRanges {
    double h_min = 1.04, h_max = 4.69;
    double r_min = 0.34, r_max = 1.36;
    double t_min = 0.08, t_max = 0.32;

    bool contains(double H, double r, double T) const
    {
        return H >= h_min && H <= h_max && r >= r_min && r <= r_max && T >= t_min && T <= t_max;
    }
};

inline constexpr ParameterRanges kParameterRanges{};

enum class Provenance { Synthetic, External };

struct Dataset {
    std::vector<Sample> samples;
    Provenance provenance = Provenance::External;
    std::optional<std::uint64_t> seed;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

// ---------------------------------------------------------------------------
// Physics and the surrogate oracle

/// Fused-silica viscosity (Pa·s) from the Fulcher law,
/// eta = 10^(-5.894 + 21340.8 / (T - 239.5)). Calibrated for 1900-2500 K.
/// Throws DomainError for T <= 239.5 K.
double fulcher_viscosity(double temp_k);

/// Version tag of the surrogate's functional forms. Bump on any change to the
/// constants, since shipped data and acceptance numbers depend on them.
inline constexpr int kSurrogateVersion = 1;

/// Analytic stand-in for the glassblowing + modal-analysis pipeline.
/// Deterministic in (H, r, T, seed); rn is rounded to 0.01 mm.
/// Throws DomainError on non-positive or non-finite inputs.
Sample surrogate_oracle(double H, double r, double T, std::uint64_t seed);

/// Shrinkage fraction s(H, T) in [0.15, 0.30]; rn = r·(1 - s) before rounding.
double anchor_shrinkage(double H, double T);

// ---------------------------------------------------------------------------
// Filtering and generation

/// Minimum manufacturable actual anchor radius, mm (boundary inclusive).
inline constexpr double kMinAnchorRadiusMm = 0.1;

struct FilterVerdict {
    bool keep = true;
    std::string reason; ///< empty when kept
};

/// Rejects non-finite/non-positive fields ("non_finite_field",
/// "non_positive_field") and rn < 0.1 mm ("anchor_radius_below_min").
FilterVerdict feasibility_filter(const Sample& s);

struct RejectedSample {
    Sample sample;
    std::string reason;
};

struct GenerationResult {
    Dataset dataset;
    std::vector<RejectedSample> rejected;
    std::size_t n_raw = 0;
};

/// Seed whose default 343-point sweep keeps exactly 314 samples.
inline constexpr std::uint64_t kDefaultDataSeed = 6;
inline constexpr int kDefaultRawSamples = 343;

/// Runs the raw design sweep through the surrogate and the feasibility filter.
/// A perfect-cube n_raw is a k x k x k grid with seeded jitter of a quarter
/// step; any other n_raw is drawn uniformly. The anchor axis extends below
/// the dataset range so that the sweep contains unmanufacturable designs.
GenerationResult generate_dataset(int n_raw, std::uint64_t seed);

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kCsvHeader = "H_mm,r_mm,T_mm,f1_hz,f2_hz,f3_hz,fb_hz,fr_hz,fs_hz,rn_mm";
inline constexpr const char* kInputCsvHeader = "H_mm,r_mm,T_mm";

void write_csv(std::ostream& os, const Dataset& ds);
void write_csv(const std::string& path, const Dataset& ds);
void write_rejected_csv(std::ostream& os, const std::vector<RejectedSample>& rejected);
void write_rejected_csv(const std::string& path, const std::vector<RejectedSample>& rejected);

/// Parses the full schema. Errors carry the 1-based line number.
Dataset read_csv(std::istream& is);
Dataset read_csv(const std::string& path);

/// Reads a prediction-input CSV (first three columns H_mm,r_mm,T_mm) into an N x 3 matrix.
Mat read_input_csv(std::istream& is);
Mat read_input_csv(const std::string& path);

/// Formats a double with 17 significant digits (lossless round trip).
std::string format_real(double v);

// ---------------------------------------------------------------------------
// Arrays, normalization, splitting

/// N x 3 matrix of (H, r, T).
Mat inputs_of(const Dataset& ds);
/// N x output_dim(task) matrix of targets.
Mat targets_of(const Dataset& ds, Task task);

/// Column-wise z-score statistics; fitted on the training split only.
struct NormStats {
    Eigen::VectorXd input_mean, input_std;
    Eigen::VectorXd target_mean, target_std;

    /// Throws DataError if any column has zero variance or fewer than two rows.
    static NormStats fit(const Mat& inputs, const Mat& targets);

    Mat normalize_inputs(const Mat& x) const;
    Mat normalize_targets(const Mat& y) const;
    Mat denormalize_targets(const Mat& z) const;
    Mat denormalize_inputs(const Mat& z) const;
};

/// Seeded shuffle, then the first round(train_fraction·n) samples train.
/// Throws DataError for fewer than 10 samples.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed);

inline constexpr double kTrainFraction = 0.85;

} // namespace rlstm

#endif // RLSTM_DATASET_HPP
