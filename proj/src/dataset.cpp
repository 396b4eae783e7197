#include "rlstm/dataset.hpp"

#include "rlstm/errors.hpp"
#include "rlstm/rng.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace rlstm {

std::string to_string(Task task)
{
    return task == Task::Frequency ? "frequency" : "radius";
}

Task parse_task(const std::string& name)
{
    if (name == "frequency")
        return Task::Frequency;
    if (name == "radius")
        return Task::Radius;
    throw ContractError("unknown task '" + name + "' (expected frequency or radius)");
}

int output_dim(Task task)
{
    return task == Task::Frequency ? 6 : 1;
}

// ---------------------------------------------------------------------------
// Surrogate

namespace {

// Surrogate constants, version 1.
constexpr double kProcessTempK = 2100.0;
// Shrinkage relaxes over a height/thickness ratio of ~20 at the process
// temperature: lambda = kRelaxScale * log10(eta(2100 K)).
constexpr double kRelaxScale = 3.5865;
constexpr double kShrinkMin = 0.15;
constexpr double kShrinkSpan = 0.15;

constexpr double kRefHeight = 2.5;
constexpr double kRefThickness = 0.16;
constexpr double kRefAnchor = 0.6;
constexpr double kBaseF2Hz = 7000.0;
constexpr double kFrequencyNoise = 5e-4; // relative, one sigma

// Lower end of the anchor axis in the raw sweep. Below the dataset range on
// purpose: the lowest level straddles the 0.1 mm manufacturability limit.
constexpr double kSweepAnchorMin = 0.115;

std::uint64_t point_key(double H, double r, double T)
{
    std::uint64_t k = mix64(std::bit_cast<std::uint64_t>(H));
    k = mix64(k ^ std::bit_cast<std::uint64_t>(r));
    return mix64(k ^ std::bit_cast<std::uint64_t>(T));
}

bool positive_finite(double v)
{
    return std::isfinite(v) && v > 0.0;
}

} // namespace

double fulcher_viscosity(double temp_k)
{
    if (!(temp_k > 239.5))
        throw DomainError("fulcher_viscosity: temperature must exceed 239.5 K, got " + format_real(temp_k));
    return std::pow(10.0, -5.894 + 21340.8 / (temp_k - 239.5));
}

double anchor_shrinkage(double H, double T)
{
    const double relax = kRelaxScale * std::log10(fulcher_viscosity(kProcessTempK));
    return kShrinkMin + kShrinkSpan * (1.0 - std::exp(-(H / T) / relax));
}

Sample surrogate_oracle(double H, double r, double T, std::uint64_t seed)
{
    if (!positive_finite(H) || !positive_finite(r) || !positive_finite(T))
        throw DomainError("surrogate_oracle: H, r, T must be positive and finite (got " + format_real(H) + ", " +
                          format_real(r) + ", " + format_real(T) + ")");
    Sample s;
    s.H = H;
    s.r = r;
    s.T = T;
    const double rn_exact = r * (1.0 - anchor_shrinkage(H, T));
    s.rn = std::round(rn_exact * 100.0) / 100.0;

    const double h = H / kRefHeight;
    const double t = T / kRefThickness;
    const double a = rn_exact / kRefAnchor;

    // Operating mode: shell bending, stiffens with thickness, softens with depth.
    const double f2 = kBaseF2Hz * std::pow(t, 1.05) * std::pow(h, -0.85) * (1.0 + 0.04 * a) *
                      (1.0 + 0.03 * std::sin(2.2 * h + 1.3 * t));
    // Remaining modes as ratios to f2. n=1 rocking is governed by the anchor
    // stem and crosses f2 near rn = 0.38 mm; swing crosses it for shallow shells.
    const double ratio1 = 0.2 + 0.8 * std::pow(a / 0.63, 2.2) * std::pow(h, 0.15);
    const double ratio3 = 2.65 * std::pow(h, 0.12);
    const double ratio_b = 2.2 + 0.5 * std::pow(t, -0.4);
    const double ratio_r = 1.7 + 0.6 * a;
    const double ratio_s = 0.35 + 2.0 * std::pow(h, 1.5) * std::pow(t, -0.25);

    Rng noise(derive_seed(seed, "surrogate", point_key(H, r, T)));
    auto jitter = [&noise] { return 1.0 + kFrequencyNoise * noise.normal(); };
    s.f1 = f2 * ratio1 * jitter();
    s.f2 = f2 * jitter();
    s.f3 = f2 * ratio3 * jitter();
    s.fb = f2 * ratio_b * jitter();
    s.fr = f2 * ratio_r * jitter();
    s.fs = f2 * ratio_s * jitter();
    return s;
}

// ---------------------------------------------------------------------------
// Filter and generation

FilterVerdict feasibility_filter(const Sample& s)
{
    const std::array<double, 10> fields{s.H, s.r, s.T, s.f1, s.f2, s.f3, s.fb, s.fr, s.fs, s.rn};
    for (double v : fields)
        if (!std::isfinite(v))
            return {false, "non_finite_field"};
    for (double v : fields)
        if (v <= 0.0)
            return {false, "non_positive_field"};
    if (s.rn < kMinAnchorRadiusMm)
        return {false, "anchor_radius_below_min"};
    return {true, {}};
}

GenerationResult generate_dataset(int n_raw, std::uint64_t seed)
{
    if (n_raw < 1)
        throw ContractError("generate_dataset: n_raw must be at least 1, got " + std::to_string(n_raw));
    const auto& R = kParameterRanges;
    Rng rng(derive_seed(seed, "sweep"));

    std::vector<std::array<double, 3>> designs;
    designs.reserve(static_cast<std::size_t>(n_raw));
    const int k = static_cast<int>(std::lround(std::cbrt(static_cast<double>(n_raw))));
    if (k * k * k == n_raw) {
        auto level = [k](double lo, double hi, int i) {
            return k == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (k - 1);
        };
        auto step = [k](double lo, double hi) { return k == 1 ? 0.0 : (hi - lo) / (k - 1); };
        const double sh = step(R.h_min, R.h_max), sr = step(kSweepAnchorMin, R.r_max), st = step(R.t_min, R.t_max);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                for (int l = 0; l < k; ++l) {
                    // Jitter stays inside the sweep bounds.
                    const double H = std::clamp(level(R.h_min, R.h_max, i) + 0.25 * sh * rng.uniform(-1.0, 1.0),
                                                R.h_min, R.h_max);
                    const double r = std::clamp(level(kSweepAnchorMin, R.r_max, j) + 0.25 * sr * rng.uniform(-1.0, 1.0),
                                                kSweepAnchorMin, R.r_max);
                    const double T = std::clamp(level(R.t_min, R.t_max, l) + 0.25 * st * rng.uniform(-1.0, 1.0),
                                                R.t_min, R.t_max);
                    designs.push_back({H, r, T});
                }
    } else {
        for (int i = 0; i < n_raw; ++i) {
            const double H = rng.uniform(R.h_min, R.h_max);
            const double r = rng.uniform(kSweepAnchorMin, R.r_max);
            const double T = rng.uniform(R.t_min, R.t_max);
            designs.push_back({H, r, T});
        }
    }

    GenerationResult result;
    result.n_raw = static_cast<std::size_t>(n_raw);
    result.dataset.provenance = Provenance::Synthetic;
    result.dataset.seed = seed;
    std::set<std::tuple<double, double, double>> seen;
    for (const auto& [H, r, T] : designs) {
        const Sample s = surrogate_oracle(H, r, T, seed);
        FilterVerdict v = feasibility_filter(s);
        if (v.keep && !seen.emplace(H, r, T).second)
            v = {false, "duplicate_design"};
        if (v.keep)
            result.dataset.samples.push_back(s);
        else
            result.rejected.push_back({s, v.reason});
    }
    return result;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_real(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

void write_sample(std::ostream& os, const Sample& s)
{
    const std::array<double, 10> f{s.H, s.r, s.T, s.f1, s.f2, s.f3, s.fb, s.fr, s.fs, s.rn};
    for (std::size_t i = 0; i < f.size(); ++i)
        os << (i ? "," : "") << format_real(f[i]);
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw DataError("cannot open '" + path + "' for writing");
    return os;
}

std::ifstream open_in(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw DataError("cannot open '" + path + "' for reading");
    return is;
}

std::vector<std::string> split_fields(const std::string& line)
{
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ','))
        out.push_back(field);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

void chomp(std::string& line)
{
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
}

double parse_field(const std::string& text, std::size_t line_no, const char* column)
{
    double v = 0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    while (first < last && *first == ' ')
        ++first;
    while (last > first && last[-1] == ' ')
        --last;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || first == last)
        throw DataError("line " + std::to_string(line_no) + ": column " + column + ": cannot parse '" + text +
                        "' as a number");
    return v;
}

} // namespace

void write_csv(std::ostream& os, const Dataset& ds)
{
    os << kCsvHeader << '\n';
    for (const auto& s : ds.samples) {
        write_sample(os, s);
        os << '\n';
    }
}

void write_csv(const std::string& path, const Dataset& ds)
{
    auto os = open_out(path);
    write_csv(os, ds);
}

void write_rejected_csv(std::ostream& os, const std::vector<RejectedSample>& rejected)
{
    os << kCsvHeader << ",reject_reason\n";
    for (const auto& r : rejected) {
        write_sample(os, r.sample);
        os << ',' << r.reason << '\n';
    }
}

void write_rejected_csv(const std::string& path, const std::vector<RejectedSample>& rejected)
{
    auto os = open_out(path);
    write_rejected_csv(os, rejected);
}

Dataset read_csv(std::istream& is)
{
    static constexpr std::array<const char*, 10> columns{"H_mm",  "r_mm",  "T_mm",  "f1_hz", "f2_hz",
                                                         "f3_hz", "fb_hz", "fr_hz", "fs_hz", "rn_mm"};
    std::string line;
    if (!std::getline(is, line))
        throw DataError("line 1: missing header, expected '" + std::string(kCsvHeader) + "'");
    chomp(line);
    if (line != kCsvHeader)
        throw DataError("line 1: unexpected header '" + line + "', expected '" + std::string(kCsvHeader) + "'");
    Dataset ds;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        chomp(line);
        if (line.empty())
            continue;
        const auto fields = split_fields(line);
        if (fields.size() != columns.size())
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(columns.size()) +
                            " fields, got " + std::to_string(fields.size()));
        std::array<double, 10> v{};
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = parse_field(fields[i], line_no, columns[i]);
        ds.samples.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]});
    }
    return ds;
}

Dataset read_csv(const std::string& path)
{
    auto is = open_in(path);
    return read_csv(is);
}

Mat read_input_csv(std::istream& is)
{
    static constexpr std::array<const char*, 3> columns{"H_mm", "r_mm", "T_mm"};
    std::string line;
    if (!std::getline(is, line))
        throw DataError("line 1: missing header, expected '" + std::string(kInputCsvHeader) + "'");
    chomp(line);
    const auto header = split_fields(line);
    if (header.size() < 3 || header[0] != columns[0] || header[1] != columns[1] || header[2] != columns[2])
        throw DataError("line 1: header must start with '" + std::string(kInputCsvHeader) + "', got '" + line + "'");
    std::vector<std::array<double, 3>> rows;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        chomp(line);
        if (line.empty())
            continue;
        const auto fields = split_fields(line);
        if (fields.size() < 3)
            throw DataError("line " + std::to_string(line_no) + ": expected at least 3 fields, got " +
                            std::to_string(fields.size()));
        rows.push_back({parse_field(fields[0], line_no, columns[0]), parse_field(fields[1], line_no, columns[1]),
                        parse_field(fields[2], line_no, columns[2])});
    }
    Mat m(static_cast<Index>(rows.size()), 3);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (Index j = 0; j < 3; ++j)
            m(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    return m;
}

Mat read_input_csv(const std::string& path)
{
    auto is = open_in(path);
    return read_input_csv(is);
}

// ---------------------------------------------------------------------------
// Arrays and normalization

Mat inputs_of(const Dataset& ds)
{
    Mat m(static_cast<Index>(ds.size()), 3);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.samples[i];
        m.row(static_cast<Index>(i)) << s.H, s.r, s.T;
    }
    return m;
}

Mat targets_of(const Dataset& ds, Task task)
{
    Mat m(static_cast<Index>(ds.size()), output_dim(task));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.samples[i];
        if (task == Task::Frequency)
            m.row(static_cast<Index>(i)) << s.f1, s.f2, s.f3, s.fb, s.fr, s.fs;
        else
            m(static_cast<Index>(i), 0) = s.rn;
    }
    return m;
}

namespace {

void column_stats(const Mat& m, const char* what, Eigen::VectorXd& mean, Eigen::VectorXd& stddev)
{
    if (m.rows() < 2)
        throw DataError(std::string("normalization needs at least two ") + what + " rows");
    mean = m.colwise().mean().transpose();
    stddev = ((m.rowwise() - mean.transpose()).array().square().colwise().sum() / static_cast<double>(m.rows()))
                 .sqrt()
                 .transpose();
    for (Index j = 0; j < stddev.size(); ++j)
        if (!(stddev(j) > 0.0))
            throw DataError(std::string("zero-variance ") + what + " column " + std::to_string(j));
}

} // namespace

NormStats NormStats::fit(const Mat& inputs, const Mat& targets)
{
    NormStats s;
    column_stats(inputs, "input", s.input_mean, s.input_std);
    column_stats(targets, "target", s.target_mean, s.target_std);
    return s;
}

Mat NormStats::normalize_inputs(const Mat& x) const
{
    return ((x.rowwise() - input_mean.transpose()).array().rowwise() / input_std.transpose().array()).matrix();
}

Mat NormStats::denormalize_inputs(const Mat& z) const
{
    return ((z.array().rowwise() * input_std.transpose().array()).matrix().rowwise() + input_mean.transpose());
}

Mat NormStats::normalize_targets(const Mat& y) const
{
    return ((y.rowwise() - target_mean.transpose()).array().rowwise() / target_std.transpose().array()).matrix();
}

Mat NormStats::denormalize_targets(const Mat& z) const
{
    return ((z.array().rowwise() * target_std.transpose().array()).matrix().rowwise() + target_mean.transpose());
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed)
{
    if (ds.size() < 10)
        throw DataError("split: dataset has " + std::to_string(ds.size()) + " samples, at least 10 required");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ContractError("split: train fraction must lie in (0, 1)");
    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    Rng rng(derive_seed(seed, "split"));
    shuffle(order, rng);
    const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(ds.size())));
    std::pair<Dataset, Dataset> out;
    for (auto* part : {&out.first, &out.second}) {
        part->provenance = ds.provenance;
        part->seed = ds.seed;
    }
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_train ? out.first : out.second).samples.push_back(ds.samples[order[i]]);
    return out;
}

} // namespace rlstm
