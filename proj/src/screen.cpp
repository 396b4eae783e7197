#include "rlstm/screen.hpp"

#include "rlstm/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace rlstm {

std::vector<double> AxisSpec::values() const
{
    if (!(step > 0.0) || !std::isfinite(start) || !std::isfinite(stop) || stop < start)
        throw ContractError("grid axis: need finite start <= stop and step > 0");
    const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i)
        v.push_back(std::round((start + static_cast<double>(i) * step) * 1e9) / 1e9);
    return v;
}

void GridSpec::validate() const
{
    if (!(R > 0.0) || !(T > 0.0))
        throw ContractError("grid: R and T must be positive");
    if (!(r.start > 0.0) || !(H.start > 0.0))
        throw ContractError("grid: r and H must be positive");
    r.values();
    H.values();
}

Mat GridSpec::inputs() const
{
    validate();
    const auto hs = H.values();
    const auto rs = r.values();
    Mat x(static_cast<Index>(hs.size() * rs.size()), 3);
    Index row = 0;
    for (double h : hs)
        for (double rr : rs) {
            x(row, 0) = h;
            x(row, 1) = rr;
            x(row, 2) = T;
            ++row;
        }
    return x;
}

namespace {

double parse_number(const std::string& s, const std::string& what)
{
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size())
        throw ContractError("grid spec: cannot parse " + what + " value '" + s + "'");
    return v;
}

std::vector<std::string> split_on(const std::string& s, char sep)
{
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        parts.push_back(item);
    return parts;
}

AxisSpec parse_axis(const std::string& text, const std::string& key)
{
    const auto parts = split_on(text, ':');
    if (parts.size() != 3)
        throw ContractError("grid spec: axis " + key + " must be start:stop:step, got '" + text + "'");
    return {parse_number(parts[0], key), parse_number(parts[1], key), parse_number(parts[2], key)};
}

} // namespace

GridSpec parse_grid(const std::string& text)
{
    GridSpec g;
    for (const auto& item : split_on(text, ',')) {
        if (item.empty())
            continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw ContractError("grid spec: expected key=value, got '" + item + "'");
        const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
        if (key == "r")
            g.r = parse_axis(value, key);
        else if (key == "H")
            g.H = parse_axis(value, key);
        else if (key == "T")
            g.T = parse_number(value, key);
        else if (key == "R")
            g.R = parse_number(value, key);
        else
            throw ContractError("grid spec: unknown key '" + key + "' (expected r, H, T or R)");
    }
    g.validate();
    return g;
}

void Thresholds::validate() const
{
    if (!(rn_min > 0.0) || !(df_min > 0.0))
        throw ContractError("thresholds must be positive");
}

std::vector<Thresholds> default_threshold_sets()
{
    std::vector<Thresholds> sets;
    for (double rn : {0.2, 0.3, 0.4})
        for (double df : {1200.0, 1400.0, 1600.0})
            sets.push_back({rn, df});
    return sets;
}

std::vector<Thresholds> read_thresholds(std::istream& is)
{
    std::string line;
    int lineno = 0;
    std::vector<Thresholds> sets;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (lineno == 1 && line.rfind("rn_min", 0) == 0)
            continue;
        const auto cols = split_on(line, ',');
        if (cols.size() != 2)
            throw DataError("thresholds line " + std::to_string(lineno) + ": expected 2 columns");
        Thresholds th;
        try {
            th = {parse_number(cols[0], "rn_min"), parse_number(cols[1], "df_min")};
            th.validate();
        } catch (const ContractError& e) {
            throw DataError("thresholds line " + std::to_string(lineno) + ": " + e.what());
        }
        sets.push_back(th);
    }
    if (sets.empty())
        throw DataError("thresholds file contains no threshold sets");
    return sets;
}

std::vector<Thresholds> read_thresholds(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open thresholds file '" + path + "'");
    return read_thresholds(in);
}

// ---------------------------------------------------------------------------

double delta_f(const std::array<double, 6>& freqs)
{
    for (double f : freqs)
        if (!std::isfinite(f))
            throw DomainError("delta_f: non-finite frequency");
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < freqs.size(); ++i)
        if (i != 1)
            best = std::min(best, std::abs(freqs[1] - freqs[i]));
    return best;
}

std::string to_string(Verdict v)
{
    switch (v) {
    case Verdict::Feasible:
        return "feasible";
    case Verdict::AnchorTooSmall:
        return "anchor_too_small";
    case Verdict::ModeCoupling:
        return "mode_coupling";
    case Verdict::Both:
        return "both";
    }
    throw ContractError("unknown verdict");
}

Verdict classify(double rn, double df, const Thresholds& th)
{
    const bool anchor_ok = rn >= th.rn_min;
    const bool df_ok = df >= th.df_min;
    if (anchor_ok && df_ok)
        return Verdict::Feasible;
    if (!anchor_ok && !df_ok)
        return Verdict::Both;
    return anchor_ok ? Verdict::ModeCoupling : Verdict::AnchorTooSmall;
}

// ---------------------------------------------------------------------------

PointPredictor model_predictor(const TrainedModel& freq, const TrainedModel& radius)
{
    if (freq.task() != Task::Frequency)
        throw ContractError("screen: the frequency model serves the " + to_string(freq.task()) + " task");
    if (radius.task() != Task::Radius)
        throw ContractError("screen: the radius model serves the " + to_string(radius.task()) + " task");
    return [&freq, &radius](const Mat& x) {
        const Mat rn = radius.predict(x);
        const Mat f = freq.predict(x);
        std::vector<PointPrediction> out(static_cast<std::size_t>(x.rows()));
        for (Index i = 0; i < x.rows(); ++i) {
            auto& p = out[static_cast<std::size_t>(i)];
            p.rn = rn(i, 0);
            for (Index j = 0; j < 6; ++j)
                p.freqs[static_cast<std::size_t>(j)] = f(i, j);
        }
        return out;
    };
}

namespace {

PointPrediction from_sample(const Sample& s)
{
    return {s.rn, s.frequencies()};
}

} // namespace

PointPredictor surrogate_predictor(std::uint64_t seed)
{
    return [seed](const Mat& x) {
        std::vector<PointPrediction> out;
        out.reserve(static_cast<std::size_t>(x.rows()));
        for (Index i = 0; i < x.rows(); ++i)
            out.push_back(from_sample(surrogate_oracle(x(i, 0), x(i, 1), x(i, 2), seed)));
        return out;
    };
}

PointPredictor dataset_predictor(const Dataset& ds)
{
    return [samples = ds.samples](const Mat& x) {
        std::vector<PointPrediction> out;
        for (Index i = 0; i < x.rows(); ++i) {
            auto it = std::find_if(samples.begin(), samples.end(), [&](const Sample& s) {
                return std::abs(s.H - x(i, 0)) < 1e-6 && std::abs(s.r - x(i, 1)) < 1e-6 &&
                       std::abs(s.T - x(i, 2)) < 1e-6;
            });
            if (it == samples.end())
                throw DataError("oracle data has no row for H=" + format_real(x(i, 0)) +
                                " r=" + format_real(x(i, 1)) + " T=" + format_real(x(i, 2)));
            out.push_back(from_sample(*it));
        }
        return out;
    };
}

GridEvaluation evaluate_grid(const GridSpec& grid, const PointPredictor& predictor, const PointPredictor* oracle)
{
    GridEvaluation e;
    e.grid = grid;
    e.inputs = grid.inputs();
    const auto start = std::chrono::steady_clock::now();
    e.predicted = predictor(e.inputs);
    e.prediction_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (e.predicted.size() != static_cast<std::size_t>(e.inputs.rows()))
        throw ContractError("screen: predictor returned the wrong number of points");
    if (oracle) {
        e.oracle = (*oracle)(e.inputs);
        if (e.oracle->size() != e.predicted.size())
            throw ContractError("screen: oracle returned the wrong number of points");
    }
    return e;
}

ScreeningReport classify_grid(const GridEvaluation& eval, const Thresholds& th)
{
    th.validate();
    ScreeningReport rep;
    rep.thresholds = th;
    rep.prediction_seconds = eval.prediction_seconds;
    std::size_t matches = 0;
    for (std::size_t i = 0; i < eval.predicted.size(); ++i) {
        ScreenPoint p;
        p.H = eval.inputs(static_cast<Index>(i), 0);
        p.r = eval.inputs(static_cast<Index>(i), 1);
        p.predicted = eval.predicted[i];
        p.predicted_df = delta_f(p.predicted.freqs);
        p.predicted_class = classify(p.predicted.rn, p.predicted_df, th);
        if (p.predicted_class == Verdict::Feasible)
            ++rep.feasible;
        if (eval.oracle) {
            const PointPrediction& o = (*eval.oracle)[i];
            p.oracle_df = delta_f(o.freqs);
            p.oracle_class = classify(o.rn, *p.oracle_df, th);
            if (*p.oracle_class == p.predicted_class)
                ++matches;
        }
        rep.points.push_back(p);
    }
    if (eval.oracle) {
        rep.matches = matches;
        rep.accuracy = accuracy_rate(matches, rep.points.size());
    }
    return rep;
}

ScreeningReport screen(const GridSpec& grid, const PointPredictor& predictor, const Thresholds& th,
                       const PointPredictor* oracle)
{
    return classify_grid(evaluate_grid(grid, predictor, oracle), th);
}

double accuracy_rate(std::size_t matches, std::size_t total)
{
    if (total == 0 || matches > total)
        throw ContractError("accuracy_rate: need 0 <= matches <= total and total > 0");
    return static_cast<double>(matches) / static_cast<double>(total);
}

double average_accuracy(const std::vector<double>& accuracies)
{
    if (accuracies.empty())
        throw ContractError("average_accuracy: no accuracies");
    return std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / static_cast<double>(accuracies.size());
}

MultiThresholdReport multi_threshold_report(const GridEvaluation& eval, const std::vector<Thresholds>& sets)
{
    if (sets.empty())
        throw ContractError("multi_threshold_report: no threshold sets");
    if (!eval.oracle)
        throw ContractError("multi_threshold_report: accuracy needs an oracle");
    MultiThresholdReport rep;
    std::vector<double> acc;
    for (const auto& th : sets) {
        const ScreeningReport s = classify_grid(eval, th);
        rep.rows.push_back({th, *s.accuracy, *s.matches});
        acc.push_back(*s.accuracy);
    }
    rep.average = average_accuracy(acc);
    return rep;
}

// ---------------------------------------------------------------------------

void write_screen_csv(std::ostream& os, const ScreeningReport& report)
{
    const bool oracle = report.accuracy.has_value();
    os << "H_mm,r_mm,pred_rn_mm,pred_df_hz,pred_class";
    if (oracle)
        os << ",oracle_class,match";
    os << '\n';
    for (const auto& p : report.points) {
        os << format_real(p.H) << ',' << format_real(p.r) << ',' << format_real(p.predicted.rn) << ','
           << format_real(p.predicted_df) << ',' << to_string(p.predicted_class);
        if (oracle)
            os << ',' << to_string(*p.oracle_class) << ',' << (*p.oracle_class == p.predicted_class ? 1 : 0);
        os << '\n';
    }
}

namespace {

std::string percent(double a)
{
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << 100.0 * a << '%';
    return ss.str();
}

} // namespace

void write_screen_summary(std::ostream& os, const ScreeningReport& report)
{
    os << "thresholds: rn_min " << report.thresholds.rn_min << " mm, df_min " << report.thresholds.df_min << " Hz\n";
    os << "points: " << report.points.size() << '\n';
    os << "feasible: " << report.feasible << '\n';
    if (report.accuracy)
        os << "accuracy: " << percent(*report.accuracy) << " (" << *report.matches << '/' << report.points.size()
           << ")\n";
    os << "prediction_seconds: " << report.prediction_seconds << '\n';
}

void write_multi_summary(std::ostream& os, const MultiThresholdReport& report)
{
    os << "rn_min_mm,df_min_hz,accuracy\n";
    for (const auto& row : report.rows)
        os << row.thresholds.rn_min << ',' << row.thresholds.df_min << ',' << percent(row.accuracy) << '\n';
    os << "average,," << percent(report.average) << '\n';
}

void write_heatmap(std::ostream& os, const ScreeningReport& report, const GridSpec& grid)
{
    const auto rs = grid.r.values();
    const auto hs = grid.H.values();
    if (report.points.size() != rs.size() * hs.size())
        throw ContractError("write_heatmap: report does not match the grid");
    os << rs.size();
    for (double r : rs)
        os << ' ' << r;
    os << '\n';
    for (std::size_t i = 0; i < hs.size(); ++i) {
        os << hs[i];
        for (std::size_t j = 0; j < rs.size(); ++j)
            os << ' ' << (report.points[i * rs.size() + j].predicted_class == Verdict::Feasible ? 1 : 0);
        os << '\n';
    }
}

} // namespace rlstm
