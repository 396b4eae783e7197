#include "cli.hpp"

#include "rlstm/dataset.hpp"
#include "rlstm/errors.hpp"
#include "rlstm/ga.hpp"
#include "rlstm/model.hpp"
#include "rlstm/model_store.hpp"
#include "rlstm/screen.hpp"
#include "rlstm/training.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <utility>

namespace rlstm::cli {
namespace {

struct Global {
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

/// Resolved configuration, printed before any work as "# --flag value" lines
/// plus the equivalent full command.
class Header {
public:
    explicit Header(std::string command) : command_(std::move(command)) {}

    template <typename T>
    Header& add(const std::string& flag, const T& value)
    {
        std::ostringstream ss;
        if constexpr (std::is_same_v<T, double>)
            ss << format_real(value);
        else
            ss << value;
        items_.emplace_back(flag, ss.str());
        return *this;
    }

    Header& flag(const std::string& flag, bool on)
    {
        if (on)
            items_.emplace_back(flag, "");
        return *this;
    }

    void print(std::ostream& os) const
    {
        os << "# rlstm " << command_ << '\n';
        std::string line = "rlstm " + command_;
        for (const auto& [k, v] : items_) {
            os << "# " << k << (v.empty() ? "" : " " + v) << '\n';
            line += " " + k + (v.empty() ? "" : " " + v);
        }
        os << "# command: " << line << '\n';
    }

private:
    std::string command_;
    std::vector<std::pair<std::string, std::string>> items_;
};

std::ofstream open_out(const std::string& path)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw DataError("cannot write output file '" + path + "'");
    return f;
}

std::string rejected_path(const std::string& out)
{
    std::filesystem::path p(out);
    const std::string stem = p.stem().string();
    return (p.parent_path() / (stem + "_rejected.csv")).string();
}

// ---------------------------------------------------------------------------

struct GenDataOpts {
    int n_raw = kDefaultRawSamples;
    std::string out = "surrogate.csv";
};

int cmd_gen_data(const Global& g, const GenDataOpts& o, std::ostream& out)
{
    const std::uint64_t seed = g.seed.value_or(kDefaultDataSeed);
    Header("gen-data").add("--seed", seed).add("--n-raw", o.n_raw).add("--out", o.out).print(out);
    const GenerationResult r = generate_dataset(o.n_raw, seed);
    {
        auto f = open_out(o.out);
        write_csv(f, r.dataset);
    }
    {
        auto f = open_out(rejected_path(o.out));
        write_rejected_csv(f, r.rejected);
    }
    out << "raw=" << r.n_raw << " kept=" << r.dataset.size() << " rejected=" << r.rejected.size() << '\n';
    return kSuccess;
}

// ---------------------------------------------------------------------------

struct ModelOpts {
    std::string task = "frequency";
    std::string variant = "c";
    std::optional<int> numhead;
    std::optional<double> numdrop;
    std::optional<int> numlstm;
};

ModelConfig resolve_config(const ModelOpts& o)
{
    ModelConfig cfg = default_config(parse_task(o.task));
    cfg.variant = parse_variant(o.variant);
    if (o.numhead)
        cfg.numhead = *o.numhead;
    if (o.numdrop)
        cfg.numdrop = *o.numdrop;
    if (o.numlstm)
        cfg.numlstm = *o.numlstm;
    cfg.validate();
    return cfg;
}

struct TrainingOpts {
    int epochs = 3000;
    int batch_size = 0;
    double lr = 1e-3;
    int runs = 3;
    int threads = 1;
};

TrainSpec resolve_spec(const TrainingOpts& o, std::uint64_t seed, bool log)
{
    TrainSpec s;
    s.epochs = o.epochs;
    s.batch_size = o.batch_size;
    s.lr0 = o.lr;
    s.seed = seed;
    s.log = log;
    s.validate();
    return s;
}

void add_training(Header& h, const TrainingOpts& o)
{
    h.add("--epochs", o.epochs).add("--batch-size", o.batch_size).add("--lr", o.lr).add("--runs", o.runs);
    h.add("--threads", o.threads);
}

void add_model(Header& h, const ModelConfig& cfg)
{
    h.add("--task", to_string(cfg.task)).add("--variant", to_string(cfg.variant));
    h.add("--numhead", cfg.numhead).add("--numdrop", cfg.numdrop).add("--numlstm", cfg.numlstm);
}

struct TrainOpts {
    std::string data;
    ModelOpts model;
    TrainingOpts training;
    std::string out;
    std::string report;
};

int cmd_train(const Global& g, TrainOpts o, std::ostream& out)
{
    const std::uint64_t seed = g.seed.value_or(0);
    ModelConfig cfg = resolve_config(o.model);
    cfg.seed = seed;
    if (o.out.empty())
        o.out = to_string(cfg.task) + ".rlstm";
    const TrainSpec spec = resolve_spec(o.training, seed, !g.quiet);
    Header h("train");
    h.add("--seed", seed).add("--data", o.data);
    add_model(h, cfg);
    add_training(h, o.training);
    h.add("--out", o.out);
    if (!o.report.empty())
        h.add("--report", o.report);
    h.print(out);

    const Dataset ds = read_csv(o.data);
    const AveragedResult avg = evaluate_averaged(cfg, spec, ds, o.training.runs, o.training.threads);
    write_report(out, avg.report);
    if (!o.report.empty()) {
        auto f = open_out(o.report);
        write_report(f, avg.report);
    }
    if (avg.report.completed_runs() == 0)
        throw NumericalError("every evaluation run diverged");

    // Final model on the whole dataset.
    const TrainResult final_fit = train(cfg, spec, ds, Dataset{});
    save_model(final_fit.model, o.out);
    out << "final_rmse_train " << format_real(final_fit.report.rmse_train) << '\n';
    out << "model " << o.out << '\n';
    return kSuccess;
}

// ---------------------------------------------------------------------------

struct TuneOpts {
    std::string data;
    std::string task = "frequency";
    GaSpec ga;
    TrainingOpts training{800, 0, 1e-3, 3, 1};
    std::string out = "ga_history.csv";
    std::string best_out;
    std::string model_out;
};

std::string genome_line(const Genome& gn)
{
    return "numhead=" + std::to_string(gn.numhead) + " numdrop=" + format_real(gn.numdrop) +
           " numlstm=" + std::to_string(gn.numlstm);
}

int cmd_tune(const Global& g, const TuneOpts& o, std::ostream& out)
{
    const std::uint64_t seed = g.seed.value_or(0);
    const Task task = parse_task(o.task);
    GaSpec ga = o.ga;
    ga.seed = seed;
    ga.threads = o.training.threads;
    TrainSpec budget = tuning_train_spec(seed);
    budget.epochs = o.training.epochs;
    budget.batch_size = o.training.batch_size;
    budget.lr0 = o.training.lr;
    budget.validate();
    Header h("tune");
    h.add("--seed", seed).add("--data", o.data).add("--task", to_string(task));
    h.add("--population", ga.population).add("--generations", ga.generations);
    h.add("--tournament", ga.tournament_size).add("--crossover", ga.crossover_rate);
    h.add("--mutation", ga.mutation_rate).add("--elitism", ga.elitism);
    add_training(h, o.training);
    h.add("--out", o.out);
    if (!o.best_out.empty())
        h.add("--best-out", o.best_out);
    if (!o.model_out.empty())
        h.add("--model-out", o.model_out);
    h.print(out);

    const Dataset ds = read_csv(o.data);
    if (ds.size() < 10)
        throw DataError("dataset has " + std::to_string(ds.size()) + " samples; tuning needs at least 10");
    FitnessCache cache(training_fitness(ds, task, budget, o.training.runs));
    const GaResult r = evolve(ga, cache);
    {
        auto f = open_out(o.out);
        write_history_csv(f, r.history);
    }
    out << "best " << genome_line(r.best) << " fitness=" << format_real(r.best_fitness) << '\n';
    out << "evaluations " << r.evaluations << '\n';
    if (!o.best_out.empty()) {
        auto f = open_out(o.best_out);
        f << "numhead,numdrop,numlstm,fitness\n"
          << r.best.numhead << ',' << format_real(r.best.numdrop) << ',' << r.best.numlstm << ','
          << format_real(r.best_fitness) << '\n';
    }
    if (!o.model_out.empty()) {
        ModelConfig cfg = apply_genome(default_config(task), r.best);
        cfg.seed = seed;
        TrainSpec full;
        full.seed = seed;
        full.log = !g.quiet;
        const TrainResult fit = train(cfg, full, ds, Dataset{});
        save_model(fit.model, o.model_out);
        out << "model " << o.model_out << '\n';
    }
    return kSuccess;
}

// ---------------------------------------------------------------------------

struct AblateOpts {
    std::string data;
    std::string task = "frequency";
    TrainingOpts training;
    bool tune = false;
    int population = 16;
    int generations = 20;
    std::string out = "ablation.csv";
};

int cmd_ablate(const Global& g, const AblateOpts& o, std::ostream& out)
{
    const std::uint64_t seed = g.seed.value_or(0);
    const Task task = parse_task(o.task);
    const TrainSpec spec = resolve_spec(o.training, seed, false);
    Header h("ablate");
    h.add("--seed", seed).add("--data", o.data).add("--task", to_string(task));
    add_training(h, o.training);
    h.flag("--tune", o.tune);
    if (o.tune)
        h.add("--population", o.population).add("--generations", o.generations);
    h.add("--out", o.out);
    h.print(out);

    const Dataset ds = read_csv(o.data);
    std::ostringstream table;
    table << "variant,numhead,numdrop,numlstm,rmse_train,rmse_test,r2_test,param_count\n";
    for (Variant v : kAllVariants) {
        ModelConfig cfg = default_config(task);
        cfg.variant = v;
        cfg.seed = seed;
        if (o.tune) {
            GaSpec ga;
            ga.population = o.population;
            ga.generations = o.generations;
            ga.seed = seed;
            ga.threads = o.training.threads;
            TrainSpec budget = tuning_train_spec(seed);
            FitnessCache cache([ds, cfg, budget, runs = o.training.runs](const Genome& gn) {
                const AveragedResult r = evaluate_averaged(apply_genome(cfg, gn), budget, ds, runs);
                if (r.report.completed_runs() < r.report.runs.size())
                    return kDivergedFitness;
                return r.report.rmse_test;
            });
            cfg = apply_genome(cfg, evolve(ga, cache).best);
        }
        const AveragedResult r = evaluate_averaged(cfg, spec, ds, o.training.runs, o.training.threads);
        table << to_string(v) << ',' << cfg.numhead << ',' << format_real(cfg.numdrop) << ',' << cfg.numlstm << ','
              << format_real(r.report.rmse_train) << ',' << format_real(r.report.rmse_test) << ','
              << format_real(r.report.r2_test) << ',' << count_parameters(cfg).total << '\n';
        if (!g.quiet)
            std::cerr << "variant " << to_string(v) << " rmse_test " << format_real(r.report.rmse_test) << '\n';
    }
    out << table.str();
    auto f = open_out(o.out);
    f << table.str();
    return kSuccess;
}

// ---------------------------------------------------------------------------

struct PredictOpts {
    std::string model;
    std::string input;
    std::string out = "predictions.csv";
};

int cmd_predict(const Global& g, const PredictOpts& o, std::ostream& out)
{
    Header h("predict");
    if (g.seed)
        h.add("--seed", *g.seed);
    h.add("--model", o.model).add("--input", o.input).add("--out", o.out).print(out);
    const TrainedModel m = load_model(o.model);
    const Mat x = read_input_csv(o.input);
    const auto start = std::chrono::steady_clock::now();
    const Mat y = m.predict(x);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    auto f = open_out(o.out);
    f << kInputCsvHeader << (m.task() == Task::Frequency ? ",f1_hz,f2_hz,f3_hz,fb_hz,fr_hz,fs_hz\n" : ",rn_mm\n");
    for (Index i = 0; i < x.rows(); ++i) {
        f << format_real(x(i, 0)) << ',' << format_real(x(i, 1)) << ',' << format_real(x(i, 2));
        for (Index j = 0; j < y.cols(); ++j)
            f << ',' << format_real(y(i, j));
        f << '\n';
    }
    out << "task " << to_string(m.task()) << '\n';
    out << "rows " << x.rows() << '\n';
    out << "prediction_seconds " << seconds << '\n';
    return kSuccess;
}

// ---------------------------------------------------------------------------

struct ScreenOpts {
    std::string freq_model;
    std::string radius_model;
    std::string grid = "r=0.4:1.1:0.1,H=1.5:2.9:0.2,T=0.16";
    double rn_min = 0.2;
    double df_min = 1200;
    std::string thresholds_file;
    std::string oracle;
    std::string out = "screen.csv";
    std::string heatmap;
};

int cmd_screen(const Global& g, const ScreenOpts& o, std::ostream& out)
{
    const std::uint64_t seed = g.seed.value_or(kDefaultDataSeed);
    const GridSpec grid = parse_grid(o.grid);
    const Thresholds th{o.rn_min, o.df_min};
    th.validate();
    Header h("screen");
    h.add("--seed", seed).add("--freq-model", o.freq_model).add("--radius-model", o.radius_model);
    h.add("--grid", o.grid).add("--rn-min", th.rn_min).add("--df-min", th.df_min);
    if (!o.thresholds_file.empty())
        h.add("--thresholds-file", o.thresholds_file);
    if (!o.oracle.empty())
        h.add("--oracle", o.oracle);
    h.add("--out", o.out);
    if (!o.heatmap.empty())
        h.add("--heatmap", o.heatmap);
    h.print(out);

    const TrainedModel freq = load_model(o.freq_model, Task::Frequency);
    const TrainedModel radius = load_model(o.radius_model, Task::Radius);
    const PointPredictor predictor = model_predictor(freq, radius);
    std::optional<PointPredictor> oracle;
    if (o.oracle == "surrogate")
        oracle = surrogate_predictor(seed);
    else if (!o.oracle.empty())
        oracle = dataset_predictor(read_csv(o.oracle));

    const GridEvaluation eval = evaluate_grid(grid, predictor, oracle ? &*oracle : nullptr);
    const ScreeningReport rep = classify_grid(eval, th);
    {
        auto f = open_out(o.out);
        write_screen_csv(f, rep);
    }
    if (!o.heatmap.empty()) {
        auto f = open_out(o.heatmap);
        write_heatmap(f, rep, grid);
    }
    write_screen_summary(out, rep);
    if (!o.thresholds_file.empty()) {
        const auto sets = read_thresholds(o.thresholds_file);
        if (oracle) {
            write_multi_summary(out, multi_threshold_report(eval, sets));
        } else {
            out << "rn_min_mm,df_min_hz,feasible\n";
            for (const auto& s : sets)
                out << s.rn_min << ',' << s.df_min << ',' << classify_grid(eval, s).feasible << '\n';
        }
    }
    return kSuccess;
}

// ---------------------------------------------------------------------------

struct SweepOpts {
    std::string axis;
    std::string task = "frequency";
    std::string data;
    TrainingOpts training{800, 0, 1e-3, 3, 1};
    int drop_points = 7;
    std::string out = "sweep.csv";
};

int cmd_sweep(const Global& g, const SweepOpts& o, std::ostream& out)
{
    const std::uint64_t seed = g.seed.value_or(0);
    const SweepAxis axis = parse_sweep_axis(o.axis);
    const Task task = parse_task(o.task);
    TrainSpec budget = tuning_train_spec(seed);
    budget.epochs = o.training.epochs;
    budget.batch_size = o.training.batch_size;
    budget.lr0 = o.training.lr;
    budget.validate();
    const Genome base = default_genome(task);
    Header h("sweep");
    h.add("--seed", seed).add("--axis", to_string(axis)).add("--task", to_string(task)).add("--data", o.data);
    add_training(h, o.training);
    h.add("--drop-points", o.drop_points).add("--out", o.out);
    h.print(out);
    out << "# fixed " << genome_line(base) << '\n';

    const Dataset ds = read_csv(o.data);
    FitnessCache cache(training_fitness(ds, task, budget, o.training.runs));
    const auto rows = hyperparameter_sweep(axis, base, cache, {}, o.drop_points, o.training.threads);
    std::ostringstream table;
    write_sweep_csv(table, axis, rows);
    out << table.str();
    auto f = open_out(o.out);
    f << table.str();
    return kSuccess;
}

// ---------------------------------------------------------------------------

void training_flags(CLI::App* sub, TrainingOpts& t)
{
    sub->add_option("--epochs", t.epochs, "Training epochs per run")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--batch-size", t.batch_size, "Mini-batch size (0 = full batch)")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--lr", t.lr, "Initial learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--runs", t.runs, "Re-split/retrain repetitions averaged")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub->add_option("--threads", t.threads, "Concurrent training runs")->capture_default_str()->check(CLI::PositiveNumber);
}

const std::vector<std::string> kTasks{"frequency", "radius"};
const std::vector<std::string> kVariants{"baseline", "a", "b", "c", "d"};

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Transformer-LSTM regression toolkit for hemispherical resonator design"};
    app.require_subcommand(1);
    Global g;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Seed for every random stream");
    app.add_flag("--quiet", g.quiet, "Suppress progress logging");
    app.fallthrough();

    GenDataOpts gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate the surrogate dataset");
    gen_cmd->add_option("--n-raw", gen.n_raw, "Raw design points before filtering")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    gen_cmd->add_option("--out", gen.out, "Dataset CSV (rejected rows go to <stem>_rejected.csv)")->capture_default_str();

    TrainOpts tr;
    auto* train_cmd = app.add_subcommand("train", "Evaluate a configuration and save a model trained on all data");
    train_cmd->add_option("--data", tr.data, "Dataset CSV")->required();
    train_cmd->add_option("--task", tr.model.task)->capture_default_str()->check(CLI::IsMember(kTasks));
    train_cmd->add_option("--variant", tr.model.variant)->capture_default_str()->check(CLI::IsMember(kVariants));
    train_cmd->add_option("--numhead", tr.model.numhead, "Default depends on --task");
    train_cmd->add_option("--numdrop", tr.model.numdrop, "Default depends on --task");
    train_cmd->add_option("--numlstm", tr.model.numlstm, "Default depends on --task");
    training_flags(train_cmd, tr.training);
    train_cmd->add_option("--out", tr.out, "Model file (default <task>.rlstm)");
    train_cmd->add_option("--report", tr.report, "Also write the evaluation report here");

    TuneOpts tu;
    auto* tune_cmd = app.add_subcommand("tune", "Genetic-algorithm hyperparameter search");
    tune_cmd->add_option("--data", tu.data, "Dataset CSV")->required();
    tune_cmd->add_option("--task", tu.task)->capture_default_str()->check(CLI::IsMember(kTasks));
    tune_cmd->add_option("--population", tu.ga.population)->capture_default_str();
    tune_cmd->add_option("--generations", tu.ga.generations)->capture_default_str()->check(CLI::NonNegativeNumber);
    tune_cmd->add_option("--tournament", tu.ga.tournament_size)->capture_default_str();
    tune_cmd->add_option("--crossover", tu.ga.crossover_rate)->capture_default_str();
    tune_cmd->add_option("--mutation", tu.ga.mutation_rate)->capture_default_str();
    tune_cmd->add_option("--elitism", tu.ga.elitism)->capture_default_str();
    training_flags(tune_cmd, tu.training);
    tune_cmd->add_option("--out", tu.out, "GA history CSV")->capture_default_str();
    tune_cmd->add_option("--best-out", tu.best_out, "Best genome CSV");
    tune_cmd->add_option("--model-out", tu.model_out, "Retrain the best genome on all data and save it here");

    AblateOpts ab;
    auto* ablate_cmd = app.add_subcommand("ablate", "Compare the five encoder variants");
    ablate_cmd->add_option("--data", ab.data, "Dataset CSV")->required();
    ablate_cmd->add_option("--task", ab.task)->capture_default_str()->check(CLI::IsMember(kTasks));
    training_flags(ablate_cmd, ab.training);
    ablate_cmd->add_flag("--tune", ab.tune, "Tune each variant with the GA first");
    ablate_cmd->add_option("--population", ab.population)->capture_default_str();
    ablate_cmd->add_option("--generations", ab.generations)->capture_default_str();
    ablate_cmd->add_option("--out", ab.out, "Comparison CSV")->capture_default_str();

    PredictOpts pr;
    auto* predict_cmd = app.add_subcommand("predict", "Predict from a saved model");
    predict_cmd->add_option("--model", pr.model, ".rlstm model file")->required();
    predict_cmd->add_option("--input", pr.input, "CSV with H_mm,r_mm,T_mm columns")->required();
    predict_cmd->add_option("--out", pr.out, "Predictions CSV")->capture_default_str();

    ScreenOpts sc;
    auto* screen_cmd = app.add_subcommand("screen", "Screen a design grid for manufacturability and mode coupling");
    screen_cmd->add_option("--freq-model", sc.freq_model)->required();
    screen_cmd->add_option("--radius-model", sc.radius_model)->required();
    screen_cmd->add_option("--grid", sc.grid, "r=start:stop:step,H=start:stop:step,T=value")->capture_default_str();
    screen_cmd->add_option("--rn-min", sc.rn_min, "Minimum actual anchor radius, mm")->capture_default_str();
    screen_cmd->add_option("--df-min", sc.df_min, "Minimum frequency separation, Hz")->capture_default_str();
    screen_cmd->add_option("--thresholds-file", sc.thresholds_file, "CSV rn_min_mm,df_min_hz of threshold sets");
    screen_cmd->add_option("--oracle", sc.oracle, "'surrogate' or a dataset CSV covering the grid");
    screen_cmd->add_option("--out", sc.out, "Per-point CSV")->capture_default_str();
    screen_cmd->add_option("--heatmap", sc.heatmap, "gnuplot matrix of predicted feasibility");

    SweepOpts sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "One-dimensional hyperparameter sweep");
    sweep_cmd->add_option("--axis", sw.axis, "numhead, numdrop or numlstm")->required();
    sweep_cmd->add_option("--task", sw.task)->capture_default_str()->check(CLI::IsMember(kTasks));
    sweep_cmd->add_option("--data", sw.data, "Dataset CSV")->required();
    training_flags(sweep_cmd, sw.training);
    sweep_cmd->add_option("--drop-points", sw.drop_points, "Grid points on the numdrop axis")->capture_default_str();
    sweep_cmd->add_option("--out", sw.out, "Sweep CSV")->capture_default_str();

    std::vector<std::string> argv_store{"rlstm"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store)
        argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kUsage;
    }
    if (*seed_opt)
        g.seed = seed_value;

    try {
        if (*gen_cmd)
            return cmd_gen_data(g, gen, out);
        if (*train_cmd)
            return cmd_train(g, tr, out);
        if (*tune_cmd)
            return cmd_tune(g, tu, out);
        if (*ablate_cmd)
            return cmd_ablate(g, ab, out);
        if (*predict_cmd)
            return cmd_predict(g, pr, out);
        if (*screen_cmd)
            return cmd_screen(g, sc, out);
        if (*sweep_cmd)
            return cmd_sweep(g, sw, out);
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << '\n';
        return kNumerical;
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kUsage;
}

} // namespace rlstm::cli
