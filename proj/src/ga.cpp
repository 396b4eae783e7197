#include "rlstm/ga.hpp"

#include "rlstm/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <ostream>

namespace rlstm {

Genome default_genome(Task task)
{
    const ModelConfig cfg = default_config(task);
    return {cfg.numhead, cfg.numdrop, cfg.numlstm};
}

ModelConfig apply_genome(ModelConfig cfg, const Genome& g)
{
    cfg.numhead = g.numhead;
    cfg.numdrop = g.numdrop;
    cfg.numlstm = g.numlstm;
    return cfg;
}

bool GenomeSpace::contains(const Genome& g) const
{
    return std::find(heads.begin(), heads.end(), g.numhead) != heads.end() && g.numdrop >= drop_min &&
           g.numdrop <= drop_max && g.numlstm >= lstm_min && g.numlstm <= lstm_max &&
           (g.numlstm - lstm_min) % lstm_step == 0;
}

Genome GenomeSpace::sample(Rng& rng) const
{
    Genome g;
    g.numhead = heads[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(heads.size()) - 1))];
    g.numdrop = std::exp(rng.uniform(std::log(drop_min), std::log(drop_max)));
    g.numdrop = std::clamp(g.numdrop, drop_min, drop_max);
    g.numlstm = lstm_min + lstm_step * static_cast<int>(rng.uniform_int(0, (lstm_max - lstm_min) / lstm_step));
    return g;
}

std::vector<int> GenomeSpace::lstm_values() const
{
    std::vector<int> v;
    for (int n = lstm_min; n <= lstm_max; n += lstm_step)
        v.push_back(n);
    return v;
}

// ---------------------------------------------------------------------------

double FitnessCache::operator()(const Genome& g)
{
    {
        std::lock_guard lock(mutex_);
        if (auto it = values_.find(key(g)); it != values_.end())
            return it->second;
    }
    const double f = fn_(g);
    std::lock_guard lock(mutex_);
    ++evaluations_;
    values_.emplace(key(g), f);
    return f;
}

std::vector<double> FitnessCache::evaluate_all(const std::vector<Genome>& genomes, int threads)
{
    std::vector<Genome> fresh;
    for (const Genome& g : genomes)
        if (!contains(g) && std::find(fresh.begin(), fresh.end(), g) == fresh.end())
            fresh.push_back(g);
    std::vector<double> scores(fresh.size());
    parallel_for(fresh.size(), threads, [&](std::size_t i) { scores[i] = fn_(fresh[i]); });
    {
        std::lock_guard lock(mutex_);
        for (std::size_t i = 0; i < fresh.size(); ++i) {
            values_.emplace(key(fresh[i]), scores[i]);
            ++evaluations_;
        }
    }
    std::vector<double> out;
    out.reserve(genomes.size());
    std::lock_guard lock(mutex_);
    for (const Genome& g : genomes)
        out.push_back(values_.at(key(g)));
    return out;
}

bool FitnessCache::contains(const Genome& g) const
{
    std::lock_guard lock(mutex_);
    return values_.count(key(g)) != 0;
}

// ---------------------------------------------------------------------------

void GaSpec::validate() const
{
    if (population < 4)
        throw ContractError("GaSpec: population must be at least 4");
    if (generations < 0)
        throw ContractError("GaSpec: generations must be non-negative");
    if (elitism < 0 || elitism >= population)
        throw ContractError("GaSpec: elitism must lie in [0, population)");
    if (tournament_size < 1)
        throw ContractError("GaSpec: tournament_size must be at least 1");
    if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0) || !(mutation_rate >= 0.0 && mutation_rate <= 1.0))
        throw ContractError("GaSpec: rates must lie in [0, 1]");
}

std::size_t tournament_select(const std::vector<double>& fitness, int k, Rng& rng)
{
    if (fitness.empty())
        throw ContractError("tournament_select: empty population");
    const auto last = static_cast<std::int64_t>(fitness.size()) - 1;
    auto best = static_cast<std::size_t>(rng.uniform_int(0, last));
    for (int i = 1; i < k; ++i) {
        const auto c = static_cast<std::size_t>(rng.uniform_int(0, last));
        if (fitness[c] < fitness[best] || (fitness[c] == fitness[best] && c < best))
            best = c;
    }
    return best;
}

Genome uniform_crossover(const Genome& a, const Genome& b, Rng& rng)
{
    Genome c;
    c.numhead = rng.bernoulli(0.5) ? a.numhead : b.numhead;
    c.numdrop = rng.bernoulli(0.5) ? a.numdrop : b.numdrop;
    c.numlstm = rng.bernoulli(0.5) ? a.numlstm : b.numlstm;
    return c;
}

Genome mutate(const Genome& g, double rate, const GenomeSpace& space, Rng& rng)
{
    Genome m = g;
    if (rng.bernoulli(rate))
        m.numhead = space.heads[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(space.heads.size()) - 1))];
    if (rng.bernoulli(rate))
        m.numdrop = std::clamp(m.numdrop * std::exp(0.5 * rng.normal()), space.drop_min, space.drop_max);
    if (rng.bernoulli(rate)) {
        const int step = rng.bernoulli(0.5) ? space.lstm_step : -space.lstm_step;
        m.numlstm = std::clamp(m.numlstm + step, space.lstm_min, space.lstm_max);
    }
    return m;
}

namespace {

GenerationStats summarize(int generation, const std::vector<Genome>& pop, const std::vector<double>& fit)
{
    const auto best = static_cast<std::size_t>(std::min_element(fit.begin(), fit.end()) - fit.begin());
    GenerationStats s;
    s.generation = generation;
    s.best_fitness = fit[best];
    s.best = pop[best];
    s.mean_fitness = std::accumulate(fit.begin(), fit.end(), 0.0) / static_cast<double>(fit.size());
    return s;
}

} // namespace

GaResult evolve(const GaSpec& spec, FitnessCache& fitness, const GenomeSpace& space)
{
    spec.validate();
    Rng rng(derive_seed(spec.seed, "ga"));
    const std::size_t before = fitness.evaluations();

    std::vector<Genome> pop;
    for (int i = 0; i < spec.population; ++i)
        pop.push_back(space.sample(rng));
    std::vector<double> fit = fitness.evaluate_all(pop, spec.threads);

    GaResult result;
    result.history.push_back(summarize(0, pop, fit));

    for (int gen = 1; gen <= spec.generations; ++gen) {
        std::vector<std::size_t> order(pop.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit[a] < fit[b]; });

        std::vector<Genome> next;
        for (int e = 0; e < spec.elitism; ++e)
            next.push_back(pop[order[static_cast<std::size_t>(e)]]);
        while (static_cast<int>(next.size()) < spec.population) {
            const Genome& a = pop[tournament_select(fit, spec.tournament_size, rng)];
            const Genome& b = pop[tournament_select(fit, spec.tournament_size, rng)];
            Genome child = rng.bernoulli(spec.crossover_rate) ? uniform_crossover(a, b, rng) : a;
            next.push_back(mutate(child, spec.mutation_rate, space, rng));
        }
        pop = std::move(next);
        fit = fitness.evaluate_all(pop, spec.threads);
        result.history.push_back(summarize(gen, pop, fit));
    }

    const auto best = std::min_element(result.history.begin(), result.history.end(),
                                       [](const GenerationStats& a, const GenerationStats& b) {
                                           return a.best_fitness < b.best_fitness;
                                       });
    result.best = best->best;
    result.best_fitness = best->best_fitness;
    result.evaluations = fitness.evaluations() - before;
    return result;
}

GaResult random_search(int budget, std::uint64_t seed, FitnessCache& fitness, const GenomeSpace& space)
{
    if (budget < 1)
        throw ContractError("random_search: budget must be at least 1");
    Rng rng(derive_seed(seed, "random-search"));
    const std::size_t before = fitness.evaluations();
    std::vector<Genome> pop;
    for (int i = 0; i < budget; ++i)
        pop.push_back(space.sample(rng));
    const std::vector<double> fit = fitness.evaluate_all(pop);
    GaResult result;
    result.history.push_back(summarize(0, pop, fit));
    result.best = result.history[0].best;
    result.best_fitness = result.history[0].best_fitness;
    result.evaluations = fitness.evaluations() - before;
    return result;
}

// ---------------------------------------------------------------------------

TrainSpec tuning_train_spec(std::uint64_t seed)
{
    TrainSpec spec;
    spec.epochs = 800;
    spec.decay_interval = 300;
    spec.seed = seed;
    return spec;
}

FitnessFn training_fitness(const Dataset& dataset, Task task, const TrainSpec& spec, int runs, int threads)
{
    return [dataset, task, spec, runs, threads](const Genome& g) {
        const ModelConfig cfg = apply_genome(default_config(task), g);
        const AveragedResult r = evaluate_averaged(cfg, spec, dataset, runs, threads);
        if (r.report.completed_runs() < r.report.runs.size() || !std::isfinite(r.report.rmse_test))
            return kDivergedFitness;
        return r.report.rmse_test;
    };
}

void write_history_csv(std::ostream& os, const std::vector<GenerationStats>& history)
{
    os << "generation,best_fitness,mean_fitness,best_numhead,best_numdrop,best_numLSTM\n";
    for (const auto& h : history)
        os << h.generation << ',' << format_real(h.best_fitness) << ',' << format_real(h.mean_fitness) << ','
           << h.best.numhead << ',' << format_real(h.best.numdrop) << ',' << h.best.numlstm << '\n';
}

std::string to_string(SweepAxis axis)
{
    switch (axis) {
    case SweepAxis::NumHead:
        return "numhead";
    case SweepAxis::NumDrop:
        return "numdrop";
    case SweepAxis::NumLstm:
        return "numlstm";
    }
    throw ContractError("unknown sweep axis");
}

SweepAxis parse_sweep_axis(const std::string& name)
{
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    for (SweepAxis a : {SweepAxis::NumHead, SweepAxis::NumDrop, SweepAxis::NumLstm})
        if (to_string(a) == s)
            return a;
    throw ContractError("unknown sweep axis '" + name + "' (expected numhead, numdrop or numlstm)");
}

std::vector<double> sweep_values(SweepAxis axis, const GenomeSpace& space, int drop_points)
{
    std::vector<double> v;
    switch (axis) {
    case SweepAxis::NumHead:
        v.assign(space.heads.begin(), space.heads.end());
        break;
    case SweepAxis::NumLstm:
        for (int n : space.lstm_values())
            v.push_back(n);
        break;
    case SweepAxis::NumDrop: {
        if (drop_points < 2)
            throw ContractError("sweep_values: need at least two dropout points");
        const double lo = std::log10(space.drop_min), hi = std::log10(space.drop_max);
        for (int i = 0; i < drop_points; ++i)
            v.push_back(std::pow(10.0, lo + (hi - lo) * i / (drop_points - 1)));
        v.front() = space.drop_min;
        v.back() = space.drop_max;
        break;
    }
    }
    return v;
}

std::vector<SweepRow> hyperparameter_sweep(SweepAxis axis, const Genome& base, FitnessCache& fitness,
                                           const GenomeSpace& space, int drop_points, int threads)
{
    const std::vector<double> values = sweep_values(axis, space, drop_points);
    std::vector<Genome> genomes;
    for (double v : values) {
        Genome g = base;
        if (axis == SweepAxis::NumHead)
            g.numhead = static_cast<int>(v);
        else if (axis == SweepAxis::NumLstm)
            g.numlstm = static_cast<int>(v);
        else
            g.numdrop = v;
        genomes.push_back(g);
    }
    const std::vector<double> scores = fitness.evaluate_all(genomes, threads);
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < values.size(); ++i)
        rows.push_back({values[i], scores[i]});
    return rows;
}

void write_sweep_csv(std::ostream& os, SweepAxis axis, const std::vector<SweepRow>& rows)
{
    os << to_string(axis) << ",avg_rmse\n";
    for (const auto& r : rows)
        os << format_real(r.value) << ',' << format_real(r.fitness) << '\n';
}

} // namespace rlstm
