#ifndef RLSTM_GA_HPP
#define RLSTM_GA_HPP

#include "rlstm/training.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

namespace rlstm {

/// The three tuned hyperparameters.
struct Genome {
    int numhead = 4;
    double numdrop = 0.00015;
    int numlstm = 256;

    bool operator==(const Genome&) const = default;
};

/// Genome of the tuned configuration for a task.
Genome default_genome(Task task);
/// cfg with the three genes replaced.
ModelConfig apply_genome(ModelConfig cfg, const Genome& g);

struct GenomeSpace {
    std::array<int, 4> heads{1, 2, 4, 8};
    double drop_min = 1e-5, drop_max = 1e-2;
    int lstm_min = 32, lstm_max = 512, lstm_step = 32;

    bool contains(const Genome& g) const;
    /// numhead uniform, numdrop log-uniform, numlstm uniform over the grid.
    Genome sample(Rng& rng) const;
    std::vector<int> lstm_values() const;
};

/// Score assigned to a genome whose training diverged.
inline constexpr double kDivergedFitness = 1e30;

/// Lower is better. Must be deterministic in the genome and thread-safe.
using FitnessFn = std::function<double(const Genome&)>;

/// Memoizes a fitness function by genome value and counts real evaluations.
class FitnessCache {
public:
    explicit FitnessCache(FitnessFn fn) : fn_(std::move(fn)) {}

    double operator()(const Genome& g);
    /// Scores every genome, evaluating distinct unseen ones on up to `threads`
    /// threads. Results are in input order.
    std::vector<double> evaluate_all(const std::vector<Genome>& genomes, int threads = 1);
    bool contains(const Genome& g) const;
    /// Number of times the wrapped function actually ran.
    std::size_t evaluations() const { return evaluations_; }

private:
    using Key = std::tuple<int, double, int>;
    static Key key(const Genome& g) { return {g.numhead, g.numdrop, g.numlstm}; }

    FitnessFn fn_;
    std::map<Key, double> values_;
    std::size_t evaluations_ = 0;
    mutable std::mutex mutex_;
};

struct GaSpec {
    int population = 16;
    int generations = 20;
    int tournament_size = 3;
    double crossover_rate = 0.9;
    double mutation_rate = 0.3;
    int elitism = 2;
    std::uint64_t seed = 0;
    int threads = 1; ///< concurrent fitness evaluations; does not change results

    void validate() const;
};

struct GenerationStats {
    int generation = 0;
    double best_fitness = 0;
    double mean_fitness = 0;
    Genome best;
};

struct GaResult {
    Genome best;
    double best_fitness = 0;
    std::vector<GenerationStats> history; ///< generation 0 is the initial population
    std::size_t evaluations = 0;          ///< distinct genomes evaluated
};

/// Index of the tournament winner among `k` uniformly drawn members.
std::size_t tournament_select(const std::vector<double>& fitness, int k, Rng& rng);
/// Each gene from `a` or `b` with equal probability.
Genome uniform_crossover(const Genome& a, const Genome& b, Rng& rng);
/// Mutates each gene with probability `rate`. The result stays inside `space`.
Genome mutate(const Genome& g, double rate, const GenomeSpace& space, Rng& rng);

GaResult evolve(const GaSpec& spec, FitnessCache& fitness, const GenomeSpace& space = {});

/// Best of `budget` log-uniform random genomes.
GaResult random_search(int budget, std::uint64_t seed, FitnessCache& fitness, const GenomeSpace& space = {});

/// Budget used while tuning; the winner is retrained with the full TrainSpec.
TrainSpec tuning_train_spec(std::uint64_t seed);

/// Mean test RMSE of evaluate_averaged(runs) for the genome, or
/// kDivergedFitness if any run diverged.
FitnessFn training_fitness(const Dataset& dataset, Task task, const TrainSpec& spec, int runs = 3,
                           int threads = 1);

void write_history_csv(std::ostream& os, const std::vector<GenerationStats>& history);

enum class SweepAxis { NumHead, NumDrop, NumLstm };

/// "numhead", "numdrop", "numlstm" (case-insensitive on parse).
std::string to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(const std::string& name);

struct SweepRow {
    double value = 0;
    double fitness = 0;
};

/// Values visited along one axis: the four head counts, the sixteen LSTM
/// widths, or `drop_points` log-spaced dropout rates.
std::vector<double> sweep_values(SweepAxis axis, const GenomeSpace& space = {}, int drop_points = 7);

/// Varies one gene of `base` and scores each value.
std::vector<SweepRow> hyperparameter_sweep(SweepAxis axis, const Genome& base, FitnessCache& fitness,
                                           const GenomeSpace& space = {}, int drop_points = 7, int threads = 1);

void write_sweep_csv(std::ostream& os, SweepAxis axis, const std::vector<SweepRow>& rows);

} // namespace rlstm

#endif // RLSTM_GA_HPP
