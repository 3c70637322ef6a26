#pragma once

#include "beeps/counter.hpp"
#include "beeps/election.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace beeps
{
    enum class ExperimentKind : std::uint8_t
    {
        elect,
        lonely,
        counter,
    };

    /// `--init c<k>=<value|all>`; `all` means every node holds the bit.
    struct CounterInit
    {
        unsigned counter = 1; ///< 1-based
        std::optional<std::uint64_t> value;
    };

    CounterInit parse_counter_init(std::string_view text);

    struct ExperimentConfig
    {
        ExperimentKind kind = ExperimentKind::elect;
        std::string algo = "fixed-error"; ///< election algorithm, or the base of a loneliness detector
        Rational epsilon{1, 10};
        std::uint64_t q = 2;
        std::uint32_t n_lower_bound = 1;
        std::uint32_t c = default_state_optimal_c;
        std::uint32_t count_bound = default_count_bound;
        std::vector<std::uint32_t> ns;
        std::uint64_t trials = 1;
        std::uint64_t seed = 0;
        std::uint64_t cutoff = 0; ///< 0: default for the algorithm
        /// Re-run trials that hit the cutoff once with ten times the budget.
        bool raise_cutoff_once = false;
        int threads = 0; ///< 0: OpenMP default

        std::string program_path; ///< counter experiments
        std::vector<CounterInit> inits;

        std::string out_csv;

        ElectionParams params() const;
        std::uint64_t effective_cutoff() const;
        std::string protocol_name() const;
        /// Throws std::invalid_argument describing the first problem found.
        void validate() const;
    };

    /// Reads a JSON object whose keys mirror the CLI flags
    /// (kind, algo, epsilon, q, n_lower_bound, c, count_bound, n, trials, seed,
    /// cutoff, raise_cutoff_once, threads, program, init, out).
    ExperimentConfig config_from_json(std::string_view text, ExperimentConfig base = {});

    struct TrialRecord
    {
        std::uint64_t seed = 0;
        std::uint32_t outcome = 0; ///< histogram key, see CellReport::histogram
        std::uint64_t rounds = 0;
        bool terminated = false;
        bool violation = false;
        std::uint64_t calls = 0;
        std::uint64_t disagreements = 0;
    };

    struct RoundQuantiles
    {
        std::uint64_t p50 = 0;
        std::uint64_t p95 = 0;
        std::uint64_t p99 = 0;
        std::uint64_t max = 0;
    };

    /// Nearest-rank quantile (rank ⌈p·N⌉) of an ascending sample; 0 when empty.
    std::uint64_t nearest_rank(const std::vector<std::uint64_t> &sorted, double p);
    RoundQuantiles round_quantiles(std::vector<std::uint64_t> rounds);

    struct Interval
    {
        double lo = 0;
        double hi = 0;
    };

    inline constexpr double wilson_z95 = 1.959963984540054;
    Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z = wilson_z95);

    struct CellReport
    {
        std::string protocol;
        std::uint32_t n = 0;
        Rational epsilon;
        std::uint64_t q = 0;
        std::uint32_t n_lower_bound = 1;
        std::uint64_t trials = 0;
        std::uint64_t seed = 0;
        std::uint64_t cell_index = 0;
        /// elect: leaders per trial; lonely: nodes labeled `alone`;
        /// counter: 1 when the decision matches the reference interpreter, else 0.
        std::map<std::uint32_t, std::uint64_t> histogram;
        std::uint64_t violations = 0;
        std::uint64_t liveness_failures = 0;
        RoundQuantiles rounds;
        double wall_seconds = 0;
        Interval wilson;
        std::uint64_t cutoff = 0;
        bool cutoff_raised = false;
        std::uint64_t calls = 0;
        std::uint64_t disagreements = 0;
        std::optional<CounterDecision> expected; ///< counter: reference decision
        CounterAudit audit;                      ///< counter: summed over trials
        std::vector<TrialRecord> records;

        double violation_rate() const { return trials == 0 ? 0.0 : static_cast<double>(violations) / trials; }
    };

    struct Report
    {
        std::vector<CellReport> cells;
    };

    /// Trial t of cell i runs with trial_seed(seed, i, t). Cells run in order;
    /// trials of a cell are spread over OpenMP threads and merged by index.
    Report run_trials(const ExperimentConfig &config);
    /// Single-threaded reference with identical output.
    Report run_trials_serial(const ExperimentConfig &config);

    inline constexpr std::string_view report_csv_header =
        "protocol,n,epsilon,q,n_lower_bound,trials,violations,liveness_failures,rounds_p50,rounds_p95,rounds_p99,"
        "rounds_max,wilson_lo,wilson_hi,seed";

    struct Summary
    {
        std::string text;
        std::string csv;
    };

    Summary summarize(const Report &report);
}
