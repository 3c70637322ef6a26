#include "beeps/harness.hpp"
#include "beeps/errors.hpp"
#include "beeps/rng.hpp"

#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace beeps
{
    CounterInit parse_counter_init(std::string_view text)
    {
        const auto eq = text.find('=');
        if (text.size() < 4 || (text[0] != 'c' && text[0] != 'C') || eq == std::string_view::npos || eq < 2)
        {
            throw std::invalid_argument("expected c<k>=<value|all>, got '" + std::string(text) + "'");
        }
        CounterInit init;
        const std::string index(text.substr(1, eq - 1));
        const std::string value(text.substr(eq + 1));
        if (!std::all_of(index.begin(), index.end(), ::isdigit) || index.size() > 2)
        {
            throw std::invalid_argument("bad counter index in '" + std::string(text) + "'");
        }
        init.counter = static_cast<unsigned>(std::stoul(index));
        if (init.counter < 1 || init.counter > max_counters)
        {
            throw std::invalid_argument("counter index out of range in '" + std::string(text) + "'");
        }
        if (value == "all")
        {
            return init;
        }
        if (value.empty() || value.size() > 9 || !std::all_of(value.begin(), value.end(), ::isdigit))
        {
            throw std::invalid_argument("bad counter value in '" + std::string(text) + "'");
        }
        init.value = std::stoull(value);
        return init;
    }

    ElectionParams ExperimentConfig::params() const
    {
        return ElectionParams::make(epsilon, q, n_lower_bound);
    }

    std::uint64_t ExperimentConfig::effective_cutoff() const
    {
        if (cutoff != 0)
        {
            return cutoff;
        }
        return kind == ExperimentKind::counter || algo == "state-optimal" ? default_slow_cutoff : default_fast_cutoff;
    }

    std::string ExperimentConfig::protocol_name() const
    {
        switch (kind)
        {
        case ExperimentKind::lonely:
            return "lonely(" + algo + ")";
        case ExperimentKind::counter:
            return "counter(" + std::filesystem::path(program_path).stem().string() + ")";
        default:
            return algo;
        }
    }

    void ExperimentConfig::validate() const
    {
        (void)params();
        if (kind != ExperimentKind::counter && !is_subroutine_name(algo))
        {
            throw std::invalid_argument("unknown algorithm '" + algo + "'");
        }
        if (ns.empty())
        {
            throw std::invalid_argument("no network sizes given");
        }
        for (auto n : ns)
        {
            if (n < 1)
            {
                throw std::invalid_argument("network size must be >= 1");
            }
        }
        if (trials < 1)
        {
            throw std::invalid_argument("trials must be >= 1");
        }
        if (c < 1)
        {
            throw std::invalid_argument("c must be >= 1");
        }
        if (count_bound < 1 || count_bound > 1000)
        {
            throw std::invalid_argument("count bound must be in 1..1000");
        }
        if (threads < 0)
        {
            throw std::invalid_argument("threads must be >= 0");
        }
        if (kind == ExperimentKind::counter && program_path.empty())
        {
            throw std::invalid_argument("counter experiments need a program");
        }
    }

    ExperimentConfig config_from_json(std::string_view text, ExperimentConfig base)
    {
        using nlohmann::json;
        json j;
        try
        {
            j = json::parse(text);
        }
        catch (const json::parse_error &e)
        {
            throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
        }
        if (!j.is_object())
        {
            throw std::invalid_argument("config must be a JSON object");
        }
        auto rational = [](const json &v) {
            return v.is_string() ? Rational::parse(v.get<std::string>()) : Rational::parse(v.dump());
        };
        try
        {
            for (const auto &[key, v] : j.items())
            {
                if (key == "kind")
                {
                    const auto k = v.get<std::string>();
                    if (k == "elect")
                        base.kind = ExperimentKind::elect;
                    else if (k == "lonely")
                        base.kind = ExperimentKind::lonely;
                    else if (k == "counter")
                        base.kind = ExperimentKind::counter;
                    else
                        throw std::invalid_argument("unknown kind '" + k + "'");
                }
                else if (key == "algo" || key == "base_algo")
                    base.algo = v.get<std::string>();
                else if (key == "epsilon")
                    base.epsilon = rational(v);
                else if (key == "q")
                    base.q = v.get<std::uint64_t>();
                else if (key == "n_lower_bound")
                    base.n_lower_bound = v.get<std::uint32_t>();
                else if (key == "c")
                    base.c = v.get<std::uint32_t>();
                else if (key == "count_bound")
                    base.count_bound = v.get<std::uint32_t>();
                else if (key == "n")
                    base.ns = v.is_array() ? v.get<std::vector<std::uint32_t>>()
                                           : std::vector<std::uint32_t>{v.get<std::uint32_t>()};
                else if (key == "trials")
                    base.trials = v.get<std::uint64_t>();
                else if (key == "seed")
                    base.seed = v.get<std::uint64_t>();
                else if (key == "cutoff")
                    base.cutoff = v.get<std::uint64_t>();
                else if (key == "raise_cutoff_once")
                    base.raise_cutoff_once = v.get<bool>();
                else if (key == "threads")
                    base.threads = v.get<int>();
                else if (key == "program")
                    base.program_path = v.get<std::string>();
                else if (key == "init")
                {
                    base.inits.clear();
                    for (const auto &item : v)
                    {
                        base.inits.push_back(parse_counter_init(item.get<std::string>()));
                    }
                }
                else if (key == "out")
                    base.out_csv = v.get<std::string>();
                else
                    throw std::invalid_argument("unknown config key '" + key + "'");
            }
        }
        catch (const json::exception &e)
        {
            throw std::invalid_argument(std::string("bad config value: ") + e.what());
        }
        return base;
    }

    std::uint64_t nearest_rank(const std::vector<std::uint64_t> &sorted, double p)
    {
        if (sorted.empty())
        {
            return 0;
        }
        auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size()) - 1e-9));
        rank = std::clamp<std::size_t>(rank, 1, sorted.size());
        return sorted[rank - 1];
    }

    RoundQuantiles round_quantiles(std::vector<std::uint64_t> rounds)
    {
        std::sort(rounds.begin(), rounds.end());
        return {nearest_rank(rounds, 0.50), nearest_rank(rounds, 0.95), nearest_rank(rounds, 0.99),
                rounds.empty() ? 0 : rounds.back()};
    }

    Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z)
    {
        if (trials == 0)
        {
            return {0.0, 1.0};
        }
        const double n = static_cast<double>(trials);
        const double p = static_cast<double>(successes) / n;
        const double z2 = z * z;
        const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
        const double half = z / (1 + z2 / n) * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
        return {std::max(0.0, std::min(p, centre - half)), std::min(1.0, std::max(p, centre + half))};
    }

    namespace
    {
        /// Everything a worker needs to run one trial of a cell.
        struct CellPlan
        {
            ExperimentKind kind;
            std::uint32_t n;
            NetworkSpec spec;
            std::optional<CounterDecision> expected;
        };

        struct TrialResult
        {
            TrialRecord record;
            CounterAudit audit;
        };

        void add_audit(CounterAudit &into, const CounterAudit &a)
        {
            into.frames += a.frames;
            into.frame_mismatches += a.frame_mismatches;
            into.frame_errors += a.frame_errors;
            into.elections += a.elections;
            into.failed_elections += a.failed_elections;
            into.coordinators = std::max(into.coordinators, a.coordinators);
            into.ops += a.ops;
            into.shadow_mismatches += a.shadow_mismatches;
            into.unary_violations += a.unary_violations;
            into.delta_violations += a.delta_violations;
            into.agreement_violations += a.agreement_violations;
            into.calls += a.calls;
        }

        TrialResult run_one(const CellPlan &plan, Executor &executor, std::uint64_t seed, std::uint64_t cutoff)
        {
            TrialResult out;
            out.record.seed = seed;
            AgreementMonitor monitor;
            ExecutionOptions options;
            options.detail = TraceDetail::summary;
            options.observers.push_back(&monitor);

            if (plan.kind == ExperimentKind::counter)
            {
                auto run = run_counter_simulation(plan.spec, seed, cutoff, TraceDetail::summary, &executor);
                out.audit = run.audit;
                out.record.rounds = run.trace.rounds_elapsed;
                out.record.terminated = run.trace.terminated;
                out.record.outcome = run.decision == *plan.expected ? 1 : 0;
                out.record.violation = run.trace.terminated && run.decision != *plan.expected;
                out.record.calls = run.audit.calls;
                out.record.disagreements = run.audit.agreement_violations;
                return out;
            }

            const Trace trace = executor.run(plan.spec, seed, cutoff, options);
            out.record.rounds = trace.rounds_elapsed;
            out.record.terminated = trace.terminated;
            out.record.calls = monitor.calls();
            out.record.disagreements = monitor.disagreements();
            if (plan.kind == ExperimentKind::elect)
            {
                const auto outcome = check_election_outcome(trace);
                out.record.outcome = outcome.leader_count;
                out.record.violation = !outcome.safety_ok();
            }
            else
            {
                const auto alone = static_cast<std::uint32_t>(trace.count_label(FinalLabel::alone));
                const auto crowd = static_cast<std::uint32_t>(trace.count_label(FinalLabel::crowd));
                out.record.outcome = alone;
                const bool correct = plan.n == 1 ? alone == 1 : crowd == plan.n;
                out.record.violation = trace.terminated && !correct;
            }
            return out;
        }

        CellPlan plan_cell(const ExperimentConfig &config, std::uint32_t n, const ProgramPtr &election,
                           const std::optional<CounterProgram> &counter)
        {
            CellPlan plan{config.kind, n, NetworkSpec{}, std::nullopt};
            if (config.kind == ExperimentKind::counter)
            {
                std::vector<std::uint64_t> inputs(counter->k, 0);
                for (const auto &init : config.inits)
                {
                    if (init.counter > counter->k)
                    {
                        throw std::invalid_argument("program uses " + std::to_string(counter->k) +
                                                    " counter(s); cannot initialise c" +
                                                    std::to_string(init.counter));
                    }
                    inputs[init.counter - 1] = init.value.value_or(n);
                }
                plan.spec = build_counter_network(*counter, config.params(), n, inputs, config.count_bound);
                plan.expected = interpret_counter_program(*counter, inputs, n).decision;
            }
            else
            {
                plan.spec = NetworkSpec::uniform(election, n);
            }
            return plan;
        }

        Report run_impl(const ExperimentConfig &config, bool parallel)
        {
            config.validate();
            const auto params = config.params();
            ProgramPtr election;
            std::optional<CounterProgram> counter;
            if (config.kind == ExperimentKind::counter)
            {
                counter = load_counter_program(config.program_path);
            }
            else
            {
                SubroutineOptions options{config.c, config.count_bound};
                election = build_universal(subroutine_by_name(config.algo, params, options), params);
                if (config.kind == ExperimentKind::lonely)
                {
                    election = loneliness_from_leader_election(election);
                }
            }

            const int threads = config.threads > 0 ? config.threads : omp_get_max_threads();
            Report report;
            for (std::size_t cell = 0; cell < config.ns.size(); ++cell)
            {
                const auto start = std::chrono::steady_clock::now();
                const std::uint32_t n = config.ns[cell];
                const CellPlan plan = plan_cell(config, n, election, counter);
                const std::uint64_t trials = config.trials;
                std::uint64_t cutoff = config.effective_cutoff();
                std::vector<TrialResult> results(trials);

                auto run_range = [&](const std::vector<std::uint64_t> &which, std::uint64_t budget) {
                    if (!parallel)
                    {
                        Executor executor;
                        for (auto t : which)
                        {
                            results[t] = run_one(plan, executor, trial_seed(config.seed, cell, t), budget);
                        }
                        return;
                    }
#pragma omp parallel num_threads(threads)
                    {
                        Executor executor;
#pragma omp for schedule(dynamic, 8)
                        for (std::size_t i = 0; i < which.size(); ++i)
                        {
                            const auto t = which[i];
                            results[t] = run_one(plan, executor, trial_seed(config.seed, cell, t), budget);
                        }
                    }
                };

                std::vector<std::uint64_t> all(trials);
                for (std::uint64_t t = 0; t < trials; ++t)
                {
                    all[t] = t;
                }
                run_range(all, cutoff);

                CellReport r;
                if (config.raise_cutoff_once)
                {
                    std::vector<std::uint64_t> unfinished;
                    for (std::uint64_t t = 0; t < trials; ++t)
                    {
                        if (!results[t].record.terminated)
                        {
                            unfinished.push_back(t);
                        }
                    }
                    if (!unfinished.empty())
                    {
                        cutoff *= 10;
                        r.cutoff_raised = true;
                        run_range(unfinished, cutoff);
                    }
                }

                r.protocol = config.protocol_name();
                r.n = n;
                r.epsilon = config.epsilon;
                r.q = config.q;
                r.n_lower_bound = config.n_lower_bound;
                r.trials = trials;
                r.seed = config.seed;
                r.cell_index = cell;
                r.cutoff = cutoff;
                r.expected = plan.expected;
                std::vector<std::uint64_t> rounds;
                rounds.reserve(trials);
                r.records.reserve(trials);
                for (const auto &res : results)
                {
                    const auto &rec = res.record;
                    ++r.histogram[rec.outcome];
                    r.violations += rec.violation ? 1 : 0;
                    r.liveness_failures += rec.terminated ? 0 : 1;
                    r.calls += rec.calls;
                    r.disagreements += rec.disagreements;
                    rounds.push_back(rec.rounds);
                    add_audit(r.audit, res.audit);
                    r.records.push_back(rec);
                }
                r.rounds = round_quantiles(std::move(rounds));
                r.wilson = wilson_interval(r.violations, r.trials);
                r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                report.cells.push_back(std::move(r));
            }
            return report;
        }

        std::string format_double(double v, const char *fmt)
        {
            char buf[64];
            std::snprintf(buf, sizeof buf, fmt, v);
            return buf;
        }
    }

    Report run_trials(const ExperimentConfig &config)
    {
        return run_impl(config, true);
    }

    Report run_trials_serial(const ExperimentConfig &config)
    {
        return run_impl(config, false);
    }

    Summary summarize(const Report &report)
    {
        Summary out;
        std::ostringstream csv;
        csv << report_csv_header << '\n';
        std::ostringstream text;
        for (const auto &c : report.cells)
        {
            const std::string eps = format_double(c.epsilon.to_double(), "%.10g");
            csv << c.protocol << ',' << c.n << ',' << eps << ',' << c.q << ',' << c.n_lower_bound << ',' << c.trials
                << ',' << c.violations << ',' << c.liveness_failures << ',' << c.rounds.p50 << ',' << c.rounds.p95
                << ',' << c.rounds.p99 << ',' << c.rounds.max << ',' << format_double(c.wilson.lo, "%.8f") << ','
                << format_double(c.wilson.hi, "%.8f") << ',' << c.seed << '\n';

            text << c.protocol << "  n=" << c.n << "  epsilon=" << c.epsilon.to_string() << " (" << eps << ")"
                 << "  q=" << c.q << "  n_lower_bound=" << c.n_lower_bound << "  trials=" << c.trials << "  seed=" << c.seed
                 << " (cell " << c.cell_index << ")\n";
            text << "  violations: " << c.violations << "  rate " << format_double(c.violation_rate(), "%.6f")
                 << "  95% Wilson [" << format_double(c.wilson.lo, "%.6f") << ", " << format_double(c.wilson.hi, "%.6f")
                 << "]\n";
            text << "  liveness failures: " << c.liveness_failures << "  cutoff " << c.cutoff
                 << (c.cutoff_raised ? " (raised once)" : "") << '\n';
            text << "  rounds p50/p95/p99/max: " << c.rounds.p50 << " / " << c.rounds.p95 << " / " << c.rounds.p99
                 << " / " << c.rounds.max << '\n';
            text << "  histogram:";
            for (const auto &[k, count] : c.histogram)
            {
                text << ' ' << k << ':' << count;
            }
            text << '\n';
            text << "  subroutine calls: " << c.calls << "  disagreements: " << c.disagreements << '\n';
            if (c.expected)
            {
                const auto &a = c.audit;
                text << "  expected decision: " << to_string(*c.expected) << "  frames " << a.frames
                     << "  frame mismatches " << a.frame_mismatches << "  frame errors " << a.frame_errors
                     << "  sub-elections " << a.elections << "  failed elections " << a.failed_elections << "  ops "
                     << a.ops << "  shadow mismatches " << a.shadow_mismatches << "  unary violations "
                     << a.unary_violations << "  delta violations " << a.delta_violations << '\n';
            }
            text << "  wall time: " << format_double(c.wall_seconds, "%.3f") << " s\n";
        }
        out.csv = csv.str();
        out.text = text.str();
        return out;
    }
}
