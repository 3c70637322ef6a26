// Acceptance gate. Prints one [PASS]/[FAIL] line per criterion and exits
// non-zero when any criterion fails. Tolerances are fixed below.

#include "beeps/analysis.hpp"
#include "beeps/counter.hpp"
#include "beeps/harness.hpp"
#include "beeps/machine.hpp"
#include "beeps/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

using namespace beeps;

namespace
{
    // Binomial half-width for the exact-vs-simulation comparison.
    constexpr double sigma_multiplier = 3.0;
    // Exact analysis stop criterion.
    const Rational exact_tail_bound{1, 1'000'000'000};
    // Minimum all-crowd rate for the loneliness detector.
    constexpr double crowd_rate_floor = 0.95;

    std::string programs_dir()
    {
#ifdef BEEPS_PROGRAMS_DIR
        return BEEPS_PROGRAMS_DIR;
#else
        return "programs";
#endif
    }

    struct Tally
    {
        std::uint64_t calls = 0;
        std::uint64_t disagreements = 0;
        std::uint64_t traces = 0;

        void add(const Report &r)
        {
            for (const auto &c : r.cells)
            {
                calls += c.calls;
                disagreements += c.disagreements;
                traces += c.trials;
            }
        }
    };

    Tally agreement;
    int failures = 0;

    void verdict(int id, bool pass, const std::string &title, const std::string &detail, double seconds)
    {
        char t[32];
        std::snprintf(t, sizeof t, "%.1f s", seconds);
        std::cout << (pass ? "[PASS] " : "[FAIL] ") << id << ". " << title << ": " << detail << " (" << t << ")"
                  << std::endl;
        failures += pass ? 0 : 1;
    }

    template <class F>
    void criterion(int id, const std::string &title, F &&body)
    {
        const auto start = std::chrono::steady_clock::now();
        std::ostringstream detail;
        bool pass = false;
        try
        {
            pass = body(detail);
        }
        catch (const std::exception &e)
        {
            detail << "exception: " << e.what();
        }
        verdict(id, pass, title, detail.str(),
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }

    std::string fmt(double v, const char *f = "%.4g")
    {
        char buf[64];
        std::snprintf(buf, sizeof buf, f, v);
        return buf;
    }

    ExperimentConfig elect_config(const std::string &algo, Rational eps, std::vector<std::uint32_t> ns,
                                  std::uint64_t trials, std::uint64_t seed)
    {
        ExperimentConfig cfg;
        cfg.kind = ExperimentKind::elect;
        cfg.algo = algo;
        cfg.epsilon = eps;
        cfg.q = 2;
        cfg.ns = std::move(ns);
        cfg.trials = trials;
        cfg.seed = seed;
        return cfg;
    }

    // Criteria 1 and 2 share one sweep.
    struct FixedErrorSweep
    {
        std::vector<Rational> eps{{1, 10}, {1, 50}};
        std::vector<std::uint32_t> ns{1, 2, 4, 8, 16, 32};
        std::vector<Report> reports;
        double seconds = 0;
    };

    FixedErrorSweep &fixed_error_sweep()
    {
        static FixedErrorSweep sweep = [] {
            FixedErrorSweep s;
            const auto start = std::chrono::steady_clock::now();
            std::uint64_t seed = 101;
            for (const auto &e : s.eps)
            {
                s.reports.push_back(run_trials(elect_config("fixed-error", e, s.ns, 20'000, seed++)));
                agreement.add(s.reports.back());
            }
            s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            return s;
        }();
        return sweep;
    }

    bool c1_safety(std::ostream &out)
    {
        auto &s = fixed_error_sweep();
        bool ok = s.seconds < 120.0;
        double worst = 0;
        for (const auto &r : s.reports)
        {
            for (const auto &c : r.cells)
            {
                const double eps = c.epsilon.to_double();
                ok = ok && c.violation_rate() <= eps && c.liveness_failures == 0;
                worst = std::max(worst, c.violation_rate() / eps);
                if (c.violation_rate() > eps)
                {
                    out << "n=" << c.n << " eps=" << c.epsilon.to_string() << " rate " << fmt(c.violation_rate())
                        << "; ";
                }
            }
        }
        out << "12 cells x 20000 trials, worst rate/eps " << fmt(worst) << ", sweep " << fmt(s.seconds) << " s";
        return ok;
    }

    bool c2_round_bound(std::ostream &out)
    {
        auto &s = fixed_error_sweep();
        auto shape = [](std::uint32_t n, double eps) { return std::log2(n + 1 / eps) * std::log2(1 / eps); };
        const auto &cal = s.reports[0].cells[4];
        if (cal.n != 16)
        {
            throw std::logic_error("calibration cell mismatch");
        }
        const double C = static_cast<double>(cal.rounds.p99) / shape(16, 0.1);
        bool ok = true;
        double worst = 0;
        for (const auto &r : s.reports)
        {
            for (const auto &c : r.cells)
            {
                const double bound = C * shape(c.n, c.epsilon.to_double());
                worst = std::max(worst, c.rounds.p99 / bound);
                if (static_cast<double>(c.rounds.p99) > bound)
                {
                    ok = false;
                    out << "n=" << c.n << " eps=" << c.epsilon.to_string() << " p99 " << c.rounds.p99 << " > "
                        << fmt(bound) << "; ";
                }
            }
        }
        out << "C = " << fmt(C) << " from p99 " << cal.rounds.p99 << " at n=16 eps=1/10, worst p99/bound "
            << fmt(worst);
        return ok;
    }

    bool c3_single_node(std::ostream &out)
    {
        bool ok = true;
        for (Rational eps : {Rational{1, 10}, Rational{1, 50}})
        {
            const auto params = ElectionParams::make(eps, 2);
            auto sub = subroutine_fixed_error(params);
            auto program = build_universal(sub, params);
            const auto &universal = dynamic_cast<const UniversalProgram &>(*program);
            const std::uint64_t expected = *sub->fixed_length() + (universal.has_wake_round() ? 1 : 0);
            Executor executor;
            std::optional<std::vector<CallBoundary>> phases;
            std::uint64_t leaders = 0;
            std::uint64_t exact = 0;
            std::uint64_t same_phases = 0;
            for (std::uint64_t t = 0; t < 1000; ++t)
            {
                AgreementMonitor monitor;
                ExecutionOptions options;
                options.detail = TraceDetail::events;
                options.observers.push_back(&monitor);
                const Trace trace = executor.run(NetworkSpec::uniform(program, 1), trial_seed(303, 0, t),
                                                 default_fast_cutoff, options);
                agreement.calls += monitor.calls();
                agreement.disagreements += monitor.disagreements();
                ++agreement.traces;
                const auto outcome = check_election_outcome(trace);
                leaders += outcome.leader_count == 1 && outcome.terminated ? 1 : 0;
                exact += trace.rounds_elapsed == expected ? 1 : 0;
                auto calls = recorded_call_boundaries(trace);
                if (!phases)
                {
                    phases = calls;
                }
                same_phases += calls == *phases ? 1 : 0;
            }
            ok = ok && leaders == 1000 && exact == 1000 && same_phases == 1000 && phases->size() == 1;
            out << "eps=" << eps.to_string() << ": single leader " << leaders << "/1000, rounds = " << expected
                << " (subroutine " << *sub->fixed_length() << ") in " << exact << "/1000, identical call phases "
                << same_phases << "/1000; ";
        }
        return ok;
    }

    bool c4_fast_termination(std::ostream &out)
    {
        std::uint64_t invocations = 0;
        std::uint64_t accepted = 0;
        const std::vector<Rational> eps{{1, 2}, {1, 4}, {1, 10}, {1, 50}, {1, 256}};
        Executor executor;
        for (const std::string name : {"fixed-error", "double-safe"})
        {
            for (std::uint64_t t = 0; t < 1000; ++t)
            {
                // Draw the instance from a seeded stream.
                NodeStream draw(trial_seed(404, name == "fixed-error" ? 0 : 1, t), 0);
                const Rational e = eps[draw.word(0) % eps.size()];
                const std::uint64_t q = 2 + draw.word(1) % 7;
                const auto params = ElectionParams::make(e, q);
                const auto n = static_cast<std::uint32_t>(2 + draw.word(2) % 15);
                const auto active = static_cast<std::uint32_t>(draw.word(3) % n);
                auto probe = std::make_shared<SubroutineProbe>(subroutine_by_name(name, params));
                NetworkSpec spec = NetworkSpec::uniform(probe, n);
                std::uint32_t ko_count = 0;
                for (std::uint32_t i = 0; i < n; ++i)
                {
                    const bool ko = ((draw.word(10 + i) >> 7) & 1) != 0;
                    spec.override_variable(i, "active", i == active ? 1 : 0);
                    spec.override_variable(i, "ko", ko ? 1 : 0);
                    ko_count += ko ? 1 : 0;
                }
                if (ko_count == 0)
                {
                    const std::uint32_t forced = static_cast<std::uint32_t>(draw.word(9) % n);
                    spec.override_variable(forced, "ko", 1);
                }
                AgreementMonitor monitor;
                ExecutionOptions options;
                options.detail = TraceDetail::summary;
                options.observers.push_back(&monitor);
                const Trace trace = executor.run(spec, draw.word(5), default_fast_cutoff, options);
                agreement.calls += monitor.calls();
                agreement.disagreements += monitor.disagreements();
                ++agreement.traces;
                ++invocations;
                accepted += trace.terminated && trace.count_label(FinalLabel::accept) == n ? 1 : 0;
            }
        }
        out << accepted << "/" << invocations << " invocations returned true at every node";
        return accepted == invocations && invocations == 2000;
    }

    // Extra sweep so that every algorithm contributes traces to the agreement count.
    bool c5_agreement(std::ostream &out)
    {
        std::uint64_t seed = 505;
        for (const std::string algo : {"fixed-error", "constant-state", "double-safe"})
        {
            agreement.add(run_trials(elect_config(algo, {1, 10}, {1, 2, 3, 5, 8, 13}, 500, seed++)));
        }
        auto so = elect_config("state-optimal", {1, 4}, {1, 2}, 100, seed++);
        so.cutoff = default_slow_cutoff;
        agreement.add(run_trials(so));
        out << agreement.disagreements << " disagreements in " << agreement.calls << " returned calls over "
            << agreement.traces << " traces generated by this gate";
        return agreement.disagreements == 0 && agreement.calls > 0;
    }

    bool c6_exact_vs_monte_carlo(std::ostream &out)
    {
        const Rational eps{1, 4};
        const auto params = ElectionParams::make(eps, 2);
        const auto program = build_universal(subroutine_fixed_error(params), params);
        AbsorbOptions options;
        options.tail_bound = exact_tail_bound;
        const auto t0 = std::chrono::steady_clock::now();
        const auto exact = absorb_exact(extract_machine(*program), 2, options);
        const auto report = run_trials(elect_config("fixed-error", eps, {2}, 50'000, 606));
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        agreement.add(report);
        const double p = exact.violation.get_d();
        const double sigma = std::sqrt(p * (1 - p) / 50'000);
        const double observed = report.cells[0].violation_rate();
        const bool residual_ok = exact.residual <= mpq_class(1, 1'000'000'000) && !exact.truncated;
        out << "exact " << exact.violation.get_str() << " (" << fmt(p) << "), residual " << fmt(exact.residual.get_d())
            << ", Monte Carlo " << fmt(observed) << ", |diff| = " << fmt(std::abs(observed - p) / sigma)
            << " sigma, " << fmt(seconds) << " s";
        return residual_ok && std::abs(observed - p) <= sigma_multiplier * sigma && seconds < 60.0;
    }

    bool c7_state_optimal_audit(std::ostream &out)
    {
        const Rational eps{1, 256};
        bool ok = true;
        std::optional<std::uint64_t> previous;
        Executor executor;
        for (std::uint32_t nl : {1u, 2u, 4u, 8u})
        {
            const auto params = ElectionParams::make(eps, 2, nl);
            auto sub = subroutine_state_optimal(params);
            const std::uint64_t s = audit_state_count(*build_universal(sub, params));
            const std::uint64_t delta = state_optimal_rounds(params, default_state_optimal_c);
            const std::uint64_t formula = (5 * 8 + nl - 1) / nl;
            // Measured length: a probe whose nodes never beep runs the whole schedule.
            auto probe = std::make_shared<SubroutineProbe>(sub);
            NetworkSpec spec = NetworkSpec::uniform(probe, nl);
            for (std::uint32_t i = 0; i < nl; ++i)
            {
                spec.override_variable(i, "active", 0);
                spec.override_variable(i, "ko", 0);
            }
            const Trace trace = executor.run(spec, 707 + nl, default_fast_cutoff, {TraceDetail::summary, {}});
            const std::uint64_t measured = trace.rounds_elapsed - 1;
            ok = ok && delta == formula && measured == formula && (!previous || s <= *previous);
            previous = s;
            out << "Ñ=" << nl << ": s=" << s << ", rounds " << measured << " (expected " << formula << "); ";
        }
        return ok;
    }

    bool c8_state_optimal_safety(std::ostream &out)
    {
        auto cfg = elect_config("state-optimal", {1, 10}, {2}, 5000, 808);
        cfg.n_lower_bound = 2;
        cfg.cutoff = default_slow_cutoff;
        cfg.raise_cutoff_once = true;
        const auto report = run_trials(cfg);
        agreement.add(report);
        const auto &c = report.cells[0];
        out << "violations " << c.violations << "/5000 (rate " << fmt(c.violation_rate()) << "), liveness failures "
            << c.liveness_failures << ", cutoff " << c.cutoff << (c.cutoff_raised ? " (raised once)" : "")
            << ", rounds p50 " << c.rounds.p50 << " p99 " << c.rounds.p99;
        return c.violation_rate() <= 0.1 && c.liveness_failures == 0;
    }

    bool c9_constant_state(std::ostream &out)
    {
        const std::vector<std::uint32_t> ns{4, 16, 64, 256};
        const auto report = run_trials(elect_config("constant-state", {1, 10}, ns, 2000, 909));
        agreement.add(report);
        bool decreasing = true;
        for (std::size_t i = 1; i < report.cells.size(); ++i)
        {
            decreasing = decreasing && report.cells[i].violation_rate() < report.cells[i - 1].violation_rate();
        }
        const auto log2sq = [](double n) { return std::log2(n) * std::log2(n); };
        const auto &cal = report.cells[2];
        const double C = static_cast<double>(cal.rounds.p99) / log2sq(64);
        bool rounds_ok = true;
        for (const auto &c : report.cells)
        {
            rounds_ok = rounds_ok && static_cast<double>(c.rounds.p99) <= C * log2sq(c.n);
        }
        std::set<std::uint64_t> counts;
        for (Rational e : {Rational{1, 2}, Rational{1, 10}, Rational{1, 50}, Rational{1, 256}})
        {
            const auto params = ElectionParams::make(e, 2);
            counts.insert(audit_state_count(*build_universal(subroutine_constant_state(), params)));
        }
        out << "violation rates";
        for (const auto &c : report.cells)
        {
            out << " n=" << c.n << ":" << fmt(c.violation_rate());
        }
        out << (decreasing ? " (strictly decreasing)" : " (not strictly decreasing)") << "; p99";
        for (const auto &c : report.cells)
        {
            out << " n=" << c.n << ":" << c.rounds.p99 << "/" << fmt(C * log2sq(c.n));
        }
        out << " (C' = " << fmt(C) << " at n=64)" << (rounds_ok ? "" : " bound exceeded") << "; audited s "
            << (counts.size() == 1 ? "identical = " + std::to_string(*counts.begin()) : "differs across epsilon");
        return decreasing && rounds_ok && counts.size() == 1;
    }

    bool c10_loneliness(std::ostream &out)
    {
        ExperimentConfig cfg = elect_config("fixed-error", {1, 20}, {1}, 1000, 1010);
        cfg.kind = ExperimentKind::lonely;
        const auto single = run_trials(cfg);
        agreement.add(single);
        cfg.ns = {2, 5, 10};
        cfg.trials = 2000;
        cfg.seed = 1011;
        const auto many = run_trials(cfg);
        agreement.add(many);
        const auto &one = single.cells[0];
        const std::uint64_t alone = one.histogram.count(1) ? one.histogram.at(1) : 0;
        bool ok = alone == 1000 && one.liveness_failures == 0;
        out << "n=1 alone " << alone << "/1000";
        for (const auto &c : many.cells)
        {
            // A trial is correct when it terminated with every node labeled crowd.
            const std::uint64_t all_crowd = c.trials - c.violations - c.liveness_failures;
            const double rate = static_cast<double>(all_crowd) / c.trials;
            ok = ok && rate >= crowd_rate_floor;
            out << ", n=" << c.n << " all-crowd " << fmt(rate);
        }
        return ok;
    }

    bool c11_counter(std::ostream &out)
    {
        const Rational eps{1, 20};
        const double floor = 1.0 - eps.to_double();
        bool ok = true;
        std::uint64_t points = 0;
        std::uint64_t good_points = 0;
        double worst = 1;
        CounterAudit audit;
        auto run_point = [&](const std::string &program, std::uint32_t n, std::vector<CounterInit> inits,
                             std::uint64_t seed) {
            ExperimentConfig cfg;
            cfg.kind = ExperimentKind::counter;
            cfg.program_path = programs_dir() + "/" + program;
            cfg.epsilon = eps;
            cfg.ns = {n};
            cfg.trials = 200;
            cfg.seed = seed;
            cfg.inits = std::move(inits);
            const auto report = run_trials(cfg);
            agreement.add(report);
            const auto &c = report.cells[0];
            const std::uint64_t matches = c.histogram.count(1) ? c.histogram.at(1) : 0;
            const double rate = static_cast<double>(matches) / c.trials;
            worst = std::min(worst, rate);
            ++points;
            good_points += rate >= floor ? 1 : 0;
            audit.unary_violations += c.audit.unary_violations;
            audit.failed_elections += c.audit.failed_elections;
            audit.delta_violations += c.audit.delta_violations;
            audit.frame_mismatches += c.audit.frame_mismatches;
            audit.ops += c.audit.ops;
        };
        for (std::uint32_t n = 2; n <= 33; ++n)
        {
            run_point("parity.cm", n, {CounterInit{1, std::nullopt}}, 1100 + n);
        }
        for (std::uint64_t a : {0, 2, 4, 6, 8})
        {
            for (std::uint64_t b : {0, 2, 4, 6, 8})
            {
                run_point("compare.cm", 8, {CounterInit{1, a}, CounterInit{2, b}}, 1200 + 10 * a + b);
            }
        }
        ok = good_points == points && audit.unary_violations == 0;
        out << good_points << "/" << points << " points at >= " << fmt(floor) << " agreement (worst " << fmt(worst)
            << "); " << audit.ops << " operations, unary violations " << audit.unary_violations
            << ", failed sub-elections " << audit.failed_elections << ", delta violations " << audit.delta_violations
            << ", frame mismatches " << audit.frame_mismatches;
        return ok;
    }

    bool c12_solo_path(std::ostream &out)
    {
        const auto params = ElectionParams::make({1, 4}, 2);
        const auto lonely = loneliness_from_leader_election(build_universal(subroutine_fixed_error(params), params));
        const auto machine = extract_machine(*lonely);
        const std::uint64_t s = audit_state_count(*lonely);
        const auto target = machine.finals().at(FinalLabel::alone);
        const auto path = find_solo_reachable_path(machine, target);
        if (!path)
        {
            out << "no path found";
            return false;
        }
        std::set<StateId> distinct(path->begin(), path->end());
        const bool ok = path->front() == machine.start() && path->back() == target &&
                        distinct.size() == path->size() && path->size() <= s;
        out << "path of " << path->size() << " states (" << path->size() - 1 << " transitions), audited s = " << s
            << (distinct.size() == path->size() ? ", loop-free" : ", repeats a state");
        return ok;
    }
}

int main()
{
    std::cout << "acceptance gate" << std::endl;
    criterion(1, "fixed-error safety grid", c1_safety);
    criterion(2, "fixed-error round bound", c2_round_bound);
    criterion(3, "single-node fast path", c3_single_node);
    criterion(4, "fast termination with one active node", c4_fast_termination);
    criterion(6, "exact analysis vs Monte Carlo", c6_exact_vs_monte_carlo);
    criterion(7, "state-optimal state audit", c7_state_optimal_audit);
    criterion(8, "state-optimal safety at n=2", c8_state_optimal_safety);
    criterion(9, "constant-state scaling", c9_constant_state);
    criterion(10, "loneliness detection", c10_loneliness);
    criterion(11, "counter machine correctness", c11_counter);
    criterion(12, "solo reachable path", c12_solo_path);
    // Last, so that it covers every trace produced above.
    criterion(5, "agreement", c5_agreement);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
