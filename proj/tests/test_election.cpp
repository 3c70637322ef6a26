#include "support.hpp"

#include "beeps/analysis.hpp"
#include "beeps/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace beeps;
using namespace testing_support;

namespace
{
    /// Tracks active counts of a universal election from post-round states.
    class ActivityObserver final : public ExecutionObserver
    {
    public:
        explicit ActivityObserver(const UniversalProgram &p) : program_(p) {}
        bool wants_every_round() const override { return true; }
        bool wants_states() const override { return true; }

        void on_round(const RoundView &view) override
        {
            std::uint32_t active = 0;
            bool any_final = false;
            for (const auto &s : view.states)
            {
                active += program_.core().active(s) ? 1 : 0;
                any_final = any_final || program_.label(s).has_value();
            }
            if (!any_final)
            {
                always_active = always_active && active >= 1;
                monotone = monotone && active <= last_active_;
                last_active_ = active;
            }
            std::uint32_t ko_args = 0;
            bool begins = false;
            for (const auto &e : view.events)
            {
                if (e.event.kind == EventKind::call_begin)
                {
                    begins = true;
                    ko_args += e.event.b;
                }
            }
            if (begins)
            {
                if (calls_ > 0 && ko_args > 0)
                {
                    strict = strict && active < call_active_;
                }
                ++calls_;
                call_active_ = active;
            }
        }

        bool always_active = true;
        bool monotone = true;
        bool strict = true; ///< fewer active nodes at each call after a knockout

    private:
        const UniversalProgram &program_;
        std::uint32_t last_active_ = ~0u;
        std::uint64_t calls_ = 0;
        std::uint32_t call_active_ = 0;
    };

    Trace probe_run(const SubroutinePtr &sub, const std::vector<std::pair<bool, bool>> &args, std::uint64_t seed)
    {
        auto probe = std::make_shared<SubroutineProbe>(sub);
        NetworkSpec spec = NetworkSpec::uniform(probe, static_cast<std::uint32_t>(args.size()));
        for (std::uint32_t i = 0; i < args.size(); ++i)
        {
            spec.override_variable(i, "active", args[i].first);
            spec.override_variable(i, "ko", args[i].second);
        }
        Executor ex;
        return run_checked(ex, spec, seed, default_fast_cutoff);
    }
}

TEST_CASE("election parameters")
{
    const auto p = ElectionParams::make({1, 10}, 4);
    CHECK(p.q_hat == 4);
    CHECK(ElectionParams::make({1, 3}, 8).q_hat == 3);
    CHECK(ElectionParams::make({2, 7}, 8).q_hat == 4); // ⌈7/2⌉
    CHECK_THROWS_AS(ElectionParams::make({0, 1}, 2), std::invalid_argument);
    CHECK_THROWS_AS(ElectionParams::make({3, 4}, 2), std::invalid_argument);
    CHECK_THROWS_AS(ElectionParams::make({1, 4}, 1), std::invalid_argument);
    CHECK_THROWS_AS(ElectionParams::make({1, 4}, 2, 0), std::invalid_argument);
    CHECK_THROWS_AS(subroutine_by_name("nope", p), std::invalid_argument);
    CHECK(is_subroutine_name("double-safe"));
}

TEST_CASE("state-optimal schedule length")
{
    CHECK(state_optimal_rounds(ElectionParams::make({1, 16}, 2, 1), 5) == 20);
    CHECK(state_optimal_rounds(ElectionParams::make({1, 16}, 2, 20), 5) == 1);
    CHECK(state_optimal_rounds(ElectionParams::make({1, 16}, 2, 1000), 5) == 1);
    CHECK(state_optimal_rounds(ElectionParams::make({1, 10}, 2, 2), 5) == 9);
    CHECK(state_optimal_rounds(ElectionParams::make({1, 27}, 3, 1), 2) == 6);
}

TEST_CASE("state-optimal returns true with probability (1/q̂)^(nδ)")
{
    // q=2, ε=1/4, Ñ=5, c=5: δ = ⌈10/5⌉ = 2.
    const auto params = ElectionParams::make({1, 4}, 2, 5);
    REQUIRE(state_optimal_rounds(params, 5) == 2);
    SubroutineProbe probe(subroutine_state_optimal(params));
    const auto report = absorb_exact(extract_machine(probe), 3);
    CHECK(report.profile("accept=3") == mpq_class(1, 64));
    CHECK(report.profile("reject=3") == mpq_class(63, 64));
    CHECK(report.residual == 0);
}

TEST_CASE("state-optimal ignores its arguments")
{
    const auto params = ElectionParams::make({1, 16}, 2, 4);
    const auto sub = subroutine_state_optimal(params);
    const auto delta = state_optimal_rounds(params, default_state_optimal_c);
    for (std::uint64_t seed = 0; seed < 50; ++seed)
    {
        const bool a = seed % 2 == 0;
        const bool k = seed % 3 == 0;
        const Trace t = probe_run(sub, {{a, k}, {!a, k}}, seed);
        CHECK(t.rounds_elapsed == 1 + delta);
    }
}

TEST_CASE("fixed-error schedule")
{
    const auto sub = subroutine_fixed_error(ElectionParams::make({1, 8}, 2));
    CHECK(*sub->fixed_length() == 6);
    CHECK(fixed_error_coin_rounds({1, 8}) == 4);

    SUBCASE("aborts after one round when nobody is knocked out")
    {
        const Trace t = probe_run(sub, {{true, false}, {true, false}, {false, false}}, 3);
        CHECK(t.rounds_elapsed == 2); // wake round + ko round
        CHECK(t.count_label(FinalLabel::reject) == 3);
    }
    SUBCASE("full length otherwise")
    {
        for (std::uint64_t seed = 0; seed < 50; ++seed)
        {
            const Trace t = probe_run(sub, {{true, true}, {true, true}}, seed);
            CHECK(t.rounds_elapsed == 1 + 6);
        }
    }
}

TEST_CASE("fast termination: one active node and a knocked-out node")
{
    const auto params = ElectionParams::make({1, 8}, 2);
    for (const auto *name : {"fixed-error", "double-safe", "constant-state"})
    {
        const auto sub = subroutine_by_name(name, params);
        for (std::uint64_t seed = 0; seed < 200; ++seed)
        {
            const std::uint32_t n = 2 + static_cast<std::uint32_t>(seed % 6);
            std::vector<std::pair<bool, bool>> args(n, {false, false});
            args[seed % n] = {true, seed % 2 == 0};
            args[(seed + 1) % n].second = true;
            const Trace t = probe_run(sub, args, seed);
            CHECK_MESSAGE(t.count_label(FinalLabel::accept) == n, name << " seed " << seed);
        }
    }
}

TEST_CASE("fixed-error fast termination is certain over every coin sequence")
{
    // Exhaustive: the exact analyzer covers all randomness of the probe.
    const auto params = ElectionParams::make({1, 8}, 2);
    auto probe = std::make_shared<SubroutineProbe>(subroutine_fixed_error(params));
    const auto machine = extract_machine(*probe);
    // Only a single active node: the lone node's view (n=1, active, ko).
    const auto report = absorb_exact(machine, 1);
    CHECK(report.profile("accept=1") == 1);
}

TEST_CASE("constant-state single node returns true")
{
    const auto sub = subroutine_constant_state();
    for (std::uint64_t seed = 0; seed < 50; ++seed)
    {
        CHECK(probe_run(sub, {{true, true}}, seed).count_label(FinalLabel::accept) == 1);
    }
}

TEST_CASE("double-safe is the conjunction of its parts")
{
    const auto params = ElectionParams::make({1, 4}, 2);
    const auto ds = subroutine_double_safe(params);
    // First part aborts: no ko anywhere.
    CHECK(probe_run(ds, {{true, false}, {true, false}}, 1).count_label(FinalLabel::reject) == 2);
    // Joint false-true rate against the product of the constituents' rates, n=2 both active.
    const auto fe = subroutine_fixed_error(params);
    const auto cs = subroutine_constant_state();
    auto rate = [&](const SubroutinePtr &sub) {
        SubroutineProbe probe(sub);
        return absorb_exact(extract_machine(probe), 2).profile("accept=2").get_d();
    };
    const double joint = rate(ds);
    CHECK(joint <= rate(fe) * rate(cs) + 1e-12);
}

TEST_CASE("double-safe false-true rate against its constituents, sampled")
{
    // Two active nodes with ko=1: returning true is the failure event.
    const auto params = ElectionParams::make({1, 4}, 2);
    Executor ex;
    auto rate = [&](const SubroutinePtr &sub, std::uint64_t stream) {
        auto probe = std::make_shared<SubroutineProbe>(sub);
        const auto spec = NetworkSpec::uniform(probe, 2);
        std::uint64_t hits = 0;
        constexpr std::uint64_t runs = 100'000;
        for (std::uint64_t t = 0; t < runs; ++t)
        {
            const Trace tr = run_checked(ex, spec, trial_seed(stream, 0, t), default_fast_cutoff, TraceDetail::summary);
            hits += tr.count_label(FinalLabel::accept) == 2 ? 1 : 0;
        }
        return static_cast<double>(hits) / runs;
    };
    const double fe = rate(subroutine_fixed_error(params), 41);
    const double cs = rate(subroutine_constant_state(), 42);
    const double joint = rate(subroutine_double_safe(params), 43);
    const double product = fe * cs;
    const double sigma = std::sqrt(std::max(product * (1 - product), 1e-12) / 100'000);
    MESSAGE("fe " << fe << " cs " << cs << " joint " << joint);
    CHECK(joint <= product + 3 * sigma);
}

TEST_CASE("constant-state main body grows like log n")
{
    // Main body: everything between the ko round and the final round of one
    // invocation with every node active and ko=1.
    const auto sub = subroutine_constant_state();
    auto probe = std::make_shared<SubroutineProbe>(sub);
    Executor ex;
    auto bodies = [&](std::uint32_t n) {
        std::vector<double> out;
        const auto spec = NetworkSpec::uniform(probe, n);
        for (std::uint64_t t = 0; t < 1000; ++t)
        {
            const Trace tr = run_checked(ex, spec, trial_seed(61, n, t), default_fast_cutoff, TraceDetail::summary);
            REQUIRE(tr.terminated);
            out.push_back(static_cast<double>(tr.rounds_elapsed - 1 - 2));
        }
        std::sort(out.begin(), out.end());
        return out;
    };
    const auto at256 = bodies(256);
    const double c_lo = at256[4] / std::log2(256.0);
    const double c_hi = at256[995] / std::log2(256.0);
    MESSAGE("c " << c_lo << " c' " << c_hi);
    for (std::uint32_t n : {64u, 1024u})
    {
        const auto b = bodies(n);
        const double lo = c_lo * std::log2(static_cast<double>(n));
        const double hi = c_hi * std::log2(static_cast<double>(n));
        const auto inside = std::count_if(b.begin(), b.end(), [&](double x) { return x >= lo && x <= hi; });
        MESSAGE("n=" << n << " within [" << lo << ", " << hi << "]: " << inside << " (p0.5 " << b[4] << ", p50 "
                      << b[499] << ", p99.5 " << b[995] << ")");
        CHECK(inside >= 990);
    }
}

TEST_CASE("universal election outcomes")
{
    Executor ex;
    SUBCASE("n=1 never enters the knockout loop")
    {
        for (const auto *name : {"fixed-error", "double-safe", "constant-state"})
        {
            const Trace t = run_checked(ex, NetworkSpec::uniform(universal(name, {1, 10}), 1), 4, default_fast_cutoff);
            const auto o = check_election_outcome(t);
            CHECK(o.leader_count == 1);
            CHECK(o.safety_ok());
            CHECK(o.liveness_ok());
            CHECK(recorded_call_boundaries(t).size() == 1);
        }
    }
    SUBCASE("fixed error at n=8 stays within epsilon")
    {
        const auto program = universal("fixed-error", {1, 10});
        std::uint64_t bad = 0;
        for (std::uint64_t t = 0; t < 10'000; ++t)
        {
            const Trace trace =
                run_checked(ex, NetworkSpec::uniform(program, 8), trial_seed(31, 0, t), default_fast_cutoff,
                            TraceDetail::summary);
            bad += check_election_outcome(trace).safety_ok() ? 0 : 1;
        }
        CHECK(bad <= 1000);
    }
    SUBCASE("outcome checks")
    {
        Trace synthetic;
        synthetic.n = 3;
        synthetic.terminated = true;
        synthetic.declared_labels = {FinalLabel::leader, FinalLabel::follower};
        synthetic.final_labels = {FinalLabel::leader, FinalLabel::leader, FinalLabel::follower};
        CHECK_FALSE(check_election_outcome(synthetic).safety_ok());
        synthetic.declared_labels = {FinalLabel::accept};
        CHECK_THROWS_AS(check_election_outcome(synthetic), std::invalid_argument);
    }
}

TEST_CASE("the eventual leader was never knocked out")
{
    Executor ex;
    const auto program = universal("fixed-error", {1, 10});
    std::uint64_t checked = 0;
    for (std::uint64_t t = 0; t < 10'000; ++t)
    {
        const Trace trace =
            run_checked(ex, NetworkSpec::uniform(program, 2), trial_seed(32, 0, t), default_fast_cutoff,
                        TraceDetail::events);
        if (!trace.terminated)
        {
            continue;
        }
        ++checked;
        for (const auto &e : trace.events)
        {
            if (e.event.kind == EventKind::knockout)
            {
                CHECK(trace.final_labels[e.node] != FinalLabel::leader);
            }
        }
    }
    CHECK(checked == 10'000);
}

TEST_CASE("persistent activity and knockout monotonicity")
{
    Executor ex;
    for (const auto *name : {"fixed-error", "constant-state", "double-safe"})
    {
        const auto program = universal(name, {1, 10});
        const auto &u = dynamic_cast<const UniversalProgram &>(*program);
        for (std::uint32_t n : {2u, 5u, 16u})
        {
            for (std::uint64_t seed = 0; seed < 40; ++seed)
            {
                ActivityObserver obs(u);
                const Trace t = run_checked(ex, NetworkSpec::uniform(program, n), seed, default_fast_cutoff,
                                            TraceDetail::summary, {&obs});
                CHECK(t.terminated);
                CHECK(obs.always_active);
                CHECK(obs.monotone);
                CHECK(obs.strict);
            }
        }
    }
}

TEST_CASE("observers follow calls from the channel alone")
{
    Executor ex;
    for (const auto *name : {"fixed-error", "constant-state", "double-safe", "state-optimal"})
    {
        const auto program = universal(name, {1, 4}, 2, 2);
        const auto &u = dynamic_cast<const UniversalProgram &>(*program);
        for (std::uint32_t n : {1u, 2u, 3u})
        {
            for (std::uint64_t seed = 0; seed < 20; ++seed)
            {
                const Trace t = run_checked(ex, NetworkSpec::uniform(program, n), seed, default_slow_cutoff,
                                            TraceDetail::events);
                REQUIRE(t.terminated);
                const auto replayed = replay_call_boundaries(u, t.channels);
                for (std::uint32_t node = 0; node < n; ++node)
                {
                    CHECK(recorded_call_boundaries(t, node) == replayed);
                }
                CHECK(count_agreement_violations(t) == 0);
            }
        }
    }
}

TEST_CASE("loneliness detection")
{
    const auto params = ElectionParams::make({1, 20}, 2);
    const auto base = build_universal(subroutine_fixed_error(params), params);
    const auto lonely = loneliness_from_leader_election(base);
    Executor ex;
    for (std::uint64_t seed = 0; seed < 200; ++seed)
    {
        CHECK(run_checked(ex, NetworkSpec::uniform(lonely, 1), seed, default_fast_cutoff).count_label(
                  FinalLabel::alone) == 1);
    }
    std::uint64_t all_crowd = 0;
    for (std::uint64_t seed = 0; seed < 2000; ++seed)
    {
        const Trace t =
            run_checked(ex, NetworkSpec::uniform(lonely, 5), trial_seed(5, 0, seed), default_fast_cutoff,
                        TraceDetail::summary);
        all_crowd += t.count_label(FinalLabel::crowd) == 5 ? 1 : 0;
    }
    CHECK(all_crowd >= 1900);
    CHECK(audit_state_count(*lonely) <= 4 * audit_state_count(*base) + 8);
    CHECK_THROWS_AS(loneliness_from_leader_election(lonely), std::invalid_argument);
}
