#include "support.hpp"

#include "beeps/analysis.hpp"
#include "beeps/errors.hpp"

#include <doctest.h>
#include <json.hpp>

#include <random>

using namespace beeps;
using namespace testing_support;

namespace
{
    mpq_class q(const Rational &r)
    {
        return mpq_class(mpz_class(std::to_string(r.num())), mpz_class(std::to_string(r.den())));
    }

    /// Each node independently goes to state 1 (leader) or 2 (follower) with probability 1/2.
    BeepMachine coin_machine()
    {
        MachineSpec m;
        m.receive_states = {0, 1, 2};
        const Rational h{1, 2};
        for (StateId s = 0; s < 3; ++s)
        {
            m.delta_silent[s] = {{{s, Rational::one()}}};
            m.delta_beep[s] = {{{s, Rational::one()}}};
        }
        m.delta_silent[0] = {{{1, h}, {2, h}}};
        m.finals[FinalLabel::leader] = 1;
        m.finals[FinalLabel::follower] = 2;
        return BeepMachine{m};
    }

    /// Random well-formed machine: state 0 starts, the last state is a terminal leader.
    BeepMachine random_machine(std::mt19937_64 &rng, StateId states)
    {
        MachineSpec m;
        const StateId leader = states - 1;
        std::bernoulli_distribution coin(0.4);
        for (StateId s = 0; s < leader; ++s)
        {
            (coin(rng) && s != 0 ? m.beep_states : m.receive_states).push_back(s);
        }
        m.receive_states.push_back(leader);
        const std::uint64_t dens[] = {2, 3, 4};
        auto random_dist = [&]() {
            std::uniform_int_distribution<StateId> pick(0, leader);
            const StateId a = pick(rng);
            StateId b = pick(rng);
            if (a == b || coin(rng))
            {
                return TransitionDistribution{{{a, Rational::one()}}};
            }
            const std::uint64_t d = dens[rng() % 3];
            const std::uint64_t k = 1 + rng() % (d - 1);
            return TransitionDistribution{{{a, Rational{k, d}}, {b, Rational{d - k, d}}}};
        };
        for (StateId s = 0; s < states; ++s)
        {
            const bool beeps = std::find(m.beep_states.begin(), m.beep_states.end(), s) != m.beep_states.end();
            if (s == leader)
            {
                m.delta_silent[s] = {{{s, Rational::one()}}};
                m.delta_beep[s] = {{{s, Rational::one()}}};
            }
            else if (beeps)
            {
                m.delta_silent[s] = {{{s, Rational::one()}}};
                m.delta_beep[s] = random_dist();
            }
            else
            {
                m.delta_silent[s] = random_dist();
                m.delta_beep[s] = random_dist();
            }
        }
        m.finals[FinalLabel::leader] = leader;
        return BeepMachine{m};
    }

    using Ordered = std::map<std::pair<StateId, StateId>, mpq_class>;

    /// Two labelled nodes stepped tuple by tuple.
    Ordered ordered_step(const BeepMachine &m, const Ordered &dist)
    {
        Ordered next;
        for (const auto &[pair, mass] : dist)
        {
            const Channel c = m.is_beep(pair.first) || m.is_beep(pair.second) ? Channel::beep : Channel::silent;
            for (const auto &[a, pa] : m.delta(pair.first, c).entries)
            {
                for (const auto &[b, pb] : m.delta(pair.second, c).entries)
                {
                    next[{a, b}] += mass * q(pa) * q(pb);
                }
            }
        }
        return next;
    }

    std::map<Configuration, mpq_class> forget_order(const Ordered &dist)
    {
        std::map<Configuration, mpq_class> out;
        for (const auto &[pair, mass] : dist)
        {
            Configuration c{pair.first, pair.second};
            std::sort(c.begin(), c.end());
            out[c] += mass;
        }
        return out;
    }

    std::map<Configuration, mpq_class> sorted(const ConfigurationDistribution &d)
    {
        std::map<Configuration, mpq_class> out;
        for (const auto &[c, mass] : d.mass)
        {
            if (mass != 0)
            {
                out[c] = mass;
            }
        }
        return out;
    }
}

TEST_CASE("configuration space")
{
    CHECK(configuration_space_size(3, 4) == doctest::Approx(20));
    CHECK(configuration_space_size(1, 7) == doctest::Approx(7));
    CHECK_NOTHROW(check_configuration_space(10, 10));
    CHECK_THROWS_AS(check_configuration_space(1000, 1000), ConfigurationSpaceOverflow);
    CHECK_THROWS_AS(absorb_exact(coin_machine(), 5, {.cap = 10}), ConfigurationSpaceOverflow);

    const Configuration c{0, 0, 2};
    const auto counts = configuration_counts(c);
    CHECK(counts.at(0) == 2);
    CHECK(counts.at(2) == 1);
}

TEST_CASE("exact steps")
{
    const auto m = coin_machine();
    SUBCASE("identity machine")
    {
        MachineSpec spec;
        spec.receive_states = {0};
        spec.delta_silent[0] = {{{0, Rational::one()}}};
        spec.delta_beep[0] = {{{0, Rational::one()}}};
        const BeepMachine id{spec};
        const auto d = step_exact(id, initial_distribution(id, 4));
        REQUIRE(d.mass.size() == 1);
        CHECK(d.mass.at(Configuration{0, 0, 0, 0}) == 1);
    }
    SUBCASE("binomial split")
    {
        const auto d = step_exact(m, initial_distribution(m, 3));
        CHECK(d.mass.at(Configuration{1, 1, 1}) == mpq_class(1, 8));
        CHECK(d.mass.at(Configuration{1, 1, 2}) == mpq_class(3, 8));
        CHECK(d.mass.at(Configuration{1, 2, 2}) == mpq_class(3, 8));
        CHECK(d.mass.at(Configuration{2, 2, 2}) == mpq_class(1, 8));
        CHECK(d.total() == 1);
    }
}

TEST_CASE("absorption reports")
{
    const auto m = coin_machine();
    const auto r3 = absorb_exact(m, 3);
    CHECK(r3.profile("follower=3") == mpq_class(1, 8));
    CHECK(r3.profile("follower=2,leader=1") == mpq_class(3, 8));
    CHECK(r3.violation == mpq_class(1, 2));
    CHECK(r3.residual == 0);
    CHECK_FALSE(r3.truncated);

    const auto r1 = absorb_exact(m, 1);
    CHECK(r1.profile("leader=1") == mpq_class(1, 2));
    CHECK(r1.violation == 0);

    // start -> leader deterministically: every node leads.
    MachineSpec all;
    all.receive_states = {0, 1};
    all.delta_silent[0] = {{{1, Rational::one()}}};
    all.delta_beep[0] = {{{1, Rational::one()}}};
    all.delta_silent[1] = {{{1, Rational::one()}}};
    all.delta_beep[1] = {{{1, Rational::one()}}};
    all.finals[FinalLabel::leader] = 1;
    CHECK(absorb_exact(BeepMachine{all}, 2).violation == 1);
    CHECK(absorb_exact(BeepMachine{all}, 1).profile("leader=1") == 1);

    const auto json = nlohmann::json::parse(report_to_json(r3));
    CHECK(json.at("violation") == "1/2");
    CHECK(json.at("violation_float").get<double>() == doctest::Approx(0.5));
}

TEST_CASE("chain machine residual shrinks with the horizon")
{
    const BeepMachine m{chain_spec()};
    mpq_class last = 2;
    for (std::uint64_t h : {1u, 2u, 5u, 10u, 40u})
    {
        AbsorbOptions options;
        options.horizon = h;
        options.tail_bound = Rational{0, 1};
        const auto r = absorb_exact(m, 2, options);
        CHECK(r.residual <= last);
        CHECK(r.residual + r.profile("leader=2") == 1);
        last = r.residual;
    }
    CHECK(last < mpq_class(1, 1000));

    std::vector<mpq_class> seen;
    AbsorbOptions watch;
    watch.on_step = [&](std::uint64_t, const mpq_class &residual) { seen.push_back(residual); };
    (void)absorb_exact(m, 2, watch);
    CHECK(std::is_sorted(seen.rbegin(), seen.rend()));
}

TEST_CASE("configuration steps agree with labelled enumeration")
{
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial)
    {
        const StateId states = 2 + static_cast<StateId>(rng() % 5);
        const BeepMachine m = random_machine(rng, states);
        Ordered ordered{{{m.start(), m.start()}, mpq_class(1)}};
        ConfigurationDistribution parallel = initial_distribution(m, 2);
        ConfigurationDistribution serial = initial_distribution(m, 2);
        for (int step = 0; step < 6; ++step)
        {
            ordered = ordered_step(m, ordered);
            parallel = step_exact(m, parallel);
            serial = step_exact_serial(m, serial);
            CHECK(sorted(parallel) == forget_order(ordered));
            CHECK(sorted(serial) == sorted(parallel));
            CHECK(parallel.total() == 1);
        }
    }
}

TEST_CASE("extracted election machines conserve mass")
{
    SubroutineProbe probe(subroutine_fixed_error(ElectionParams::make({1, 4}, 2)));
    const auto m = extract_machine(probe);
    std::uint64_t steps = 0;
    AbsorbOptions options;
    options.on_step = [&](std::uint64_t, const mpq_class &) { ++steps; };
    const auto report = absorb_exact(m, 3, options);
    mpq_class total = report.residual;
    for (const auto &[name, mass] : report.profiles)
    {
        total += mass;
    }
    CHECK(total == 1);
    CHECK(steps == report.steps);
}
