#pragma once

#include "beeps/machine.hpp"

#include <gmpxx.h>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace beeps
{
    /// Multiset of occupied states, kept as a sorted list of n state ids.
    using Configuration = std::vector<StateId>;

    struct ConfigurationHash
    {
        std::size_t operator()(const Configuration &c) const noexcept;
    };

    /// Node count per occupied state.
    std::map<StateId, std::uint32_t> configuration_counts(const Configuration &c);

    struct ConfigurationDistribution
    {
        std::uint32_t n = 0;
        std::unordered_map<Configuration, mpq_class, ConfigurationHash> mass;
        mpq_class residual = 0; ///< mass no longer tracked in `mass`

        mpq_class total() const;
        static ConfigurationDistribution point(Configuration c);
    };

    inline constexpr double default_configuration_cap = 2e6;

    /// C(n+s-1, s-1), as a double so that huge spaces still compare against a cap.
    double configuration_space_size(std::uint32_t n, std::size_t states);
    /// Throws ConfigurationSpaceOverflow when the space exceeds the cap.
    void check_configuration_space(std::uint32_t n, std::size_t states, double cap = default_configuration_cap);

    /// ⊤ iff some node occupies a beep state.
    Channel configuration_channel(const BeepMachine &machine, const Configuration &c);

    ConfigurationDistribution initial_distribution(const BeepMachine &machine, std::uint32_t n);

    /// Exact one-round pushforward. Source configurations are split across
    /// OpenMP threads; the serial variant is the reference for tests.
    ConfigurationDistribution step_exact(const BeepMachine &machine, const ConfigurationDistribution &dist,
                                         double cap = default_configuration_cap);
    ConfigurationDistribution step_exact_serial(const BeepMachine &machine, const ConfigurationDistribution &dist,
                                                double cap = default_configuration_cap);

    struct AbsorbOptions
    {
        std::uint64_t horizon = 100'000;
        Rational tail_bound{1, 1'000'000'000};
        double cap = default_configuration_cap;
        bool parallel = true;
        /// Called after every step with the live mass still undecided.
        std::function<void(std::uint64_t step, const mpq_class &residual)> on_step;
    };

    struct AbsorptionReport
    {
        std::uint32_t n = 0;
        std::size_t states = 0;
        /// Final-label profiles such as "follower=1,leader=1" with their exact probability.
        std::map<std::string, mpq_class> profiles;
        /// Probability that two or more nodes ever hold the leader label.
        mpq_class violation = 0;
        /// Mass still in non-absorbed configurations when iteration stopped.
        mpq_class residual = 0;
        std::uint64_t steps = 0;
        bool truncated = false;

        mpq_class profile(const std::string &name) const;
    };

    /// Renders {label: count} as "label=count" pairs sorted by label name.
    std::string profile_name(const std::map<FinalLabel, std::uint32_t> &counts);

    /// Iterates step_exact from the all-start configuration until every node
    /// holds a final label with total probability at least 1 - tail_bound.
    /// Labeled final states must be absorbing.
    AbsorptionReport absorb_exact(const BeepMachine &machine, std::uint32_t n, const AbsorbOptions &options = {});

    /// Rationals as "num/den" strings plus `_float` companions.
    std::string report_to_json(const AbsorptionReport &report);
}
