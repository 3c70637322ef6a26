#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace beeps
{
    /// Structural invariant of a BeepMachine does not hold.
    struct MalformedMachine : std::invalid_argument
    {
        using std::invalid_argument::invalid_argument;
    };

    /// Reachable-state enumeration exceeded its cap.
    struct EnumerationOverflow : std::runtime_error
    {
        EnumerationOverflow(std::uint64_t cap, std::uint64_t partial)
            : std::runtime_error("state enumeration exceeded cap " + std::to_string(cap) + " after " +
                                 std::to_string(partial) + " states"),
              cap(cap), partial_count(partial)
        {
        }
        std::uint64_t cap;
        std::uint64_t partial_count;
    };

    /// Exact analysis would need more configurations than allowed.
    struct ConfigurationSpaceOverflow : std::runtime_error
    {
        ConfigurationSpaceOverflow(double cap, double attempted)
            : std::runtime_error("configuration space " + std::to_string(attempted) + " exceeds cap " +
                                 std::to_string(cap)),
              cap(cap), attempted(attempted)
        {
        }
        double cap;
        double attempted;
    };

    struct IoError : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };
}
