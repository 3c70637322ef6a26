#pragma once

#include "beeps/election.hpp"
#include "beeps/engine.hpp"
#include "beeps/machine.hpp"

#include <memory>
#include <sstream>

namespace testing_support
{
    using namespace beeps;

    /// Every test that generates election traces reports them here so the
    /// agreement property is asserted over the whole suite.
    struct AgreementLedger
    {
        std::uint64_t calls = 0;
        std::uint64_t disagreements = 0;
    };

    inline AgreementLedger &ledger()
    {
        static AgreementLedger l;
        return l;
    }

    /// Runs with an agreement monitor attached and books the result.
    inline Trace run_checked(Executor &ex, const NetworkSpec &spec, std::uint64_t seed, std::uint64_t cutoff,
                             TraceDetail detail = TraceDetail::full, std::vector<ExecutionObserver *> extra = {})
    {
        AgreementMonitor monitor;
        ExecutionOptions options;
        options.detail = detail;
        options.observers = std::move(extra);
        options.observers.push_back(&monitor);
        Trace t = ex.run(spec, seed, cutoff, options);
        ledger().calls += monitor.calls();
        ledger().disagreements += monitor.disagreements();
        return t;
    }

    inline std::string jsonl(const Trace &t)
    {
        std::ostringstream out;
        write_trace_jsonl(t, out);
        return out.str();
    }

    inline ProgramPtr universal(const std::string &name, Rational eps, std::uint64_t q = 2, std::uint32_t nl = 1)
    {
        const auto params = ElectionParams::make(eps, q, nl);
        return build_universal(subroutine_by_name(name, params), params);
    }

    inline MachineSpec chain_spec()
    {
        // 0 -(1/2)-> 1 -(1/2)-> 2 (leader); everything else loops.
        MachineSpec m;
        m.receive_states = {0, 1, 2};
        m.start = 0;
        const Probability h{1, 2};
        m.delta_silent[0] = {{{0, h}, {1, h}}};
        m.delta_beep[0] = {{{0, Probability::one()}}};
        m.delta_silent[1] = {{{1, h}, {2, h}}};
        m.delta_beep[1] = {{{1, Probability::one()}}};
        m.delta_silent[2] = {{{2, Probability::one()}}};
        m.delta_beep[2] = {{{2, Probability::one()}}};
        m.finals[FinalLabel::leader] = 2;
        return m;
    }
}
