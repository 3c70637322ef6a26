#pragma once

#include "beeps/node_program.hpp"
#include "beeps/rational.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace beeps
{
    using StateId = std::uint32_t;

    struct TransitionDistribution
    {
        std::vector<std::pair<StateId, Probability>> entries;
        friend bool operator==(const TransitionDistribution &, const TransitionDistribution &) = default;
    };

    /// Unchecked description of a machine, as read from JSON or assembled by hand.
    struct MachineSpec
    {
        std::vector<StateId> receive_states;
        std::vector<StateId> beep_states;
        StateId start = 0;
        std::map<StateId, TransitionDistribution> delta_silent;
        std::map<StateId, TransitionDistribution> delta_beep;
        std::map<FinalLabel, StateId> finals;
    };

    /// Probabilistic beep state machine (Q_r, Q_b, q_s, δ⊥, δ⊤) with labeled
    /// terminal states. State ids are dense: 0 .. state_count()-1.
    ///
    /// Construction validates every structural invariant and throws
    /// MalformedMachine otherwise; a BeepMachine value is always well formed.
    class BeepMachine
    {
    public:
        explicit BeepMachine(const MachineSpec &spec);

        std::size_t state_count() const noexcept { return beeping_.size(); }
        bool is_beep(StateId s) const { return beeping_.at(s); }
        StateId start() const noexcept { return start_; }
        const TransitionDistribution &delta(StateId s, Channel c) const
        {
            return c == Channel::silent ? silent_.at(s) : beep_.at(s);
        }
        const std::map<FinalLabel, StateId> &finals() const noexcept { return finals_; }
        std::optional<FinalLabel> label_of(StateId s) const;

        std::vector<StateId> receive_states() const;
        std::vector<StateId> beep_states() const;
        MachineSpec to_spec() const;

    private:
        std::vector<bool> beeping_;
        StateId start_ = 0;
        std::vector<TransitionDistribution> silent_;
        std::vector<TransitionDistribution> beep_;
        std::map<FinalLabel, StateId> finals_;
    };

    struct PrecisionViolation
    {
        StateId state;
        Channel channel;
        Probability probability;
    };

    /// Every probability must be 0, 1, or inside [1/q, 1-1/q].
    std::vector<PrecisionViolation> validate_precision(const BeepMachine &machine, std::uint64_t q);
    /// Builds the machine first; structural problems throw MalformedMachine.
    std::vector<PrecisionViolation> validate_precision(const MachineSpec &spec, std::uint64_t q);

    inline constexpr std::uint64_t default_enumeration_cap = 1'000'000;

    /// Breadth-first enumeration of reachable local states under both channel
    /// outcomes. Beep states only ever observe ⊤, so their δ⊥ is recorded as a
    /// self loop and not explored.
    BeepMachine extract_machine(const NodeProgram &program, std::uint64_t cap = default_enumeration_cap);

    /// Reachable local-state count, computed by its own enumeration.
    std::uint64_t audit_state_count(const NodeProgram &program, std::uint64_t cap = default_enumeration_cap);

    /// Shortest loop-free path q_s → target that a node running alone could follow.
    std::optional<std::vector<StateId>> find_solo_reachable_path(const BeepMachine &machine, StateId target);

    std::string machine_to_json(const BeepMachine &machine);
    BeepMachine machine_from_json(std::string_view text);

    /// Runs a BeepMachine as a NodeProgram; the local state is the state id.
    class MachineProgram final : public NodeProgram
    {
    public:
        explicit MachineProgram(BeepMachine machine, std::string name = "machine");

        std::string name() const override { return name_; }
        const VariableLayout &layout() const override { return layout_; }
        LocalState start() const override { return LocalState{machine_.start()}; }
        Action act(LocalState s) const override;
        Transition step(LocalState s, Channel c) const override;
        std::optional<FinalLabel> label(LocalState s) const override;
        std::vector<FinalLabel> declared_labels() const override;

        const BeepMachine &machine() const noexcept { return machine_; }

    private:
        BeepMachine machine_;
        std::string name_;
        VariableLayout layout_;
    };
}
