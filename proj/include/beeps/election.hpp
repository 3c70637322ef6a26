#pragma once

#include "beeps/engine.hpp"
#include "beeps/node_program.hpp"
#include "beeps/rational.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace beeps
{
    struct ElectionParams
    {
        Rational epsilon;
        std::uint64_t q = 2;
        std::uint32_t n_lower_bound = 1;
        std::uint64_t q_hat = 2; ///< min(q, ⌈1/ε⌉)

        /// Validates ε ∈ (0, 1/2], q ≥ 2, Ñ ≥ 1 and derives q̂.
        static ElectionParams make(Rational epsilon, std::uint64_t q, std::uint32_t n_lower_bound = 1);
    };

    inline constexpr std::uint32_t default_state_optimal_c = 5;
    inline constexpr std::uint32_t default_count_bound = 8;

    /// ⌈log₂(2/ε)⌉: coin rounds of the fixed-error schedule.
    std::uint32_t fixed_error_coin_rounds(const Rational &epsilon);
    /// Smallest δ ≥ 1 with q̂^(δ·Ñ) ≥ (1/ε)^c, i.e. ⌈c·log_q̂(1/ε)/Ñ⌉ computed exactly.
    std::uint64_t state_optimal_rounds(const ElectionParams &params, std::uint32_t c);

    struct SubArgs
    {
        bool active = false;
        bool ko = false;
    };

    /// Private subroutine state, an integer of width() bits.
    using SubDist = SmallDist<std::uint64_t>;

    struct SubStep
    {
        std::optional<bool> result; ///< set when the call returns after this round
        SubDist next;               ///< next private state when still running
    };

    struct PublicStep
    {
        std::optional<bool> result;
        std::uint64_t next = 0;
    };

    /// A termination subroutine fragment. Arguments are read on every round, so
    /// a caller keeps (active, ko) stable for the duration of the call.
    class TerminationSubroutine
    {
    public:
        virtual ~TerminationSubroutine() = default;

        virtual Routine routine() const = 0;
        virtual std::string name() const = 0;
        virtual unsigned width() const = 0;

        virtual SubDist enter(SubArgs args) const = 0;
        virtual Action act(SubArgs args, std::uint64_t state) const = 0;
        virtual SubStep step(SubArgs args, std::uint64_t state, Channel c) const = 0;

        /// Phase tracking from the channel alone, for observers.
        virtual std::uint64_t public_enter() const = 0;
        virtual PublicStep public_step(std::uint64_t phase, Channel c) const = 0;

        /// Exact number of rounds when the schedule is fixed and not aborted.
        virtual std::optional<std::uint64_t> fixed_length() const { return std::nullopt; }
    };

    using SubroutinePtr = std::shared_ptr<const TerminationSubroutine>;

    SubroutinePtr subroutine_state_optimal(const ElectionParams &params, std::uint32_t c = default_state_optimal_c);
    SubroutinePtr subroutine_fixed_error(const ElectionParams &params);
    SubroutinePtr subroutine_constant_state(std::uint32_t count_bound = default_count_bound);
    SubroutinePtr subroutine_double_safe(const ElectionParams &params, std::uint32_t count_bound = default_count_bound);

    struct SubroutineOptions
    {
        std::uint32_t c = default_state_optimal_c;
        std::uint32_t count_bound = default_count_bound;
    };

    /// Canonical names: state-optimal, fixed-error, constant-state, double-safe.
    SubroutinePtr subroutine_by_name(std::string_view name, const ElectionParams &params,
                                     const SubroutineOptions &options = {});
    bool is_subroutine_name(std::string_view name) noexcept;

    /// The knockout loop plus subroutine calls, embeddable into a larger local
    /// state at the position of the fields it adds to a layout.
    class ElectionCore
    {
    public:
        ElectionCore(VariableLayout &layout, const std::string &prefix, SubroutinePtr sub, std::uint64_t q_hat);

        /// Sets (active, ko) and starts the first subroutine call.
        SmallDist<LocalState> begin(LocalState s, bool active, bool ko, EventList &events) const;
        Action act(LocalState s) const;

        struct Step
        {
            SmallDist<LocalState> next;
            std::optional<bool> won; ///< set when the election finished; won = still active
        };
        Step step(LocalState s, Channel c, EventList &events) const;

        /// Zeroes all election fields.
        void clear(LocalState &s) const;

        bool active(LocalState s) const { return active_.get(s) != 0; }
        bool ko(LocalState s) const { return ko_.get(s) != 0; }
        bool in_call(LocalState s) const { return in_sub_.get(s) != 0; }
        const TerminationSubroutine &subroutine() const { return *sub_; }
        const Field &active_field() const { return active_; }
        const Field &ko_field() const { return ko_; }

    private:
        SmallDist<LocalState> enter_sub(LocalState s, EventList &events) const;
        SmallDist<LocalState> to_knockout(LocalState s) const;

        SubroutinePtr sub_;
        Probability beep_p_; ///< 1 - 1/q̂
        Field in_sub_;
        Field active_;
        Field ko_;
        Field participate_;
        Field sub_state_;
    };

    /// Universal leader election: initial call with active = ko = 1, then the
    /// knockout loop; active nodes become `leader`, the rest `follower`.
    class UniversalProgram final : public NodeProgram
    {
    public:
        UniversalProgram(SubroutinePtr sub, const ElectionParams &params);

        std::string name() const override;
        const VariableLayout &layout() const override { return layout_; }
        LocalState start() const override { return start_; }
        Action act(LocalState s) const override;
        Transition step(LocalState s, Channel c) const override;
        std::optional<FinalLabel> label(LocalState s) const override;
        std::vector<FinalLabel> declared_labels() const override
        {
            return {FinalLabel::leader, FinalLabel::follower};
        }
        EventList start_events(LocalState s) const override;

        const ElectionCore &core() const { return *core_; }
        /// True when round 1 is a listen-only wake-up round preceding the first call.
        bool has_wake_round() const { return wake_round_; }

    private:
        VariableLayout layout_;
        Field wake_;
        Field final_;
        std::unique_ptr<ElectionCore> core_;
        ElectionParams params_;
        bool wake_round_ = false;
        LocalState start_;
    };

    ProgramPtr build_universal(SubroutinePtr sub, const ElectionParams &params);

    /// Runs exactly one subroutine call with per-node arguments taken from the
    /// `active` and `ko` variables (set them through NetworkSpec overrides).
    /// Round 1 is a wake-up round; the result is the `accept`/`reject` label.
    class SubroutineProbe final : public NodeProgram
    {
    public:
        explicit SubroutineProbe(SubroutinePtr sub);

        std::string name() const override { return "probe(" + sub_->name() + ")"; }
        const VariableLayout &layout() const override { return layout_; }
        LocalState start() const override;
        Action act(LocalState s) const override;
        Transition step(LocalState s, Channel c) const override;
        std::optional<FinalLabel> label(LocalState s) const override;
        std::vector<FinalLabel> declared_labels() const override
        {
            return {FinalLabel::accept, FinalLabel::reject};
        }

    private:
        SubroutinePtr sub_;
        VariableLayout layout_;
        Field stage_; ///< 0 wake, 1 running, 2 accept, 3 reject
        Field active_;
        Field ko_;
        Field sub_state_;
    };

    /// (1,k)-loneliness detection from any leader election: odd rounds run the
    /// election, even rounds let leaders announce, then non-leaders beep once.
    class LonelinessProgram final : public NodeProgram
    {
    public:
        explicit LonelinessProgram(ProgramPtr base);

        std::string name() const override { return "lonely(" + base_->name() + ")"; }
        const VariableLayout &layout() const override { return layout_; }
        LocalState start() const override;
        Action act(LocalState s) const override;
        Transition step(LocalState s, Channel c) const override;
        std::optional<FinalLabel> label(LocalState s) const override;
        std::vector<FinalLabel> declared_labels() const override { return {FinalLabel::alone, FinalLabel::crowd}; }
        EventList start_events(LocalState s) const override;

    private:
        ProgramPtr base_;
        VariableLayout layout_;
        Field base_bits_;
        Field phase_; ///< 0 odd (election), 1 even (announce), 2 last round, 3 done
        Field flag_;  ///< phase 2: was leader; phase 3: crowd
    };

    ProgramPtr loneliness_from_leader_election(ProgramPtr le_program);

    struct ElectionOutcome
    {
        std::uint32_t leader_count = 0;
        std::uint64_t rounds = 0;
        bool terminated = false;

        bool safety_ok() const noexcept { return leader_count <= 1; }
        bool liveness_ok() const noexcept { return terminated && leader_count >= 1; }
    };

    ElectionOutcome check_election_outcome(const Trace &trace);

    struct CallBoundary
    {
        std::uint64_t begin_round = 0; ///< update round that started the call (0 = at start)
        std::uint64_t end_round = 0;   ///< update round in which the call returned
        bool result = false;
        friend bool operator==(const CallBoundary &, const CallBoundary &) noexcept = default;
    };

    /// Replays a channel history through the universal program's public phase
    /// logic. Ends at the first call returning true or when the history runs out
    /// (an unfinished call is then omitted).
    std::vector<CallBoundary> replay_call_boundaries(const UniversalProgram &program,
                                                     std::span<const Channel> channels);

    /// Call boundaries as recorded by `node` in a trace's events.
    std::vector<CallBoundary> recorded_call_boundaries(const Trace &trace, std::uint32_t node = 0);

    /// Online agreement check: every call_end round must carry one result per
    /// node and all results must be equal.
    class AgreementMonitor final : public ExecutionObserver
    {
    public:
        void on_start(std::uint64_t, std::uint32_t n) override { n_ = n; }
        void on_round(const RoundView &view) override;

        std::uint64_t calls() const noexcept { return calls_; }
        std::uint64_t disagreements() const noexcept { return disagreements_; }
        void reset() noexcept { calls_ = disagreements_ = 0; }

    private:
        std::uint32_t n_ = 0;
        std::uint64_t calls_ = 0;
        std::uint64_t disagreements_ = 0;
    };

    /// Agreement violations in a trace recorded with events.
    std::uint64_t count_agreement_violations(const Trace &trace);
}
