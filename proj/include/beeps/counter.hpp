#pragma once

#include "beeps/election.hpp"
#include "beeps/engine.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace beeps
{
    inline constexpr unsigned max_counters = 4;

    enum class CounterOp : std::uint8_t
    {
        inc,
        dec,
        zero,
        jz,
        jmp,
        accept,
        reject,
    };

    struct CounterInstruction
    {
        CounterOp op{};
        std::uint8_t counter = 0; ///< 0-based
        std::uint32_t target = 0; ///< jz/jmp
        std::uint32_t line = 0;
    };

    struct CounterProgram
    {
        unsigned k = 1; ///< counters used (highest index referenced)
        std::vector<CounterInstruction> code;
        std::map<std::string, std::uint32_t> labels;
    };

    struct Diagnostic
    {
        std::uint32_t line = 0;
        std::string message;
    };

    struct CounterParseError : std::invalid_argument
    {
        explicit CounterParseError(std::vector<Diagnostic> diagnostics);
        std::vector<Diagnostic> diagnostics;
    };

    /// One instruction per line, `#` comments, `name:` label prefixes.
    /// Mnemonics: INC k, DEC k, ZERO k, JZ k label, JMP label, ACCEPT, REJECT
    /// with 1-based k ≤ counter_limit. Control must not run past the last line
    /// and JMP-only cycles are rejected.
    CounterProgram parse_counter_program(std::string_view source, unsigned counter_limit = max_counters);
    CounterProgram load_counter_program(const std::string &path);

    enum class CounterDecision : std::uint8_t
    {
        accept,
        reject,
        timeout,
    };

    std::string_view to_string(CounterDecision d) noexcept;

    struct NonDecider : std::runtime_error
    {
        NonDecider(std::uint64_t budget)
            : std::runtime_error("counter program did not halt within " + std::to_string(budget) + " steps"),
              budget(budget)
        {
        }
        std::uint64_t budget;
    };

    struct Interpretation
    {
        CounterDecision decision = CounterDecision::reject;
        std::uint64_t steps = 0;
    };

    /// Reference semantics: INC saturates at cap, DEC at 0.
    Interpretation interpret_counter_program(const CounterProgram &prog, const std::vector<std::uint64_t> &inputs,
                                             std::uint64_t cap, std::uint64_t step_budget = 1'000'000);

    /// Opcodes carried by frames.
    enum class Opcode : std::uint8_t
    {
        inc = 1,
        dec = 2,
        zero = 3,
        cmpz = 4,
        accept = 5,
        reject = 6,
    };

    std::string_view to_string(Opcode op) noexcept;

    struct Frame
    {
        Opcode op{};
        std::uint8_t counter = 0;
        friend bool operator==(const Frame &, const Frame &) noexcept = default;
    };

    inline constexpr unsigned frame_pattern_rounds = 6;

    /// Pattern bits in send order: 3 opcode bits, 2 counter bits (MSB first),
    /// then the parity of those five.
    std::array<bool, frame_pattern_rounds> encode_frame(Frame f);
    std::optional<Frame> decode_frame(const std::array<bool, frame_pattern_rounds> &bits);

    /// The instruction a coordinator at `pc` announces next, after following JMPs.
    std::uint32_t resolve_jumps(const CounterProgram &prog, std::uint32_t pc);
    Frame frame_for(const CounterProgram &prog, std::uint32_t pc);

    /// Node program of the distributed counter machine. All nodes run it; the
    /// coordinator elected at the start also drives the program counter.
    class CounterNodeProgram final : public NodeProgram
    {
    public:
        enum Stage : std::uint64_t
        {
            electing = 0, ///< coordinator election
            framing = 1,  ///< listening to / sending a frame
            pre = 2,      ///< INC/DEC eligibility round
            sub = 3,      ///< INC/DEC sub-election
            single = 4,   ///< ZERO or CMPZ round
            halted = 5,
        };

        CounterNodeProgram(CounterProgram prog, const ElectionParams &params,
                           std::uint32_t count_bound = default_count_bound);

        std::string name() const override { return "counter"; }
        const VariableLayout &layout() const override { return layout_; }
        LocalState start() const override { return start_; }
        Action act(LocalState s) const override;
        Transition step(LocalState s, Channel c) const override;
        std::optional<FinalLabel> label(LocalState s) const override;
        std::vector<FinalLabel> declared_labels() const override { return {FinalLabel::accept, FinalLabel::reject}; }
        EventList start_events(LocalState s) const override;

        const CounterProgram &program() const { return prog_; }
        bool bit(LocalState s, unsigned counter) const { return bits_[counter].get(s) != 0; }
        bool is_coordinator(LocalState s) const { return coord_.get(s) != 0; }
        std::uint64_t stage(LocalState s) const { return stage_.get(s); }
        std::uint32_t pc(LocalState s) const { return static_cast<std::uint32_t>(pc_.get(s)); }
        const ElectionCore &core() const { return *core_; }

    private:
        LocalState start_frame(LocalState s, std::uint32_t pc) const;
        LocalState finish_op(LocalState s, std::uint32_t next_pc, EventList &events) const;
        LocalState halt(bool accept) const;

        CounterProgram prog_;
        VariableLayout layout_;
        std::array<Field, max_counters> bits_;
        Field stage_;
        Field coord_;
        Field pc_;
        Field slot_;  ///< frame: 0 = framing round, 1..6 = pattern
        Field rx_;    ///< received pattern bits
        Field op_;    ///< decoded opcode
        Field ctr_;   ///< decoded counter
        Field decision_;
        std::unique_ptr<ElectionCore> core_;
        LocalState start_;
    };

    /// Counter c (0-based) starts at inputs[c]: the first inputs[c] nodes get c[c] = 1.
    NetworkSpec build_counter_network(const CounterProgram &prog, const ElectionParams &params, std::uint32_t n,
                                      const std::vector<std::uint64_t> &inputs,
                                      std::uint32_t count_bound = default_count_bound);

    /// Post-hoc checks gathered while a counter simulation runs.
    struct CounterAudit
    {
        std::uint64_t frames = 0;
        std::uint64_t frame_mismatches = 0;   ///< decoded opcode differs from the coordinator's
        std::uint64_t frame_errors = 0;
        std::uint64_t elections = 0;          ///< sub-elections (coordinator election excluded)
        std::uint64_t failed_elections = 0;   ///< winners ≠ 1, including the coordinator election
        std::uint32_t coordinators = 0;
        std::uint64_t ops = 0;
        std::uint64_t shadow_mismatches = 0;  ///< op differs from the shadow interpreter
        std::uint64_t unary_violations = 0;   ///< counted only while no election has failed
        std::uint64_t delta_violations = 0;   ///< INC/DEC changed other than exactly one bit
        std::uint64_t calls = 0;              ///< subroutine calls that returned
        std::uint64_t agreement_violations = 0;
    };

    struct CounterRun
    {
        CounterDecision decision = CounterDecision::timeout;
        CounterAudit audit;
        Trace trace;
    };

    /// Runs the network and audits it online against a shadow interpreter.
    CounterRun run_counter_simulation(const NetworkSpec &spec, std::uint64_t seed, std::uint64_t cutoff,
                                      TraceDetail detail = TraceDetail::events, Executor *executor = nullptr);
}
