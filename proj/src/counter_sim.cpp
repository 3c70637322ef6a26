#include "beeps/counter.hpp"

#include <algorithm>
#include <bit>
#include <span>

namespace beeps
{
    namespace
    {
        NodeEvent event(EventKind kind, Routine routine, unsigned a = 0, unsigned b = 0)
        {
            return NodeEvent{kind, routine, static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)};
        }
    }

    CounterNodeProgram::CounterNodeProgram(CounterProgram prog, const ElectionParams &params,
                                           std::uint32_t count_bound)
        : prog_(std::move(prog))
    {
        if (prog_.code.empty() || prog_.k < 1 || prog_.k > max_counters)
        {
            throw std::invalid_argument("counter program must have instructions and 1..4 counters");
        }
        for (unsigned i = 0; i < prog_.k; ++i)
        {
            bits_[i] = layout_.add("c" + std::to_string(i + 1), 1);
        }
        stage_ = layout_.add("stage", 3);
        coord_ = layout_.add("coordinator", 1);
        pc_ = layout_.add("pc", bits_for(prog_.code.size()));
        slot_ = layout_.add("slot", 3);
        rx_ = layout_.add("rx", frame_pattern_rounds);
        op_ = layout_.add("op", 3);
        ctr_ = layout_.add("ctr", 2);
        decision_ = layout_.add("decision", 1);
        core_ = std::make_unique<ElectionCore>(layout_, "", subroutine_double_safe(params, count_bound),
                                               params.q_hat);

        EventList ignored;
        auto entry = core_->begin(LocalState{}, true, true, ignored);
        if (entry.size() != 1)
        {
            throw std::logic_error("double-safe entry must be deterministic");
        }
        start_ = entry[0].value;
    }

    EventList CounterNodeProgram::start_events(LocalState s) const
    {
        EventList out;
        if (stage_.get(s) == electing && core_->in_call(s))
        {
            out.push(event(EventKind::call_begin, core_->subroutine().routine(), core_->active(s), core_->ko(s)));
        }
        return out;
    }

    Action CounterNodeProgram::act(LocalState s) const
    {
        const bool coord = coord_.get(s) != 0;
        const unsigned ctr = static_cast<unsigned>(ctr_.get(s));
        switch (stage_.get(s))
        {
        case electing:
        case sub:
            return core_->act(s);
        case framing: {
            const auto slot = slot_.get(s);
            if (!coord)
            {
                return Action::listen;
            }
            if (slot == 0)
            {
                return Action::beep;
            }
            return encode_frame(frame_for(prog_, pc(s)))[slot - 1] ? Action::beep : Action::listen;
        }
        case pre: {
            const bool set = bit(s, ctr);
            const bool eligible = static_cast<Opcode>(op_.get(s)) == Opcode::inc ? !set : set;
            return eligible ? Action::beep : Action::listen;
        }
        case single:
            return static_cast<Opcode>(op_.get(s)) == Opcode::cmpz && bit(s, ctr) ? Action::beep : Action::listen;
        default:
            return Action::listen;
        }
    }

    LocalState CounterNodeProgram::start_frame(LocalState s, std::uint32_t next_pc) const
    {
        stage_.set(s, framing);
        slot_.clear(s);
        rx_.clear(s);
        op_.clear(s);
        ctr_.clear(s);
        pc_.set(s, coord_.get(s) != 0 ? resolve_jumps(prog_, next_pc) : 0);
        return s;
    }

    LocalState CounterNodeProgram::finish_op(LocalState s, std::uint32_t next_pc, EventList &events) const
    {
        events.push(event(EventKind::op_done, Routine::counter, static_cast<unsigned>(op_.get(s)),
                          static_cast<unsigned>(ctr_.get(s))));
        return start_frame(s, next_pc);
    }

    LocalState CounterNodeProgram::halt(bool accept) const
    {
        LocalState s;
        stage_.set(s, halted);
        decision_.set(s, accept ? 1 : 0);
        return s;
    }

    Transition CounterNodeProgram::step(LocalState s, Channel c) const
    {
        Transition t;
        const bool heard = c == Channel::beep;
        const bool coord = coord_.get(s) != 0;
        const unsigned ctr = static_cast<unsigned>(ctr_.get(s));
        const auto op = static_cast<Opcode>(op_.get(s));
        auto point = [&](LocalState n) {
            t.next = SmallDist<LocalState>::point(n);
            return t;
        };

        switch (stage_.get(s))
        {
        case electing: {
            auto r = core_->step(s, c, t.events);
            if (!r.won)
            {
                t.next = r.next;
                return t;
            }
            t.events.push(event(EventKind::election_end, Routine::election, *r.won));
            core_->clear(s);
            coord_.set(s, *r.won ? 1 : 0);
            return point(start_frame(s, 0));
        }
        case framing: {
            const auto slot = slot_.get(s);
            if (slot == 0)
            {
                if (!heard)
                {
                    t.events.push(event(EventKind::frame_error, Routine::counter));
                    return point(halt(false));
                }
                slot_.set(s, 1);
                return point(s);
            }
            const std::uint64_t rx = rx_.get(s) | (heard ? 1ULL << (slot - 1) : 0);
            if (slot < frame_pattern_rounds)
            {
                rx_.set(s, rx);
                slot_.set(s, slot + 1);
                return point(s);
            }
            std::array<bool, frame_pattern_rounds> bits{};
            for (unsigned i = 0; i < frame_pattern_rounds; ++i)
            {
                bits[i] = ((rx >> i) & 1) != 0;
            }
            auto frame = decode_frame(bits);
            if (!frame || frame->counter >= prog_.k)
            {
                t.events.push(event(EventKind::frame_error, Routine::counter));
                return point(halt(false));
            }
            if (coord)
            {
                const Frame intended = frame_for(prog_, pc(s));
                t.events.push(event(EventKind::frame_sent, Routine::counter, static_cast<unsigned>(intended.op),
                                    intended.counter));
            }
            t.events.push(
                event(EventKind::frame_decoded, Routine::counter, static_cast<unsigned>(frame->op), frame->counter));
            slot_.clear(s);
            rx_.clear(s);
            op_.set(s, static_cast<std::uint64_t>(frame->op));
            ctr_.set(s, frame->counter);
            switch (frame->op)
            {
            case Opcode::accept:
            case Opcode::reject:
                t.events.push(event(EventKind::op_done, Routine::counter, static_cast<unsigned>(frame->op), 0));
                return point(halt(frame->op == Opcode::accept));
            case Opcode::inc:
            case Opcode::dec:
                stage_.set(s, pre);
                return point(s);
            default:
                stage_.set(s, single);
                return point(s);
            }
        }
        case pre: {
            if (!heard)
            {
                return point(finish_op(s, pc(s) + 1, t.events));
            }
            const bool set = bit(s, ctr);
            const bool eligible = op == Opcode::inc ? !set : set;
            stage_.set(s, sub);
            t.next = core_->begin(s, eligible, eligible, t.events);
            return t;
        }
        case sub: {
            auto r = core_->step(s, c, t.events);
            if (!r.won)
            {
                t.next = r.next;
                return t;
            }
            t.events.push(event(EventKind::election_end, Routine::counter, *r.won));
            core_->clear(s);
            if (*r.won)
            {
                bits_[ctr].set(s, op == Opcode::inc ? 1 : 0);
            }
            return point(finish_op(s, pc(s) + 1, t.events));
        }
        case single: {
            std::uint32_t next_pc = pc(s) + 1;
            if (op == Opcode::zero)
            {
                bits_[ctr].clear(s);
            }
            else if (coord && !heard)
            {
                next_pc = prog_.code[pc(s)].target;
            }
            return point(finish_op(s, next_pc, t.events));
        }
        default:
            return point(s);
        }
    }

    std::optional<FinalLabel> CounterNodeProgram::label(LocalState s) const
    {
        if (stage_.get(s) != halted)
        {
            return std::nullopt;
        }
        return decision_.get(s) != 0 ? FinalLabel::accept : FinalLabel::reject;
    }

    NetworkSpec build_counter_network(const CounterProgram &prog, const ElectionParams &params, std::uint32_t n,
                                      const std::vector<std::uint64_t> &inputs, std::uint32_t count_bound)
    {
        if (n < 1)
        {
            throw std::invalid_argument("network needs at least one node");
        }
        if (inputs.size() > prog.k)
        {
            throw std::invalid_argument("program uses " + std::to_string(prog.k) + " counter(s) but " +
                                        std::to_string(inputs.size()) + " inputs were given");
        }
        auto program = std::make_shared<CounterNodeProgram>(prog, params, count_bound);
        NetworkSpec spec = NetworkSpec::uniform(program, n);
        for (std::size_t c = 0; c < inputs.size(); ++c)
        {
            if (inputs[c] > n)
            {
                throw std::invalid_argument("input " + std::to_string(inputs[c]) + " for c" + std::to_string(c + 1) +
                                            " exceeds unary capacity n = " + std::to_string(n));
            }
            for (std::uint32_t node = 0; node < inputs[c]; ++node)
            {
                spec.override_variable(node, "c" + std::to_string(c + 1), 1);
            }
        }
        return spec;
    }

    namespace
    {
        /// Follows a counter simulation round by round next to a reference
        /// interpreter driven by the same decoded opcodes.
        class CounterAuditor final : public ExecutionObserver
        {
        public:
            explicit CounterAuditor(const CounterNodeProgram &program) : program_(program) {}

            bool wants_states() const override { return true; }
            void on_start(std::uint64_t, std::uint32_t n) override { n_ = n; }

            void on_round(const RoundView &view) override
            {
                if (view.round == 0)
                {
                    values_ = popcounts(view.states);
                    pc_ = resolve_jumps(program_.program(), 0);
                }
                std::uint32_t results = 0;
                std::uint32_t trues = 0;
                std::uint32_t election_ends = 0;
                std::uint32_t winners = 0;
                Routine election_kind = Routine::none;
                std::vector<Frame> sent;
                std::vector<Frame> decoded;
                bool frame_error = false;
                bool op_done = false;
                for (const auto &e : view.events)
                {
                    switch (e.event.kind)
                    {
                    case EventKind::call_end:
                        ++results;
                        trues += e.event.a;
                        break;
                    case EventKind::election_end:
                        ++election_ends;
                        winners += e.event.a;
                        election_kind = e.event.routine;
                        break;
                    case EventKind::frame_sent:
                        sent.push_back(Frame{static_cast<Opcode>(e.event.a), e.event.b});
                        break;
                    case EventKind::frame_decoded:
                        decoded.push_back(Frame{static_cast<Opcode>(e.event.a), e.event.b});
                        break;
                    case EventKind::frame_error:
                        frame_error = true;
                        break;
                    case EventKind::op_done:
                        op_done = true;
                        break;
                    default:
                        break;
                    }
                }
                if (results != 0)
                {
                    ++audit.calls;
                }
                if (results != 0 && (results != n_ || (trues != 0 && trues != results)))
                {
                    ++audit.agreement_violations;
                }
                if (election_ends != 0)
                {
                    if (election_kind == Routine::election)
                    {
                        audit.coordinators = winners;
                    }
                    else
                    {
                        ++audit.elections;
                    }
                    if (winners != 1)
                    {
                        ++audit.failed_elections;
                        op_failed_ = true;
                    }
                }
                if (frame_error)
                {
                    ++audit.frame_errors;
                }
                if (!decoded.empty())
                {
                    on_frame(sent, decoded, view.states);
                }
                if (op_done)
                {
                    on_op_done(view.states);
                }
            }

            CounterAudit audit;

        private:
            std::array<std::uint64_t, max_counters> popcounts(std::span<const LocalState> states) const
            {
                std::array<std::uint64_t, max_counters> out{};
                for (const auto &s : states)
                {
                    for (unsigned c = 0; c < program_.program().k; ++c)
                    {
                        out[c] += program_.bit(s, c) ? 1 : 0;
                    }
                }
                return out;
            }

            void on_frame(const std::vector<Frame> &sent, const std::vector<Frame> &decoded,
                          std::span<const LocalState> states)
            {
                ++audit.frames;
                bool mismatch = sent.empty();
                for (const auto &d : decoded)
                {
                    for (const auto &s : sent)
                    {
                        mismatch = mismatch || !(s == d);
                    }
                }
                if (mismatch)
                {
                    ++audit.frame_mismatches;
                }
                frame_ = decoded.front();
                op_failed_ = false;
                before_.assign(states.begin(), states.end());
                if (!halted_ && !(frame_for(program_.program(), pc_) == frame_))
                {
                    ++audit.shadow_mismatches;
                }
            }

            void on_op_done(std::span<const LocalState> states)
            {
                ++audit.ops;
                const auto &prog = program_.program();
                const unsigned c = frame_.counter;
                const std::uint64_t before_value = values_[c];
                if (!halted_)
                {
                    const std::uint32_t at = resolve_jumps(prog, pc_);
                    std::uint32_t next = at + 1;
                    switch (frame_.op)
                    {
                    case Opcode::inc:
                        values_[c] = std::min<std::uint64_t>(values_[c] + 1, n_);
                        break;
                    case Opcode::dec:
                        values_[c] = values_[c] == 0 ? 0 : values_[c] - 1;
                        break;
                    case Opcode::zero:
                        values_[c] = 0;
                        break;
                    case Opcode::cmpz:
                        if (values_[c] == 0)
                        {
                            next = prog.code[at].target;
                        }
                        break;
                    default:
                        halted_ = true;
                        break;
                    }
                    if (!halted_)
                    {
                        pc_ = resolve_jumps(prog, next);
                    }
                }
                if (frame_.op == Opcode::accept || frame_.op == Opcode::reject)
                {
                    return;
                }
                if (audit.failed_elections == 0 && popcounts(states) != values_)
                {
                    ++audit.unary_violations;
                }
                if ((frame_.op == Opcode::inc || frame_.op == Opcode::dec) && !op_failed_)
                {
                    const bool inc = frame_.op == Opcode::inc;
                    const bool saturated = inc ? before_value == n_ : before_value == 0;
                    std::uint32_t up = 0;
                    std::uint32_t down = 0;
                    std::uint32_t other = 0;
                    for (std::size_t i = 0; i < states.size(); ++i)
                    {
                        for (unsigned k = 0; k < prog.k; ++k)
                        {
                            const bool was = program_.bit(before_[i], k);
                            const bool now = program_.bit(states[i], k);
                            if (was == now)
                            {
                                continue;
                            }
                            if (k != c)
                            {
                                ++other;
                            }
                            else if (now)
                            {
                                ++up;
                            }
                            else
                            {
                                ++down;
                            }
                        }
                    }
                    const bool ok = other == 0 && (saturated ? up + down == 0
                                                             : (inc ? up == 1 && down == 0 : down == 1 && up == 0));
                    // The shadow value is only meaningful while it tracks the network.
                    if (!ok && audit.failed_elections == 0)
                    {
                        ++audit.delta_violations;
                    }
                }
            }

            const CounterNodeProgram &program_;
            std::uint32_t n_ = 0;
            std::array<std::uint64_t, max_counters> values_{};
            std::uint32_t pc_ = 0;
            bool halted_ = false;
            Frame frame_{};
            bool op_failed_ = false;
            std::vector<LocalState> before_;
        };
    }

    CounterRun run_counter_simulation(const NetworkSpec &spec, std::uint64_t seed, std::uint64_t cutoff,
                                      TraceDetail detail, Executor *executor)
    {
        auto program = std::dynamic_pointer_cast<const CounterNodeProgram>(spec.program(0));
        if (!program)
        {
            throw std::invalid_argument("network was not built by build_counter_network");
        }
        for (std::uint32_t i = 1; i < spec.n(); ++i)
        {
            if (spec.program(i) != spec.program(0))
            {
                throw std::invalid_argument("counter network must run one program on every node");
            }
        }
        CounterAuditor auditor(*program);
        ExecutionOptions options;
        options.detail = detail;
        options.observers.push_back(&auditor);
        CounterRun run;
        Executor local;
        run.trace = (executor != nullptr ? *executor : local).run(spec, seed, cutoff, options);
        run.audit = auditor.audit;
        if (!run.trace.terminated)
        {
            run.decision = CounterDecision::timeout;
        }
        else
        {
            run.decision = run.trace.count_label(FinalLabel::accept) == spec.n() ? CounterDecision::accept
                                                                                  : CounterDecision::reject;
        }
        return run;
    }
}
