#include "beeps/election.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace beeps
{
    namespace
    {
        NodeEvent call_begin(Routine r, bool active, bool ko)
        {
            return NodeEvent{EventKind::call_begin, r, static_cast<std::uint8_t>(active), static_cast<std::uint8_t>(ko)};
        }

        NodeEvent call_end(Routine r, bool result)
        {
            return NodeEvent{EventKind::call_end, r, static_cast<std::uint8_t>(result), 0};
        }
    }

    ElectionCore::ElectionCore(VariableLayout &layout, const std::string &prefix, SubroutinePtr sub,
                               std::uint64_t q_hat)
        : sub_(std::move(sub)), beep_p_(Probability::one() - Probability{1, q_hat})
    {
        if (!sub_)
        {
            throw std::invalid_argument("null termination subroutine");
        }
        in_sub_ = layout.add(prefix + "in_call", 1);
        active_ = layout.add(prefix + "active", 1);
        ko_ = layout.add(prefix + "ko", 1);
        participate_ = layout.add(prefix + "participate", 1);
        sub_state_ = layout.reserve(prefix + "sub", sub_->width());
    }

    SmallDist<LocalState> ElectionCore::begin(LocalState s, bool active, bool ko, EventList &events) const
    {
        active_.set(s, active ? 1 : 0);
        ko_.set(s, ko ? 1 : 0);
        return enter_sub(s, events);
    }

    SmallDist<LocalState> ElectionCore::enter_sub(LocalState s, EventList &events) const
    {
        const SubArgs args{active(s), ko(s)};
        events.push(call_begin(sub_->routine(), args.active, args.ko));
        participate_.clear(s);
        in_sub_.set(s, 1);
        return sub_->enter(args).map([&](std::uint64_t v) {
            LocalState t = s;
            sub_state_.set(t, v);
            return t;
        });
    }

    SmallDist<LocalState> ElectionCore::to_knockout(LocalState s) const
    {
        in_sub_.clear(s);
        sub_state_.clear(s);
        participate_.clear(s);
        if (!active(s))
        {
            return SmallDist<LocalState>::point(s);
        }
        LocalState p = s;
        participate_.set(p, 1);
        return SmallDist<LocalState>::bernoulli(p, s, beep_p_);
    }

    Action ElectionCore::act(LocalState s) const
    {
        if (in_call(s))
        {
            return sub_->act(SubArgs{active(s), ko(s)}, sub_state_.get(s));
        }
        return active(s) && participate_.get(s) != 0 ? Action::beep : Action::listen;
    }

    ElectionCore::Step ElectionCore::step(LocalState s, Channel c, EventList &events) const
    {
        if (in_call(s))
        {
            SubStep r = sub_->step(SubArgs{active(s), ko(s)}, sub_state_.get(s), c);
            if (!r.result)
            {
                return {r.next.map([&](std::uint64_t v) {
                            LocalState t = s;
                            sub_state_.set(t, v);
                            return t;
                        }),
                        std::nullopt};
            }
            events.push(call_end(sub_->routine(), *r.result));
            ko_.clear(s);
            if (*r.result)
            {
                const bool won = active(s);
                in_sub_.clear(s);
                sub_state_.clear(s);
                return {SmallDist<LocalState>::point(s), won};
            }
            return {to_knockout(s), std::nullopt};
        }

        if (active(s) && participate_.get(s) == 0 && c == Channel::beep)
        {
            active_.clear(s);
            ko_.set(s, 1);
            events.push(NodeEvent{EventKind::knockout, sub_->routine(), 0, 0});
        }
        if (c == Channel::silent)
        {
            return {enter_sub(s, events), std::nullopt};
        }
        return {to_knockout(s), std::nullopt};
    }

    void ElectionCore::clear(LocalState &s) const
    {
        for (const Field *f : {&in_sub_, &active_, &ko_, &participate_, &sub_state_})
        {
            f->clear(s);
        }
    }

    UniversalProgram::UniversalProgram(SubroutinePtr sub, const ElectionParams &params) : params_(params)
    {
        wake_ = layout_.add("wake", 1);
        final_ = layout_.add("final", 2);
        core_ = std::make_unique<ElectionCore>(layout_, "", std::move(sub), params.q_hat);

        EventList ignored;
        auto entry = core_->begin(LocalState{}, true, true, ignored);
        if (entry.size() == 1)
        {
            start_ = entry[0].value;
        }
        else
        {
            wake_round_ = true;
            wake_.set(start_, 1);
        }
    }

    std::string UniversalProgram::name() const { return "universal(" + core_->subroutine().name() + ")"; }

    Action UniversalProgram::act(LocalState s) const
    {
        if (wake_.get(s) != 0 || final_.get(s) != 0)
        {
            return Action::listen;
        }
        return core_->act(s);
    }

    Transition UniversalProgram::step(LocalState s, Channel c) const
    {
        Transition t;
        if (final_.get(s) != 0)
        {
            t.next = SmallDist<LocalState>::point(s);
            return t;
        }
        if (wake_.get(s) != 0)
        {
            wake_.clear(s);
            t.next = core_->begin(s, true, true, t.events);
            return t;
        }
        auto r = core_->step(s, c, t.events);
        if (r.won)
        {
            LocalState f;
            final_.set(f, *r.won ? 1 : 2);
            t.next = SmallDist<LocalState>::point(f);
        }
        else
        {
            t.next = r.next;
        }
        return t;
    }

    std::optional<FinalLabel> UniversalProgram::label(LocalState s) const
    {
        switch (final_.get(s))
        {
        case 1:
            return FinalLabel::leader;
        case 2:
            return FinalLabel::follower;
        default:
            return std::nullopt;
        }
    }

    EventList UniversalProgram::start_events(LocalState s) const
    {
        EventList out;
        if (!wake_round_ && final_.get(s) == 0 && core_->in_call(s))
        {
            out.push(call_begin(core_->subroutine().routine(), core_->active(s), core_->ko(s)));
        }
        return out;
    }

    ProgramPtr build_universal(SubroutinePtr sub, const ElectionParams &params)
    {
        return std::make_shared<UniversalProgram>(std::move(sub), params);
    }

    SubroutineProbe::SubroutineProbe(SubroutinePtr sub) : sub_(std::move(sub))
    {
        if (!sub_)
        {
            throw std::invalid_argument("null termination subroutine");
        }
        stage_ = layout_.add("stage", 2);
        active_ = layout_.add("active", 1);
        ko_ = layout_.add("ko", 1);
        sub_state_ = layout_.reserve("sub", sub_->width());
    }

    LocalState SubroutineProbe::start() const
    {
        LocalState s;
        active_.set(s, 1);
        ko_.set(s, 1);
        return s;
    }

    Action SubroutineProbe::act(LocalState s) const
    {
        if (stage_.get(s) != 1)
        {
            return Action::listen;
        }
        return sub_->act(SubArgs{active_.get(s) != 0, ko_.get(s) != 0}, sub_state_.get(s));
    }

    Transition SubroutineProbe::step(LocalState s, Channel c) const
    {
        Transition t;
        const SubArgs args{active_.get(s) != 0, ko_.get(s) != 0};
        auto with_sub = [&](std::uint64_t v) {
            LocalState n = s;
            stage_.set(n, 1);
            sub_state_.set(n, v);
            return n;
        };
        switch (stage_.get(s))
        {
        case 0:
            t.events.push(call_begin(sub_->routine(), args.active, args.ko));
            t.next = sub_->enter(args).map(with_sub);
            return t;
        case 1: {
            SubStep r = sub_->step(args, sub_state_.get(s), c);
            if (r.result)
            {
                t.events.push(call_end(sub_->routine(), *r.result));
                LocalState f;
                stage_.set(f, *r.result ? 2 : 3);
                t.next = SmallDist<LocalState>::point(f);
            }
            else
            {
                t.next = r.next.map(with_sub);
            }
            return t;
        }
        default:
            t.next = SmallDist<LocalState>::point(s);
            return t;
        }
    }

    std::optional<FinalLabel> SubroutineProbe::label(LocalState s) const
    {
        switch (stage_.get(s))
        {
        case 2:
            return FinalLabel::accept;
        case 3:
            return FinalLabel::reject;
        default:
            return std::nullopt;
        }
    }

    LonelinessProgram::LonelinessProgram(ProgramPtr base) : base_(std::move(base))
    {
        if (!base_)
        {
            throw std::invalid_argument("null base program");
        }
        const auto labels = base_->declared_labels();
        if (std::find(labels.begin(), labels.end(), FinalLabel::leader) == labels.end())
        {
            throw std::invalid_argument("base program '" + base_->name() + "' has no leader label");
        }
        for (const auto &v : base_->layout().variables())
        {
            layout_.add(v.name, v.field.width());
        }
        base_bits_ = Field(0, std::max(1u, base_->layout().width()));
        if (base_->layout().width() + 3 > 64)
        {
            throw std::length_error("base program leaves no room for the loneliness wrapper");
        }
        phase_ = Field(base_bits_.width(), 2);
        flag_ = Field(base_bits_.width() + 2, 1);
        layout_.add("lonely_phase", 2);
        layout_.add("lonely_flag", 1);
    }

    LocalState LonelinessProgram::start() const
    {
        LocalState s;
        base_bits_.set(s, base_->start().word);
        return s;
    }

    Action LonelinessProgram::act(LocalState s) const
    {
        const LocalState b{base_bits_.get(s)};
        switch (phase_.get(s))
        {
        case 0:
            return base_->act(b);
        case 1:
            return base_->label(b) == FinalLabel::leader ? Action::beep : Action::listen;
        case 2:
            return flag_.get(s) != 0 ? Action::listen : Action::beep;
        default:
            return Action::listen;
        }
    }

    Transition LonelinessProgram::step(LocalState s, Channel c) const
    {
        Transition t;
        const LocalState b{base_bits_.get(s)};
        switch (phase_.get(s))
        {
        case 0: {
            Transition inner = base_->step(b, c);
            t.events = inner.events;
            t.next = inner.next.map([&](LocalState nb) {
                LocalState n;
                base_bits_.set(n, nb.word);
                phase_.set(n, 1);
                return n;
            });
            return t;
        }
        case 1: {
            LocalState n = s;
            if (c == Channel::beep)
            {
                n = LocalState{};
                phase_.set(n, 2);
                flag_.set(n, base_->label(b) == FinalLabel::leader ? 1 : 0);
            }
            else
            {
                phase_.set(n, 0);
            }
            t.next = SmallDist<LocalState>::point(n);
            return t;
        }
        case 2: {
            LocalState n;
            phase_.set(n, 3);
            flag_.set(n, c == Channel::beep ? 1 : 0);
            t.next = SmallDist<LocalState>::point(n);
            return t;
        }
        default:
            t.next = SmallDist<LocalState>::point(s);
            return t;
        }
    }

    std::optional<FinalLabel> LonelinessProgram::label(LocalState s) const
    {
        if (phase_.get(s) != 3)
        {
            return std::nullopt;
        }
        return flag_.get(s) != 0 ? FinalLabel::crowd : FinalLabel::alone;
    }

    EventList LonelinessProgram::start_events(LocalState s) const
    {
        return base_->start_events(LocalState{base_bits_.get(s)});
    }

    ProgramPtr loneliness_from_leader_election(ProgramPtr le_program)
    {
        return std::make_shared<LonelinessProgram>(std::move(le_program));
    }

    ElectionOutcome check_election_outcome(const Trace &trace)
    {
        if (!trace.declares(FinalLabel::leader))
        {
            throw std::invalid_argument("trace does not come from a leader election program");
        }
        ElectionOutcome out;
        out.leader_count = static_cast<std::uint32_t>(trace.count_label(FinalLabel::leader));
        out.rounds = trace.rounds_elapsed;
        out.terminated = trace.terminated;
        return out;
    }

    std::vector<CallBoundary> replay_call_boundaries(const UniversalProgram &program,
                                                     std::span<const Channel> channels)
    {
        const TerminationSubroutine &sub = program.core().subroutine();
        std::vector<CallBoundary> out;
        enum class Mode
        {
            wake,
            call,
            knockout,
        };
        Mode mode = program.has_wake_round() ? Mode::wake : Mode::call;
        std::uint64_t begin = 0;
        std::uint64_t phase = sub.public_enter();
        for (std::uint64_t r = 1; r <= channels.size(); ++r)
        {
            const Channel c = channels[r - 1];
            switch (mode)
            {
            case Mode::wake:
                mode = Mode::call;
                begin = r;
                phase = sub.public_enter();
                break;
            case Mode::call: {
                PublicStep p = sub.public_step(phase, c);
                if (p.result)
                {
                    out.push_back(CallBoundary{begin, r, *p.result});
                    if (*p.result)
                    {
                        return out;
                    }
                    mode = Mode::knockout;
                }
                else
                {
                    phase = p.next;
                }
                break;
            }
            case Mode::knockout:
                if (c == Channel::silent)
                {
                    mode = Mode::call;
                    begin = r;
                    phase = sub.public_enter();
                }
                break;
            }
        }
        return out;
    }

    std::vector<CallBoundary> recorded_call_boundaries(const Trace &trace, std::uint32_t node)
    {
        std::vector<CallBoundary> out;
        std::uint64_t begin = 0;
        for (const auto &e : trace.events)
        {
            if (e.node != node)
            {
                continue;
            }
            if (e.event.kind == EventKind::call_begin)
            {
                begin = e.round;
            }
            else if (e.event.kind == EventKind::call_end)
            {
                out.push_back(CallBoundary{begin, e.round, e.event.a != 0});
            }
        }
        return out;
    }

    void AgreementMonitor::on_round(const RoundView &view)
    {
        std::uint32_t results = 0;
        std::uint32_t trues = 0;
        for (const auto &e : view.events)
        {
            if (e.event.kind == EventKind::call_end)
            {
                ++results;
                trues += e.event.a != 0 ? 1u : 0u;
            }
        }
        if (results == 0)
        {
            return;
        }
        ++calls_;
        if (results != n_ || (trues != 0 && trues != results))
        {
            ++disagreements_;
        }
    }

    std::uint64_t count_agreement_violations(const Trace &trace)
    {
        std::map<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>> per_round;
        for (const auto &e : trace.events)
        {
            if (e.event.kind == EventKind::call_end)
            {
                auto &[results, trues] = per_round[e.round];
                ++results;
                trues += e.event.a != 0 ? 1u : 0u;
            }
        }
        std::uint64_t bad = 0;
        for (const auto &[round, rt] : per_round)
        {
            if (rt.first != trace.n || (rt.second != 0 && rt.second != rt.first))
            {
                ++bad;
            }
        }
        return bad;
    }
}
