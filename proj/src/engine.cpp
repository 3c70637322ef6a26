#include "beeps/engine.hpp"

#include <algorithm>
#include <array>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace beeps
{
    NetworkSpec NetworkSpec::uniform(ProgramPtr program, std::uint32_t n)
    {
        if (n == 0)
        {
            throw std::invalid_argument("network needs at least one node");
        }
        NetworkSpec spec;
        for (std::uint32_t i = 0; i < n; ++i)
        {
            spec.add_node(program);
        }
        return spec;
    }

    NetworkSpec &NetworkSpec::add_node(ProgramPtr program)
    {
        if (!program)
        {
            throw std::invalid_argument("null program");
        }
        starts_.push_back(program->start());
        programs_.push_back(std::move(program));
        return *this;
    }

    NetworkSpec &NetworkSpec::override_variable(std::uint32_t node, std::string_view variable, std::uint64_t value)
    {
        if (node >= n())
        {
            throw std::invalid_argument("override targets node " + std::to_string(node) + " of " +
                                        std::to_string(n()));
        }
        const auto *var = programs_[node]->layout().find(variable);
        if (var == nullptr)
        {
            throw std::invalid_argument("program '" + programs_[node]->name() + "' declares no variable '" +
                                        std::string(variable) + "'");
        }
        if ((value & ~var->field.mask()) != 0)
        {
            throw std::invalid_argument("value " + std::to_string(value) + " does not fit variable '" +
                                        std::string(variable) + "'");
        }
        var->field.set(starts_[node], value);
        return *this;
    }

    Channel resolve_channel(std::span<const Action> actions)
    {
        for (Action a : actions)
        {
            if (a == Action::beep)
            {
                return Channel::beep;
            }
        }
        return Channel::silent;
    }

    bool Trace::declares(FinalLabel label) const
    {
        return std::find(declared_labels.begin(), declared_labels.end(), label) != declared_labels.end();
    }

    std::size_t Trace::count_label(FinalLabel label) const
    {
        return static_cast<std::size_t>(std::count(final_labels.begin(), final_labels.end(), label));
    }

    /// Interned local states of one program with lazily compiled transitions.
    class ProgramTable
    {
    public:
        static constexpr std::int8_t no_label = -1;

        struct Compiled
        {
            std::uint32_t ev_begin = 0;
            std::uint8_t count = 0;
            std::uint8_t ev_count = 0;
            bool label_change = false; ///< some branch enters or leaves a labeled state
            std::array<std::uint32_t, 8> next{};
            /// Branch i is taken when word < thr[i] (and no earlier branch matched);
            /// equivalent to comparing ⌊word·lcm/2^64⌋ against cumulative numerators.
            std::array<std::uint64_t, 8> thr{};
        };

        explicit ProgramTable(const NodeProgram &program) : program_(program) {}

        std::uint32_t intern(LocalState s)
        {
            auto [it, fresh] = ids_.try_emplace(s.word, static_cast<std::uint32_t>(states_.size()));
            if (fresh)
            {
                states_.push_back(s);
                act_.push_back(program_.act(s));
                auto l = program_.label(s);
                label_.push_back(l ? static_cast<std::int8_t>(*l) : no_label);
                tr_.emplace_back();
                tr_.emplace_back();
                ready_.push_back(0);
                ready_.push_back(0);
            }
            return it->second;
        }

        LocalState state(std::uint32_t id) const { return states_[id]; }
        Action act(std::uint32_t id) const { return act_[id]; }
        std::int8_t label(std::uint32_t id) const { return label_[id]; }

        const Compiled &transition(std::uint32_t id, Channel c)
        {
            const std::size_t k = 2 * static_cast<std::size_t>(id) + static_cast<std::size_t>(c);
            if (ready_[k] == 0) [[unlikely]]
            {
                compile(id, c);
            }
            return tr_[k];
        }

        const NodeEvent *events(const Compiled &c) const { return events_.data() + c.ev_begin; }

    private:
        void compile(std::uint32_t id, Channel c)
        {
            Transition t = program_.step(states_[id], c);
            if (t.next.empty())
            {
                throw std::logic_error("program '" + program_.name() + "' produced an empty transition");
            }
            Compiled out;
            std::uint64_t l = 1;
            for (const auto &e : t.next)
            {
                l = lcm_checked(l, e.p.den());
            }
            std::uint64_t cum = 0;
            for (const auto &e : t.next)
            {
                if (e.p.is_zero())
                {
                    continue;
                }
                cum += e.p.num() * (l / e.p.den());
                out.next[out.count] = intern(e.value);
                const unsigned __int128 scaled = static_cast<unsigned __int128>(cum) << 64;
                const unsigned __int128 t = (scaled + l - 1) / l;
                out.thr[out.count] = t > ~std::uint64_t{0} ? ~std::uint64_t{0} : static_cast<std::uint64_t>(t);
                out.label_change = out.label_change || ((label_[out.next[out.count]] == no_label) !=
                                                        (label_[id] == no_label));
                ++out.count;
            }
            out.ev_begin = static_cast<std::uint32_t>(events_.size());
            out.ev_count = static_cast<std::uint8_t>(t.events.size());
            events_.insert(events_.end(), t.events.begin(), t.events.end());
            const std::size_t k = 2 * static_cast<std::size_t>(id) + static_cast<std::size_t>(c);
            tr_[k] = out;
            ready_[k] = 1;
        }

        const NodeProgram &program_;
        std::unordered_map<std::uint64_t, std::uint32_t> ids_;
        std::vector<LocalState> states_;
        std::vector<Action> act_;
        std::vector<std::int8_t> label_;
        std::vector<Compiled> tr_;
        std::vector<std::uint8_t> ready_;
        std::vector<NodeEvent> events_;
    };

    Executor::Executor() = default;
    Executor::~Executor() = default;
    Executor::Executor(Executor &&) noexcept = default;
    Executor &Executor::operator=(Executor &&) noexcept = default;

    ProgramTable &Executor::table_for(const ProgramPtr &program)
    {
        auto &slot = tables_[program.get()];
        if (!slot.table)
        {
            slot.program = program;
            slot.table = std::make_unique<ProgramTable>(*program);
        }
        return *slot.table;
    }

    namespace
    {
        inline std::uint32_t pick(const ProgramTable::Compiled &c, std::uint64_t word)
        {
            if (c.count == 2) [[likely]]
            {
                return word < c.thr[0] ? c.next[0] : c.next[1];
            }
            for (std::uint8_t i = 0; i + 1 < c.count; ++i)
            {
                if (word < c.thr[i])
                {
                    return c.next[i];
                }
            }
            return c.next[c.count - 1];
        }
    }

    Trace Executor::run(const NetworkSpec &spec, std::uint64_t seed, std::uint64_t round_cutoff,
                        const ExecutionOptions &options)
    {
        if (round_cutoff == 0)
        {
            throw std::invalid_argument("round cutoff must be at least 1");
        }
        const std::uint32_t n = spec.n();
        if (n == 0)
        {
            throw std::invalid_argument("network needs at least one node");
        }

        Trace trace;
        trace.seed = seed;
        trace.n = n;
        trace.detail = options.detail;

        std::vector<ProgramTable *> tables(n);
        std::vector<std::uint32_t> ids(n);
        std::vector<NodeStream> streams(n);
        for (std::uint32_t i = 0; i < n; ++i)
        {
            tables[i] = &table_for(spec.program(i));
            ids[i] = tables[i]->intern(spec.start(i));
            streams[i] = NodeStream(seed, i);
            for (FinalLabel l : spec.program(i)->declared_labels())
            {
                if (!trace.declares(l))
                {
                    trace.declared_labels.push_back(l);
                }
            }
        }

        bool want_states = false;
        bool every_round = false;
        for (auto *obs : options.observers)
        {
            want_states = want_states || obs->wants_states();
            every_round = every_round || obs->wants_every_round();
            obs->on_start(seed, n);
        }
        const bool keep_events = options.detail != TraceDetail::summary;
        const bool keep_actions = options.detail == TraceDetail::full;
        const bool notify = !options.observers.empty();

        std::vector<LocalState> states;
        if (want_states)
        {
            states.resize(n);
            for (std::uint32_t i = 0; i < n; ++i)
            {
                states[i] = spec.start(i);
            }
        }

        std::vector<TraceEvent> round_events;
        std::uint32_t labeled = 0;
        for (std::uint32_t i = 0; i < n; ++i)
        {
            for (const auto &e : spec.program(i)->start_events(spec.start(i)))
            {
                round_events.push_back(TraceEvent{0, i, e});
            }
            auto label = tables[i]->label(ids[i]);
            if (label != ProgramTable::no_label)
            {
                ++labeled;
                round_events.push_back(TraceEvent{0, i, NodeEvent{EventKind::final_entry, Routine::none,
                                                                  static_cast<std::uint8_t>(label), 0}});
            }
        }
        if (keep_events)
        {
            trace.events.insert(trace.events.end(), round_events.begin(), round_events.end());
        }
        if (notify)
        {
            RoundView view{0, Channel::silent, 0, {}, round_events, states};
            for (auto *obs : options.observers)
            {
                obs->on_round(view);
            }
        }

        const bool uniform = std::all_of(tables.begin(), tables.end(), [&](auto *t) { return t == tables[0]; });
        // Actions of the coming round are computed while updating the previous one.
        std::vector<Action> actions(n);
        std::vector<Action> upcoming(n);
        std::uint32_t upcoming_beepers = 0;
        for (std::uint32_t i = 0; i < n; ++i)
        {
            upcoming[i] = tables[i]->act(ids[i]);
            upcoming_beepers += upcoming[i] == Action::beep ? 1u : 0u;
        }
        std::uint64_t round = 0;
        while (labeled < n && round < round_cutoff)
        {
            ++round;
            actions.swap(upcoming);
            const std::uint32_t beepers = upcoming_beepers;
            upcoming_beepers = 0;
            const Channel channel = beepers > 0 ? Channel::beep : Channel::silent;

            round_events.clear();
            for (std::uint32_t i = 0; i < n; ++i)
            {
                ProgramTable &table = uniform ? *tables[0] : *tables[i];
                const std::uint32_t cur = ids[i];
                const auto &c = table.transition(cur, channel);
                const std::uint32_t next = c.count == 1 ? c.next[0] : pick(c, streams[i].word(round));
                ids[i] = next;
                upcoming[i] = table.act(next);
                upcoming_beepers += upcoming[i] == Action::beep ? 1u : 0u;
                if ((c.ev_count != 0 || c.label_change)) [[unlikely]]
                {
                    const NodeEvent *ev = table.events(c);
                    for (std::uint8_t k = 0; k < c.ev_count; ++k)
                    {
                        round_events.push_back(TraceEvent{round, i, ev[k]});
                    }
                    const auto label = table.label(next);
                    const bool was_labeled = table.label(cur) != ProgramTable::no_label;
                    const bool now_labeled = label != ProgramTable::no_label;
                    if (now_labeled && !was_labeled)
                    {
                        ++labeled;
                        round_events.push_back(TraceEvent{round, i,
                                                          NodeEvent{EventKind::final_entry, Routine::none,
                                                                    static_cast<std::uint8_t>(label), 0}});
                    }
                    else if (was_labeled && !now_labeled)
                    {
                        --labeled;
                    }
                }
                if (want_states)
                {
                    states[i] = table.state(next);
                }
            }

            if (keep_events)
            {
                trace.channels.push_back(channel);
                trace.beep_counts.push_back(beepers);
                trace.events.insert(trace.events.end(), round_events.begin(), round_events.end());
                if (keep_actions)
                {
                    trace.actions.insert(trace.actions.end(), actions.begin(), actions.end());
                }
            }
            if (notify && (every_round || !round_events.empty()))
            {
                RoundView view{round, channel, beepers, actions, round_events, states};
                for (auto *obs : options.observers)
                {
                    if (obs->wants_every_round() || !round_events.empty())
                    {
                        obs->on_round(view);
                    }
                }
            }
        }

        trace.rounds_elapsed = round;
        trace.terminated = labeled == n;
        trace.final_labels.resize(n);
        for (std::uint32_t i = 0; i < n; ++i)
        {
            auto label = tables[i]->label(ids[i]);
            if (label != ProgramTable::no_label)
            {
                trace.final_labels[i] = static_cast<FinalLabel>(label);
            }
        }
        for (auto *obs : options.observers)
        {
            obs->on_finish(trace);
        }
        return trace;
    }

    Trace run_execution(const NetworkSpec &spec, std::uint64_t seed, std::uint64_t round_cutoff,
                        const ExecutionOptions &options)
    {
        Executor executor;
        return executor.run(spec, seed, round_cutoff, options);
    }

    namespace
    {
        using nlohmann::json;

        json event_json(const TraceEvent &e)
        {
            json j;
            j["type"] = "event";
            j["round"] = e.round;
            j["node"] = e.node;
            j["kind"] = std::string(to_string(e.event.kind));
            if (e.event.routine != Routine::none)
            {
                j["routine"] = std::string(to_string(e.event.routine));
            }
            switch (e.event.kind)
            {
            case EventKind::call_begin:
                j["active"] = e.event.a;
                j["ko"] = e.event.b;
                break;
            case EventKind::call_end:
                j["result"] = e.event.a;
                break;
            case EventKind::final_entry:
                j["label"] = std::string(to_string(static_cast<FinalLabel>(e.event.a)));
                break;
            case EventKind::election_end:
                j["won"] = e.event.a;
                break;
            case EventKind::frame_sent:
            case EventKind::frame_decoded:
            case EventKind::op_done:
                j["opcode"] = e.event.a;
                j["counter"] = e.event.b;
                break;
            case EventKind::knockout:
            case EventKind::frame_error:
                break;
            }
            return j;
        }

        json header_json(std::uint64_t seed, std::uint32_t n)
        {
            json j;
            j["type"] = "header";
            j["seed"] = seed;
            j["n"] = n;
            return j;
        }

        json round_json(std::uint64_t round, Channel channel, std::uint32_t beepers, std::span<const Action> actions)
        {
            json j;
            j["type"] = "round";
            j["round"] = round;
            j["channel"] = channel == Channel::beep ? 1 : 0;
            j["n_beeping"] = beepers;
            if (!actions.empty())
            {
                std::string a(actions.size(), 'L');
                for (std::size_t i = 0; i < actions.size(); ++i)
                {
                    if (actions[i] == Action::beep)
                    {
                        a[i] = 'B';
                    }
                }
                j["actions"] = std::move(a);
            }
            return j;
        }

        json summary_json(const Trace &trace)
        {
            json j;
            j["type"] = "summary";
            j["seed"] = trace.seed;
            j["n"] = trace.n;
            j["terminated"] = trace.terminated;
            j["rounds_elapsed"] = trace.rounds_elapsed;
            json labels = json::array();
            for (const auto &l : trace.final_labels)
            {
                labels.push_back(l ? json(std::string(to_string(*l))) : json(nullptr));
            }
            j["final_labels"] = std::move(labels);
            return j;
        }
    }

    void write_trace_jsonl(const Trace &trace, std::ostream &out)
    {
        out << header_json(trace.seed, trace.n).dump() << '\n';
        std::size_t ev = 0;
        auto flush_events = [&](std::uint64_t round) {
            while (ev < trace.events.size() && trace.events[ev].round == round)
            {
                out << event_json(trace.events[ev]).dump() << '\n';
                ++ev;
            }
        };
        flush_events(0);
        for (std::uint64_t r = 1; r <= trace.channels.size(); ++r)
        {
            std::span<const Action> actions;
            if (trace.actions.size() >= r * trace.n)
            {
                actions = trace.round_actions(r);
            }
            out << round_json(r, trace.channels[r - 1], trace.beep_counts[r - 1], actions).dump() << '\n';
            flush_events(r);
        }
        out << summary_json(trace).dump() << '\n';
        if (!out)
        {
            throw std::ios_base::failure("trace write failed");
        }
    }

    void write_trace_csv(const Trace &trace, std::ostream &out)
    {
        out << "round,channel,n_beeping\n";
        for (std::size_t r = 0; r < trace.channels.size(); ++r)
        {
            out << (r + 1) << ',' << (trace.channels[r] == Channel::beep ? 1 : 0) << ',' << trace.beep_counts[r]
                << '\n';
        }
        if (!out)
        {
            throw std::ios_base::failure("trace write failed");
        }
    }

    JsonlTraceStream::JsonlTraceStream(std::ostream &out, std::uint64_t action_window)
        : out_(out), window_(action_window)
    {
    }

    void JsonlTraceStream::on_start(std::uint64_t seed, std::uint32_t n)
    {
        out_ << header_json(seed, n).dump() << '\n';
    }

    void JsonlTraceStream::on_round(const RoundView &view)
    {
        if (view.round > 0)
        {
            auto actions = view.round <= window_ ? view.actions : std::span<const Action>{};
            out_ << round_json(view.round, view.channel, view.beepers, actions).dump() << '\n';
        }
        for (const auto &e : view.events)
        {
            out_ << event_json(e).dump() << '\n';
        }
    }

    void JsonlTraceStream::on_finish(const Trace &trace) { out_ << summary_json(trace).dump() << '\n'; }
}
