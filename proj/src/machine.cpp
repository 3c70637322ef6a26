#include "beeps/machine.hpp"

#include "beeps/errors.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace beeps
{
    namespace
    {
        std::string channel_name(Channel c) { return c == Channel::silent ? "silent" : "beep"; }

        void check_distribution(const TransitionDistribution &d, std::size_t states, StateId from, Channel c)
        {
            std::string where = "state " + std::to_string(from) + " (" + channel_name(c) + ")";
            if (d.entries.empty())
            {
                throw MalformedMachine("empty distribution at " + where);
            }
            std::set<StateId> seen;
            Probability total;
            for (const auto &[to, p] : d.entries)
            {
                if (to >= states)
                {
                    throw MalformedMachine("unknown target state " + std::to_string(to) + " at " + where);
                }
                if (!seen.insert(to).second)
                {
                    throw MalformedMachine("duplicate target " + std::to_string(to) + " at " + where);
                }
                if (p > Probability::one())
                {
                    throw MalformedMachine("probability above 1 at " + where);
                }
                total += p;
            }
            if (!total.is_one())
            {
                throw MalformedMachine("probabilities sum to " + total.to_string() + " at " + where);
            }
        }

        bool is_point_mass_on(const TransitionDistribution &d, StateId s)
        {
            for (const auto &[to, p] : d.entries)
            {
                if (to == s && p.is_one())
                {
                    return true;
                }
            }
            return false;
        }

        void add_merged(TransitionDistribution &d, StateId to, Probability p)
        {
            for (auto &entry : d.entries)
            {
                if (entry.first == to)
                {
                    entry.second += p;
                    return;
                }
            }
            d.entries.emplace_back(to, p);
        }

        bool precision_ok(const Probability &p, std::uint64_t q)
        {
            if (p.is_zero() || p.is_one())
            {
                return true;
            }
            Probability lo{1, q};
            Probability hi = Probability::one() - lo;
            return lo <= p && p <= hi;
        }
    }

    BeepMachine::BeepMachine(const MachineSpec &spec)
    {
        const std::size_t s = spec.receive_states.size() + spec.beep_states.size();
        if (s == 0)
        {
            throw MalformedMachine("machine has no states");
        }
        beeping_.assign(s, false);
        std::vector<bool> seen(s, false);
        auto mark = [&](StateId id, bool beep) {
            if (id >= s)
            {
                throw MalformedMachine("state id " + std::to_string(id) + " is not dense in 0.." +
                                       std::to_string(s - 1));
            }
            if (seen[id])
            {
                throw MalformedMachine("state " + std::to_string(id) + " listed twice (Q_r and Q_b must be disjoint)");
            }
            seen[id] = true;
            beeping_[id] = beep;
        };
        for (StateId id : spec.receive_states)
        {
            mark(id, false);
        }
        for (StateId id : spec.beep_states)
        {
            mark(id, true);
        }
        if (spec.start >= s)
        {
            throw MalformedMachine("start state " + std::to_string(spec.start) + " is not a state");
        }
        start_ = spec.start;

        silent_.resize(s);
        beep_.resize(s);
        for (StateId id = 0; id < s; ++id)
        {
            auto si = spec.delta_silent.find(id);
            auto bi = spec.delta_beep.find(id);
            if (si == spec.delta_silent.end() || bi == spec.delta_beep.end())
            {
                throw MalformedMachine("state " + std::to_string(id) + " is missing a transition distribution");
            }
            check_distribution(si->second, s, id, Channel::silent);
            check_distribution(bi->second, s, id, Channel::beep);
            silent_[id] = si->second;
            beep_[id] = bi->second;
        }
        if (spec.delta_silent.size() != s || spec.delta_beep.size() != s)
        {
            throw MalformedMachine("transition distribution given for an unknown state");
        }

        std::set<StateId> final_states;
        for (const auto &[label, id] : spec.finals)
        {
            if (id >= s)
            {
                throw MalformedMachine("final '" + std::string(to_string(label)) + "' names unknown state");
            }
            if (!final_states.insert(id).second)
            {
                throw MalformedMachine("state " + std::to_string(id) + " carries two final labels");
            }
            if (beeping_[id])
            {
                throw MalformedMachine("final state " + std::to_string(id) + " must be a receive state");
            }
            if (!is_point_mass_on(silent_[id], id) || !is_point_mass_on(beep_[id], id))
            {
                throw MalformedMachine("final state " + std::to_string(id) + " is not terminal");
            }
        }
        finals_ = spec.finals;
    }

    std::optional<FinalLabel> BeepMachine::label_of(StateId s) const
    {
        for (const auto &[label, id] : finals_)
        {
            if (id == s)
            {
                return label;
            }
        }
        return std::nullopt;
    }

    std::vector<StateId> BeepMachine::receive_states() const
    {
        std::vector<StateId> out;
        for (StateId i = 0; i < beeping_.size(); ++i)
        {
            if (!beeping_[i])
            {
                out.push_back(i);
            }
        }
        return out;
    }

    std::vector<StateId> BeepMachine::beep_states() const
    {
        std::vector<StateId> out;
        for (StateId i = 0; i < beeping_.size(); ++i)
        {
            if (beeping_[i])
            {
                out.push_back(i);
            }
        }
        return out;
    }

    MachineSpec BeepMachine::to_spec() const
    {
        MachineSpec spec;
        spec.receive_states = receive_states();
        spec.beep_states = beep_states();
        spec.start = start_;
        for (StateId i = 0; i < beeping_.size(); ++i)
        {
            spec.delta_silent[i] = silent_[i];
            spec.delta_beep[i] = beep_[i];
        }
        spec.finals = finals_;
        return spec;
    }

    std::vector<PrecisionViolation> validate_precision(const BeepMachine &machine, std::uint64_t q)
    {
        if (q < 2)
        {
            throw std::invalid_argument("precision q must be at least 2");
        }
        std::vector<PrecisionViolation> out;
        for (StateId s = 0; s < machine.state_count(); ++s)
        {
            for (Channel c : {Channel::silent, Channel::beep})
            {
                for (const auto &[to, p] : machine.delta(s, c).entries)
                {
                    if (!precision_ok(p, q))
                    {
                        out.push_back(PrecisionViolation{s, c, p});
                    }
                }
            }
        }
        return out;
    }

    std::vector<PrecisionViolation> validate_precision(const MachineSpec &spec, std::uint64_t q)
    {
        return validate_precision(BeepMachine{spec}, q);
    }

    BeepMachine extract_machine(const NodeProgram &program, std::uint64_t cap)
    {
        std::unordered_map<std::uint64_t, StateId> ids;
        std::vector<LocalState> states;
        std::deque<StateId> frontier;
        auto intern = [&](LocalState s) {
            auto [it, fresh] = ids.try_emplace(s.word, static_cast<StateId>(states.size()));
            if (fresh)
            {
                if (states.size() >= cap)
                {
                    throw EnumerationOverflow(cap, states.size() + 1);
                }
                states.push_back(s);
                frontier.push_back(it->second);
            }
            return it->second;
        };

        MachineSpec spec;
        spec.start = intern(program.start());
        while (!frontier.empty())
        {
            StateId id = frontier.front();
            frontier.pop_front();
            LocalState s = states[id];
            bool beeps = program.act(s) == Action::beep;
            (beeps ? spec.beep_states : spec.receive_states).push_back(id);
            if (auto label = program.label(s))
            {
                if (!spec.finals.emplace(*label, id).second)
                {
                    throw MalformedMachine("label '" + std::string(to_string(*label)) +
                                           "' is carried by more than one reachable state");
                }
            }
            for (Channel c : {Channel::silent, Channel::beep})
            {
                TransitionDistribution d;
                if (beeps && c == Channel::silent)
                {
                    d.entries.emplace_back(id, Probability::one());
                }
                else
                {
                    for (const auto &e : program.step(s, c).next)
                    {
                        if (!e.p.is_zero())
                        {
                            add_merged(d, intern(e.value), e.p);
                        }
                    }
                }
                (c == Channel::silent ? spec.delta_silent : spec.delta_beep)[id] = std::move(d);
            }
        }
        return BeepMachine{spec};
    }

    std::uint64_t audit_state_count(const NodeProgram &program, std::uint64_t cap)
    {
        std::unordered_set<std::uint64_t> seen;
        std::vector<LocalState> stack{program.start()};
        seen.insert(program.start().word);
        while (!stack.empty())
        {
            LocalState s = stack.back();
            stack.pop_back();
            const bool beeps = program.act(s) == Action::beep;
            for (Channel c : {Channel::silent, Channel::beep})
            {
                if (beeps && c == Channel::silent)
                {
                    continue;
                }
                for (const auto &e : program.step(s, c).next)
                {
                    if (e.p.is_zero() || !seen.insert(e.value.word).second)
                    {
                        continue;
                    }
                    if (seen.size() > cap)
                    {
                        throw EnumerationOverflow(cap, seen.size());
                    }
                    stack.push_back(e.value);
                }
            }
        }
        return seen.size();
    }

    std::optional<std::vector<StateId>> find_solo_reachable_path(const BeepMachine &machine, StateId target)
    {
        const std::size_t s = machine.state_count();
        if (target >= s)
        {
            throw std::invalid_argument("unknown target state " + std::to_string(target));
        }
        constexpr StateId none = ~StateId{0};
        std::vector<StateId> parent(s, none);
        std::vector<bool> visited(s, false);
        std::deque<StateId> queue{machine.start()};
        visited[machine.start()] = true;
        while (!queue.empty())
        {
            StateId u = queue.front();
            queue.pop_front();
            if (u == target)
            {
                std::vector<StateId> path;
                for (StateId v = u; v != none; v = parent[v])
                {
                    path.push_back(v);
                }
                std::reverse(path.begin(), path.end());
                return path;
            }
            // Alone, a node hears ⊤ exactly when it beeps itself.
            Channel heard = machine.is_beep(u) ? Channel::beep : Channel::silent;
            for (const auto &[v, p] : machine.delta(u, heard).entries)
            {
                if (!p.is_zero() && !visited[v])
                {
                    visited[v] = true;
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        return std::nullopt;
    }

    MachineProgram::MachineProgram(BeepMachine machine, std::string name)
        : machine_(std::move(machine)), name_(std::move(name))
    {
        layout_.add("state", bits_for(machine_.state_count() - 1));
    }

    Action MachineProgram::act(LocalState s) const
    {
        return machine_.is_beep(static_cast<StateId>(s.word)) ? Action::beep : Action::listen;
    }

    Transition MachineProgram::step(LocalState s, Channel c) const
    {
        Transition t;
        for (const auto &[to, p] : machine_.delta(static_cast<StateId>(s.word), c).entries)
        {
            t.next.push(LocalState{to}, p);
        }
        return t;
    }

    std::optional<FinalLabel> MachineProgram::label(LocalState s) const
    {
        return machine_.label_of(static_cast<StateId>(s.word));
    }

    std::vector<FinalLabel> MachineProgram::declared_labels() const
    {
        std::vector<FinalLabel> out;
        for (const auto &[label, id] : machine_.finals())
        {
            out.push_back(label);
        }
        return out;
    }
}
