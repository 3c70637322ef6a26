#include "beeps/node_program.hpp"

#include <bit>

namespace beeps
{
    std::string_view to_string(FinalLabel label) noexcept
    {
        switch (label)
        {
        case FinalLabel::leader:
            return "leader";
        case FinalLabel::follower:
            return "follower";
        case FinalLabel::alone:
            return "alone";
        case FinalLabel::crowd:
            return "crowd";
        case FinalLabel::accept:
            return "accept";
        case FinalLabel::reject:
            return "reject";
        }
        return "?";
    }

    std::optional<FinalLabel> parse_final_label(std::string_view text) noexcept
    {
        for (auto l : {FinalLabel::leader, FinalLabel::follower, FinalLabel::alone, FinalLabel::crowd,
                       FinalLabel::accept, FinalLabel::reject})
        {
            if (to_string(l) == text)
            {
                return l;
            }
        }
        return std::nullopt;
    }

    std::string_view to_string(EventKind kind) noexcept
    {
        switch (kind)
        {
        case EventKind::knockout:
            return "knockout";
        case EventKind::call_begin:
            return "call_begin";
        case EventKind::call_end:
            return "call_end";
        case EventKind::final_entry:
            return "final_entry";
        case EventKind::election_end:
            return "election_end";
        case EventKind::frame_sent:
            return "frame_sent";
        case EventKind::frame_decoded:
            return "frame_decoded";
        case EventKind::op_done:
            return "op_done";
        case EventKind::frame_error:
            return "frame_error";
        }
        return "?";
    }

    std::string_view to_string(Routine routine) noexcept
    {
        switch (routine)
        {
        case Routine::none:
            return "none";
        case Routine::state_optimal:
            return "state-optimal";
        case Routine::fixed_error:
            return "fixed-error";
        case Routine::constant_state:
            return "constant-state";
        case Routine::double_safe:
            return "double-safe";
        case Routine::election:
            return "election";
        case Routine::counter:
            return "counter";
        }
        return "?";
    }

    unsigned bits_for(std::uint64_t max_value) noexcept
    {
        return max_value == 0 ? 1u : static_cast<unsigned>(std::bit_width(max_value));
    }

    Field VariableLayout::add(std::string name, unsigned width)
    {
        if (width == 0 || used_ + width > 64)
        {
            throw std::length_error("local state exceeds 64 bits while adding '" + name + "'");
        }
        if (find(name) != nullptr)
        {
            throw std::invalid_argument("duplicate local variable '" + name + "'");
        }
        Field f{used_, width};
        vars_.push_back(Variable{std::move(name), f});
        used_ += width;
        return f;
    }

    const VariableLayout::Variable *VariableLayout::find(std::string_view name) const noexcept
    {
        for (const auto &v : vars_)
        {
            if (v.name == name)
            {
                return &v;
            }
        }
        return nullptr;
    }

    std::size_t sample_branch(const SmallDist<LocalState> &dist, std::uint64_t word)
    {
        if (dist.size() <= 1)
        {
            return 0;
        }
        std::uint64_t l = 1;
        for (const auto &e : dist)
        {
            l = lcm_checked(l, e.p.den());
        }
        auto x = static_cast<std::uint64_t>((static_cast<unsigned __int128>(word) * l) >> 64);
        std::uint64_t cum = 0;
        for (std::size_t i = 0; i < dist.size(); ++i)
        {
            cum += dist[i].p.num() * (l / dist[i].p.den());
            if (x < cum)
            {
                return i;
            }
        }
        return dist.size() - 1;
    }
}
